// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string_view>
#include <utility>
#include <vector>

#include "baret/attention_io.hpp"
#include "baret/embedding.hpp"
#include "baret/latent.hpp"
#include "baret/rng.hpp"

namespace baret {

struct BackboneCaps {
    bool gradient_wrt_embedding = false;
    bool attention_capture = false;
    bool attention_injection = false;
};

// Abstraction over the denoiser, text encoder and latent codec. Model
// parameters are frozen; implementations must be safe for concurrent
// read-only noise predictions.
class Backbone {
public:
    virtual ~Backbone() = default;

    virtual LatentShape latent_shape() const = 0;
    virtual std::vector<AttentionLayerInfo> attention_layers() const = 0;
    virtual BackboneCaps capabilities() const = 0;

    // Deterministic: the same prompt always yields the same embedding.
    // The empty prompt yields the null embedding.
    virtual TextEmbedding encode_text(std::string_view prompt) const = 0;
    virtual const TextEmbedding& null_embedding() const = 0;

    // Predicts eps(z, t, embedding). With capture set, all attention
    // probability maps actually used are recorded. With a directive, the
    // named layers use the supplied maps in place of their own softmax
    // while keeping their own value projections.
    virtual LatentTensor predict_noise(const LatentTensor& z, int timestep,
                                       const TextEmbedding& embedding,
                                       AttentionCapture* capture = nullptr,
                                       const InjectionDirective* directive = nullptr) const = 0;

    // Scalar loss of the prediction, returned with dLoss/dEps so the
    // backbone can continue the chain down to the embedding entries.
    using LossFn = std::function<std::pair<double, LatentTensor>(const LatentTensor& eps)>;

    // Exact gradient of loss(eps(z, t, embedding)) with respect to the
    // embedding entries, parameters held fixed.
    virtual Eigen::MatrixXf gradient_wrt_embedding(const LossFn& loss, const LatentTensor& z,
                                                   int timestep, const TextEmbedding& embedding,
                                                   double* loss_value = nullptr) const = 0;

    virtual LatentTensor encode_image(const Image& image) const = 0;
    virtual Image decode_image(const LatentTensor& latent) const = 0;
};

// Startup self-test that capability flags are honest. Throws
// UnsupportedError naming the first dishonest flag.
inline void probe_capabilities(const Backbone& b) {
    const BackboneCaps caps = b.capabilities();
    const LatentShape s = b.latent_shape();
    Rng rng(0x9e11);
    LatentTensor z(s.channels, s.height, s.width);
    for (int i = 0; i < z.data.size(); ++i) z.data.data()[i] = float(rng.normal());
    const TextEmbedding& null_emb = b.null_embedding();
    const int t = 1;

    if (caps.attention_capture) {
        AttentionCapture cap;
        b.predict_noise(z, t, null_emb, &cap);
        if (cap.layers.empty())
            throw UnsupportedError("capability probe: capture flag set but no maps recorded");
        for (const auto& [id, maps] : cap.layers)
            for (const auto& m : maps.heads)
                if (!rows_stochastic(m))
                    throw UnsupportedError("capability probe: captured map not row-stochastic at " +
                                           id);
        if (caps.attention_injection) {
            InjectionDirective dir;
            for (const auto& [id, maps] : cap.layers)
                dir.entries[id] = {maps.kind, InjectionSource::reconstruction, maps.heads};
            const LatentTensor plain = b.predict_noise(z, t, null_emb);
            const LatentTensor injected = b.predict_noise(z, t, null_emb, nullptr, &dir);
            if (!plain.data.cwiseEqual(injected.data).all())
                throw UnsupportedError("capability probe: self-injection is not a no-op");
        }
    }

    if (caps.gradient_wrt_embedding) {
        // Directional finite-difference sanity check in float; loose bound.
        TextEmbedding emb = null_emb;
        Eigen::MatrixXf dir(emb.tokens.rows(), emb.tokens.cols());
        for (int i = 0; i < dir.size(); ++i) dir.data()[i] = float(rng.normal());
        dir /= dir.norm();
        Eigen::MatrixXf weights(s.channels, s.height * s.width);
        for (int i = 0; i < weights.size(); ++i) weights.data()[i] = float(rng.normal());
        auto loss = [&](const LatentTensor& eps) {
            LatentTensor g = eps;
            g.data = weights / float(weights.size());
            return std::pair<double, LatentTensor>{
                double((eps.data.array() * weights.array()).mean()), g};
        };
        const Eigen::MatrixXf grad = b.gradient_wrt_embedding(loss, z, t, emb);
        const double analytic = double((grad.array() * dir.array()).sum());
        const float h = 1e-3f;
        TextEmbedding ep = emb, em = emb;
        ep.tokens += h * dir;
        em.tokens -= h * dir;
        const double lp = loss(b.predict_noise(z, t, ep)).first;
        const double lm = loss(b.predict_noise(z, t, em)).first;
        const double fd = (lp - lm) / (2.0 * double(h));
        const double scale = std::max({std::abs(analytic), std::abs(fd), 1e-6});
        if (std::abs(analytic - fd) / scale > 5e-2)
            throw UnsupportedError("capability probe: embedding gradient disagrees with finite differences");
    }
}

}  // namespace baret
