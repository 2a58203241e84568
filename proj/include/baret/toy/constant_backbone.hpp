// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "baret/backbone.hpp"

namespace baret::toy {

// Test double whose noise prediction is a fixed tensor, independent of the
// latent, timestep and embedding. With it, DDIM inversion followed by
// sampling is the exact shared-eps round trip.
class ConstantBackbone final : public Backbone {
public:
    ConstantBackbone(const LatentShape& shape, float value, int text_dim = 8)
        : eps_(LatentTensor::constant(shape, value)), text_dim_(text_dim) {
        init_null();
    }
    ConstantBackbone(LatentTensor eps, int text_dim = 8) : eps_(std::move(eps)), text_dim_(text_dim) {
        init_null();
    }

    LatentShape latent_shape() const override { return eps_.shape(); }
    std::vector<AttentionLayerInfo> attention_layers() const override {
        return {{"const.self", AttentionKind::self_attention},
                {"const.cross", AttentionKind::cross_attention}};
    }
    // The prediction does not depend on the embedding, so the gradient is
    // identically zero; that is an exact gradient, hence the honest flag.
    BackboneCaps capabilities() const override { return {true, false, false}; }

    TextEmbedding encode_text(std::string_view prompt) const override {
        TextEmbedding e;
        // One row per whitespace token plus a leading marker row; entries
        // derived from token bytes so distinct prompts differ.
        std::vector<float> seeds = {1.0f};
        float acc = 0.0f;
        for (char c : prompt) {
            if (c == ' ') {
                seeds.push_back(acc);
                acc = 0.0f;
            } else {
                acc += float(uint8_t(c)) / 255.0f;
            }
        }
        if (acc != 0.0f) seeds.push_back(acc);
        e.tokens.resize(long(seeds.size()), text_dim_);
        for (long i = 0; i < e.tokens.rows(); ++i)
            for (int j = 0; j < text_dim_; ++j)
                e.tokens(i, j) = seeds[size_t(i)] + 0.1f * float(j);
        e.is_null = prompt.empty();
        return e;
    }
    const TextEmbedding& null_embedding() const override { return null_emb_; }

    LatentTensor predict_noise(const LatentTensor& z, int, const TextEmbedding&,
                               AttentionCapture* capture = nullptr,
                               const InjectionDirective* = nullptr) const override {
        if (z.shape() != eps_.shape()) throw ShapeError("constant backbone: latent shape mismatch");
        if (capture) capture->layers.clear();
        return eps_;
    }

    Eigen::MatrixXf gradient_wrt_embedding(const LossFn& loss, const LatentTensor& z, int,
                                           const TextEmbedding& embedding,
                                           double* loss_value = nullptr) const override {
        if (z.shape() != eps_.shape()) throw ShapeError("constant backbone: latent shape mismatch");
        if (loss_value) *loss_value = loss(eps_).first;
        return Eigen::MatrixXf::Zero(embedding.tokens.rows(), embedding.tokens.cols());
    }

    LatentTensor encode_image(const Image& image) const override {
        const auto s = latent_shape();
        if (image.width != s.width || image.height != s.height)
            throw ShapeError("constant backbone: image size mismatch");
        LatentTensor z(s.channels, s.height, s.width);
        for (int y = 0; y < s.height; ++y)
            for (int x = 0; x < s.width; ++x)
                for (int c = 0; c < 3 && c < s.channels; ++c)
                    z.data(c, y * s.width + x) = float(image.at(x, y, c)) / 255.0f;
        return z;
    }
    Image decode_image(const LatentTensor& latent) const override {
        const auto s = latent_shape();
        if (latent.shape() != s) throw ShapeError("constant backbone: latent shape mismatch");
        Image img(s.width, s.height);
        for (int y = 0; y < s.height; ++y)
            for (int x = 0; x < s.width; ++x)
                for (int c = 0; c < 3 && c < s.channels; ++c) {
                    const float v = std::clamp(latent.data(c, y * s.width + x), 0.0f, 1.0f);
                    img.at(x, y, c) = uint8_t(std::lround(v * 255.0f));
                }
        return img;
    }

private:
    void init_null() { null_emb_ = encode_text(""); }

    LatentTensor eps_;
    int text_dim_;
    TextEmbedding null_emb_;
};

}  // namespace baret::toy
