// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "baret/backbone.hpp"
#include "baret/ddim.hpp"
#include "baret/schedule.hpp"

namespace baret {

// Ordered latents of one DDIM run: index 0 = Z_T (noisiest) through
// index T = Z_0.
struct Trajectory {
    std::vector<LatentTensor> latents;
    double guidance_scale = 0.0;
    std::string embedding_id;

    int steps() const { return int(latents.size()) - 1; }
    const LatentTensor& noisiest() const { return latents.front(); }
    const LatentTensor& final_latent() const { return latents.back(); }
    uint64_t hash() const {
        uint64_t h = kFnvOffset;
        for (const auto& z : latents) h = fnv1a64_floats(z.data.data(), size_t(z.data.size()), h);
        return h;
    }
};

// step is 0-based from the noisiest level; references must stay valid for
// the duration of the call that received the provider.
using EmbeddingProvider = std::function<const TextEmbedding&(int step)>;
using DirectiveProvider = std::function<const InjectionDirective*(int step)>;

inline EmbeddingProvider constant_embedding(const TextEmbedding& e) {
    return [&e](int) -> const TextEmbedding& { return e; };
}

namespace detail {

// Classifier-free guidance prediction; at guidance 1 the unconditional
// branch is skipped (cfg_combine degenerates to the conditional branch).
inline LatentTensor guided_noise(const Backbone& backbone, const LatentTensor& z, int timestep,
                                 const TextEmbedding& cond, double guidance_scale,
                                 const InjectionDirective* directive = nullptr,
                                 const TextEmbedding* uncond = nullptr) {
    if (guidance_scale == 1.0) return backbone.predict_noise(z, timestep, cond, nullptr, directive);
    const TextEmbedding& null_emb = uncond ? *uncond : backbone.null_embedding();
    LatentTensor eps_u = backbone.predict_noise(z, timestep, null_emb, nullptr, directive);
    LatentTensor eps_c = backbone.predict_noise(z, timestep, cond, nullptr, directive);
    return cfg_combine(eps_u, eps_c, guidance_scale);
}

}  // namespace detail

// Runs T guided DDIM steps from z_T, recording every intermediate latent.
// Deterministic given its inputs.
inline Trajectory sample_trajectory(const LatentTensor& z_T, const EmbeddingProvider& embeddings,
                                    const Backbone& backbone, const NoiseSchedule& schedule,
                                    const SamplerConfig& cfg,
                                    const DirectiveProvider& directives = {}) {
    if (cfg.steps != schedule.inference_steps)
        throw ConfigError("sample_trajectory: sampler steps do not match schedule");
    const LatentShape shape = backbone.latent_shape();
    if (z_T.shape() != shape) throw ShapeError("sample_trajectory: z_T shape mismatch");

    const int T = cfg.steps;
    Trajectory traj;
    traj.guidance_scale = cfg.guidance_scale;
    traj.latents.reserve(size_t(T) + 1);
    traj.latents.push_back(z_T);

    LatentTensor z = z_T;
    for (int k = 0; k < T; ++k) {
        const InjectionDirective* dir = directives ? directives(k) : nullptr;
        const LatentTensor eps = detail::guided_noise(backbone, z, schedule.timestep_at(k),
                                                      embeddings(k), cfg.guidance_scale, dir);
        z = ddim_sample_step(z, eps, schedule.abar_level(k), schedule.abar_level(k + 1));
        traj.latents.push_back(z);
    }
    return traj;
}

// Mirror of sample_trajectory in the noising direction; the result still
// stores index 0 = Z_T. Each step evaluates the denoiser at the train
// timestep being moved to, matching the sampling-side evaluation points.
inline Trajectory invert_trajectory(const LatentTensor& z_0, const TextEmbedding& embedding,
                                    const Backbone& backbone, const NoiseSchedule& schedule,
                                    const SamplerConfig& cfg) {
    if (cfg.steps != schedule.inference_steps)
        throw ConfigError("invert_trajectory: sampler steps do not match schedule");
    const LatentShape shape = backbone.latent_shape();
    if (z_0.shape() != shape) throw ShapeError("invert_trajectory: z_0 shape mismatch");

    const int T = cfg.steps;
    Trajectory traj;
    traj.guidance_scale = cfg.guidance_scale;
    traj.latents.assign(size_t(T) + 1, LatentTensor{});
    traj.latents[size_t(T)] = z_0;

    LatentTensor z = z_0;
    for (int j = T - 1; j >= 0; --j) {
        const LatentTensor eps = detail::guided_noise(backbone, z, schedule.timestep_at(j),
                                                      embedding, cfg.guidance_scale);
        z = ddim_invert_step(z, eps, schedule.abar_level(j + 1), schedule.abar_level(j));
        traj.latents[size_t(j)] = z;
    }
    return traj;
}

}  // namespace baret
