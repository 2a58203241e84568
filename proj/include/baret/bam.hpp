// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "baret/io/image_io.hpp"
#include "baret/rng.hpp"
#include "baret/trajectory.hpp"
#include "baret/ttis.hpp"

namespace baret {

// Interpolation weights omega_t, ordered first denoising step to last.
struct InterpolationSchedule {
    std::vector<double> omegas;

    int steps() const { return int(omegas.size()); }
    static InterpolationSchedule constant(double w, int steps) {
        return {std::vector<double>(size_t(steps), w)};
    }
};

struct EditConfig {
    double omega_start = 0.8;
    double omega_end = 0.1;
    double sa_fraction = 0.3;  // eta: fraction of steps with self-attention injection
    double ca_fraction = 0.6;  // lambda: fraction of steps with cross-attention injection
    bool rigid_mode = false;
    double guidance_scale = 7.5;
    int steps = 50;
    // Study knobs beyond the defaults.
    bool random_omega = false;  // omega_t ~ U(omega_end, omega_start) instead of the ramp
    uint64_t omega_seed = 0;
    bool late_window = false;  // anchor injection windows to the last steps
    std::vector<std::string> layer_filter;  // restrict injection to these layers; empty = all
    std::string attention_dump_dir;         // per-step map dump, disabled when empty

    void validate() const {
        if (!(omega_start >= 0.0 && omega_start <= 1.0 && omega_end >= 0.0 && omega_end <= 1.0))
            throw ParameterError("edit config: omega values must lie in [0,1]");
        if (sa_fraction < 0.0 || sa_fraction > 1.0 || ca_fraction < 0.0 || ca_fraction > 1.0)
            throw ParameterError("edit config: injection fractions must lie in [0,1]");
        if (steps < 1) throw ParameterError("edit config: steps must be >= 1");
    }
};

// Linear ramp from omega_start down to omega_end; rigid mode pins every
// weight to 1 so the transition collapses onto the reconstruction.
inline InterpolationSchedule omega_schedule(double omega_start, double omega_end, int steps,
                                            bool rigid_mode) {
    if (steps < 1) throw ParameterError("omega_schedule: steps must be >= 1");
    if (rigid_mode) return InterpolationSchedule::constant(1.0, steps);
    if (!(omega_end <= omega_start && omega_end >= 0.0 && omega_start <= 1.0))
        throw ParameterError("omega_schedule: need 0 <= omega_end <= omega_start <= 1");
    InterpolationSchedule s;
    s.omegas.resize(size_t(steps));
    for (int i = 0; i < steps; ++i)
        s.omegas[size_t(i)] =
            steps == 1 ? omega_start
                       : omega_start + double(i) / double(steps - 1) * (omega_end - omega_start);
    return s;
}

inline InterpolationSchedule random_omega_schedule(double omega_start, double omega_end, int steps,
                                                   uint64_t seed) {
    if (!(omega_end <= omega_start)) throw ParameterError("omega_schedule: ordering violation");
    Rng rng(seed);
    InterpolationSchedule s;
    s.omegas.resize(size_t(steps));
    for (auto& w : s.omegas) w = rng.uniform(omega_end, omega_start);
    return s;
}

// phi_inp = omega * phi_opt + (1 - omega) * phi_cond. The omega in {0,1}
// endpoints return the respective input bit-for-bit.
inline TextEmbedding interpolate_embedding(const TextEmbedding& phi_opt,
                                           const TextEmbedding& phi_cond, double omega) {
    require_same_shape(phi_opt, phi_cond, "interpolate_embedding");
    if (!(omega >= 0.0 && omega <= 1.0))
        throw ParameterError("interpolate_embedding: omega must lie in [0,1]");
    if (omega == 1.0) return phi_opt;
    if (omega == 0.0) return phi_cond;
    TextEmbedding out = phi_opt;
    const float w = float(omega);
    out.tokens = w * phi_opt.tokens + (1.0f - w) * phi_cond.tokens;
    out.is_null = phi_opt.is_null && phi_cond.is_null;
    return out;
}

// True when 1-based step s receives injection: the earliest floor(f*T)
// denoising steps, or the latest ones with the late_window knob.
inline bool injection_window(int step_1based, double fraction, int steps, bool late_window = false) {
    if (step_1based < 1 || step_1based > steps)
        throw ParameterError("injection_window: step out of range");
    if (fraction < 0.0 || fraction > 1.0)
        throw ParameterError("injection_window: fraction must lie in [0,1]");
    const int count = int(std::floor(fraction * double(steps)));
    return late_window ? step_1based > steps - count : step_1based <= count;
}

struct EditResult {
    Trajectory editing;
    Trajectory transition;
    Trajectory reconstruction;
    Image edited;          // I_edt
    Image transition_img;  // I_inp
    Image recon_img;       // I_rct
    std::optional<Image> initial_inversion_img;  // I_iiv, when the caller supplies its latent
};

namespace detail {

// Mean-over-heads probability map rendered as a square grayscale image,
// one file per (step, process, layer).
inline void dump_attention_maps(const std::string& dir, int step, const char* process,
                                const AttentionCapture& cap) {
    for (const auto& [id, maps] : cap.layers) {
        if (maps.heads.empty()) continue;
        Eigen::MatrixXf mean = maps.heads[0];
        for (size_t h = 1; h < maps.heads.size(); ++h) mean += maps.heads[h];
        mean /= float(maps.heads.size());
        const float peak = std::max(mean.maxCoeff(), 1e-12f);
        std::vector<uint8_t> gray(size_t(mean.size()));
        for (long r = 0; r < mean.rows(); ++r)
            for (long c = 0; c < mean.cols(); ++c)
                gray[size_t(r) * size_t(mean.cols()) + size_t(c)] =
                    uint8_t(std::lround(255.0f * mean(r, c) / peak));
        char name[128];
        std::snprintf(name, sizeof name, "step%03d_%s_%s.pgm", step, process, id.c_str());
        io::write_pgm(std::filesystem::path(dir) / name, int(mean.cols()), int(mean.rows()), gray);
    }
}

inline void add_entries(InjectionDirective& dir, const AttentionCapture& cap, AttentionKind kind,
                        InjectionSource source, const std::vector<std::string>& filter) {
    for (const auto& [id, maps] : cap.layers) {
        if (maps.kind != kind) continue;
        if (!filter.empty() &&
            std::find(filter.begin(), filter.end(), id) == filter.end())
            continue;
        dir.entries[id] = {kind, source, maps.heads};
    }
}

}  // namespace detail

// The three lockstep DDIM processes. Per step the reconstruction runs
// under phi_opt capturing self-attention, the transition under phi_inp
// capturing cross-attention, and the editing process runs under phi_cond
// with the captured maps spliced in per branch; values always come from
// the editing process itself.
inline EditResult run_bam_edit(const LatentTensor& z_T, const FineTunedSchedule& schedule,
                               const TextEmbedding& phi_cond, const EditConfig& cfg,
                               const Backbone& backbone, const NoiseSchedule& noise,
                               const LatentTensor* iiv_final_latent = nullptr) {
    cfg.validate();
    const BackboneCaps caps = backbone.capabilities();
    if (!caps.attention_capture || !caps.attention_injection)
        throw UnsupportedError("run_bam_edit: backbone lacks attention capture/injection");
    if (schedule.steps() != cfg.steps)
        throw ConfigError("run_bam_edit: schedule length does not match steps");
    if (schedule.mode != InversionMode::target_text)
        throw ConfigError("run_bam_edit: editing requires a target-text schedule");

    const int T = cfg.steps;
    const InterpolationSchedule omegas =
        cfg.random_omega ? random_omega_schedule(cfg.omega_start, cfg.omega_end, T, cfg.omega_seed)
                         : omega_schedule(cfg.omega_start, cfg.omega_end, T, cfg.rigid_mode);
    const TextEmbedding& null_emb = backbone.null_embedding();
    const double w = cfg.guidance_scale;

    EditResult out;
    for (Trajectory* t : {&out.editing, &out.transition, &out.reconstruction}) {
        t->guidance_scale = w;
        t->latents.reserve(size_t(T) + 1);
        t->latents.push_back(z_T);
    }

    LatentTensor z_rct = z_T, z_inp = z_T, z_edt = z_T;
    for (int s = 1; s <= T; ++s) {
        const int t = noise.timestep_at(s - 1);
        const double abar_t = noise.abar_level(s - 1);
        const double abar_prev = noise.abar_level(s);
        const TextEmbedding& phi_opt = schedule.embeddings[size_t(s - 1)];
        const TextEmbedding phi_inp =
            interpolate_embedding(phi_opt, phi_cond, omegas.omegas[size_t(s - 1)]);

        AttentionCapture rct_u, rct_c, inp_u, inp_c;
        const LatentTensor eps_rct =
            cfg_combine(backbone.predict_noise(z_rct, t, null_emb, &rct_u),
                        backbone.predict_noise(z_rct, t, phi_opt, &rct_c), w);
        const LatentTensor eps_inp =
            cfg_combine(backbone.predict_noise(z_inp, t, null_emb, &inp_u),
                        backbone.predict_noise(z_inp, t, phi_inp, &inp_c), w);

        InjectionDirective dir_u, dir_c;
        if (injection_window(s, cfg.sa_fraction, T, cfg.late_window)) {
            detail::add_entries(dir_u, rct_u, AttentionKind::self_attention,
                                InjectionSource::reconstruction, cfg.layer_filter);
            detail::add_entries(dir_c, rct_c, AttentionKind::self_attention,
                                InjectionSource::reconstruction, cfg.layer_filter);
        }
        if (injection_window(s, cfg.ca_fraction, T, cfg.late_window)) {
            detail::add_entries(dir_u, inp_u, AttentionKind::cross_attention,
                                InjectionSource::transition, cfg.layer_filter);
            detail::add_entries(dir_c, inp_c, AttentionKind::cross_attention,
                                InjectionSource::transition, cfg.layer_filter);
        }
        const LatentTensor eps_edt = cfg_combine(
            backbone.predict_noise(z_edt, t, null_emb, nullptr, dir_u.empty() ? nullptr : &dir_u),
            backbone.predict_noise(z_edt, t, phi_cond, nullptr, dir_c.empty() ? nullptr : &dir_c),
            w);

        if (!cfg.attention_dump_dir.empty()) {
            detail::dump_attention_maps(cfg.attention_dump_dir, s, "reconstruction", rct_c);
            detail::dump_attention_maps(cfg.attention_dump_dir, s, "transition", inp_c);
        }

        z_rct = ddim_sample_step(z_rct, eps_rct, abar_t, abar_prev);
        z_inp = ddim_sample_step(z_inp, eps_inp, abar_t, abar_prev);
        z_edt = ddim_sample_step(z_edt, eps_edt, abar_t, abar_prev);
        out.reconstruction.latents.push_back(z_rct);
        out.transition.latents.push_back(z_inp);
        out.editing.latents.push_back(z_edt);
    }

    out.edited = backbone.decode_image(z_edt);
    out.transition_img = backbone.decode_image(z_inp);
    out.recon_img = backbone.decode_image(z_rct);
    if (iiv_final_latent) out.initial_inversion_img = backbone.decode_image(*iiv_final_latent);
    return out;
}

struct TransitionResult {
    Trajectory trajectory;
    Image image;  // I_inp
};

// Just the transition process, for diagnostics.
inline TransitionResult run_transition_only(const LatentTensor& z_T,
                                            const FineTunedSchedule& schedule,
                                            const TextEmbedding& phi_cond,
                                            const InterpolationSchedule& omegas,
                                            const Backbone& backbone, const NoiseSchedule& noise,
                                            const SamplerConfig& sampler) {
    if (schedule.steps() != sampler.steps || omegas.steps() != sampler.steps)
        throw ConfigError("run_transition_only: schedule/omega length mismatch");
    std::vector<TextEmbedding> inp(size_t(sampler.steps));
    for (int s = 0; s < sampler.steps; ++s)
        inp[size_t(s)] = interpolate_embedding(schedule.embeddings[size_t(s)], phi_cond,
                                               omegas.omegas[size_t(s)]);
    TransitionResult out;
    out.trajectory = sample_trajectory(
        z_T, [&](int s) -> const TextEmbedding& { return inp[size_t(s)]; }, backbone, noise,
        sampler);
    out.image = backbone.decode_image(out.trajectory.final_latent());
    return out;
}

}  // namespace baret
