// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "baret/nn/adam.hpp"
#include "baret/trajectory.hpp"

namespace baret {

enum class InversionMode { target_text, null_text_baseline };

inline const char* to_string(InversionMode m) {
    return m == InversionMode::target_text ? "target-text" : "null-text";
}

struct OptimizerConfig {
    double learning_rate = 0.001;
    int inner_iterations = 5;  // N
    int total_budget = 250;
    double threshold_coefficient = 1e-5;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    // Early-stop threshold indexing. Default: the counter is the number of
    // completed denoising steps from the start of sampling, so the
    // threshold rises over the run. The literal flag instead uses the
    // decreasing timestep index t = T..1.
    bool literal_threshold_index = false;
    // Open-question switch: condition the guidance-1 inversion pass on the
    // null embedding instead of the target text.
    bool invert_unconditioned = false;

    void validate(int steps) const {
        if (learning_rate < 0) throw ParameterError("optimizer: learning_rate must be >= 0");
        if (inner_iterations < 0) throw ParameterError("optimizer: inner_iterations must be >= 0");
        if (threshold_coefficient < 0) throw ParameterError("optimizer: threshold must be >= 0");
        if (total_budget < 0) throw ParameterError("optimizer: total_budget must be >= 0");
        (void)steps;
    }
};

// Per-timestep fine-tuned embeddings, ordered noisiest step first.
struct FineTunedSchedule {
    InversionMode mode = InversionMode::target_text;
    TextEmbedding phi_cond;  // the untouched target-text embedding
    std::vector<TextEmbedding> embeddings;
    std::vector<double> per_step_loss;
    std::vector<int> iterations_used;

    int steps() const { return int(embeddings.size()); }
    int total_iterations() const {
        int sum = 0;
        for (int i : iterations_used) sum += i;
        return sum;
    }
};

// step_counter starts at 1; the threshold grows linearly with it.
inline double early_stop_threshold(int step_counter, double coefficient) {
    if (step_counter < 1) throw ParameterError("early_stop_threshold: counter must be >= 1");
    return double(step_counter) * coefficient;
}

inline double reconstruction_loss(const LatentTensor& z_pred, const LatentTensor& z_target) {
    require_same_shape(z_pred, z_target, "reconstruction_loss");
    return double((z_pred.data - z_target.data).squaredNorm()) / double(z_pred.data.size());
}

using IterationLog =
    std::function<void(InversionMode mode, int step, int inner_iter, double loss, double threshold)>;

struct StepResult {
    TextEmbedding embedding;
    LatentTensor z_star_prev;
    int iterations = 0;
    double final_loss = 0.0;
};

// One timestep of the inversion schedule: up to max_iterations optimizer
// updates on the tuned embedding, stopping early once the step loss falls
// under the threshold. The returned latent is the DDIM step under the
// final embedding, which seeds the next timestep.
inline StepResult finetune_timestep(int step_index, int timestep, const LatentTensor& z_star_t,
                                    const LatentTensor& z_target_prev,
                                    const TextEmbedding& init_embedding,
                                    const TextEmbedding& fixed_embedding, const Backbone& backbone,
                                    const NoiseSchedule& schedule, const SamplerConfig& sampler,
                                    const OptimizerConfig& opt, InversionMode mode,
                                    int step_counter, int max_iterations,
                                    const IterationLog& log = {}) {
    const double threshold = early_stop_threshold(step_counter, opt.threshold_coefficient);
    const double abar_t = schedule.abar_level(step_index);
    const double abar_prev = schedule.abar_level(step_index + 1);
    const double w = sampler.guidance_scale;
    // In target-text mode the variable is the conditional embedding and the
    // null branch is frozen; the baseline swaps the roles.
    const bool tune_cond = mode == InversionMode::target_text;
    const double branch_coeff = tune_cond ? w : 1.0 - w;

    const LatentTensor eps_fixed = backbone.predict_noise(z_star_t, timestep, fixed_embedding);

    StepResult res;
    res.embedding = init_embedding;
    nn::Adam<float> adam({opt.learning_rate, opt.adam_beta1, opt.adam_beta2, opt.adam_epsilon});

    LatentTensor z_pred;
    auto loss_fn = [&](const LatentTensor& eps_var) {
        const LatentTensor eps_total = tune_cond ? cfg_combine(eps_fixed, eps_var, w)
                                                 : cfg_combine(eps_var, eps_fixed, w);
        z_pred = ddim_sample_step(z_star_t, eps_total, abar_t, abar_prev);
        const double loss = reconstruction_loss(z_pred, z_target_prev);
        LatentTensor dloss_deps = z_pred;
        const double coeff =
            2.0 / double(z_pred.data.size()) * ddim_step_eps_coeff(abar_t, abar_prev) * branch_coeff;
        dloss_deps.data = float(coeff) * (z_pred.data - z_target_prev.data);
        return std::pair<double, LatentTensor>{loss, dloss_deps};
    };

    for (int iter = 0;; ++iter) {
        double loss = 0.0;
        const Eigen::MatrixXf grad =
            backbone.gradient_wrt_embedding(loss_fn, z_star_t, timestep, res.embedding, &loss);
        if (!std::isfinite(loss))
            throw NumericError("inversion schedule: non-finite loss at step " +
                               std::to_string(step_counter));
        res.final_loss = loss;
        res.z_star_prev = z_pred;
        // One log row per optimizer update, carrying the post-update loss.
        if (log && iter > 0) log(mode, step_counter, iter, loss, threshold);
        if (loss <= threshold || iter >= max_iterations) break;
        adam.update(res.embedding.tokens, grad);
        adam.end_step();
        res.iterations = iter + 1;
    }
    return res;
}

struct TtisResult {
    FineTunedSchedule schedule;
    Trajectory inversion;     // {Z_t} from DDIM inversion at guidance 1
    Trajectory initial_pass;  // conditional pass from Z_T before tuning
    Trajectory finetuned;     // {Z*_t} propagated under the tuned embeddings
    std::vector<double> initial_step_loss;
    int total_iterations = 0;
};

// The full inversion schedule: invert the image latent at guidance 1, run
// the untouched conditional pass, then fine-tune the embedding per
// timestep so the conditional trajectory tracks the inversion trajectory.
inline TtisResult run_ttis(const LatentTensor& z_0, const TextEmbedding& phi_cond,
                           const Backbone& backbone, const NoiseSchedule& schedule,
                           const SamplerConfig& sampler, const OptimizerConfig& opt,
                           InversionMode mode, const IterationLog& log = {}) {
    if (!backbone.capabilities().gradient_wrt_embedding)
        throw UnsupportedError("run_ttis: backbone lacks embedding gradients");
    if (phi_cond.is_null && mode == InversionMode::target_text)
        throw ConfigError("run_ttis: target-text mode needs a non-empty prompt");
    opt.validate(sampler.steps);

    const int T = sampler.steps;
    const TextEmbedding& null_emb = backbone.null_embedding();

    TtisResult out;
    out.inversion = invert_trajectory(z_0, opt.invert_unconditioned ? null_emb : phi_cond, backbone,
                                      schedule, inversion_sampler(T));
    const LatentTensor& z_T = out.inversion.noisiest();
    out.initial_pass = sample_trajectory(z_T, constant_embedding(phi_cond), backbone, schedule,
                                         sampler);
    out.initial_step_loss.resize(size_t(T));
    for (int s = 0; s < T; ++s)
        out.initial_step_loss[size_t(s)] = reconstruction_loss(
            out.initial_pass.latents[size_t(s) + 1], out.inversion.latents[size_t(s) + 1]);

    out.schedule.mode = mode;
    out.schedule.phi_cond = phi_cond;
    out.schedule.embeddings.reserve(size_t(T));
    out.finetuned.guidance_scale = sampler.guidance_scale;
    out.finetuned.latents.reserve(size_t(T) + 1);
    out.finetuned.latents.push_back(z_T);

    const TextEmbedding& init_emb = mode == InversionMode::target_text ? phi_cond : null_emb;
    const TextEmbedding& fixed_emb = mode == InversionMode::target_text ? null_emb : phi_cond;

    LatentTensor z_star = z_T;
    int budget_left = opt.total_budget;
    for (int s = 0; s < T; ++s) {
        const int counter = opt.literal_threshold_index ? T - s : s + 1;
        const int allowed = std::min(opt.inner_iterations, budget_left);
        StepResult step =
            finetune_timestep(s, schedule.timestep_at(s), z_star, out.inversion.latents[size_t(s) + 1],
                              init_emb, fixed_emb, backbone, schedule, sampler, opt, mode, counter,
                              allowed, log);
        budget_left -= step.iterations;
        out.total_iterations += step.iterations;
        out.schedule.embeddings.push_back(std::move(step.embedding));
        out.schedule.per_step_loss.push_back(step.final_loss);
        out.schedule.iterations_used.push_back(step.iterations);
        z_star = std::move(step.z_star_prev);
        out.finetuned.latents.push_back(z_star);
    }
    return out;
}

struct ReconstructResult {
    Trajectory trajectory;
    Image image;
};

// DDIM sampling from z_T under the per-step tuned embeddings; in the
// null-text baseline the tuned embedding drives the unconditional branch
// while the target text stays conditional.
inline ReconstructResult reconstruct(const FineTunedSchedule& schedule, const LatentTensor& z_T,
                                     const Backbone& backbone, const NoiseSchedule& noise,
                                     const SamplerConfig& sampler) {
    if (schedule.steps() != sampler.steps)
        throw ConfigError("reconstruct: schedule length does not match sampler steps");
    ReconstructResult out;
    if (schedule.mode == InversionMode::target_text) {
        out.trajectory = sample_trajectory(
            z_T, [&](int s) -> const TextEmbedding& { return schedule.embeddings[size_t(s)]; },
            backbone, noise, sampler);
    } else {
        const int T = sampler.steps;
        Trajectory traj;
        traj.guidance_scale = sampler.guidance_scale;
        traj.latents.push_back(z_T);
        LatentTensor z = z_T;
        for (int s = 0; s < T; ++s) {
            LatentTensor eps_u =
                backbone.predict_noise(z, noise.timestep_at(s), schedule.embeddings[size_t(s)]);
            LatentTensor eps_c = backbone.predict_noise(z, noise.timestep_at(s), schedule.phi_cond);
            LatentTensor eps = cfg_combine(eps_u, eps_c, sampler.guidance_scale);
            z = ddim_sample_step(z, eps, noise.abar_level(s), noise.abar_level(s + 1));
            traj.latents.push_back(z);
        }
        out.trajectory = std::move(traj);
    }
    out.image = backbone.decode_image(out.trajectory.final_latent());
    return out;
}

}  // namespace baret
