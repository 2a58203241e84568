// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "baret/bam.hpp"
#include "baret/io/cache.hpp"
#include "baret/io/image_io.hpp"
#include "baret/io/weights_io.hpp"
#include "baret/metrics.hpp"
#include "baret/toy/toy_train.hpp"
#include "baret/ttis.hpp"

namespace baret::pipeline {

inline constexpr const char* kCacheDirEnv = "BARET_CACHE_DIR";

// Relative cache paths resolve under $BARET_CACHE_DIR when set.
inline std::filesystem::path resolve_cache_path(const std::filesystem::path& path) {
    if (path.is_absolute()) return path;
    if (const char* dir = std::getenv(kCacheDirEnv); dir && *dir)
        return std::filesystem::path(dir) / path;
    return path;
}

enum class BackboneKind { toy, adapter };

struct JobConfig {
    std::string image_path;
    std::string prompt;  // target text
    SamplerConfig sampler;
    OptimizerConfig optimizer;
    EditConfig edit;
    InversionMode invert_mode = InversionMode::target_text;
    BackboneKind backbone = BackboneKind::toy;
    std::string weights_path;
    int train_steps = 1000;
    double beta_start = 0.00085;
    double beta_end = 0.012;
    uint64_t seed = 0;
    std::string cache_path = "baret.cache";
    std::string out_dir = ".";
    std::string scorer;       // optional perceptual scorer name
    bool omega_sweep = false; // edit: one row per omega_start value
};

// Config-file layer of the precedence chain (flags > file > defaults).
inline void apply_json_config(JobConfig& job, const nlohmann::json& j) {
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("image", job.image_path);
    get("prompt", job.prompt);
    get("weights", job.weights_path);
    get("cache", job.cache_path);
    get("out", job.out_dir);
    get("seed", job.seed);
    get("steps", job.sampler.steps);
    get("guidance", job.sampler.guidance_scale);
    get("train_steps", job.train_steps);
    get("beta_start", job.beta_start);
    get("beta_end", job.beta_end);
    get("lr", job.optimizer.learning_rate);
    get("inner_iters", job.optimizer.inner_iterations);
    get("budget", job.optimizer.total_budget);
    get("threshold_coefficient", job.optimizer.threshold_coefficient);
    get("omega_start", job.edit.omega_start);
    get("omega_end", job.edit.omega_end);
    get("eta", job.edit.sa_fraction);
    get("lambda", job.edit.ca_fraction);
    get("rigid", job.edit.rigid_mode);
    get("scorer", job.scorer);
    if (j.contains("mode")) {
        const std::string mode = j.at("mode").get<std::string>();
        if (mode == "target-text")
            job.invert_mode = InversionMode::target_text;
        else if (mode == "null-text")
            job.invert_mode = InversionMode::null_text_baseline;
        else
            throw ConfigError("config: mode must be target-text or null-text");
    }
}

inline JobConfig load_json_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config is not valid JSON: " + std::string(e.what()));
    }
    JobConfig job;
    apply_json_config(job, j);
    return job;
}

inline toy::ToyBackbone load_backbone(const JobConfig& job) {
    if (job.backbone == BackboneKind::adapter)
        throw UnsupportedError(
            "adapter backbone is a contract for external weights; only the toy backbone runs here");
    if (job.weights_path.empty())
        throw ConfigError("no weights given; train one with `baret train-toy` first");
    toy::ToyBackbone backbone = io::load_toy_weights(job.weights_path);
    probe_capabilities(backbone);
    return backbone;
}

inline NoiseSchedule schedule_for(const JobConfig& job, int steps) {
    return make_schedule(job.train_steps, job.beta_start, job.beta_end, steps);
}

inline nlohmann::json effective_config_json(const JobConfig& job) {
    return {{"prompt", job.prompt},
            {"seed", job.seed},
            {"sampler",
             {{"guidance_scale", job.sampler.guidance_scale},
              {"steps", job.sampler.steps},
              {"eta", job.sampler.eta}}},
            {"optimizer",
             {{"lr", job.optimizer.learning_rate},
              {"inner_iters", job.optimizer.inner_iterations},
              {"budget", job.optimizer.total_budget},
              {"threshold_coefficient", job.optimizer.threshold_coefficient}}},
            {"edit",
             {{"omega_start", job.edit.omega_start},
              {"omega_end", job.edit.omega_end},
              {"eta", job.edit.sa_fraction},
              {"lambda", job.edit.ca_fraction},
              {"rigid", job.edit.rigid_mode}}},
            {"schedule",
             {{"train_steps", job.train_steps},
              {"beta_start", job.beta_start},
              {"beta_end", job.beta_end}}}};
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

// ---- invert ----

inline io::CacheFile cmd_invert(const JobConfig& job, std::ostream& log = std::cout) {
    if (job.prompt.empty()) throw ConfigError("invert: prompt must be non-empty");
    const toy::ToyBackbone backbone = load_backbone(job);
    const NoiseSchedule noise = schedule_for(job, job.sampler.steps);
    const Image original = io::read_ppm(job.image_path);
    const LatentTensor z0 = backbone.encode_image(original);
    const TextEmbedding phi_cond = backbone.encode_text(job.prompt);

    TtisResult res =
        run_ttis(z0, phi_cond, backbone, noise, job.sampler, job.optimizer, job.invert_mode);

    io::CacheFile cache;
    cache.steps = job.sampler.steps;
    cache.embed_len = phi_cond.length();
    cache.embed_dim = phi_cond.dim();
    cache.latent = backbone.latent_shape();
    cache.sampler = job.sampler;
    cache.train_steps = job.train_steps;
    cache.beta_start = job.beta_start;
    cache.beta_end = job.beta_end;
    cache.mode = job.invert_mode;
    cache.prompt = job.prompt;
    cache.seed = job.seed;
    cache.inversion = std::move(res.inversion);
    cache.schedule = std::move(res.schedule);
    cache.initial_pass = std::move(res.initial_pass);

    const auto path = resolve_cache_path(job.cache_path);
    io::write_cache(path, cache);

    log << "inverted '" << job.prompt << "' (" << to_string(job.invert_mode) << ") over "
        << cache.steps << " steps\n";
    for (int s = 0; s < cache.schedule.steps(); ++s)
        log << "  step " << (s + 1) << " t=" << noise.timestep_at(s)
            << " iters=" << cache.schedule.iterations_used[size_t(s)]
            << " loss=" << cache.schedule.per_step_loss[size_t(s)] << "\n";
    log << "total iterations: " << res.total_iterations << " (budget "
        << job.optimizer.total_budget << ")\n";
    log << "cache: " << path.string() << "\n";
    return cache;
}

// ---- edit ----

struct EditOutcome {
    EditResult result;
    MetricsReport report;
    nlohmann::json metrics_json;
};

namespace detail {

inline MetricsReport edit_metrics(const JobConfig& job, const Image& original,
                                  const EditResult& res) {
    MetricsReport rep;
    rep.psnr_db = psnr(res.recon_img, original);
    rep.latent_mse_value =
        latent_mse(res.editing.final_latent(), res.reconstruction.final_latent());
    if (!job.scorer.empty()) {
        if (auto scorer = find_scorer(job.scorer)) {
            rep.scorer_name = job.scorer;
            rep.fidelity_score = scorer->image_fidelity(original, res.edited);
            rep.alignment_score = scorer->text_alignment(res.edited, job.prompt);
        }
    }
    return rep;
}

inline nlohmann::json report_json(const JobConfig& job, const MetricsReport& rep,
                                  const EditResult& res, const Image& original) {
    nlohmann::json j = {{"psnr_rct_vs_original", rep.psnr_db},
                        {"latent_mse_edit_vs_recon", rep.latent_mse_value},
                        {"psnr_edit_vs_original", psnr(res.edited, original)},
                        {"config", effective_config_json(job)}};
    if (rep.fidelity_score) {
        j["scores"] = {{"scorer", rep.scorer_name},
                       {"image_fidelity", *rep.fidelity_score},
                       {"text_alignment", *rep.alignment_score}};
    } else if (!job.scorer.empty()) {
        j["scorer_missing"] = job.scorer;
    }
    return j;
}

}  // namespace detail

inline EditOutcome cmd_edit(const JobConfig& job_in, std::ostream& log = std::cout) {
    JobConfig job = job_in;
    const auto cache_path = resolve_cache_path(job.cache_path);
    if (!std::filesystem::exists(cache_path))
        throw IoError("edit: cache not found: " + cache_path.string());
    const io::CacheFile cache = io::read_cache(cache_path);

    job.sampler = cache.sampler;
    job.train_steps = cache.train_steps;
    job.beta_start = cache.beta_start;
    job.beta_end = cache.beta_end;
    job.prompt = cache.prompt;
    job.edit.steps = cache.steps;
    job.edit.guidance_scale = cache.sampler.guidance_scale;
    job.edit.validate();

    const toy::ToyBackbone backbone = load_backbone(job);
    if (backbone.latent_shape() != cache.latent)
        throw ConfigError("edit: weights do not match the cache latent shape");
    const NoiseSchedule noise = schedule_for(job, cache.steps);
    const TextEmbedding phi_cond = backbone.encode_text(cache.prompt);
    const Image original = backbone.decode_image(cache.inversion.final_latent());
    const LatentTensor& z_T = cache.inversion.noisiest();
    const LatentTensor iiv_final = cache.initial_pass.final_latent();

    const std::filesystem::path out_dir = job.out_dir;
    std::filesystem::create_directories(out_dir);

    if (job.omega_sweep) {
        static const std::vector<std::pair<double, double>> kSweep = {
            {0.9, 0.1}, {0.8, 0.1}, {0.6, 0.1}, {0.5, 0.1}, {0.0, 0.0}};
        std::ofstream csv(out_dir / "sweep.csv");
        csv << "omega_start,omega_end,latent_mse_edit_vs_recon,psnr_edit_vs_original\n";
        EditOutcome last;
        for (const auto& [w0, w1] : kSweep) {
            JobConfig sweep_job = job;
            sweep_job.edit.omega_start = w0;
            sweep_job.edit.omega_end = w1;
            EditResult res = run_bam_edit(z_T, cache.schedule, phi_cond, sweep_job.edit, backbone,
                                          noise, &iiv_final);
            char tag[32];
            std::snprintf(tag, sizeof tag, "%.1f", w0);
            io::write_ppm(out_dir / (std::string("I_edt_w") + tag + ".ppm"), res.edited);
            const double mse = latent_mse(res.editing.final_latent(),
                                          res.reconstruction.final_latent());
            csv << w0 << "," << w1 << "," << mse << "," << psnr(res.edited, original) << "\n";
            log << "omega_start " << w0 << ": latent mse vs recon " << mse << "\n";
            last.report = detail::edit_metrics(sweep_job, original, res);
            last.metrics_json = detail::report_json(sweep_job, last.report, res, original);
            last.result = std::move(res);
        }
        write_json(out_dir / "metrics.json", last.metrics_json);
        return last;
    }

    EditOutcome out;
    out.result =
        run_bam_edit(z_T, cache.schedule, phi_cond, job.edit, backbone, noise, &iiv_final);
    io::write_ppm(out_dir / "I_edt.ppm", out.result.edited);
    io::write_ppm(out_dir / "I_rct.ppm", out.result.recon_img);
    io::write_ppm(out_dir / "I_inp.ppm", out.result.transition_img);
    if (out.result.initial_inversion_img)
        io::write_ppm(out_dir / "I_iiv.ppm", *out.result.initial_inversion_img);
    out.report = detail::edit_metrics(job, original, out.result);
    out.metrics_json = detail::report_json(job, out.report, out.result, original);
    write_json(out_dir / "metrics.json", out.metrics_json);
    log << "edit written to " << out_dir.string() << " (psnr_rct " << out.report.psnr_db
        << " dB, latent mse edit/recon " << out.report.latent_mse_value << ")\n";
    return out;
}

// ---- reconstruct ----

struct ReconstructOutcome {
    Image image;
    double psnr_reconstruction = 0.0;
    double psnr_initial_pass = 0.0;
};

inline ReconstructOutcome cmd_reconstruct(const JobConfig& job, std::ostream& log = std::cout) {
    const auto cache_path = resolve_cache_path(job.cache_path);
    if (!std::filesystem::exists(cache_path))
        throw IoError("reconstruct: cache not found: " + cache_path.string());
    const io::CacheFile cache = io::read_cache(cache_path);

    JobConfig effective = job;
    effective.sampler = cache.sampler;
    effective.train_steps = cache.train_steps;
    effective.beta_start = cache.beta_start;
    effective.beta_end = cache.beta_end;
    const toy::ToyBackbone backbone = load_backbone(effective);
    if (backbone.latent_shape() != cache.latent)
        throw ConfigError("reconstruct: weights do not match the cache latent shape");
    const NoiseSchedule noise = schedule_for(effective, cache.steps);

    const Image original = backbone.decode_image(cache.inversion.final_latent());
    const ReconstructResult res =
        reconstruct(cache.schedule, cache.inversion.noisiest(), backbone, noise, cache.sampler);
    const Image initial = backbone.decode_image(cache.initial_pass.final_latent());

    ReconstructOutcome out;
    out.image = res.image;
    out.psnr_reconstruction = psnr(res.image, original);
    out.psnr_initial_pass = psnr(initial, original);

    const std::filesystem::path out_dir = job.out_dir;
    io::write_ppm(out_dir / "I_rct.ppm", res.image);
    write_json(out_dir / "reconstruct.json",
               {{"psnr_reconstruction", out.psnr_reconstruction},
                {"psnr_initial_pass", out.psnr_initial_pass},
                {"config", effective_config_json(effective)}});
    log << "psnr reconstruction " << out.psnr_reconstruction << " dB, initial pass "
        << out.psnr_initial_pass << " dB\n";
    return out;
}

// ---- bench ----

struct BenchCase {
    toy::SceneSpec source;
    std::string target_prompt;
};

// Deterministic mismatch suite: the target prompt differs from the source
// scene by a pose flip (structural) or a foreground color swap.
inline std::vector<BenchCase> toy_mismatch_suite(int count, uint64_t seed = 7700) {
    Rng rng(seed);
    std::vector<BenchCase> cases;
    cases.reserve(size_t(count));
    for (int i = 0; i < count; ++i) {
        BenchCase c;
        c.source = toy::random_scene(rng, 1);
        toy::SceneSpec target = c.source;
        if (i % 2 == 0) {
            target.pose = 1 - target.pose;  // non-rigid analog
        } else {
            target.fg_color = (target.fg_color + 1 + rng.uniform_int(0, 4)) %
                              int(toy::color_names().size());
            if (target.fg_color == target.bg_color)
                target.fg_color = (target.fg_color + 1) % int(toy::color_names().size());
        }
        c.target_prompt = toy::scene_prompt(target);
        cases.push_back(std::move(c));
    }
    return cases;
}

struct BenchSummary {
    int target_iterations = 0;
    int null_iterations = 0;
    double ratio = 0.0;
    int max_per_step = 0;
    bool budget_ok = true;
    int csv_rows = 0;
};

inline BenchSummary cmd_bench(const JobConfig& job, const std::string& suite,
                              const std::filesystem::path& csv_path,
                              std::ostream& log = std::cout) {
    if (job.backbone == BackboneKind::adapter)
        throw UnsupportedError("bench runs on the toy backbone only");
    if (suite != "toy") throw ConfigError("bench: unknown suite '" + suite + "'");

    const toy::ToyBackbone backbone = load_backbone(job);
    const NoiseSchedule noise = schedule_for(job, job.sampler.steps);
    const std::vector<BenchCase> cases = toy_mismatch_suite(10);

    if (csv_path.has_parent_path()) std::filesystem::create_directories(csv_path.parent_path());
    std::ofstream csv(csv_path);
    if (!csv) throw IoError("cannot write " + csv_path.string());
    csv << "mode,step,inner_iter,loss,threshold\n";

    BenchSummary summary;
    for (const InversionMode mode :
         {InversionMode::target_text, InversionMode::null_text_baseline}) {
        int mode_total = 0;
        for (const auto& c : cases) {
            const Image img = toy::render_scene(c.source, backbone.config().latent_height);
            const LatentTensor z0 = backbone.encode_image(img);
            const TextEmbedding phi = backbone.encode_text(c.target_prompt);
            TtisResult res = run_ttis(
                z0, phi, backbone, noise, job.sampler, job.optimizer, mode,
                [&](InversionMode m, int step, int inner, double loss, double thr) {
                    csv << to_string(m) << "," << step << "," << inner << "," << loss << "," << thr
                        << "\n";
                    ++summary.csv_rows;
                });
            mode_total += res.total_iterations;
            for (int it : res.schedule.iterations_used)
                summary.max_per_step = std::max(summary.max_per_step, it);
            if (res.total_iterations > job.optimizer.total_budget) summary.budget_ok = false;
        }
        (mode == InversionMode::target_text ? summary.target_iterations
                                            : summary.null_iterations) = mode_total;
    }
    if (summary.max_per_step > job.optimizer.inner_iterations) summary.budget_ok = false;
    summary.ratio = summary.null_iterations > 0
                        ? double(summary.target_iterations) / double(summary.null_iterations)
                        : (summary.target_iterations > 0 ? std::numeric_limits<double>::infinity()
                                                         : 1.0);

    log << "bench suite=" << suite << " cases=" << cases.size() << "\n"
        << "  target-text total iterations: " << summary.target_iterations << "\n"
        << "  null-text total iterations:   " << summary.null_iterations << "\n"
        << "  ratio (target/null):          " << summary.ratio << "\n"
        << "  max iterations in one step:   " << summary.max_per_step << " (cap "
        << job.optimizer.inner_iterations << ")\n"
        << "  budget discipline:            " << (summary.budget_ok ? "ok" : "VIOLATED") << "\n";
    if (!summary.budget_ok) throw NumericError("bench: iteration budget violated");
    return summary;
}

// ---- train-toy ----

struct TrainToyArgs {
    toy::ToyBackboneConfig backbone;
    toy::ToyDatasetSpec dataset;
    toy::ToyTrainConfig train;
    std::string weights_out = "toy.weights";
    std::string curve_csv;  // optional loss curve dump
};

inline TrainToyArgs load_train_args(const std::filesystem::path& config_path) {
    TrainToyArgs args;
    if (config_path.empty()) return args;
    std::ifstream in(config_path);
    if (!in) throw IoError("cannot open config " + config_path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("train config is not valid JSON: " + std::string(e.what()));
    }
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("base_channels", args.backbone.base_channels);
    get("heads", args.backbone.heads);
    get("attn_dim", args.backbone.attn_dim);
    get("text_dim", args.backbone.text_dim);
    get("seed", args.backbone.seed);
    get("steps", args.train.steps);
    get("batch", args.train.batch);
    get("lr", args.train.adam.learning_rate);
    get("dataset_seed", args.dataset.seed);
    get("jitter", args.dataset.jitter);
    get("uncond_prob", args.dataset.uncond_prob);
    get("weights_out", args.weights_out);
    get("curve_csv", args.curve_csv);
    return args;
}

inline toy::ToyBackbone cmd_train_toy(const TrainToyArgs& args, const JobConfig& job,
                                      std::ostream& log = std::cout) {
    const NoiseSchedule noise = make_schedule(job.train_steps, job.beta_start, job.beta_end,
                                              job.sampler.steps);
    toy::TrainReport report;
    toy::ToyBackbone backbone =
        toy::train_toy_backbone(args.backbone, noise, args.dataset, args.train, &report);
    io::save_toy_weights(args.weights_out, backbone);
    if (!args.curve_csv.empty()) {
        std::ofstream csv(args.curve_csv);
        csv << "step,loss\n";
        for (size_t i = 0; i < report.loss_curve.size(); ++i)
            csv << i << "," << report.loss_curve[i] << "\n";
    }
    log << "trained " << args.train.steps << " steps; val loss " << report.initial_val << " -> "
        << report.final_val << "\n"
        << "weights hash " << hash_hex(backbone.weights_hash()) << " -> " << args.weights_out
        << "\n";
    return backbone;
}

}  // namespace baret::pipeline
