// SPDX-License-Identifier: Apache-2.0

#include <CLI11.hpp>
#include <iostream>

#include "baret/pipeline.hpp"

namespace {

using namespace baret;
using pipeline::JobConfig;

void add_backbone_options(CLI::App* cmd, JobConfig& job, std::string& backbone_name) {
    cmd->add_option("--backbone", backbone_name, "Backbone: toy | adapter")
        ->default_val("toy");
    cmd->add_option("--weights", job.weights_path, "Toy backbone weights file");
}

void finish_backbone(JobConfig& job, const std::string& backbone_name) {
    if (backbone_name == "toy")
        job.backbone = pipeline::BackboneKind::toy;
    else if (backbone_name == "adapter")
        job.backbone = pipeline::BackboneKind::adapter;
    else
        throw ConfigError("unknown backbone '" + backbone_name + "'");
}

void add_sampler_options(CLI::App* cmd, JobConfig& job) {
    cmd->add_option("--steps", job.sampler.steps, "DDIM inference steps");
    cmd->add_option("--guidance", job.sampler.guidance_scale, "Classifier-free guidance scale");
    cmd->add_option("--train-steps", job.train_steps, "Schedule train timesteps");
    cmd->add_option("--beta-start", job.beta_start, "Schedule beta start");
    cmd->add_option("--beta-end", job.beta_end, "Schedule beta end");
    cmd->add_option("--seed", job.seed, "Run seed");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"BARET: text-driven real-image editing via target-text inversion,"
                 " progressive transition and balanced attention"};
    app.require_subcommand(1);

    JobConfig job;
    std::string backbone_name = "toy";
    std::string config_path;
    std::string mode_name = "target-text";
    std::string suite = "toy";
    std::string bench_csv = "bench.csv";
    std::string train_config;
    pipeline::TrainToyArgs train_args;

    // invert
    auto* invert = app.add_subcommand("invert", "Fine-tune the target-text embedding per timestep"
                                                " and cache the result");
    invert->add_option("--image", job.image_path, "Input image (binary PPM)")->required();
    invert->add_option("--prompt", job.prompt, "Target text")->required();
    invert->add_option("--config", config_path, "JSON config file (flags override it)");
    add_sampler_options(invert, job);
    invert->add_option("--lr", job.optimizer.learning_rate, "Embedding learning rate");
    invert->add_option("--inner-iters", job.optimizer.inner_iterations, "Iterations per step");
    invert->add_option("--budget", job.optimizer.total_budget, "Total iteration budget");
    invert->add_option("--threshold-coefficient", job.optimizer.threshold_coefficient,
                       "Early-stop threshold coefficient");
    invert->add_flag("--literal-threshold", job.optimizer.literal_threshold_index,
                     "Index early-stop thresholds by the decreasing timestep");
    invert->add_option("--mode", mode_name, "target-text | null-text")->default_val("target-text");
    invert->add_option("--out", job.cache_path, "Cache output path");
    add_backbone_options(invert, job, backbone_name);

    // edit
    auto* edit = app.add_subcommand("edit", "Run the three-process balanced-attention edit from a"
                                            " cache");
    edit->add_option("--cache", job.cache_path, "Cache file from invert")->required();
    edit->add_option("--config", config_path, "JSON config file (flags override it)");
    edit->add_option("--omega-start", job.edit.omega_start, "Interpolation ramp start");
    edit->add_option("--omega-end", job.edit.omega_end, "Interpolation ramp end");
    edit->add_option("--eta", job.edit.sa_fraction, "Self-attention injection fraction");
    edit->add_option("--lambda", job.edit.ca_fraction, "Cross-attention injection fraction");
    edit->add_flag("--rigid", job.edit.rigid_mode, "Rigid edit: interpolation weight fixed at 1");
    edit->add_flag("--sweep", job.omega_sweep, "Sweep omega_start over {0.9,0.8,0.6,0.5,0.0}");
    edit->add_flag("--random-omega", job.edit.random_omega,
                   "Draw omega_t uniformly instead of the ramp");
    edit->add_option("--omega-seed", job.edit.omega_seed, "Seed for --random-omega");
    edit->add_option("--dump-attention", job.edit.attention_dump_dir,
                     "Directory for per-step attention map dumps");
    edit->add_option("--scorer", job.scorer, "Perceptual scorer plug-in name");
    edit->add_option("--out", job.out_dir, "Output directory")->default_val("edit_out");
    add_backbone_options(edit, job, backbone_name);

    // reconstruct
    auto* rec = app.add_subcommand("reconstruct", "Re-sample under the fine-tuned embeddings and"
                                                  " report PSNR");
    rec->add_option("--cache", job.cache_path, "Cache file from invert")->required();
    rec->add_option("--out", job.out_dir, "Output directory")->default_val("reconstruct_out");
    add_backbone_options(rec, job, backbone_name);

    // bench
    auto* bench = app.add_subcommand("bench", "Convergence comparison of target-text vs null-text"
                                              " tuning on the toy mismatch suite");
    bench->add_option("--suite", suite, "Benchmark suite")->default_val("toy");
    bench->add_option("--out", bench_csv, "Iteration log CSV path")->default_val("bench.csv");
    add_sampler_options(bench, job);
    bench->add_option("--lr", job.optimizer.learning_rate, "Embedding learning rate");
    bench->add_option("--inner-iters", job.optimizer.inner_iterations, "Iterations per step");
    bench->add_option("--budget", job.optimizer.total_budget, "Total iteration budget");
    bench->add_option("--threshold-coefficient", job.optimizer.threshold_coefficient,
                      "Early-stop threshold coefficient");
    add_backbone_options(bench, job, backbone_name);

    // train-toy
    auto* train = app.add_subcommand("train-toy", "Train the toy diffusion backbone on synthetic"
                                                  " scenes");
    train->add_option("--config", train_config, "JSON training config");
    train->add_option("--steps", train_args.train.steps, "Optimizer steps");
    train->add_option("--batch", train_args.train.batch, "Batch size");
    train->add_option("--lr", train_args.train.adam.learning_rate, "Learning rate");
    train->add_option("--seed", train_args.backbone.seed, "Weight init seed");
    train->add_option("--out", train_args.weights_out, "Weights output path");
    train->add_option("--curve", train_args.curve_csv, "Loss curve CSV path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (!config_path.empty()) {
            // Config file sits between defaults and flags: load it, then
            // re-parse so explicit flags win.
            JobConfig from_file = pipeline::load_json_config(config_path);
            std::string dummy_config;
            JobConfig merged = from_file;
            // Flags already parsed into `job`; overlay only options the
            // user actually passed.
            auto passed = [&](CLI::App* cmd, const std::string& name) {
                const CLI::Option* opt = cmd->get_option_no_throw(name);
                return opt && opt->count() > 0;
            };
            CLI::App* active = app.get_subcommands().front();
            if (passed(active, "--image")) merged.image_path = job.image_path;
            if (passed(active, "--prompt")) merged.prompt = job.prompt;
            if (passed(active, "--steps")) merged.sampler.steps = job.sampler.steps;
            if (passed(active, "--guidance"))
                merged.sampler.guidance_scale = job.sampler.guidance_scale;
            if (passed(active, "--train-steps")) merged.train_steps = job.train_steps;
            if (passed(active, "--beta-start")) merged.beta_start = job.beta_start;
            if (passed(active, "--beta-end")) merged.beta_end = job.beta_end;
            if (passed(active, "--seed")) merged.seed = job.seed;
            if (passed(active, "--lr"))
                merged.optimizer.learning_rate = job.optimizer.learning_rate;
            if (passed(active, "--inner-iters"))
                merged.optimizer.inner_iterations = job.optimizer.inner_iterations;
            if (passed(active, "--budget"))
                merged.optimizer.total_budget = job.optimizer.total_budget;
            if (passed(active, "--threshold-coefficient"))
                merged.optimizer.threshold_coefficient = job.optimizer.threshold_coefficient;
            if (passed(active, "--omega-start")) merged.edit.omega_start = job.edit.omega_start;
            if (passed(active, "--omega-end")) merged.edit.omega_end = job.edit.omega_end;
            if (passed(active, "--eta")) merged.edit.sa_fraction = job.edit.sa_fraction;
            if (passed(active, "--lambda")) merged.edit.ca_fraction = job.edit.ca_fraction;
            if (passed(active, "--rigid")) merged.edit.rigid_mode = job.edit.rigid_mode;
            if (passed(active, "--weights")) merged.weights_path = job.weights_path;
            if (passed(active, "--out")) {
                merged.cache_path = job.cache_path;
                merged.out_dir = job.out_dir;
            }
            if (passed(active, "--cache")) merged.cache_path = job.cache_path;
            if (passed(active, "--scorer")) merged.scorer = job.scorer;
            merged.omega_sweep = job.omega_sweep;
            merged.edit.random_omega = job.edit.random_omega;
            merged.edit.omega_seed = job.edit.omega_seed;
            merged.edit.attention_dump_dir = job.edit.attention_dump_dir;
            merged.invert_mode = job.invert_mode;
            job = merged;
            (void)dummy_config;
        }

        if (mode_name == "target-text")
            job.invert_mode = baret::InversionMode::target_text;
        else if (mode_name == "null-text")
            job.invert_mode = baret::InversionMode::null_text_baseline;
        else
            throw ConfigError("unknown mode '" + mode_name + "'");
        finish_backbone(job, backbone_name);

        if (invert->parsed()) {
            pipeline::cmd_invert(job);
        } else if (edit->parsed()) {
            pipeline::cmd_edit(job);
        } else if (rec->parsed()) {
            pipeline::cmd_reconstruct(job);
        } else if (bench->parsed()) {
            pipeline::cmd_bench(job, suite, bench_csv);
        } else if (train->parsed()) {
            pipeline::TrainToyArgs args = pipeline::load_train_args(train_config);
            auto passed = [&](const std::string& name) {
                const CLI::Option* opt = train->get_option_no_throw(name);
                return opt && opt->count() > 0;
            };
            if (passed("--steps")) args.train.steps = train_args.train.steps;
            if (passed("--batch")) args.train.batch = train_args.train.batch;
            if (passed("--lr")) args.train.adam.learning_rate = train_args.train.adam.learning_rate;
            if (passed("--seed")) args.backbone.seed = train_args.backbone.seed;
            if (passed("--out")) args.weights_out = train_args.weights_out;
            if (passed("--curve")) args.curve_csv = train_args.curve_csv;
            pipeline::cmd_train_toy(args, job);
        }
        return 0;
    } catch (const baret::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return baret::exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
