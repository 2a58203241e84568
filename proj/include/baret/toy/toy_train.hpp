// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "baret/nn/adam.hpp"
#include "baret/schedule.hpp"
#include "baret/toy/toy_backbone.hpp"

namespace baret::toy {

struct ToyDatasetSpec {
    int jitter = 2;
    double uncond_prob = 0.1;  // condition dropout so guidance works
    uint64_t seed = 99;
};

struct ToyTrainConfig {
    int steps = 2000;
    int batch = 8;
    nn::AdamConfig adam{0.002, 0.9, 0.999, 1e-8};
    int val_every = 100;
    int val_size = 16;
    std::function<void(int step, double loss)> on_step;
};

struct TrainReport {
    std::vector<double> loss_curve;  // one entry per optimizer step
    std::vector<double> val_curve;
    double initial_val = 0.0;
    double final_val = 0.0;
};

namespace detail {

struct ValSample {
    Eigen::MatrixXf z_t;
    Eigen::MatrixXf eps;
    std::vector<int> ids;
    int t = 1;
};

inline Eigen::MatrixXf noised_latent(const Eigen::MatrixXf& x0, const Eigen::MatrixXf& eps,
                                     double abar) {
    return float(std::sqrt(abar)) * x0 + float(std::sqrt(1.0 - abar)) * eps;
}

}  // namespace detail

// Standard denoising training on synthetic scenes: draw a scene, noise its
// latent to a random timestep, regress the injected noise under the scene
// prompt (dropped to the null prompt at uncond_prob).
inline ToyBackbone train_toy_backbone(const ToyBackboneConfig& cfg, const NoiseSchedule& schedule,
                                      const ToyDatasetSpec& data, const ToyTrainConfig& train,
                                      TrainReport* report = nullptr) {
    ToyBackbone backbone(cfg);
    auto& model = backbone.model();
    Rng rng(data.seed);

    auto draw = [&](Rng& r, detail::ValSample& s) {
        const SceneSpec scene = random_scene(r, data.jitter);
        const Image img = render_scene(scene, cfg.latent_height);
        const LatentTensor x0 = backbone.encode_image(img);
        s.t = r.uniform_int(1, schedule.train_steps);
        s.eps.resize(x0.data.rows(), x0.data.cols());
        for (long i = 0; i < s.eps.size(); ++i) s.eps.data()[i] = float(r.normal());
        s.z_t = detail::noised_latent(x0.data, s.eps, schedule.alpha_bar[size_t(s.t)]);
        s.ids = r.uniform() < data.uncond_prob ? std::vector<int>{model.bos_id()}
                                               : model.tokenize(scene_prompt(scene));
    };

    std::vector<detail::ValSample> val_set(size_t(train.val_size));
    Rng val_rng(data.seed ^ 0xabcdef12345ULL);
    for (auto& s : val_set) draw(val_rng, s);

    auto eval_val = [&]() {
        double total = 0.0;
        for (const auto& s : val_set) {
            nn::Tape<float> tp;
            const auto nodes = model.push_params(tp, false);
            const int eps_pred = model.forward(tp, nodes, tp.constant(s.z_t), s.t,
                                               model.encode_tokens_node(tp, nodes("tok_table"),
                                                                        nodes("pos_table"), s.ids));
            total += double((tp.val(eps_pred) - s.eps).squaredNorm()) / double(s.eps.size());
        }
        return total / double(val_set.size());
    };

    TrainReport local;
    TrainReport& rep = report ? *report : local;
    rep.initial_val = eval_val();

    nn::Adam<float> adam(train.adam);
    for (int step = 0; step < train.steps; ++step) {
        nn::Tape<float> tp;
        const auto nodes = model.push_params(tp, true);
        int loss_node = -1;
        for (int b = 0; b < train.batch; ++b) {
            detail::ValSample s;
            draw(rng, s);
            const int emb =
                model.encode_tokens_node(tp, nodes("tok_table"), nodes("pos_table"), s.ids);
            const int eps_pred = model.forward(tp, nodes, tp.constant(s.z_t), s.t, emb);
            const int l = tp.mse(eps_pred, tp.constant(s.eps));
            loss_node = b == 0 ? l : tp.add(loss_node, l);
        }
        loss_node = tp.scale(loss_node, 1.0f / float(train.batch));
        const double loss = double(tp.val(loss_node)(0, 0));
        if (!std::isfinite(loss)) throw NumericError("toy training diverged at step " +
                                                     std::to_string(step));
        tp.backward(loss_node);

        model.params().for_each([&](const char* name, Eigen::MatrixXf& m) {
            adam.update(m, tp.grad(nodes(name)));
        });
        adam.end_step();

        rep.loss_curve.push_back(loss);
        if (train.on_step) train.on_step(step, loss);
        if (train.val_every > 0 && (step + 1) % train.val_every == 0)
            rep.val_curve.push_back(eval_val());
    }
    rep.final_val = train.steps > 0 ? eval_val() : rep.initial_val;
    return backbone;
}

}  // namespace baret::toy
