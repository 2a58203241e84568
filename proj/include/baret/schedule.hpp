// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <vector>

#include "baret/errors.hpp"

namespace baret {

// Cumulative-product noise schedule plus the inference-time timestep
// selection. alpha_bar has length train_steps+1 with alpha_bar[0] = 1 and
// is strictly decreasing; timestep_map lists the train timesteps visited
// at inference, noisiest first, ending at train timestep 1.
struct NoiseSchedule {
    int train_steps = 0;
    std::vector<double> alpha_bar;
    int inference_steps = 0;
    std::vector<int> timestep_map;

    // Inference noise ladder level j in [0, T]: level 0 is the noisiest
    // (timestep_map[0]), level T is clean (alpha_bar = 1).
    double abar_level(int level) const {
        if (level < 0 || level > inference_steps)
            throw ParameterError("abar_level: level out of range");
        if (level == inference_steps) return 1.0;
        return alpha_bar[size_t(timestep_map[size_t(level)])];
    }

    int timestep_at(int step_index) const {  // step_index in [0, T)
        return timestep_map[size_t(step_index)];
    }
};

// Scaled-linear betas: linear in sqrt space between beta_start and
// beta_end, then squared. Timestep selection is a uniform stride with the
// final inference step landing on train timestep 1.
inline NoiseSchedule make_schedule(int train_steps, double beta_start, double beta_end,
                                   int inference_steps) {
    if (!(beta_start > 0.0 && beta_start < beta_end && beta_end < 1.0))
        throw ParameterError("make_schedule: need 0 < beta_start < beta_end < 1");
    if (train_steps < 1) throw ParameterError("make_schedule: train_steps must be >= 1");
    if (inference_steps < 1 || inference_steps > train_steps)
        throw ParameterError("make_schedule: need 1 <= inference_steps <= train_steps");

    NoiseSchedule s;
    s.train_steps = train_steps;
    s.inference_steps = inference_steps;
    s.alpha_bar.resize(size_t(train_steps) + 1);
    s.alpha_bar[0] = 1.0;

    const double sb0 = std::sqrt(beta_start);
    const double sb1 = std::sqrt(beta_end);
    double prod = 1.0;
    for (int t = 1; t <= train_steps; ++t) {
        const double frac = train_steps > 1 ? double(t - 1) / double(train_steps - 1) : 0.0;
        const double root = sb0 + frac * (sb1 - sb0);
        prod *= 1.0 - root * root;
        s.alpha_bar[size_t(t)] = prod;
    }

    const int stride = train_steps / inference_steps;
    s.timestep_map.resize(size_t(inference_steps));
    for (int k = 0; k < inference_steps; ++k)
        s.timestep_map[size_t(k)] = (inference_steps - 1 - k) * stride + 1;
    return s;
}

}  // namespace baret
