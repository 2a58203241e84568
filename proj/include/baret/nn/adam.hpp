// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <vector>

#include "baret/nn/tape.hpp"

namespace baret::nn {

struct AdamConfig {
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Adam with bias correction over a fixed list of parameter slots.
template <class S>
class Adam {
public:
    explicit Adam(const AdamConfig& cfg = {}) : cfg_(cfg) {}

    void update(Mat<S>& param, const Mat<S>& grad) {
        if (slots_.size() <= cursor_) slots_.emplace_back(Slot{Mat<S>::Zero(param.rows(), param.cols()),
                                                               Mat<S>::Zero(param.rows(), param.cols())});
        Slot& s = slots_[cursor_++];
        const S b1 = S(cfg_.beta1), b2 = S(cfg_.beta2);
        s.m = b1 * s.m + (S(1) - b1) * grad;
        s.v = b2 * s.v + (S(1) - b2) * grad.cwiseProduct(grad);
        const double t = double(step_ + 1);
        const S corr1 = S(1.0 - std::pow(cfg_.beta1, t));
        const S corr2 = S(1.0 - std::pow(cfg_.beta2, t));
        const S lr = S(cfg_.learning_rate);
        param.array() -= lr * (s.m.array() / corr1) /
                         ((s.v.array() / corr2).sqrt() + S(cfg_.epsilon));
    }

    // Call once after all parameters of one optimization step were updated.
    void end_step() {
        ++step_;
        cursor_ = 0;
    }

    int step_count() const { return step_; }

private:
    struct Slot {
        Mat<S> m, v;
    };
    AdamConfig cfg_;
    std::vector<Slot> slots_;
    size_t cursor_ = 0;
    int step_ = 0;
};

}  // namespace baret::nn
