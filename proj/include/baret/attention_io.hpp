// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "baret/errors.hpp"

namespace baret {

enum class AttentionKind { self_attention, cross_attention };

struct AttentionLayerInfo {
    std::string id;
    AttentionKind kind = AttentionKind::self_attention;
};

// Softmax probability maps of one attention layer, one matrix per head,
// each (query_positions x key_positions) with rows summing to 1.
struct AttentionMaps {
    AttentionKind kind = AttentionKind::self_attention;
    std::vector<Eigen::MatrixXf> heads;
};

// All probability maps recorded during a single denoiser call.
struct AttentionCapture {
    int step_index = -1;
    std::map<std::string, AttentionMaps> layers;
};

enum class InjectionSource { reconstruction, transition };

// Replacement probability maps spliced into named layers of a receiving
// call. Maps are used verbatim in place of the layer's own softmax; the
// receiving call keeps its own value projections.
struct InjectionDirective {
    struct Entry {
        AttentionKind kind = AttentionKind::self_attention;
        InjectionSource provenance = InjectionSource::reconstruction;
        std::vector<Eigen::MatrixXf> heads;
    };
    std::map<std::string, Entry> entries;

    bool empty() const { return entries.empty(); }
    const Entry* find(const std::string& layer_id) const {
        auto it = entries.find(layer_id);
        return it == entries.end() ? nullptr : &it->second;
    }
};

inline bool rows_stochastic(const Eigen::MatrixXf& m, float tol = 1e-4f) {
    if (m.size() == 0) return false;
    if ((m.array() < 0.0f).any()) return false;
    return ((m.rowwise().sum().array() - 1.0f).abs() <= tol).all();
}

}  // namespace baret
