// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "baret/errors.hpp"
#include "baret/hash.hpp"

namespace baret {

// Token-embedding matrix produced by the text encoder; the optimization
// variable of the inversion schedule. Rows are tokens.
struct TextEmbedding {
    Eigen::MatrixXf tokens;  // (sequence_length, embed_dim)
    bool is_null = false;

    int length() const { return int(tokens.rows()); }
    int dim() const { return int(tokens.cols()); }
    bool same_shape(const TextEmbedding& o) const {
        return tokens.rows() == o.tokens.rows() && tokens.cols() == o.tokens.cols();
    }
    bool all_finite() const { return tokens.allFinite(); }
    uint64_t hash() const { return fnv1a64_floats(tokens.data(), size_t(tokens.size())); }
    bool bit_equal(const TextEmbedding& o) const {
        return same_shape(o) && tokens.cwiseEqual(o.tokens).all();
    }
};

inline void require_same_shape(const TextEmbedding& a, const TextEmbedding& b, const char* where) {
    if (!a.same_shape(b)) throw ShapeError(std::string(where) + ": embedding shape mismatch");
}

}  // namespace baret
