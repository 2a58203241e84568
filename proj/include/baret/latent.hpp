// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "baret/errors.hpp"
#include "baret/hash.hpp"

namespace baret {

struct LatentShape {
    int channels = 0;
    int height = 0;
    int width = 0;

    int pixels() const { return height * width; }
    int size() const { return channels * height * width; }
    bool operator==(const LatentShape&) const = default;
};

// Latent code Z_t. Stored as a (channels x height*width) matrix, column
// j = y*width + x, 32-bit floats.
struct LatentTensor {
    int channels = 0;
    int height = 0;
    int width = 0;
    Eigen::MatrixXf data;

    LatentTensor() = default;
    LatentTensor(int c, int h, int w) : channels(c), height(h), width(w) {
        data = Eigen::MatrixXf::Zero(c, h * w);
    }

    static LatentTensor zeros(const LatentShape& s) {
        return LatentTensor(s.channels, s.height, s.width);
    }
    static LatentTensor constant(const LatentShape& s, float v) {
        LatentTensor z(s.channels, s.height, s.width);
        z.data.setConstant(v);
        return z;
    }

    LatentShape shape() const { return {channels, height, width}; }
    bool same_shape(const LatentTensor& o) const { return shape() == o.shape(); }
    bool all_finite() const { return data.allFinite(); }

    uint64_t hash() const { return fnv1a64_floats(data.data(), size_t(data.size())); }
};

inline void require_same_shape(const LatentTensor& a, const LatentTensor& b, const char* where) {
    if (!a.same_shape(b)) throw ShapeError(std::string(where) + ": latent shape mismatch");
}

// 8-bit RGB raster, row-major, 3 bytes per pixel.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> rgb;

    Image() = default;
    Image(int w, int h) : width(w), height(h), rgb(size_t(w) * size_t(h) * 3, 0) {}

    uint8_t& at(int x, int y, int c) { return rgb[3 * (size_t(y) * width + x) + c]; }
    uint8_t at(int x, int y, int c) const { return rgb[3 * (size_t(y) * width + x) + c]; }

    bool same_shape(const Image& o) const { return width == o.width && height == o.height; }
    uint64_t hash() const { return fnv1a64(rgb.data(), rgb.size()); }
};

}  // namespace baret
