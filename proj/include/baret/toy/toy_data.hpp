// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "baret/latent.hpp"
#include "baret/rng.hpp"

namespace baret::toy {

// Synthetic scenes: one colored shape with a pose on a colored background.
// Prompts read "<color> <shape> <pose> on <color>".

inline const std::vector<std::string>& color_names() {
    static const std::vector<std::string> v = {"red",  "green",   "blue", "yellow",
                                               "cyan", "magenta", "white"};
    return v;
}
inline const std::vector<std::string>& shape_names() {
    static const std::vector<std::string> v = {"square", "circle", "bar", "cross"};
    return v;
}
inline const std::vector<std::string>& pose_names() {
    static const std::vector<std::string> v = {"tall", "wide"};
    return v;
}

inline std::vector<std::string> default_vocab() {
    std::vector<std::string> v;
    for (const auto& c : color_names()) v.push_back(c);
    for (const auto& s : shape_names()) v.push_back(s);
    for (const auto& p : pose_names()) v.push_back(p);
    v.push_back("on");
    return v;
}

inline std::array<uint8_t, 3> color_rgb(int color) {
    static const std::array<std::array<uint8_t, 3>, 7> table = {{{220, 40, 40},
                                                                 {40, 200, 60},
                                                                 {40, 80, 220},
                                                                 {230, 220, 50},
                                                                 {40, 210, 210},
                                                                 {210, 60, 210},
                                                                 {240, 240, 240}}};
    return table[size_t(color)];
}

struct SceneSpec {
    int fg_color = 0;
    int shape = 0;
    int pose = 0;
    int bg_color = 2;
    int jitter_x = 0;
    int jitter_y = 0;
};

inline std::string scene_prompt(const SceneSpec& s) {
    return color_names()[size_t(s.fg_color)] + " " + shape_names()[size_t(s.shape)] + " " +
           pose_names()[size_t(s.pose)] + " on " + color_names()[size_t(s.bg_color)];
}

inline Image render_scene(const SceneSpec& s, int size = 16) {
    Image img(size, size);
    const auto bg = color_rgb(s.bg_color);
    const auto fg = color_rgb(s.fg_color);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            for (int c = 0; c < 3; ++c) img.at(x, y, c) = bg[size_t(c)];

    const double cx = size / 2.0 - 0.5 + s.jitter_x;
    const double cy = size / 2.0 - 0.5 + s.jitter_y;
    const bool tall = s.pose == 0;
    // Half-extents swap between poses; the pose change is a structural
    // (non-rigid) edit, not a recoloring.
    const double long_r = size * 0.32;
    const double short_r = size * 0.14;
    const double rx = tall ? short_r : long_r;
    const double ry = tall ? long_r : short_r;

    auto inside = [&](int x, int y) -> bool {
        const double dx = x - cx, dy = y - cy;
        switch (s.shape) {
            case 0:  // square (rectangle stretched by pose)
                return std::abs(dx) <= rx && std::abs(dy) <= ry;
            case 1:  // circle (ellipse stretched by pose)
                return (dx * dx) / (rx * rx) + (dy * dy) / (ry * ry) <= 1.0;
            case 2:  // bar
                return std::abs(dx) <= (tall ? 1.0 : long_r) && std::abs(dy) <= (tall ? long_r : 1.0);
            default:  // cross: long limb follows the pose
                return (std::abs(dx) <= 1.0 && std::abs(dy) <= ry) ||
                       (std::abs(dy) <= 1.0 && std::abs(dx) <= rx);
        }
    };
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            if (inside(x, y))
                for (int c = 0; c < 3; ++c) img.at(x, y, c) = fg[size_t(c)];
    return img;
}

inline SceneSpec random_scene(Rng& rng, int jitter = 2) {
    SceneSpec s;
    s.fg_color = rng.uniform_int(0, int(color_names().size()) - 1);
    s.bg_color = rng.uniform_int(0, int(color_names().size()) - 1);
    while (s.bg_color == s.fg_color)
        s.bg_color = rng.uniform_int(0, int(color_names().size()) - 1);
    s.shape = rng.uniform_int(0, int(shape_names().size()) - 1);
    s.pose = rng.uniform_int(0, int(pose_names().size()) - 1);
    if (jitter > 0) {
        s.jitter_x = rng.uniform_int(-jitter, jitter);
        s.jitter_y = rng.uniform_int(-jitter, jitter);
    }
    return s;
}

}  // namespace baret::toy
