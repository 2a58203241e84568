// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "baret/io/container.hpp"
#include "baret/toy/toy_backbone.hpp"

namespace baret::io {

inline constexpr char kWeightsMagic[4] = {'B', 'R', 'T', 'W'};
inline constexpr uint32_t kWeightsVersion = 1;

// Toy backbone weights in the same envelope discipline as the cache:
// header carries the architecture config, payload the named tensors as
// little-endian 32-bit floats.
inline std::string encode_toy_weights(const toy::ToyBackbone& backbone) {
    const auto& cfg = backbone.config();
    ByteWriter header;
    header.i32(cfg.latent_channels);
    header.i32(cfg.latent_height);
    header.i32(cfg.latent_width);
    header.i32(cfg.base_channels);
    header.i32(cfg.heads);
    header.i32(cfg.attn_dim);
    header.i32(cfg.text_dim);
    header.i32(cfg.time_dim);
    header.i32(cfg.time_hidden);
    header.i32(cfg.max_prompt_len);
    header.u64(cfg.seed);
    header.u32(uint32_t(cfg.vocab.size()));
    for (const auto& tok : cfg.vocab) header.str(tok);

    ByteWriter payload;
    uint32_t count = 0;
    backbone.model().params().for_each([&](const char*, const Eigen::MatrixXf&) { ++count; });
    payload.u32(count);
    backbone.model().params().for_each([&](const char* name, const Eigen::MatrixXf& m) {
        payload.str(name);
        payload.u32(uint32_t(m.rows()));
        payload.u32(uint32_t(m.cols()));
        payload.f32_array(m.data(), size_t(m.size()));
    });
    return pack_envelope(kWeightsMagic, kWeightsVersion, header, payload);
}

inline toy::ToyBackbone decode_toy_weights(const std::string& bytes) {
    const Envelope env = unpack_envelope(bytes, kWeightsMagic, kWeightsVersion);
    ByteReader h(env.header);
    toy::ToyBackboneConfig cfg;
    cfg.latent_channels = h.i32();
    cfg.latent_height = h.i32();
    cfg.latent_width = h.i32();
    cfg.base_channels = h.i32();
    cfg.heads = h.i32();
    cfg.attn_dim = h.i32();
    cfg.text_dim = h.i32();
    cfg.time_dim = h.i32();
    cfg.time_hidden = h.i32();
    cfg.max_prompt_len = h.i32();
    cfg.seed = h.u64();
    cfg.vocab.resize(h.u32());
    for (auto& tok : cfg.vocab) tok = h.str();

    toy::ToyModel<float> model(cfg);
    ByteReader p(env.payload);
    const uint32_t count = p.u32();
    for (uint32_t i = 0; i < count; ++i) {
        const std::string name = p.str();
        const uint32_t rows = p.u32();
        const uint32_t cols = p.u32();
        bool found = false;
        model.params().for_each([&](const char* n, Eigen::MatrixXf& m) {
            if (name != n) return;
            if (m.rows() != long(rows) || m.cols() != long(cols))
                throw CacheVersionError("weights tensor shape mismatch for " + name);
            p.f32_array(m.data(), size_t(m.size()));
            found = true;
        });
        if (!found) throw CacheVersionError("unknown weights tensor " + name);
    }
    if (!p.done()) throw CacheChecksumError("weights payload has trailing bytes");
    return toy::ToyBackbone(std::move(model));
}

inline void save_toy_weights(const std::filesystem::path& path, const toy::ToyBackbone& backbone) {
    write_file_bytes(path, encode_toy_weights(backbone));
}

inline toy::ToyBackbone load_toy_weights(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw IoError("weights not found: " + path.string());
    return decode_toy_weights(read_file_bytes(path));
}

}  // namespace baret::io
