// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "baret/io/container.hpp"
#include "baret/ttis.hpp"

namespace baret::io {

inline constexpr char kCacheMagic[4] = {'B', 'R', 'T', 'C'};
inline constexpr uint32_t kCacheVersion = 1;

// Persists the inversion outputs between `invert` and `edit`: header with
// the run identity, payload with the inversion trajectory, the fine-tuned
// schedule and the initial conditional pass. Little-endian 32-bit floats,
// 64-bit checksum over the payload.
struct CacheFile {
    // header
    int steps = 0;
    int embed_len = 0, embed_dim = 0;
    LatentShape latent;
    SamplerConfig sampler;
    int train_steps = 0;
    double beta_start = 0.0, beta_end = 0.0;
    InversionMode mode = InversionMode::target_text;
    std::string prompt;
    uint64_t seed = 0;
    // payload
    Trajectory inversion;
    FineTunedSchedule schedule;
    Trajectory initial_pass;
};

namespace detail {

inline void put_latent(ByteWriter& w, const LatentTensor& z) {
    w.f32_array(z.data.data(), size_t(z.data.size()));
}
inline LatentTensor get_latent(ByteReader& r, const LatentShape& s) {
    LatentTensor z(s.channels, s.height, s.width);
    r.f32_array(z.data.data(), size_t(z.data.size()));
    return z;
}
inline void put_trajectory(ByteWriter& w, const Trajectory& t) {
    w.f64(t.guidance_scale);
    for (const auto& z : t.latents) put_latent(w, z);
}
inline Trajectory get_trajectory(ByteReader& r, int steps, const LatentShape& s) {
    Trajectory t;
    t.guidance_scale = r.f64();
    t.latents.reserve(size_t(steps) + 1);
    for (int i = 0; i <= steps; ++i) t.latents.push_back(get_latent(r, s));
    return t;
}
// Embeddings carry their own row count: the null-text baseline stores
// tuned null embeddings whose length differs from the prompt's.
inline void put_embedding(ByteWriter& w, const TextEmbedding& e) {
    w.u8(e.is_null ? 1 : 0);
    w.u32(uint32_t(e.tokens.rows()));
    w.f32_array(e.tokens.data(), size_t(e.tokens.size()));
}
inline TextEmbedding get_embedding(ByteReader& r, int dim) {
    TextEmbedding e;
    e.is_null = r.u8() != 0;
    const uint32_t rows = r.u32();
    e.tokens.resize(long(rows), dim);
    r.f32_array(e.tokens.data(), size_t(e.tokens.size()));
    return e;
}

}  // namespace detail

inline std::string encode_cache(const CacheFile& c) {
    ByteWriter header;
    header.u32(uint32_t(c.steps));
    header.u32(uint32_t(c.embed_len));
    header.u32(uint32_t(c.embed_dim));
    header.i32(c.latent.channels);
    header.i32(c.latent.height);
    header.i32(c.latent.width);
    header.f64(c.sampler.guidance_scale);
    header.i32(c.sampler.steps);
    header.f64(c.sampler.eta);
    header.u32(uint32_t(c.train_steps));
    header.f64(c.beta_start);
    header.f64(c.beta_end);
    header.u32(c.mode == InversionMode::target_text ? 0 : 1);
    header.str(c.prompt);
    header.u64(c.seed);

    ByteWriter payload;
    detail::put_trajectory(payload, c.inversion);
    payload.u8(c.schedule.mode == InversionMode::target_text ? 0 : 1);
    detail::put_embedding(payload, c.schedule.phi_cond);
    for (const auto& e : c.schedule.embeddings) detail::put_embedding(payload, e);
    for (double v : c.schedule.per_step_loss) payload.f64(v);
    for (int v : c.schedule.iterations_used) payload.i32(v);
    detail::put_trajectory(payload, c.initial_pass);

    return pack_envelope(kCacheMagic, kCacheVersion, header, payload);
}

inline CacheFile decode_cache(const std::string& bytes) {
    const Envelope env = unpack_envelope(bytes, kCacheMagic, kCacheVersion);
    CacheFile c;
    ByteReader h(env.header);
    c.steps = int(h.u32());
    c.embed_len = int(h.u32());
    c.embed_dim = int(h.u32());
    c.latent.channels = h.i32();
    c.latent.height = h.i32();
    c.latent.width = h.i32();
    c.sampler.guidance_scale = h.f64();
    c.sampler.steps = h.i32();
    c.sampler.eta = h.f64();
    c.train_steps = int(h.u32());
    c.beta_start = h.f64();
    c.beta_end = h.f64();
    c.mode = h.u32() == 0 ? InversionMode::target_text : InversionMode::null_text_baseline;
    c.prompt = h.str();
    c.seed = h.u64();
    if (c.steps < 1 || c.latent.size() <= 0 || c.embed_len < 1 || c.embed_dim < 1)
        throw CacheVersionError("cache header is inconsistent");

    ByteReader p(env.payload);
    c.inversion = detail::get_trajectory(p, c.steps, c.latent);
    c.schedule.mode = p.u8() == 0 ? InversionMode::target_text : InversionMode::null_text_baseline;
    c.schedule.phi_cond = detail::get_embedding(p, c.embed_dim);
    c.schedule.embeddings.reserve(size_t(c.steps));
    for (int i = 0; i < c.steps; ++i)
        c.schedule.embeddings.push_back(detail::get_embedding(p, c.embed_dim));
    c.schedule.per_step_loss.resize(size_t(c.steps));
    for (auto& v : c.schedule.per_step_loss) v = p.f64();
    c.schedule.iterations_used.resize(size_t(c.steps));
    for (auto& v : c.schedule.iterations_used) v = p.i32();
    c.initial_pass = detail::get_trajectory(p, c.steps, c.latent);
    if (!p.done()) throw CacheChecksumError("cache payload has trailing bytes");
    return c;
}

inline void write_cache(const std::filesystem::path& path, const CacheFile& c) {
    write_file_bytes(path, encode_cache(c));
}

inline CacheFile read_cache(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw IoError("cache not found: " + path.string());
    return decode_cache(read_file_bytes(path));
}

}  // namespace baret::io
