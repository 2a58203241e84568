// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "baret/errors.hpp"
#include "baret/hash.hpp"

namespace baret::io {

static_assert(std::endian::native == std::endian::little,
              "container format assumes a little-endian host");

class ByteWriter {
public:
    void u8(uint8_t v) { buf_.push_back(char(v)); }
    void u32(uint32_t v) { raw(&v, sizeof v); }
    void u64(uint64_t v) { raw(&v, sizeof v); }
    void i32(int32_t v) { raw(&v, sizeof v); }
    void f32(float v) { raw(&v, sizeof v); }
    void f64(double v) { raw(&v, sizeof v); }
    void str(const std::string& s) {
        u32(uint32_t(s.size()));
        raw(s.data(), s.size());
    }
    void f32_array(const float* data, size_t count) { raw(data, count * sizeof(float)); }
    void raw(const void* data, size_t size) {
        const auto* p = static_cast<const char*>(data);
        buf_.insert(buf_.end(), p, p + size);
    }
    void append(const ByteWriter& other) { buf_.insert(buf_.end(), other.buf_.begin(), other.buf_.end()); }

    const std::string& bytes() const { return buf_; }
    size_t size() const { return buf_.size(); }
    uint64_t checksum() const { return fnv1a64(buf_.data(), buf_.size()); }

private:
    std::string buf_;
};

class ByteReader {
public:
    ByteReader(const char* data, size_t size) : data_(data), size_(size) {}
    explicit ByteReader(const std::string& s) : ByteReader(s.data(), s.size()) {}

    uint8_t u8() { return uint8_t(take(1)[0]); }
    uint32_t u32() { return scalar<uint32_t>(); }
    uint64_t u64() { return scalar<uint64_t>(); }
    int32_t i32() { return scalar<int32_t>(); }
    float f32() { return scalar<float>(); }
    double f64() { return scalar<double>(); }
    std::string str() {
        const uint32_t n = u32();
        const char* p = take(n);
        return std::string(p, n);
    }
    void f32_array(float* out, size_t count) {
        const char* p = take(count * sizeof(float));
        std::memcpy(out, p, count * sizeof(float));
    }
    size_t remaining() const { return size_ - pos_; }
    bool done() const { return pos_ == size_; }

private:
    template <class T>
    T scalar() {
        T v;
        std::memcpy(&v, take(sizeof(T)), sizeof(T));
        return v;
    }
    const char* take(size_t n) {
        if (pos_ + n > size_) throw CacheTruncationError("container: unexpected end of data");
        const char* p = data_ + pos_;
        pos_ += n;
        return p;
    }

    const char* data_;
    size_t size_;
    size_t pos_ = 0;
};

inline std::string read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

inline void write_file_bytes(const std::filesystem::path& path, const std::string& bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(bytes.data(), std::streamsize(bytes.size()));
    if (!out) throw IoError("short write to " + path.string());
}

// Shared envelope: magic | u32 version | header bytes | u64 payload size |
// payload bytes | u64 fnv-1a checksum of payload. The header is parsed and
// validated before any payload byte is touched.
struct Envelope {
    std::string header;
    std::string payload;
};

inline std::string pack_envelope(const char magic[4], uint32_t version, const ByteWriter& header,
                                 const ByteWriter& payload) {
    ByteWriter out;
    out.raw(magic, 4);
    out.u32(version);
    out.u32(uint32_t(header.size()));
    out.append(header);
    out.u64(uint64_t(payload.size()));
    out.append(payload);
    out.u64(payload.checksum());
    return out.bytes();
}

inline Envelope unpack_envelope(const std::string& bytes, const char magic[4],
                                uint32_t expected_version) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), magic, 4) != 0)
        throw CacheMagicError("bad magic");
    ByteReader r(bytes.data() + 4, bytes.size() - 4);
    uint32_t version;
    try {
        version = r.u32();
    } catch (const CacheTruncationError&) {
        throw CacheTruncationError("truncated before version field");
    }
    if (version != expected_version)
        throw CacheVersionError("unsupported format version " + std::to_string(version));
    Envelope env;
    const uint32_t header_size = r.u32();
    if (r.remaining() < header_size) throw CacheTruncationError("truncated header");
    env.header.assign(bytes.data() + 4 + 8, header_size);
    ByteReader body(bytes.data() + 4 + 8 + header_size, bytes.size() - 4 - 8 - header_size);
    const uint64_t payload_size = body.u64();
    if (body.remaining() < payload_size + 8) throw CacheTruncationError("truncated payload");
    env.payload.assign(bytes.data() + 4 + 8 + header_size + 8, payload_size);
    ByteReader tail(bytes.data() + 4 + 8 + header_size + 8 + payload_size, 8);
    const uint64_t stored = tail.u64();
    const uint64_t actual = fnv1a64(env.payload.data(), env.payload.size());
    if (stored != actual) throw CacheChecksumError("payload checksum mismatch");
    return env;
}

}  // namespace baret::io
