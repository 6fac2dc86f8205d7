#pragma once

// Little-endian encoding helpers for the checkpoint and feature-bank formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "ick/error.hpp"

namespace ick::detail {

class ByteWriter {
public:
    void u8(std::uint8_t v) { bytes_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int shift = 0; shift < 32; shift += 8) bytes_.push_back(static_cast<std::uint8_t>(v >> shift));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void raw(std::span<const std::uint8_t> b) { bytes_.insert(bytes_.end(), b.begin(), b.end()); }
    void magic(const char (&m)[5]) { raw({reinterpret_cast<const std::uint8_t*>(m), 4}); }

    std::vector<std::uint8_t>& bytes() noexcept { return bytes_; }

private:
    std::vector<std::uint8_t> bytes_;
};

class ByteReader {
public:
    ByteReader(std::span<const std::uint8_t> bytes, std::string origin) : bytes_(bytes), origin_(std::move(origin)) {}

    std::uint8_t u8() { return take(1)[0]; }
    std::uint32_t u32() {
        const auto b = take(4);
        return std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) |
               (std::uint32_t{b[3]} << 24);
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::span<const std::uint8_t> take(std::size_t n) {
        if (bytes_.size() - offset_ < n) {
            throw Error(ErrorKind::truncated_file, origin_ + " ends at byte " + std::to_string(bytes_.size()) +
                                                       ", needed " + std::to_string(offset_ + n));
        }
        auto out = bytes_.subspan(offset_, n);
        offset_ += n;
        return out;
    }
    void expect_magic(const char (&m)[5]) {
        const auto b = take(4);
        if (std::memcmp(b.data(), m, 4) != 0) {
            throw Error(ErrorKind::bad_magic, origin_ + " does not start with \"" + std::string(m) + "\"");
        }
    }
    bool at_end() const noexcept { return offset_ == bytes_.size(); }
    const std::string& origin() const noexcept { return origin_; }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t offset_ = 0;
    std::string origin_;
};

inline std::vector<std::uint8_t> read_all(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_all(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::io, "write failed for " + path.string());
}

}  // namespace ick::detail
