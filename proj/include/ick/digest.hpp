#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>

namespace ick {

using Digest = std::array<std::uint8_t, 32>;

/// Incremental SHA-256.
class Sha256 {
public:
    Sha256();
    ~Sha256();
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    Sha256& update(std::span<const std::uint8_t> bytes);
    Sha256& update_u32(std::uint32_t v);
    template <typename T>
    Sha256& update_values(std::span<const T> values) {
        return update({reinterpret_cast<const std::uint8_t*>(values.data()), values.size_bytes()});
    }
    Digest finish();

private:
    struct State;
    std::unique_ptr<State> state_;
};

std::string to_hex(const Digest& digest);

}  // namespace ick
