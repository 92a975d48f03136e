#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <string_view>

#include "gevo/rng.hpp"

namespace gevo {

// FNV-1a over an explicit little-endian byte stream, finished with a
// splitmix64 avalanche. Fixed algorithm, no per-process seeding, so digests
// are comparable across runs and platforms.
class Hasher {
public:
    Hasher& bytes(std::span<const std::uint8_t> data) {
        for (auto b : data) {
            state_ ^= b;
            state_ *= 0x100000001b3ULL;
        }
        return *this;
    }

    Hasher& u8(std::uint8_t v) { return bytes({&v, 1}); }

    Hasher& u32(std::uint32_t v) {
        std::uint8_t buf[4];
        for (int i = 0; i < 4; ++i) buf[i] = static_cast<std::uint8_t>(v >> (8 * i));
        return bytes(buf);
    }

    Hasher& u64(std::uint64_t v) {
        std::uint8_t buf[8];
        for (int i = 0; i < 8; ++i) buf[i] = static_cast<std::uint8_t>(v >> (8 * i));
        return bytes(buf);
    }

    Hasher& f32(float v) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        return u32(bits);
    }

    Hasher& f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        return u64(bits);
    }
    Hasher& str(std::string_view s) {
        u64(s.size());
        return bytes({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
    }

    std::uint64_t digest() const { return splitmix64(state_); }

private:
    std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

}  // namespace gevo
