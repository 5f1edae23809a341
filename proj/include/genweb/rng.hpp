#pragma once

#include <cstdint>
#include <cmath>
#include <numbers>

namespace genweb::rng {

// SplitMix64 finalizer: full-avalanche 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Counter-based value: depends only on (key, counter), no sequential state.
constexpr std::uint64_t at(std::uint64_t key, std::uint64_t counter) noexcept {
    return mix64(key ^ mix64(counter + 0x632be59bd9b4e019ULL));
}

// Purpose tags keep independent consumers on independent streams; adding a
// tag never perturbs draws made under existing tags.
enum class Purpose : std::uint32_t {
    ArrowField = 1,
    CbmNoise = 2,
    CbmBridge = 3,
    MoranEvents = 4,
    MoranSample = 5,
    CoalescentEvents = 6,
    CssmNoise = 7,
    Experiment = 8,
    TypeInit = 9,
};

constexpr std::uint64_t stream_key(std::uint64_t seed, std::uint64_t replica,
                                   Purpose purpose) noexcept {
    std::uint64_t k = mix64(seed + 0x8f2d3a5bc1e06d47ULL);
    k = mix64(k ^ replica);
    return mix64(k ^ static_cast<std::uint64_t>(purpose));
}

inline double u64_to_unit(std::uint64_t x) noexcept {
    return static_cast<double>(x >> 11) * 0x1.0p-53;  // [0,1)
}

/// Sequential view of a counter-based stream.
class Stream {
public:
    Stream() = default;
    Stream(std::uint64_t seed, std::uint64_t replica, Purpose purpose)
        : key_(stream_key(seed, replica, purpose)) {}
    explicit Stream(std::uint64_t key) : key_(key) {}

    std::uint64_t key() const noexcept { return key_; }

    std::uint64_t next_u64() noexcept { return at(key_, ctr_++); }

    double uniform() noexcept { return u64_to_unit(next_u64()); }

    double uniform(double a, double b) noexcept { return a + (b - a) * uniform(); }

    // Lemire-style bounded draw; bias is < 2^-64 and irrelevant here.
    std::uint64_t uniform_int(std::uint64_t n) noexcept {
        using u128 = unsigned __int128;
        return static_cast<std::uint64_t>((u128(next_u64()) * u128(n)) >> 64);
    }

    double exponential(double rate) noexcept {
        return -std::log1p(-uniform()) / rate;
    }

    double normal() noexcept {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log1p(-u1));
        double a = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

private:
    std::uint64_t key_ = 0;
    std::uint64_t ctr_ = 0;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// Stateless standard normal addressed by (key, a, b). Used where draws must be
// a pure function of position (shared-web couplings).
inline double normal_at(std::uint64_t key, std::uint64_t a, std::uint64_t b) noexcept {
    std::uint64_t k = mix64(key ^ mix64(a + 0x3c6ef372fe94f82bULL));
    double u1 = u64_to_unit(at(k, 2 * b));
    double u2 = u64_to_unit(at(k, 2 * b + 1));
    double r = std::sqrt(-2.0 * std::log1p(-u1));
    return r * std::cos(2.0 * std::numbers::pi * u2);
}

inline double uniform_at(std::uint64_t key, std::uint64_t a, std::uint64_t b) noexcept {
    std::uint64_t k = mix64(key ^ mix64(a + 0x94d049bb133111ebULL));
    return u64_to_unit(at(k, b));
}

}  // namespace genweb::rng
