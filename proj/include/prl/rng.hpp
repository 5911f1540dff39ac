#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

// Deterministic randomness. Every random draw in the project flows from one
// base seed through derive_seed(base, purpose_tag, indices...), so results
// are reproducible regardless of evaluation order or thread scheduling.
//
// Uniform doubles come from the top 53 bits of the engine output rather than
// std::uniform_real_distribution, whose mapping is implementation-defined.

namespace prl::rng {

std::uint64_t splitmix64(std::uint64_t& state);

std::uint64_t fnv1a64(std::string_view s);

// Mixes (base, tag, indices) into an independent stream seed.
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag,
                          std::initializer_list<std::uint64_t> indices = {});

class Stream {
public:
    explicit Stream(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // [0, 1) with 53-bit resolution
    double uniform01() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller (deterministic given the engine state).
    double normal();

    // Inverse-CDF draw in index order. `probs` must be nonnegative and sum
    // to ~1; the final index absorbs any rounding shortfall.
    std::size_t categorical(std::span<const double> probs);

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace prl::rng
