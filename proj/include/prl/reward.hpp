#pragma once

#include <span>

#include "prl/pipeline.hpp"

// Composite reward: alpha_aes * AES(decode(tau)) - alpha_ctc * L_ctc. The
// alignment loss is capped at a large finite sentinel so Monte-Carlo
// averages stay finite when a sample cannot align at all (too short, or
// empty). The sentinel dominates early training gradients by design: a
// policy emitting unalignable sequences is pushed hard toward feasibility.

namespace prl::reward {

inline constexpr double kCtcSentinel = 1e4;

struct Weights {
    double alpha_aes = 1.0;
    double alpha_ctc = 3.0;
};

struct Breakdown {
    double aes = 0.0;       // in [0, 1]
    double ctc_loss = 0.0;  // sentinel-capped, >= 0
    double total = 0.0;     // alpha_aes * aes - alpha_ctc * ctc_loss
};

// Deterministic in (tokens, transcript, weights, pipe). Tokens after the
// first END are ignored; an effectively empty sequence scores aes = 0 and
// the ctc sentinel.
Breakdown composite_reward(std::span<const int> tokens, std::span<const int> transcript,
                           const Weights& weights, const pipeline::Pipeline& pipe);

}  // namespace prl::reward
