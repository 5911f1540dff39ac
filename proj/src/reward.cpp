#include "prl/reward.hpp"

#include <algorithm>
#include <cmath>

#include "prl/ctc.hpp"
#include "prl/errors.hpp"

namespace prl::reward {

Breakdown composite_reward(std::span<const int> tokens, std::span<const int> transcript,
                           const Weights& weights, const pipeline::Pipeline& pipe) {
    if (!(weights.alpha_aes >= 0.0) || !(weights.alpha_ctc >= 0.0) ||
        !std::isfinite(weights.alpha_aes) || !std::isfinite(weights.alpha_ctc)) {
        throw input_error("reward: weights must be finite and >= 0");
    }
    const bool empty = tokens.empty() || tokens.front() == pipe.end_token();
    Breakdown b;
    if (empty) {
        b.aes = 0.0;
        b.ctc_loss = kCtcSentinel;
    } else {
        b.aes = pipe.aes_score(pipe.decode(tokens));
        const double raw = ctc::alignment_loss(pipe.recognize(tokens), transcript);
        b.ctc_loss = std::min(raw, kCtcSentinel);
    }
    b.total = weights.alpha_aes * b.aes - weights.alpha_ctc * b.ctc_loss;
    return b;
}

}  // namespace prl::reward
