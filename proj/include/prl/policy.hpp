#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

// A small autoregressive categorical model over discrete audio tokens,
// conditioned on a transcript and an audio-prompt prefix. With trainable
// parameters it is the online policy; a frozen copy serves as the
// reference policy.
//
// Architecture: token embeddings -> stacked tanh recurrences -> linear
// softmax head. The context is the concatenation
//
//   [transcript tokens] SEP [prompt tokens] BOS [generated tokens...]
//
// and the head after consuming BOS yields the first generated token's
// distribution. Gradients are hand-derived backpropagation through time;
// there is no autodiff dependency, so finite differences stay a genuinely
// independent check.

namespace prl::policy {

struct Vocabulary {
    int audio_vocab = 12;  // includes END as the last id
    int text_vocab = 4;

    int end_token() const { return audio_vocab - 1; }
};

struct PromptContext {
    std::vector<int> transcript_tokens;  // non-empty, ids < text_vocab
    std::vector<int> prompt_tokens;      // ids < audio_vocab, END excluded
};

struct ModelConfig {
    Vocabulary vocab;
    int embed_dim = 4;
    int hidden_dim = 8;
    int layers = 1;

    std::size_t param_count() const;
};

// Flat parameter vector plus the architecture that gives it meaning.
struct PolicyParams {
    ModelConfig config;
    std::vector<double> values;
};

struct TokenSequence {
    std::vector<int> tokens;
    std::vector<double> step_log_probs;  // under the generating policy

    double log_prob() const;
};

PolicyParams random_params(const ModelConfig& config, std::uint64_t seed,
                           double scale = 0.5);

// Full next-token distribution given the context and a generated prefix.
// Deterministic in its inputs; sums to 1 within 1e-12.
std::vector<double> next_token_distribution(const PolicyParams& params,
                                            const PromptContext& ctx,
                                            std::span<const int> prefix);

// Ancestral sampling; stops at END or after max_len tokens.
TokenSequence sample_sequence(const PolicyParams& params, const PromptContext& ctx,
                              std::uint64_t seed, int max_len);

double sequence_log_prob(const PolicyParams& params, const PromptContext& ctx,
                         std::span<const int> tokens);

// Sum over visited prefixes of KL(pi_theta(.|prefix) || pi_ref(.|prefix)).
double trajectory_kl(const PolicyParams& params, const PolicyParams& ref_params,
                     const PromptContext& ctx, std::span<const int> tokens);

struct ValueGrad {
    double value;
    std::vector<double> grad;  // d value / d params, flat layout
};

ValueGrad sequence_log_prob_grad(const PolicyParams& params, const PromptContext& ctx,
                                 std::span<const int> tokens);

ValueGrad trajectory_kl_grad(const PolicyParams& params, const PolicyParams& ref_params,
                             const PromptContext& ctx, std::span<const int> tokens);

// Checkpoint: "prl-policy v1 ..." header line + flat little-endian doubles.
void save_checkpoint(const std::filesystem::path& path, const PolicyParams& params);
PolicyParams load_checkpoint(const std::filesystem::path& path);

}  // namespace prl::policy
