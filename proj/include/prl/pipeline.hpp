#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "prl/ctc.hpp"

// The frozen downstream stack: a deterministic token-to-feature decoder, a
// table-lookup recognizer producing frame posteriors, and a bounded acoustic
// quality scorer. Everything here is immutable after construction.
//
// The scorer deliberately admits reward hacking: its preference component
// rewards frames near one designated token's embedding, so repeating that
// token maximizes the score while destroying transcript fidelity. Keeping
// that failure mode reachable is a design requirement, not an accident.

namespace prl::pipeline {

struct AesConfig {
    double smoothness_weight = 1.0;
    double diversity_weight = 1.0;   // weight of the diversity *penalty*
    int preferred_token = 0;
    // The preference bonus is the dominant component by design: it is the
    // channel a policy exploits when the transcript term is absent.
    double preference_weight = 2.0;
};

// One feature vector per audio token (END excluded).
struct Waveform {
    int dim = 0;
    std::vector<double> values;  // row-major frames x dim

    int frames() const {
        return dim == 0 ? 0 : static_cast<int>(values.size()) / dim;
    }
    std::span<const double> frame(int f) const {
        return {values.data() + static_cast<std::size_t>(f) * dim,
                static_cast<std::size_t>(dim)};
    }
};

class Pipeline {
public:
    // Validates shapes, row sums (1e-9), nonnegativity, finiteness.
    Pipeline(int audio_vocab, int alphabet, int embed_dim,
             std::vector<double> embeddings, std::vector<double> recognizer_table,
             AesConfig cfg);

    // The shipped default instance: unit-norm random embeddings from the
    // given seed; a recognizer where token 0 reads as near-blank, tokens
    // 1..V-2 read as symbol (i-1) mod alphabet at high confidence, and END
    // is uniform.
    static Pipeline generate_default(std::uint64_t seed);

    static Pipeline load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    int audio_vocab() const { return audio_vocab_; }
    int alphabet() const { return alphabet_; }
    int embed_dim() const { return embed_dim_; }
    int end_token() const { return audio_vocab_ - 1; }
    const AesConfig& aes_config() const { return cfg_; }

    std::span<const double> token_embedding(int token) const;
    std::span<const double> recognizer_row(int token) const;

    // Embedding lookup + 3-tap smoothing {0.25, 0.5, 0.25}, renormalized at
    // the boundaries (a single frame is returned exactly). Tokens after the
    // first END are ignored; [END] alone decodes to an empty waveform.
    Waveform decode(std::span<const int> tokens) const;

    // Frame t = recognizer row of token t (END excluded). Empty effective
    // token sequence is an input error.
    ctc::Posteriors recognize(std::span<const int> tokens) const;

    // Bounded [0, 1]: weighted mix of smoothness exp(-mean total variation),
    // a monotony bonus (1 - distinct-token fraction), and the fraction of
    // frames within a fixed radius of the preferred token's embedding.
    // Empty waveform or all-zero weights score 0.
    double aes_score(const Waveform& w, const AesConfig& cfg) const;
    double aes_score(const Waveform& w) const { return aes_score(w, cfg_); }

private:
    int audio_vocab_, alphabet_, embed_dim_;
    std::vector<double> embeddings_;  // audio_vocab x embed_dim
    std::vector<double> table_;       // audio_vocab x (alphabet+1), blank last
    AesConfig cfg_;
};

}  // namespace prl::pipeline
