#include "prl/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <string>

#include "prl/errors.hpp"
#include "prl/io.hpp"
#include "prl/kernels.hpp"
#include "prl/rng.hpp"

namespace prl::pipeline {

namespace {

constexpr double kSmoothnessKappa = 1.0;  // S = exp(-kappa * mean TV)
constexpr double kPreferenceRadius = 0.9; // L2 ball around the preferred embedding

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_double(const std::string& s) {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw io_error("malformed float field: " + s);
    return v;
}

}  // namespace

Pipeline::Pipeline(int audio_vocab, int alphabet, int embed_dim,
                   std::vector<double> embeddings, std::vector<double> recognizer_table,
                   AesConfig cfg)
    : audio_vocab_(audio_vocab),
      alphabet_(alphabet),
      embed_dim_(embed_dim),
      embeddings_(std::move(embeddings)),
      table_(std::move(recognizer_table)),
      cfg_(cfg) {
    if (audio_vocab_ < 2 || alphabet_ < 1 || embed_dim_ < 1) {
        throw input_error("pipeline: dimensions out of range");
    }
    if (embeddings_.size() !=
        static_cast<std::size_t>(audio_vocab_) * embed_dim_) {
        throw input_error("pipeline: embedding matrix size mismatch");
    }
    if (table_.size() != static_cast<std::size_t>(audio_vocab_) * (alphabet_ + 1)) {
        throw input_error("pipeline: recognizer table size mismatch");
    }
    for (double v : embeddings_) {
        if (!std::isfinite(v)) throw input_error("pipeline: non-finite embedding");
    }
    for (int i = 0; i < audio_vocab_; ++i) {
        double row = 0.0;
        for (double p : recognizer_row(i)) {
            if (!(p >= 0.0)) throw input_error("pipeline: negative recognizer entry");
            row += p;
        }
        if (std::abs(row - 1.0) > 1e-9) {
            throw input_error("pipeline: recognizer row " + std::to_string(i) +
                              " sums to " + std::to_string(row));
        }
    }
    if (cfg_.smoothness_weight < 0 || cfg_.diversity_weight < 0 ||
        cfg_.preference_weight < 0) {
        throw input_error("pipeline: scorer weights must be >= 0");
    }
    if (cfg_.preferred_token < 0 || cfg_.preferred_token >= audio_vocab_) {
        throw input_error("pipeline: preferred token out of range");
    }
}

Pipeline Pipeline::generate_default(std::uint64_t seed) {
    const int va = 12, alphabet = 4, dim = 4;
    std::vector<double> embed(static_cast<std::size_t>(va) * dim);
    rng::Stream stream(rng::derive_seed(seed, "pipeline-embed"));
    for (int i = 0; i < va; ++i) {
        double norm2 = 0.0;
        do {
            norm2 = 0.0;
            for (int d = 0; d < dim; ++d) {
                const double v = stream.normal();
                embed[static_cast<std::size_t>(i) * dim + d] = v;
                norm2 += v * v;
            }
        } while (norm2 < 1e-12);
        const double inv = 1.0 / std::sqrt(norm2);
        for (int d = 0; d < dim; ++d) {
            embed[static_cast<std::size_t>(i) * dim + d] *= inv;
        }
    }

    // Blank is the last column. Token 0 reads as near-blank; tokens 1..10
    // each read as one symbol at 0.96; END's row is uniform (never consulted
    // in practice since END is excluded before recognition). Confidences are
    // high enough that blank insertions cost little transcript evidence,
    // which keeps the preference channel reachable without wrecking the ctc
    // term, while rendering a symbol from the near-blank row stays ruinous.
    std::vector<double> table(static_cast<std::size_t>(va) * (alphabet + 1), 0.0);
    const auto row = [&](int i) {
        return table.data() + static_cast<std::size_t>(i) * (alphabet + 1);
    };
    for (int s = 0; s < alphabet; ++s) row(0)[s] = 0.0075;
    row(0)[alphabet] = 0.97;
    for (int i = 1; i < va - 1; ++i) {
        for (int s = 0; s < alphabet; ++s) row(i)[s] = 0.008;
        row(i)[alphabet] = 0.016;
        row(i)[(i - 1) % alphabet] = 0.96;
    }
    for (int c = 0; c <= alphabet; ++c) row(va - 1)[c] = 1.0 / (alphabet + 1);

    AesConfig cfg;
    cfg.preferred_token = 0;
    return Pipeline(va, alphabet, dim, std::move(embed), std::move(table), cfg);
}

std::span<const double> Pipeline::token_embedding(int token) const {
    if (token < 0 || token >= audio_vocab_) {
        throw input_error("pipeline: token " + std::to_string(token) + " out of range");
    }
    return {embeddings_.data() + static_cast<std::size_t>(token) * embed_dim_,
            static_cast<std::size_t>(embed_dim_)};
}

std::span<const double> Pipeline::recognizer_row(int token) const {
    if (token < 0 || token >= audio_vocab_) {
        throw input_error("pipeline: token " + std::to_string(token) + " out of range");
    }
    return {table_.data() + static_cast<std::size_t>(token) * (alphabet_ + 1),
            static_cast<std::size_t>(alphabet_ + 1)};
}

Waveform Pipeline::decode(std::span<const int> tokens) const {
    std::vector<int> body;
    for (int t : tokens) {
        if (t < 0 || t >= audio_vocab_) {
            throw input_error("pipeline: token " + std::to_string(t) + " out of range");
        }
        if (t == end_token()) break;
        body.push_back(t);
    }
    Waveform w;
    w.dim = embed_dim_;
    const int n = static_cast<int>(body.size());
    w.values.resize(static_cast<std::size_t>(n) * embed_dim_);
    // taps {0.25, 0.5, 0.25}; missing neighbors drop out and the remaining
    // taps renormalize, so a lone frame reproduces its embedding exactly.
    for (int f = 0; f < n; ++f) {
        auto out = w.values.data() + static_cast<std::size_t>(f) * embed_dim_;
        double wsum = 0.5;
        for (int d = 0; d < embed_dim_; ++d) {
            out[d] = 0.5 * token_embedding(body[f])[d];
        }
        if (f > 0) {
            kernels::axpy(0.25, token_embedding(body[f - 1]),
                          {out, static_cast<std::size_t>(embed_dim_)});
            wsum += 0.25;
        }
        if (f + 1 < n) {
            kernels::axpy(0.25, token_embedding(body[f + 1]),
                          {out, static_cast<std::size_t>(embed_dim_)});
            wsum += 0.25;
        }
        for (int d = 0; d < embed_dim_; ++d) out[d] /= wsum;
    }
    return w;
}

ctc::Posteriors Pipeline::recognize(std::span<const int> tokens) const {
    std::vector<int> body;
    for (int t : tokens) {
        if (t < 0 || t >= audio_vocab_) {
            throw input_error("pipeline: token " + std::to_string(t) + " out of range");
        }
        if (t == end_token()) break;
        body.push_back(t);
    }
    if (body.empty()) {
        throw input_error("pipeline: cannot recognize an empty token sequence");
    }
    ctc::Posteriors post;
    post.alphabet = alphabet_;
    post.frames = static_cast<int>(body.size());
    post.values.reserve(static_cast<std::size_t>(post.frames) * (alphabet_ + 1));
    for (int t : body) {
        const auto r = recognizer_row(t);
        post.values.insert(post.values.end(), r.begin(), r.end());
    }
    return post;
}

double Pipeline::aes_score(const Waveform& w, const AesConfig& cfg) const {
    if (cfg.smoothness_weight < 0 || cfg.diversity_weight < 0 ||
        cfg.preference_weight < 0) {
        throw input_error("pipeline: scorer weights must be >= 0");
    }
    if (cfg.preferred_token < 0 || cfg.preferred_token >= audio_vocab_) {
        throw input_error("pipeline: preferred token out of range");
    }
    // An empty waveform scores zero whatever its declared dimension; only
    // non-empty ones must match the embedding space.
    if (w.values.empty()) return 0.0;
    if (w.dim != embed_dim_) {
        throw input_error("pipeline: waveform dimension mismatch");
    }
    const int f_count = w.frames();
    const double total_weight =
        cfg.smoothness_weight + cfg.diversity_weight + cfg.preference_weight;
    if (f_count == 0 || total_weight == 0.0) return 0.0;

    // Smoothness: exp(-kappa * mean absolute frame-to-frame variation).
    double tv = 0.0;
    for (int f = 0; f + 1 < f_count; ++f) {
        const auto a = w.frame(f);
        const auto b = w.frame(f + 1);
        double d1 = 0.0;
        for (int d = 0; d < w.dim; ++d) d1 += std::abs(b[d] - a[d]);
        tv += d1 / w.dim;
    }
    if (f_count > 1) tv /= (f_count - 1);
    const double smooth = std::exp(-kSmoothnessKappa * tv);

    // Monotony: classify each frame to its nearest token embedding (END
    // excluded, ties to the lowest id); fewer distinct labels score higher.
    std::vector<bool> seen(audio_vocab_, false);
    int distinct = 0;
    for (int f = 0; f < f_count; ++f) {
        int best = 0;
        double best_d = kernels::squared_distance(w.frame(f), token_embedding(0));
        for (int tok = 1; tok < audio_vocab_ - 1; ++tok) {
            const double d = kernels::squared_distance(w.frame(f), token_embedding(tok));
            if (d < best_d) {
                best_d = d;
                best = tok;
            }
        }
        if (!seen[best]) {
            seen[best] = true;
            ++distinct;
        }
    }
    const double monotony =
        1.0 - static_cast<double>(distinct - 1) / std::max(1, f_count - 1);

    // Preference: fraction of frames inside the preferred-token ball. This
    // is the hacking channel.
    const auto pref = token_embedding(cfg.preferred_token);
    int near = 0;
    for (int f = 0; f < f_count; ++f) {
        if (kernels::squared_distance(w.frame(f), pref) <=
            kPreferenceRadius * kPreferenceRadius) {
            ++near;
        }
    }
    const double preference = static_cast<double>(near) / f_count;

    return (cfg.smoothness_weight * smooth + cfg.diversity_weight * monotony +
            cfg.preference_weight * preference) /
           total_weight;
}

void Pipeline::save(const std::filesystem::path& path) const {
    io::Header h;
    h.magic = "prl-pipeline";
    h.fields["audio_vocab"] = std::to_string(audio_vocab_);
    h.fields["alphabet"] = std::to_string(alphabet_);
    h.fields["embed_dim"] = std::to_string(embed_dim_);
    h.fields["preferred_token"] = std::to_string(cfg_.preferred_token);
    h.fields["smoothness_weight"] = format_double(cfg_.smoothness_weight);
    h.fields["diversity_weight"] = format_double(cfg_.diversity_weight);
    h.fields["preference_weight"] = format_double(cfg_.preference_weight);
    std::vector<double> payload;
    payload.reserve(embeddings_.size() + table_.size());
    payload.insert(payload.end(), embeddings_.begin(), embeddings_.end());
    payload.insert(payload.end(), table_.begin(), table_.end());
    io::write_blob(path, h, payload);
}

Pipeline Pipeline::load(const std::filesystem::path& path) {
    auto [h, payload] = io::read_blob(path);
    if (h.magic != "prl-pipeline") {
        throw io_error("not a pipeline fixture: " + path.string());
    }
    const int va = static_cast<int>(h.get_long("audio_vocab"));
    const int alphabet = static_cast<int>(h.get_long("alphabet"));
    const int dim = static_cast<int>(h.get_long("embed_dim"));
    AesConfig cfg;
    cfg.preferred_token = static_cast<int>(h.get_long("preferred_token"));
    cfg.smoothness_weight = parse_double(h.get("smoothness_weight"));
    cfg.diversity_weight = parse_double(h.get("diversity_weight"));
    cfg.preference_weight = parse_double(h.get("preference_weight"));
    const std::size_t embed_n = static_cast<std::size_t>(va) * dim;
    const std::size_t table_n = static_cast<std::size_t>(va) * (alphabet + 1);
    if (payload.size() != embed_n + table_n) {
        throw io_error("pipeline fixture payload size mismatch in " + path.string());
    }
    std::vector<double> embed(payload.begin(), payload.begin() + embed_n);
    std::vector<double> table(payload.begin() + embed_n, payload.end());
    return Pipeline(va, alphabet, dim, std::move(embed), std::move(table), cfg);
}

}  // namespace prl::pipeline
