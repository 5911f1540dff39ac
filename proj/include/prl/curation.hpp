#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "prl/config.hpp"
#include "prl/pipeline.hpp"
#include "prl/policy.hpp"

// Audio-prompt selection: sample generations conditioned on each candidate
// prompt, score them, rank candidates by a Monte-Carlo lower bound on the
// acoustic quality score, and filter out candidates whose worst sample
// aligns so badly that it reads as a hallucination.

namespace prl::curation {

struct PromptCandidate {
    std::string id;
    std::string style;
    std::vector<int> prompt_tokens;  // non-empty
};

struct CandidateScoreSummary {
    std::string id;
    std::string style;
    std::vector<double> aes_scores;  // length n >= 10
    std::vector<double> ctc_losses;  // sentinel-capped, same length
    double mean = 0.0;
    double std_dev = 0.0;  // sample std, n-1 denominator
    double lower_bound = 0.0;
};

enum class BoundKind {
    NormalApprox,  // mean - z * std / sqrt(n)
    Quantile,      // empirical quantile, capped at the mean
};

struct CurationConfig {
    int samples_per_candidate = 10;  // floor of ten enforced
    BoundKind bound = BoundKind::NormalApprox;
    double z = 1.645;        // one-sided 95%
    double quantile = 0.05;  // used when bound == Quantile
    double aes_floor = 0.0;
    double ctc_ceiling = 3.0;  // hallucination proxy on max per-sample loss
    int max_len = 64;
    std::uint64_t seed = 0;
};

// Reads the curation.* keys (plus the shared seed) from a flat config.
// `curation.bound` is "normal" or "quantile".
CurationConfig config_from(config::KeyValue& cfg);

// mean - z * std / sqrt(n); requires at least two scores.
double lower_bound(std::span<const double> scores, double z);

// Order-statistic quantile with linear interpolation between the two
// nearest sorted values; requires at least two scores, q in [0, 1].
double empirical_quantile(std::span<const double> scores, double q);

// Draws cfg.samples_per_candidate generations conditioned on the candidate
// prompt, cycling through `transcripts`; deterministic in `seed` (which the
// pool driver derives per candidate from cfg.seed and the candidate id).
CandidateScoreSummary score_candidate(const PromptCandidate& cand,
                                      const policy::PolicyParams& params,
                                      std::span<const std::vector<int>> transcripts,
                                      const pipeline::Pipeline& pipe,
                                      const CurationConfig& cfg, std::uint64_t seed);

struct FilteredCandidate {
    std::string id;
    std::string reason;  // "ctc_ceiling" or "aes_floor"
};

struct SelectionReport {
    std::vector<CandidateScoreSummary> summaries;  // input order
    std::vector<FilteredCandidate> filtered;
    std::string selected_id;  // empty when every candidate was filtered

    bool has_selection() const { return !selected_id.empty(); }
};

// Filters (ctc ceiling first, then aes floor), then picks the unfiltered
// argmax of lower_bound; ties break to the lexicographically smallest id.
SelectionReport select_best(std::span<const CandidateScoreSummary> summaries,
                            double aes_floor, double ctc_ceiling);

// Full pass: per-candidate seeds derived from (cfg.seed, candidate id).
SelectionReport run_curation(std::span<const PromptCandidate> pool,
                             const policy::PolicyParams& params,
                             std::span<const std::vector<int>> transcripts,
                             const pipeline::Pipeline& pipe, const CurationConfig& cfg);

// Pool file: one candidate per line, `id style tokens_csv`; '#' comments.
// Ids must be unique, token lists non-empty.
std::vector<PromptCandidate> load_pool(const std::filesystem::path& path);

// Structured-text report, stable field order, floats as %.17g.
void write_report(const std::filesystem::path& path, const SelectionReport& report);

}  // namespace prl::curation
