#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

// Speaker-consistency and preference evaluation: cosine-similarity drift
// gating against a pooled reference embedding, style-granularity similarity
// tables, paired-comparison net win rates with a normal-approximation
// interval, and Likert-scale rating summaries.

namespace prl::eval {

struct SpeakerEmbedding {
    std::string id;
    std::string style;
    std::vector<double> values;  // non-zero, uniform dimension per dataset
};

using ReferencePool = std::vector<SpeakerEmbedding>;

// In [-1, 1]; invariant under positive scaling of either argument.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

// Component-wise mean renormalized to unit length (within 1e-12). A pool
// whose mean cancels to zero is degenerate and rejected.
SpeakerEmbedding reference_embedding(const ReferencePool& pool);

// Drift iff similarity < threshold; sitting exactly on the threshold is
// consistent, not drift.
bool flag_drift(const SpeakerEmbedding& sample, const SpeakerEmbedding& ref,
                double threshold = 0.7);

// One granularity level: a style -> group map plus a reference pool per
// group. "fine" maps each style to itself, "single" maps everything to one
// group; anything in between is a coarse grouping.
struct GranularityLevel {
    std::string name;
    std::map<std::string, std::string> style_to_group;
    std::map<std::string, ReferencePool> pools;
};

struct GranularityRow {
    std::string level;
    double mean_similarity = 0.0;
    std::size_t samples = 0;
};

// Mean cosine similarity of each sample against its group's reference
// embedding, per level. Empty sample list yields an empty table; an
// unmapped style or missing pool is an input error.
std::vector<GranularityRow> similarity_by_granularity(
    std::span<const SpeakerEmbedding> samples, std::span<const GranularityLevel> levels);

struct PairedRating {
    std::string context_id;
    int a = 0;  // 1..5
    int b = 0;  // 1..5
};

// 100 * (wins - losses) / total, ties in the denominator. Computed as
// (100 * diff) / total so integer-valued results are exact.
double net_win_rate(std::span<const PairedRating> ratings);

// Normal-approximation interval for the net win rate from the empirical
// variance of the per-pair {+100, 0, -100} outcome (sample variance, n-1).
std::pair<double, double> win_rate_confidence_interval(std::span<const PairedRating> ratings,
                                                       double confidence = 0.95);

struct CvadRecord {
    std::string id;
    int clarity = 0, valence = 0, arousal = 0, dominance = 0, overall = 0;  // 1..5
};

struct CvadSummary {
    double clarity = 0, valence = 0, arousal = 0, dominance = 0, overall = 0;
};

CvadSummary cvad_summary(std::span<const CvadRecord> records);

// ---- file formats ----
// Embeddings: `dim D` and `count N` header lines, then N rows of
// `id style v0 v1 ... v{D-1}`. '#' comments allowed throughout.
std::vector<SpeakerEmbedding> load_embeddings(const std::filesystem::path& path);

// Levels: `level <name>` sections, each followed by `style group` rows.
// Group pools come from a second embeddings file whose style column is
// "<level>/<group>".
std::vector<GranularityLevel> load_levels(const std::filesystem::path& levels_path,
                                          const std::filesystem::path& pools_path);

// Ratings: rows `context_id a b`. Cvad: rows `id c v a d o`.
std::vector<PairedRating> load_ratings(const std::filesystem::path& path);
std::vector<CvadRecord> load_cvad(const std::filesystem::path& path);

}  // namespace prl::eval
