#include "prl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "prl/errors.hpp"
#include "prl/io.hpp"
#include "prl/kernels.hpp"

namespace prl::eval {

namespace {

// Acklam's rational approximation to the standard normal quantile
// (|relative error| < 1.15e-9 over the open unit interval), plenty for a
// confidence interval and avoids a root-finder dependency.
double inverse_normal_cdf(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw input_error("eval: quantile argument must be in (0, 1)");
    }
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double p_low = 0.02425;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    if (p > 1.0 - p_low) {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double q = p - 0.5;
    const double r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

void check_unit_range(int v, const std::string& what) {
    if (v < 1 || v > 5) {
        throw input_error("eval: " + what + " rating " + std::to_string(v) +
                          " outside 1..5");
    }
}

}  // namespace

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.empty()) {
        throw input_error("eval: cosine requires matching non-empty dimensions");
    }
    const double na = kernels::squared_norm(a);
    const double nb = kernels::squared_norm(b);
    if (na == 0.0 || nb == 0.0) {
        throw input_error("eval: cosine of a zero vector is undefined");
    }
    return kernels::dot(a, b) / (std::sqrt(na) * std::sqrt(nb));
}

SpeakerEmbedding reference_embedding(const ReferencePool& pool) {
    if (pool.empty()) throw input_error("eval: empty reference pool");
    const std::size_t dim = pool.front().values.size();
    if (dim == 0) throw input_error("eval: zero-dimensional embedding");
    SpeakerEmbedding ref;
    ref.id = "reference";
    ref.style = pool.front().style;
    ref.values.assign(dim, 0.0);
    for (const auto& e : pool) {
        if (e.values.size() != dim) {
            throw input_error("eval: inconsistent embedding dimensions in pool");
        }
        kernels::axpy(1.0, e.values, ref.values);
    }
    kernels::scale(ref.values, 1.0 / static_cast<double>(pool.size()));
    const double norm = std::sqrt(kernels::squared_norm(ref.values));
    if (norm < 1e-12) {
        throw input_error("eval: degenerate pool, mean embedding is zero");
    }
    kernels::scale(ref.values, 1.0 / norm);
    return ref;
}

bool flag_drift(const SpeakerEmbedding& sample, const SpeakerEmbedding& ref,
                double threshold) {
    return cosine_similarity(sample.values, ref.values) < threshold;
}

std::vector<GranularityRow> similarity_by_granularity(
    std::span<const SpeakerEmbedding> samples, std::span<const GranularityLevel> levels) {
    if (samples.empty()) return {};
    std::vector<GranularityRow> table;
    table.reserve(levels.size());
    for (const auto& level : levels) {
        // One reference embedding per group, computed once.
        std::map<std::string, SpeakerEmbedding> refs;
        for (const auto& [group, pool] : level.pools) {
            refs.emplace(group, reference_embedding(pool));
        }
        GranularityRow row;
        row.level = level.name;
        row.samples = samples.size();
        double acc = 0.0;
        for (const auto& s : samples) {
            const auto g = level.style_to_group.find(s.style);
            if (g == level.style_to_group.end()) {
                throw input_error("eval: style '" + s.style + "' unmapped at level " +
                                  level.name);
            }
            const auto r = refs.find(g->second);
            if (r == refs.end()) {
                throw input_error("eval: no reference pool for group '" + g->second +
                                  "' at level " + level.name);
            }
            acc += cosine_similarity(s.values, r->second.values);
        }
        row.mean_similarity = acc / static_cast<double>(samples.size());
        table.push_back(std::move(row));
    }
    return table;
}

double net_win_rate(std::span<const PairedRating> ratings) {
    if (ratings.empty()) throw input_error("eval: no ratings");
    long wins = 0, losses = 0;
    for (const auto& r : ratings) {
        check_unit_range(r.a, "system A");
        check_unit_range(r.b, "system B");
        if (r.a > r.b) ++wins;
        if (r.a < r.b) ++losses;
    }
    // (100 * diff) / total keeps integer-valued percentages exact.
    return 100.0 * static_cast<double>(wins - losses) /
           static_cast<double>(ratings.size());
}

std::pair<double, double> win_rate_confidence_interval(
    std::span<const PairedRating> ratings, double confidence) {
    if (ratings.size() < 2) {
        throw input_error("eval: interval needs at least two ratings");
    }
    if (!(confidence > 0.0 && confidence < 1.0)) {
        throw input_error("eval: confidence must be in (0, 1)");
    }
    const double n = static_cast<double>(ratings.size());
    double mean = 0.0;
    std::vector<double> outcome;
    outcome.reserve(ratings.size());
    for (const auto& r : ratings) {
        check_unit_range(r.a, "system A");
        check_unit_range(r.b, "system B");
        const double x = r.a > r.b ? 100.0 : (r.a < r.b ? -100.0 : 0.0);
        outcome.push_back(x);
        mean += x;
    }
    mean /= n;
    double ss = 0.0;
    for (double x : outcome) ss += (x - mean) * (x - mean);
    const double stderr_ = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
    const double z = inverse_normal_cdf(0.5 + confidence / 2.0);
    return {mean - z * stderr_, mean + z * stderr_};
}

CvadSummary cvad_summary(std::span<const CvadRecord> records) {
    if (records.empty()) throw input_error("eval: no records");
    CvadSummary s;
    for (const auto& r : records) {
        check_unit_range(r.clarity, "clarity");
        check_unit_range(r.valence, "valence");
        check_unit_range(r.arousal, "arousal");
        check_unit_range(r.dominance, "dominance");
        check_unit_range(r.overall, "overall");
        s.clarity += r.clarity;
        s.valence += r.valence;
        s.arousal += r.arousal;
        s.dominance += r.dominance;
        s.overall += r.overall;
    }
    const double n = static_cast<double>(records.size());
    s.clarity /= n;
    s.valence /= n;
    s.arousal /= n;
    s.dominance /= n;
    s.overall /= n;
    return s;
}

std::vector<SpeakerEmbedding> load_embeddings(const std::filesystem::path& path) {
    const auto lines = io::split_lines(io::read_text_file(path));
    long dim = -1, count = -1;
    std::vector<SpeakerEmbedding> out;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::string& line = lines[i];
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        if (dim < 0) {
            std::string key;
            if (!(ss >> key >> dim) || key != "dim" || dim < 1) {
                throw input_error(path.string() + " line " + std::to_string(i + 1) +
                                  ": expected `dim D`");
            }
            continue;
        }
        if (count < 0) {
            std::string key;
            if (!(ss >> key >> count) || key != "count" || count < 0) {
                throw input_error(path.string() + " line " + std::to_string(i + 1) +
                                  ": expected `count N`");
            }
            continue;
        }
        SpeakerEmbedding e;
        if (!(ss >> e.id >> e.style)) {
            throw input_error(path.string() + " line " + std::to_string(i + 1) +
                              ": expected `id style values...`");
        }
        e.values.reserve(dim);
        double v = 0.0;
        while (ss >> v) e.values.push_back(v);
        if (!ss.eof() || static_cast<long>(e.values.size()) != dim) {
            throw input_error(path.string() + " line " + std::to_string(i + 1) +
                              ": expected " + std::to_string(dim) + " float values");
        }
        out.push_back(std::move(e));
    }
    if (dim < 0 || count < 0) {
        throw input_error(path.string() + ": missing dim/count header");
    }
    if (static_cast<long>(out.size()) != count) {
        throw input_error(path.string() + ": count says " + std::to_string(count) +
                          " rows, found " + std::to_string(out.size()));
    }
    return out;
}

std::vector<GranularityLevel> load_levels(const std::filesystem::path& levels_path,
                                          const std::filesystem::path& pools_path) {
    const auto pool_rows = load_embeddings(pools_path);
    const auto lines = io::split_lines(io::read_text_file(levels_path));
    std::vector<GranularityLevel> levels;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::string& line = lines[i];
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::string first, second, extra;
        if (!(ss >> first >> second) || (ss >> extra)) {
            throw input_error(levels_path.string() + " line " + std::to_string(i + 1) +
                              ": expected `level name` or `style group`");
        }
        if (first == "level") {
            levels.push_back(GranularityLevel{second, {}, {}});
            continue;
        }
        if (levels.empty()) {
            throw input_error(levels_path.string() + " line " + std::to_string(i + 1) +
                              ": mapping before any `level` header");
        }
        if (!levels.back().style_to_group.emplace(first, second).second) {
            throw input_error(levels_path.string() + " line " + std::to_string(i + 1) +
                              ": style '" + first + "' mapped twice");
        }
    }
    if (levels.empty()) throw input_error(levels_path.string() + ": no levels defined");

    for (auto& level : levels) {
        for (const auto& [style, group] : level.style_to_group) {
            if (level.pools.count(group)) continue;
            ReferencePool pool;
            const std::string tag = level.name + "/" + group;
            for (const auto& row : pool_rows) {
                if (row.style == tag) pool.push_back(row);
            }
            if (pool.empty()) {
                throw input_error(pools_path.string() + ": no pool rows tagged '" + tag +
                                  "'");
            }
            level.pools.emplace(group, std::move(pool));
        }
    }
    return levels;
}

std::vector<PairedRating> load_ratings(const std::filesystem::path& path) {
    const auto lines = io::split_lines(io::read_text_file(path));
    std::vector<PairedRating> out;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::string& line = lines[i];
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        PairedRating r;
        std::string extra;
        if (!(ss >> r.context_id >> r.a >> r.b) || (ss >> extra)) {
            throw input_error(path.string() + " line " + std::to_string(i + 1) +
                              ": expected `context_id a b`");
        }
        check_unit_range(r.a, "system A");
        check_unit_range(r.b, "system B");
        out.push_back(std::move(r));
    }
    if (out.empty()) throw input_error(path.string() + ": no ratings");
    return out;
}

std::vector<CvadRecord> load_cvad(const std::filesystem::path& path) {
    const auto lines = io::split_lines(io::read_text_file(path));
    std::vector<CvadRecord> out;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::string& line = lines[i];
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        CvadRecord r;
        std::string extra;
        if (!(ss >> r.id >> r.clarity >> r.valence >> r.arousal >> r.dominance >>
              r.overall) ||
            (ss >> extra)) {
            throw input_error(path.string() + " line " + std::to_string(i + 1) +
                              ": expected `id clarity valence arousal dominance overall`");
        }
        check_unit_range(r.clarity, "clarity");
        check_unit_range(r.valence, "valence");
        check_unit_range(r.arousal, "arousal");
        check_unit_range(r.dominance, "dominance");
        check_unit_range(r.overall, "overall");
        out.push_back(std::move(r));
    }
    if (out.empty()) throw input_error(path.string() + ": no records");
    return out;
}

}  // namespace prl::eval
