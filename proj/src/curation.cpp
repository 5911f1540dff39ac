#include "prl/curation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "prl/errors.hpp"
#include "prl/io.hpp"
#include "prl/reward.hpp"
#include "prl/rng.hpp"

namespace prl::curation {

namespace {

std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string join_g17(std::span<const double> values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out.push_back(',');
        out += format_g17(values[i]);
    }
    return out;
}

void check_config(const CurationConfig& cfg) {
    if (cfg.samples_per_candidate < 10) {
        throw input_error("curation: at least ten samples per candidate required");
    }
    if (cfg.quantile < 0.0 || cfg.quantile > 1.0) {
        throw input_error("curation: quantile must be in [0, 1]");
    }
    if (cfg.max_len < 1) throw input_error("curation: max_len must be >= 1");
}

double summary_bound(const CurationConfig& cfg, std::span<const double> scores,
                     double mean) {
    if (cfg.bound == BoundKind::Quantile) {
        // Capped at the mean so the bound never exceeds it even on skewed
        // score lists; the normal-approximation bound has this for free.
        return std::min(empirical_quantile(scores, cfg.quantile), mean);
    }
    return lower_bound(scores, cfg.z);
}

}  // namespace

CurationConfig config_from(config::KeyValue& cfg) {
    CurationConfig cc;
    cc.samples_per_candidate =
        static_cast<int>(cfg.get_long("curation.samples", cc.samples_per_candidate));
    const std::string bound = cfg.get_string("curation.bound", "normal");
    if (bound == "normal") {
        cc.bound = BoundKind::NormalApprox;
    } else if (bound == "quantile") {
        cc.bound = BoundKind::Quantile;
    } else {
        throw input_error("curation.bound must be normal or quantile");
    }
    cc.z = cfg.get_double("curation.z", cc.z);
    cc.quantile = cfg.get_double("curation.quantile", cc.quantile);
    cc.aes_floor = cfg.get_double("curation.aes_floor", cc.aes_floor);
    cc.ctc_ceiling = cfg.get_double("curation.ctc_ceiling", cc.ctc_ceiling);
    cc.max_len = static_cast<int>(cfg.get_long("curation.max_len", cc.max_len));
    cc.seed = cfg.get_u64("seed", cc.seed);
    return cc;
}

double lower_bound(std::span<const double> scores, double z) {
    if (scores.size() < 2) {
        throw input_error("curation: lower bound needs at least two scores");
    }
    const double n = static_cast<double>(scores.size());
    double mean = 0.0;
    for (double s : scores) mean += s;
    mean /= n;
    double ss = 0.0;
    for (double s : scores) ss += (s - mean) * (s - mean);
    const double std_dev = std::sqrt(ss / (n - 1.0));
    return mean - z * std_dev / std::sqrt(n);
}

double empirical_quantile(std::span<const double> scores, double q) {
    if (scores.size() < 2) {
        throw input_error("curation: quantile needs at least two scores");
    }
    if (q < 0.0 || q > 1.0) throw input_error("curation: quantile must be in [0, 1]");
    std::vector<double> sorted(scores.begin(), scores.end());
    std::sort(sorted.begin(), sorted.end());
    const double h = q * (sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(h);
    if (lo + 1 >= sorted.size()) return sorted.back();
    const double frac = h - lo;
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

CandidateScoreSummary score_candidate(const PromptCandidate& cand,
                                      const policy::PolicyParams& params,
                                      std::span<const std::vector<int>> transcripts,
                                      const pipeline::Pipeline& pipe,
                                      const CurationConfig& cfg, std::uint64_t seed) {
    check_config(cfg);
    if (cand.prompt_tokens.empty()) {
        throw input_error("curation: candidate '" + cand.id + "' has no prompt tokens");
    }
    if (transcripts.empty()) throw input_error("curation: no transcripts provided");

    CandidateScoreSummary s;
    s.id = cand.id;
    s.style = cand.style;
    const int n = cfg.samples_per_candidate;
    s.aes_scores.reserve(n);
    s.ctc_losses.reserve(n);
    const reward::Weights measured;  // weights irrelevant: aes and ctc kept separately
    for (int i = 0; i < n; ++i) {
        policy::PromptContext ctx;
        ctx.transcript_tokens = transcripts[i % transcripts.size()];
        ctx.prompt_tokens = cand.prompt_tokens;
        const auto seq = policy::sample_sequence(
            params, ctx, rng::derive_seed(seed, "sample", {static_cast<std::uint64_t>(i)}),
            cfg.max_len);
        const auto b =
            reward::composite_reward(seq.tokens, ctx.transcript_tokens, measured, pipe);
        s.aes_scores.push_back(b.aes);
        s.ctc_losses.push_back(b.ctc_loss);
    }
    double mean = 0.0;
    for (double v : s.aes_scores) mean += v;
    mean /= n;
    double ss = 0.0;
    for (double v : s.aes_scores) ss += (v - mean) * (v - mean);
    s.mean = mean;
    s.std_dev = std::sqrt(ss / (n - 1.0));
    s.lower_bound = summary_bound(cfg, s.aes_scores, mean);
    return s;
}

SelectionReport select_best(std::span<const CandidateScoreSummary> summaries,
                            double aes_floor, double ctc_ceiling) {
    if (summaries.empty()) throw input_error("curation: no candidates to select from");
    SelectionReport report;
    report.summaries.assign(summaries.begin(), summaries.end());

    const CandidateScoreSummary* best = nullptr;
    for (const auto& s : summaries) {
        const double max_ctc =
            s.ctc_losses.empty()
                ? 0.0
                : *std::max_element(s.ctc_losses.begin(), s.ctc_losses.end());
        if (max_ctc > ctc_ceiling) {
            report.filtered.push_back({s.id, "ctc_ceiling"});
            continue;
        }
        if (s.lower_bound < aes_floor) {
            report.filtered.push_back({s.id, "aes_floor"});
            continue;
        }
        if (!best || s.lower_bound > best->lower_bound ||
            (s.lower_bound == best->lower_bound && s.id < best->id)) {
            best = &s;
        }
    }
    if (best) report.selected_id = best->id;
    return report;
}

SelectionReport run_curation(std::span<const PromptCandidate> pool,
                             const policy::PolicyParams& params,
                             std::span<const std::vector<int>> transcripts,
                             const pipeline::Pipeline& pipe, const CurationConfig& cfg) {
    if (pool.empty()) throw input_error("curation: empty candidate pool");
    std::vector<CandidateScoreSummary> summaries;
    summaries.reserve(pool.size());
    for (const auto& cand : pool) {
        const std::uint64_t cand_seed =
            rng::derive_seed(cfg.seed, "curate", {rng::fnv1a64(cand.id)});
        summaries.push_back(
            score_candidate(cand, params, transcripts, pipe, cfg, cand_seed));
    }
    return select_best(summaries, cfg.aes_floor, cfg.ctc_ceiling);
}

std::vector<PromptCandidate> load_pool(const std::filesystem::path& path) {
    const auto lines = io::split_lines(io::read_text_file(path));
    std::vector<PromptCandidate> pool;
    std::set<std::string> ids;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::string& line = lines[i];
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::string id, style, tokens, extra;
        if (!(ss >> id >> style >> tokens) || (ss >> extra)) {
            throw input_error("pool line " + std::to_string(i + 1) +
                              ": expected `id style tokens_csv`");
        }
        if (!ids.insert(id).second) {
            throw input_error("pool line " + std::to_string(i + 1) + ": duplicate id " + id);
        }
        PromptCandidate c;
        c.id = id;
        c.style = style;
        c.prompt_tokens = io::parse_int_csv(tokens);
        if (c.prompt_tokens.empty()) {
            throw input_error("pool line " + std::to_string(i + 1) + ": empty prompt");
        }
        pool.push_back(std::move(c));
    }
    if (pool.empty()) throw input_error("pool file " + path.string() + " has no candidates");
    return pool;
}

void write_report(const std::filesystem::path& path, const SelectionReport& report) {
    io::atomic_write(path, [&](std::ostream& os) {
        os << "# prompt curation report\n";
        for (const auto& s : report.summaries) {
            std::string status = "ok";
            for (const auto& f : report.filtered) {
                if (f.id == s.id) {
                    status = "filtered " + f.reason;
                    break;
                }
            }
            os << "candidate " << s.id << '\n'
               << "style " << s.style << '\n'
               << "samples " << s.aes_scores.size() << '\n'
               << "aes " << join_g17(s.aes_scores) << '\n'
               << "ctc " << join_g17(s.ctc_losses) << '\n'
               << "mean " << format_g17(s.mean) << '\n'
               << "std " << format_g17(s.std_dev) << '\n'
               << "lower_bound " << format_g17(s.lower_bound) << '\n'
               << "status " << status << '\n';
        }
        os << "selected " << (report.has_selection() ? report.selected_id : "-") << '\n';
    });
}

}  // namespace prl::curation
