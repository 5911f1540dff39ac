#include "prl/ctc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "prl/errors.hpp"

namespace prl::ctc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Exact-zero entries map to -inf so the recursion reports "no path with
// positive mass" as an infinite loss, matching the exhaustive oracle.
double log_mass(double p) { return p > 0.0 ? std::log(p) : kNegInf; }

double log_add(double a, double b) {
    if (a == kNegInf) return b;
    if (b == kNegInf) return a;
    const double m = std::max(a, b);
    return m + std::log1p(std::exp(-std::abs(a - b)));
}

void validate(const Posteriors& post, std::span<const int> labels) {
    if (post.alphabet < 1) throw input_error("ctc: alphabet must be >= 1");
    if (post.frames < 0) throw input_error("ctc: negative frame count");
    const std::size_t want =
        static_cast<std::size_t>(post.frames) * (post.alphabet + 1);
    if (post.values.size() != want) {
        throw input_error("ctc: posterior matrix has " +
                          std::to_string(post.values.size()) + " entries, expected " +
                          std::to_string(want));
    }
    for (int t = 0; t < post.frames; ++t) {
        double row = 0.0;
        for (double p : post.frame(t)) {
            if (!(p >= 0.0)) throw input_error("ctc: negative posterior entry");
            row += p;
        }
        if (std::abs(row - 1.0) > 1e-6) {
            throw input_error("ctc: posterior row " + std::to_string(t) +
                              " sums to " + std::to_string(row));
        }
    }
    if (labels.empty()) throw input_error("ctc: transcript must be non-empty");
    for (int s : labels) {
        if (s < 0 || s >= post.alphabet) {
            throw input_error("ctc: label " + std::to_string(s) + " out of range");
        }
    }
}

void check_enumeration_bounds(const Posteriors& post) {
    if (post.frames > 8 || post.alphabet + 1 > 5) {
        throw input_error("ctc: instance too large for brute-force enumeration");
    }
}

// Collapse: merge adjacent repeats, drop blanks.
bool collapses_to(std::span<const int> path, int blank, std::span<const int> labels) {
    std::size_t k = 0;
    int prev = blank;
    for (int c : path) {
        if (c != prev && c != blank) {
            if (k == labels.size() || labels[k] != c) return false;
            ++k;
        }
        prev = c;
    }
    return k == labels.size();
}

}  // namespace

std::vector<int> expand_with_blanks(std::span<const int> labels, int alphabet) {
    std::vector<int> ext(2 * labels.size() + 1, alphabet);
    for (std::size_t i = 0; i < labels.size(); ++i) ext[2 * i + 1] = labels[i];
    return ext;
}

int min_frames(std::span<const int> labels) {
    int repeats = 0;
    for (std::size_t i = 1; i < labels.size(); ++i) {
        if (labels[i] == labels[i - 1]) ++repeats;
    }
    return static_cast<int>(labels.size()) + repeats;
}

double alignment_loss(const Posteriors& post, std::span<const int> labels) {
    validate(post, labels);
    const double inf = std::numeric_limits<double>::infinity();
    if (post.frames < min_frames(labels)) return inf;

    const int blank = post.blank();
    const std::vector<int> ext = expand_with_blanks(labels, post.alphabet);
    const int ext_len = static_cast<int>(ext.size());

    std::vector<double> alpha(ext_len, kNegInf), next(ext_len);
    {
        const auto p0 = post.frame(0);
        alpha[0] = log_mass(p0[blank]);
        alpha[1] = log_mass(p0[ext[1]]);
    }
    for (int t = 1; t < post.frames; ++t) {
        const auto pt = post.frame(t);
        for (int s = 0; s < ext_len; ++s) {
            double a = alpha[s];
            if (s >= 1) a = log_add(a, alpha[s - 1]);
            // Skipping the blank between distinct symbols is allowed; between
            // equal symbols the intervening blank is mandatory.
            if (s >= 2 && ext[s] != blank && ext[s] != ext[s - 2]) {
                a = log_add(a, alpha[s - 2]);
            }
            next[s] = a == kNegInf ? kNegInf : a + log_mass(pt[ext[s]]);
        }
        alpha.swap(next);
    }
    const double final_lp = log_add(alpha[ext_len - 1], alpha[ext_len - 2]);
    return final_lp == kNegInf ? inf : -final_lp;
}

double alignment_loss_bruteforce(const Posteriors& post, std::span<const int> labels) {
    std::vector<double> unused;
    const double success = occupancy_bruteforce(post, labels, unused);
    if (success <= 0.0) return std::numeric_limits<double>::infinity();
    return -std::log(success);
}

double occupancy_bruteforce(const Posteriors& post, std::span<const int> labels,
                            std::vector<double>& occupancy) {
    validate(post, labels);
    check_enumeration_bounds(post);
    const int big = post.alphabet + 1;
    occupancy.assign(static_cast<std::size_t>(post.frames) * big, 0.0);
    if (post.frames == 0) return 0.0;

    std::vector<int> path(post.frames, 0);
    double success = 0.0;
    // Odometer over all big^frames paths.
    while (true) {
        double prob = 1.0;
        for (int t = 0; t < post.frames; ++t) prob *= post.frame(t)[path[t]];
        if (prob > 0.0 && collapses_to(path, post.blank(), labels)) {
            success += prob;
            for (int t = 0; t < post.frames; ++t) {
                occupancy[static_cast<std::size_t>(t) * big + path[t]] += prob;
            }
        }
        int t = post.frames - 1;
        while (t >= 0 && path[t] == big - 1) path[t--] = 0;
        if (t < 0) break;
        ++path[t];
    }
    if (success > 0.0) {
        for (double& o : occupancy) o /= success;
    }
    return success;
}

}  // namespace prl::ctc
