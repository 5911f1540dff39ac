#pragma once

#include <span>
#include <vector>

// Alignment scoring between frame-level symbol posteriors and a label
// sequence under the standard collapse rule: merge adjacent repeats, then
// drop blanks. The forward recursion runs in log space over the extended
// label sequence (blanks interleaved), so long utterances do not underflow.

namespace prl::ctc {

// Frame posteriors as a row-stochastic frames x (alphabet+1) matrix.
// Columns 0..alphabet-1 are the symbols; the last column is the blank.
struct Posteriors {
    int alphabet = 0;
    int frames = 0;
    std::vector<double> values;  // row-major

    int blank() const { return alphabet; }
    std::span<const double> frame(int t) const {
        return {values.data() + static_cast<std::size_t>(t) * (alphabet + 1),
                static_cast<std::size_t>(alphabet + 1)};
    }
};

// Interleaves blanks: [a, b] -> [blank, a, blank, b, blank]. The blank id
// is `alphabet` (one past the last symbol).
std::vector<int> expand_with_blanks(std::span<const int> labels, int alphabet);

// Smallest frame count that can carry `labels`: length plus one extra frame
// per adjacent repeat (the mandatory blank between them).
int min_frames(std::span<const int> labels);

// Negative log probability that a random path under `post` collapses to
// `labels`. Returns +infinity when no collapsing path has positive mass
// (in particular whenever frames < min_frames).
double alignment_loss(const Posteriors& post, std::span<const int> labels);

// Exhaustive path enumeration. Refuses instances with frames > 8 or
// alphabet + 1 > 5; intended as an independent cross-check only.
double alignment_loss_bruteforce(const Posteriors& post, std::span<const int> labels);

// Success-conditional occupancy by enumeration, same bounds as above:
//   occupancy[t*(alphabet+1)+c] = Pr[path_t = c | collapse(path) = labels].
// Returns the success probability itself; occupancy is all zeros when no
// path succeeds.
double occupancy_bruteforce(const Posteriors& post, std::span<const int> labels,
                            std::vector<double>& occupancy);

}  // namespace prl::ctc
