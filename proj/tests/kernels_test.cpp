#include "doctest.h"

#include <cmath>
#include <cstring>
#include <limits>
#include <vector>

#include "prl/errors.hpp"
#include "prl/kernels.hpp"
#include "prl/rng.hpp"

namespace k = prl::kernels;

namespace {

// Sizes straddling SIMD lane boundaries plus ragged tails.
const std::vector<std::size_t> kSizes = {0,  1,  2,  3,  4,  5,   7,   8,   9,  15,
                                         16, 17, 31, 32, 33, 63, 64, 100, 255};

std::vector<double> random_vec(std::size_t n, std::uint64_t seed, double lo = -2.0,
                               double hi = 2.0) {
    prl::rng::Stream s(seed);
    std::vector<double> v(n);
    for (auto& x : v) x = lo + (hi - lo) * s.uniform01();
    return v;
}

struct BackendGuard {
    k::Backend saved = k::requested_backend();
    ~BackendGuard() { k::set_backend(saved); }
};

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) return false;
    return a.empty() ||
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("reductions match a naive loop") {
    for (std::size_t n : kSizes) {
        auto a = random_vec(n, 100 + n);
        auto b = random_vec(n, 200 + n);
        double want_sum = 0.0, want_dot = 0.0, want_sq = 0.0, want_dist = 0.0;
        double want_max = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            want_sum += a[i];
            want_dot += a[i] * b[i];
            want_sq += a[i] * a[i];
            const double d = a[i] - b[i];
            want_dist += d * d;
            want_max = std::max(want_max, a[i]);
        }
        CHECK(k::sum(a) == doctest::Approx(want_sum).epsilon(1e-13));
        CHECK(k::dot(a, b) == doctest::Approx(want_dot).epsilon(1e-13));
        CHECK(k::squared_norm(a) == doctest::Approx(want_sq).epsilon(1e-13));
        CHECK(k::squared_distance(a, b) == doctest::Approx(want_dist).epsilon(1e-13));
        if (n == 0) {
            CHECK(k::max_value(a) == -std::numeric_limits<double>::infinity());
        } else {
            CHECK(k::max_value(a) == want_max);
        }
    }
}

TEST_CASE("logsumexp is shift-invariant and handles extremes") {
    CHECK(k::logsumexp({}) == -std::numeric_limits<double>::infinity());

    std::vector<double> x = {0.0};
    CHECK(k::logsumexp(x) == doctest::Approx(0.0));

    // Values that overflow naive exp still work after max subtraction.
    std::vector<double> big = {1000.0, 1000.0};
    CHECK(k::logsumexp(big) == doctest::Approx(1000.0 + std::log(2.0)));

    auto v = random_vec(33, 7);
    const double base = k::logsumexp(v);
    for (auto& e : v) e += 123.5;
    CHECK(k::logsumexp(v) == doctest::Approx(base + 123.5).epsilon(1e-12));
}

TEST_CASE("softmax normalizes and orders like its logits") {
    for (std::size_t n : {1, 2, 5, 16, 33}) {
        auto logits = random_vec(n, 300 + n, -8.0, 8.0);
        std::vector<double> p(n);
        k::softmax(logits, p);
        double total = 0.0;
        for (double e : p) {
            CHECK(e > 0.0);
            total += e;
        }
        CHECK(std::abs(total - 1.0) <= 1e-12);
        for (std::size_t i = 0; i + 1 < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                CHECK((logits[i] < logits[j]) == (p[i] < p[j]));
    }
}

TEST_CASE("axpy and scale match reference arithmetic") {
    auto x = random_vec(17, 41);
    auto y = random_vec(17, 42);
    auto want = y;
    for (std::size_t i = 0; i < x.size(); ++i) want[i] = y[i] + 0.75 * x[i];
    k::axpy(0.75, x, y);
    CHECK(bit_equal(y, want));

    auto z = random_vec(17, 43);
    auto zwant = z;
    for (auto& e : zwant) e = e * -1.5;
    k::scale(z, -1.5);
    CHECK(bit_equal(z, zwant));
}

TEST_CASE("matvec computes row dots") {
    const std::size_t rows = 5, cols = 9;
    auto m = random_vec(rows * cols, 50);
    auto x = random_vec(cols, 51);
    std::vector<double> out(rows);
    k::matvec(m, rows, cols, x, out);
    for (std::size_t r = 0; r < rows; ++r) {
        double want = 0.0;
        for (std::size_t c = 0; c < cols; ++c) want += m[r * cols + c] * x[c];
        CHECK(out[r] == doctest::Approx(want).epsilon(1e-13));
    }
}

TEST_CASE("adam_update reproduces the closed-form step") {
    // One parameter, one step: m = (1-b1)g, v = (1-b2)g^2, bias-corrected
    // update is exactly -lr * g / (|g| + eps * sqrt(1 - b2)) ... computed
    // here literally instead, to pin the parenthesization.
    k::AdamStep st{0.1, 0.9, 0.999, 1e-8, 1};
    std::vector<double> p = {2.0}, m = {0.0}, v = {0.0}, g = {0.5};
    k::adam_update(p, m, v, g, st);

    const double m1 = (1.0 - st.beta1) * 0.5;
    const double v1 = (1.0 - st.beta2) * 0.25;
    const double mhat = m1 / (1.0 - st.beta1);
    const double vhat = v1 / (1.0 - st.beta2);
    CHECK(m[0] == doctest::Approx(m1));
    CHECK(v[0] == doctest::Approx(v1));
    CHECK(p[0] == doctest::Approx(2.0 - st.lr * mhat / (std::sqrt(vhat) + st.eps))
                      .epsilon(1e-14));
}

TEST_CASE("backend selection reports and validates") {
    BackendGuard guard;
    k::set_backend(k::Backend::Scalar);
    CHECK(k::resolved_backend() == k::Backend::Scalar);
    k::set_backend(k::Backend::Auto);
    if (k::avx2_available()) {
        CHECK(k::resolved_backend() == k::Backend::Avx2);
    } else {
        CHECK(k::resolved_backend() == k::Backend::Scalar);
        CHECK_THROWS_AS(k::set_backend(k::Backend::Avx2), prl::input_error);
    }
    CHECK(k::parse_backend("scalar") == k::Backend::Scalar);
    CHECK(k::parse_backend("avx2") == k::Backend::Avx2);
    CHECK(k::parse_backend("auto") == k::Backend::Auto);
    CHECK_THROWS_AS(k::parse_backend("sse2"), prl::input_error);
}

TEST_CASE("scalar and avx2 backends agree") {
    if (!k::avx2_available()) return;
    BackendGuard guard;

    for (std::size_t n : kSizes) {
        auto a = random_vec(n, 900 + n);
        auto b = random_vec(n, 950 + n);

        k::set_backend(k::Backend::Scalar);
        const double s_sum = k::sum(a);
        const double s_dot = k::dot(a, b);
        const double s_sq = k::squared_norm(a);
        const double s_dist = k::squared_distance(a, b);
        const double s_max = k::max_value(a);
        const double s_lse = k::logsumexp(a);
        auto s_axpy = b;
        k::axpy(1.25, a, s_axpy);
        auto s_scale = a;
        k::scale(s_scale, 0.3);
        std::vector<double> s_soft(n);
        if (n > 0) k::softmax(a, s_soft);
        std::vector<double> s_p = a, s_m = b, s_v = random_vec(n, 980 + n, 0.0, 1.0);
        auto grad = random_vec(n, 990 + n);
        k::AdamStep st{0.01, 0.9, 0.999, 1e-8, 3};
        k::adam_update(s_p, s_m, s_v, grad, st);

        k::set_backend(k::Backend::Avx2);
        // Elementwise kernels must be bit-identical; reductions may differ
        // in the final ulps from lane reordering.
        auto v_axpy = b;
        k::axpy(1.25, a, v_axpy);
        CHECK(bit_equal(v_axpy, s_axpy));
        auto v_scale = a;
        k::scale(v_scale, 0.3);
        CHECK(bit_equal(v_scale, s_scale));
        std::vector<double> v_p = a, v_m = b, v_v = random_vec(n, 980 + n, 0.0, 1.0);
        k::adam_update(v_p, v_m, v_v, grad, st);
        CHECK(bit_equal(v_p, s_p));
        CHECK(bit_equal(v_m, s_m));
        CHECK(bit_equal(v_v, s_v));

        CHECK(k::sum(a) == doctest::Approx(s_sum).epsilon(1e-14));
        CHECK(k::dot(a, b) == doctest::Approx(s_dot).epsilon(1e-14));
        CHECK(k::squared_norm(a) == doctest::Approx(s_sq).epsilon(1e-14));
        CHECK(k::squared_distance(a, b) == doctest::Approx(s_dist).epsilon(1e-14));
        if (n > 0) {
            CHECK(k::max_value(a) == s_max);
            CHECK(k::logsumexp(a) == doctest::Approx(s_lse).epsilon(1e-14));
            std::vector<double> v_soft(n);
            k::softmax(a, v_soft);
            for (std::size_t i = 0; i < n; ++i)
                CHECK(v_soft[i] == doctest::Approx(s_soft[i]).epsilon(1e-13));
        }

        std::vector<double> out_s(3), out_v(3);
        if (n >= 3 && n % 3 == 0) {
            k::set_backend(k::Backend::Scalar);
            k::matvec(a, 3, n / 3, std::span<const double>(b).subspan(0, n / 3), out_s);
            k::set_backend(k::Backend::Avx2);
            k::matvec(a, 3, n / 3, std::span<const double>(b).subspan(0, n / 3), out_v);
            for (int r = 0; r < 3; ++r)
                CHECK(out_v[r] == doctest::Approx(out_s[r]).epsilon(1e-14));
        }
    }
}
