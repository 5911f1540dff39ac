// AVX2 variants of the vector kernels. Compiled with -mavx2 -mfma on x86-64
// only; callers reach these through the runtime dispatch in kernels.cpp.
//
// Elementwise kernels (axpy, scale, adam_update) deliberately avoid fused
// multiply-add so their rounding matches the scalar reference bit for bit.
// Reductions use FMA and lane accumulation and are tolerance-tested instead.

#include <immintrin.h>

#include <cmath>
#include <limits>

#include "kernels_vtable.hpp"

namespace prl::kernels::detail {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d shuf = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, shuf));
}

inline double hmax(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_max_pd(lo, hi);
    __m128d shuf = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_max_sd(lo, shuf));
}

double avx2_sum(std::span<const double> x) {
    const std::size_t n = x.size();
    std::size_t i = 0;
    __m256d acc = _mm256_setzero_pd();
    for (; i + 4 <= n; i += 4) {
        acc = _mm256_add_pd(acc, _mm256_loadu_pd(x.data() + i));
    }
    double s = hsum(acc);
    for (; i < n; ++i) s += x[i];
    return s;
}

double avx2_dot(std::span<const double> a, std::span<const double> b) {
    const std::size_t n = a.size();
    std::size_t i = 0;
    __m256d acc = _mm256_setzero_pd();
    for (; i + 4 <= n; i += 4) {
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(a.data() + i),
                              _mm256_loadu_pd(b.data() + i), acc);
    }
    double s = hsum(acc);
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

double avx2_squared_norm(std::span<const double> x) { return avx2_dot(x, x); }

double avx2_squared_distance(std::span<const double> a, std::span<const double> b) {
    const std::size_t n = a.size();
    std::size_t i = 0;
    __m256d acc = _mm256_setzero_pd();
    for (; i + 4 <= n; i += 4) {
        const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a.data() + i),
                                        _mm256_loadu_pd(b.data() + i));
        acc = _mm256_fmadd_pd(d, d, acc);
    }
    double s = hsum(acc);
    for (; i < n; ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

double avx2_max_value(std::span<const double> x) {
    const std::size_t n = x.size();
    std::size_t i = 0;
    double m = kNegInf;
    if (n >= 4) {
        __m256d acc = _mm256_loadu_pd(x.data());
        i = 4;
        for (; i + 4 <= n; i += 4) {
            acc = _mm256_max_pd(acc, _mm256_loadu_pd(x.data() + i));
        }
        m = hmax(acc);
    }
    for (; i < n; ++i) m = x[i] > m ? x[i] : m;
    return m;
}

double avx2_logsumexp(std::span<const double> x) {
    const double m = avx2_max_value(x);
    if (!std::isfinite(m)) return m;
    // exp through libm keeps backends numerically aligned; it also dominates
    // the cost, so there is nothing to win by vectorizing the loop body.
    double acc = 0.0;
    for (double v : x) acc += std::exp(v - m);
    return m + std::log(acc);
}

void avx2_axpy(double a, std::span<const double> x, std::span<double> y) {
    const std::size_t n = x.size();
    std::size_t i = 0;
    const __m256d va = _mm256_set1_pd(a);
    for (; i + 4 <= n; i += 4) {
        const __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(x.data() + i));
        _mm256_storeu_pd(y.data() + i,
                         _mm256_add_pd(_mm256_loadu_pd(y.data() + i), prod));
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

void avx2_scale(std::span<double> x, double a) {
    const std::size_t n = x.size();
    std::size_t i = 0;
    const __m256d va = _mm256_set1_pd(a);
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(x.data() + i,
                         _mm256_mul_pd(va, _mm256_loadu_pd(x.data() + i)));
    }
    for (; i < n; ++i) x[i] *= a;
}

void avx2_softmax(std::span<const double> logits, std::span<double> out) {
    const std::size_t n = logits.size();
    const double m = avx2_max_value(logits);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = std::exp(logits[i] - m);
        acc += out[i];
    }
    avx2_scale(out, 1.0 / acc);
}

void avx2_matvec(std::span<const double> m, std::size_t rows, std::size_t cols,
                 std::span<const double> x, std::span<double> out) {
    for (std::size_t r = 0; r < rows; ++r) {
        out[r] = avx2_dot(m.subspan(r * cols, cols), x);
    }
}

void avx2_adam_update(std::span<double> params, std::span<double> m,
                      std::span<double> v, std::span<const double> grad,
                      const AdamStep& s) {
    const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
    const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
    const std::size_t n = params.size();
    std::size_t i = 0;
    const __m256d b1 = _mm256_set1_pd(s.beta1);
    const __m256d b2 = _mm256_set1_pd(s.beta2);
    const __m256d ob1 = _mm256_set1_pd(1.0 - s.beta1);
    const __m256d ob2 = _mm256_set1_pd(1.0 - s.beta2);
    const __m256d vc1 = _mm256_set1_pd(c1);
    const __m256d vc2 = _mm256_set1_pd(c2);
    const __m256d lr = _mm256_set1_pd(s.lr);
    const __m256d eps = _mm256_set1_pd(s.eps);
    for (; i + 4 <= n; i += 4) {
        const __m256d g = _mm256_loadu_pd(grad.data() + i);
        __m256d mi = _mm256_loadu_pd(m.data() + i);
        __m256d vi = _mm256_loadu_pd(v.data() + i);
        mi = _mm256_add_pd(_mm256_mul_pd(b1, mi), _mm256_mul_pd(ob1, g));
        vi = _mm256_add_pd(_mm256_mul_pd(b2, vi),
                           _mm256_mul_pd(ob2, _mm256_mul_pd(g, g)));
        _mm256_storeu_pd(m.data() + i, mi);
        _mm256_storeu_pd(v.data() + i, vi);
        const __m256d mhat = _mm256_div_pd(mi, vc1);
        const __m256d vhat = _mm256_div_pd(vi, vc2);
        const __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(vhat), eps);
        const __m256d upd = _mm256_div_pd(_mm256_mul_pd(lr, mhat), denom);
        _mm256_storeu_pd(params.data() + i,
                         _mm256_sub_pd(_mm256_loadu_pd(params.data() + i), upd));
    }
    for (; i < n; ++i) {
        m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * grad[i];
        v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * (grad[i] * grad[i]);
        const double mhat = m[i] / c1;
        const double vhat = v[i] / c2;
        params[i] -= (s.lr * mhat) / (std::sqrt(vhat) + s.eps);
    }
}

}  // namespace

const VTable& avx2_table() {
    static const VTable t{
        avx2_sum,         avx2_dot,    avx2_squared_norm,
        avx2_squared_distance, avx2_max_value, avx2_logsumexp,
        avx2_axpy,        avx2_scale,  avx2_softmax,
        avx2_matvec,      avx2_adam_update,
    };
    return t;
}

}  // namespace prl::kernels::detail
