#include "prl/kernels.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <string>

#include "kernels_vtable.hpp"
#include "prl/errors.hpp"

namespace prl::kernels {

namespace detail {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double scalar_sum(std::span<const double> x) {
    double acc = 0.0;
    for (double v : x) acc += v;
    return acc;
}

double scalar_dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double scalar_squared_norm(std::span<const double> x) {
    double acc = 0.0;
    for (double v : x) acc += v * v;
    return acc;
}

double scalar_squared_distance(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

double scalar_max_value(std::span<const double> x) {
    double m = kNegInf;
    for (double v : x) m = v > m ? v : m;
    return m;
}

double scalar_logsumexp(std::span<const double> x) {
    const double m = scalar_max_value(x);
    if (!std::isfinite(m)) return m;
    double acc = 0.0;
    for (double v : x) acc += std::exp(v - m);
    return m + std::log(acc);
}

void scalar_axpy(double a, std::span<const double> x, std::span<double> y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

void scalar_scale(std::span<double> x, double a) {
    for (double& v : x) v *= a;
}

void scalar_softmax(std::span<const double> logits, std::span<double> out) {
    const double m = scalar_max_value(logits);
    double acc = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - m);
        acc += out[i];
    }
    const double inv = 1.0 / acc;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= inv;
}

void scalar_matvec(std::span<const double> m, std::size_t rows, std::size_t cols,
                   std::span<const double> x, std::span<double> out) {
    for (std::size_t r = 0; r < rows; ++r) {
        out[r] = scalar_dot(m.subspan(r * cols, cols), x);
    }
}

void scalar_adam_update(std::span<double> params, std::span<double> m,
                        std::span<double> v, std::span<const double> grad,
                        const AdamStep& s) {
    const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
    const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * grad[i];
        v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * (grad[i] * grad[i]);
        const double mhat = m[i] / c1;
        const double vhat = v[i] / c2;
        params[i] -= (s.lr * mhat) / (std::sqrt(vhat) + s.eps);
    }
}

}  // namespace

const VTable& scalar_table() {
    static const VTable t{
        scalar_sum,         scalar_dot,    scalar_squared_norm,
        scalar_squared_distance, scalar_max_value, scalar_logsumexp,
        scalar_axpy,        scalar_scale,  scalar_softmax,
        scalar_matvec,      scalar_adam_update,
    };
    return t;
}

}  // namespace detail

namespace {

std::atomic<Backend> g_requested{Backend::Auto};

Backend resolve(Backend b) {
    if (b == Backend::Auto) return avx2_available() ? Backend::Avx2 : Backend::Scalar;
    return b;
}

const detail::VTable& active_table() {
#if defined(PRL_KERNELS_AVX2)
    if (resolve(g_requested.load(std::memory_order_relaxed)) == Backend::Avx2) {
        return detail::avx2_table();
    }
#endif
    return detail::scalar_table();
}

}  // namespace

bool avx2_available() {
#if defined(PRL_KERNELS_AVX2)
    return __builtin_cpu_supports("avx2");
#else
    return false;
#endif
}

void set_backend(Backend b) {
    if (b == Backend::Avx2 && !avx2_available()) {
        throw input_error("kernels: avx2 backend requested but not supported on this cpu");
    }
    g_requested.store(b, std::memory_order_relaxed);
}

Backend requested_backend() { return g_requested.load(std::memory_order_relaxed); }

Backend resolved_backend() { return resolve(g_requested.load(std::memory_order_relaxed)); }

const char* backend_name(Backend b) {
    switch (b) {
        case Backend::Auto: return "auto";
        case Backend::Scalar: return "scalar";
        case Backend::Avx2: return "avx2";
    }
    return "?";
}

Backend parse_backend(std::string_view name) {
    if (name == "auto") return Backend::Auto;
    if (name == "scalar") return Backend::Scalar;
    if (name == "avx2") return Backend::Avx2;
    throw input_error("kernels: unknown backend '" + std::string(name) + "'");
}

double sum(std::span<const double> x) { return active_table().sum(x); }

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw input_error("kernels: dot size mismatch");
    return active_table().dot(a, b);
}

double squared_norm(std::span<const double> x) { return active_table().squared_norm(x); }

double squared_distance(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw input_error("kernels: squared_distance size mismatch");
    return active_table().squared_distance(a, b);
}

double max_value(std::span<const double> x) { return active_table().max_value(x); }

double logsumexp(std::span<const double> x) { return active_table().logsumexp(x); }

void axpy(double a, std::span<const double> x, std::span<double> y) {
    if (x.size() != y.size()) throw input_error("kernels: axpy size mismatch");
    active_table().axpy(a, x, y);
}

void scale(std::span<double> x, double a) { active_table().scale(x, a); }

void softmax(std::span<const double> logits, std::span<double> out) {
    if (logits.empty()) throw input_error("kernels: softmax over empty span");
    if (logits.size() != out.size()) throw input_error("kernels: softmax size mismatch");
    active_table().softmax(logits, out);
}

void matvec(std::span<const double> m, std::size_t rows, std::size_t cols,
            std::span<const double> x, std::span<double> out) {
    if (m.size() != rows * cols || x.size() != cols || out.size() != rows) {
        throw input_error("kernels: matvec shape mismatch");
    }
    active_table().matvec(m, rows, cols, x, out);
}

void adam_update(std::span<double> params, std::span<double> m, std::span<double> v,
                 std::span<const double> grad, const AdamStep& step) {
    if (m.size() != params.size() || v.size() != params.size() ||
        grad.size() != params.size()) {
        throw input_error("kernels: adam_update size mismatch");
    }
    active_table().adam_update(params, m, v, grad, step);
}

}  // namespace prl::kernels
