#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

// Vector kernels behind the numeric modules. Every kernel has a scalar
// reference implementation and, on x86-64, an AVX2 variant selected at
// runtime. The two are equivalence-tested against each other.
//
// Transcendentals (exp, log) are evaluated through libm in every backend;
// SIMD covers loads, arithmetic and reductions. Purely elementwise kernels
// (axpy, scale, adam_update) are bit-identical across backends; reduction
// kernels may differ in the last ulp because lane accumulation reorders
// the sum.

namespace prl::kernels {

enum class Backend {
    Auto,    // pick the widest supported variant
    Scalar,  // reference implementation
    Avx2,
};

bool avx2_available();

// Global selection. Auto resolves to Avx2 when available, Scalar otherwise.
// Requesting Avx2 on a machine without it throws prl::input_error.
void set_backend(Backend b);
Backend requested_backend();
Backend resolved_backend();
const char* backend_name(Backend b);
Backend parse_backend(std::string_view name);  // "auto" | "scalar" | "avx2"

// ---- reductions ----
double sum(std::span<const double> x);
double dot(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> x);
double squared_distance(std::span<const double> a, std::span<const double> b);
double max_value(std::span<const double> x);  // empty -> -inf
double logsumexp(std::span<const double> x);  // empty -> -inf

// ---- elementwise ----
void axpy(double a, std::span<const double> x, std::span<double> y);  // y += a*x
void scale(std::span<double> x, double a);

// out = softmax(logits); sums to 1 within 1e-12 for finite logits
void softmax(std::span<const double> logits, std::span<double> out);

// out[r] = dot(m[r, :], x); m is row-major rows x cols
void matvec(std::span<const double> m, std::size_t rows, std::size_t cols,
            std::span<const double> x, std::span<double> out);

struct AdamStep {
    double lr;
    double beta1;
    double beta2;
    double eps;
    std::int64_t t;  // 1-based step count
};

// Standard bias-corrected Adam descent step on `grad`.
void adam_update(std::span<double> params, std::span<double> m,
                 std::span<double> v, std::span<const double> grad,
                 const AdamStep& step);

}  // namespace prl::kernels
