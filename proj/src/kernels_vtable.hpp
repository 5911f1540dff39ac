#pragma once

#include <cstddef>
#include <span>

#include "prl/kernels.hpp"

namespace prl::kernels::detail {

struct VTable {
    double (*sum)(std::span<const double>);
    double (*dot)(std::span<const double>, std::span<const double>);
    double (*squared_norm)(std::span<const double>);
    double (*squared_distance)(std::span<const double>, std::span<const double>);
    double (*max_value)(std::span<const double>);
    double (*logsumexp)(std::span<const double>);
    void (*axpy)(double, std::span<const double>, std::span<double>);
    void (*scale)(std::span<double>, double);
    void (*softmax)(std::span<const double>, std::span<double>);
    void (*matvec)(std::span<const double>, std::size_t, std::size_t,
                   std::span<const double>, std::span<double>);
    void (*adam_update)(std::span<double>, std::span<double>, std::span<double>,
                        std::span<const double>, const AdamStep&);
};

const VTable& scalar_table();
#if defined(PRL_KERNELS_AVX2)
const VTable& avx2_table();
#endif

}  // namespace prl::kernels::detail
