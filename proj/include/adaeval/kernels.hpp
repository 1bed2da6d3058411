// Copyright 2026 The adaeval Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef ADAEVAL_KERNELS_HPP_
#define ADAEVAL_KERNELS_HPP_

#include <cstddef>
#include <span>

namespace adaeval::kernels {

// Dense row-major products used by the differentiation core.
//
// Every kernel has a serial reference and an OpenMP version. The parallel
// version splits the outermost output dimension only, so each output entry
// is accumulated in the same order as the serial reference and the two agree
// bitwise. Small problems stay serial (and so does anything called from
// inside an enclosing parallel region).

// c(m x n) = a(m x k) * b(k x n)
void matmul_serial(std::span<const double> a, std::span<const double> b,
                   std::span<double> c, std::size_t m, std::size_t k,
                   std::size_t n);
void matmul(std::span<const double> a, std::span<const double> b,
            std::span<double> c, std::size_t m, std::size_t k, std::size_t n);

// da(m x k) += dc(m x n) * b(k x n)^T
void matmul_grad_a_serial(std::span<const double> dc, std::span<const double> b,
                          std::span<double> da, std::size_t m, std::size_t k,
                          std::size_t n);
void matmul_grad_a(std::span<const double> dc, std::span<const double> b,
                   std::span<double> da, std::size_t m, std::size_t k,
                   std::size_t n);

// db(k x n) += a(m x k)^T * dc(m x n)
void matmul_grad_b_serial(std::span<const double> a, std::span<const double> dc,
                          std::span<double> db, std::size_t m, std::size_t k,
                          std::size_t n);
void matmul_grad_b(std::span<const double> a, std::span<const double> dc,
                   std::span<double> db, std::size_t m, std::size_t k,
                   std::size_t n);

// Work (m*k*n) below which the parallel entry points run serially.
inline constexpr std::size_t kParallelMinWork = std::size_t{1} << 18;

int max_threads();

}  // namespace adaeval::kernels

#endif  // ADAEVAL_KERNELS_HPP_
