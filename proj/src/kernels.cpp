// Copyright 2026 The adaeval Authors
// SPDX-License-Identifier: Apache-2.0

#include "adaeval/kernels.hpp"

#include <algorithm>
#include <cstdint>

#ifdef ADAEVAL_HAVE_OPENMP
#include <omp.h>
#endif

namespace adaeval::kernels {
namespace {

inline void matmul_row(const double* a, const double* b, double* c,
                       std::size_t i, std::size_t k, std::size_t n) {
  double* crow = c + i * n;
  const double* arow = a + i * k;
  if (n == 1) {
    double acc = 0.0;
    for (std::size_t p = 0; p < k; ++p) acc += arow[p] * b[p];
    crow[0] = acc;
    return;
  }
  for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
  for (std::size_t p = 0; p < k; ++p) {
    const double av = arow[p];
    const double* brow = b + p * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
  }
}

inline void grad_a_row(const double* dc, const double* b, double* da,
                       std::size_t i, std::size_t k, std::size_t n) {
  const double* dcrow = dc + i * n;
  double* darow = da + i * k;
  if (n == 1) {
    const double g = dcrow[0];
    for (std::size_t p = 0; p < k; ++p) darow[p] += g * b[p];
    return;
  }
  for (std::size_t p = 0; p < k; ++p) {
    const double* brow = b + p * n;
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += dcrow[j] * brow[j];
    darow[p] += acc;
  }
}

inline void grad_b_row(const double* a, const double* dc, double* db,
                       std::size_t p, std::size_t m, std::size_t k,
                       std::size_t n) {
  double* dbrow = db + p * n;
  for (std::size_t i = 0; i < m; ++i) {
    const double av = a[i * k + p];
    const double* dcrow = dc + i * n;
    for (std::size_t j = 0; j < n; ++j) dbrow[j] += av * dcrow[j];
  }
}

// n == 1: db[p] += sum_i a[i, p] * dc[i] over p in [p0, p1), walking a by
// rows. Each db[p] still accumulates over i in increasing order.
inline void grad_b_cols(const double* a, const double* dc, double* db,
                        std::size_t p0, std::size_t p1, std::size_t m,
                        std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const double g = dc[i];
    const double* arow = a + i * k;
    for (std::size_t p = p0; p < p1; ++p) db[p] += arow[p] * g;
  }
}

bool go_parallel(std::size_t m, std::size_t k, std::size_t n) {
#ifdef ADAEVAL_HAVE_OPENMP
  return m * k * n >= kParallelMinWork && !omp_in_parallel() &&
         omp_get_max_threads() > 1;
#else
  (void)m, (void)k, (void)n;
  return false;
#endif
}

}  // namespace

void matmul_serial(std::span<const double> a, std::span<const double> b,
                   std::span<double> c, std::size_t m, std::size_t k,
                   std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    matmul_row(a.data(), b.data(), c.data(), i, k, n);
}

void matmul(std::span<const double> a, std::span<const double> b,
            std::span<double> c, std::size_t m, std::size_t k, std::size_t n) {
  if (!go_parallel(m, k, n)) return matmul_serial(a, b, c, m, k, n);
  const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < rows; ++i)
    matmul_row(a.data(), b.data(), c.data(), static_cast<std::size_t>(i), k, n);
}

void matmul_grad_a_serial(std::span<const double> dc, std::span<const double> b,
                          std::span<double> da, std::size_t m, std::size_t k,
                          std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    grad_a_row(dc.data(), b.data(), da.data(), i, k, n);
}

void matmul_grad_a(std::span<const double> dc, std::span<const double> b,
                   std::span<double> da, std::size_t m, std::size_t k,
                   std::size_t n) {
  if (!go_parallel(m, k, n)) return matmul_grad_a_serial(dc, b, da, m, k, n);
  const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < rows; ++i)
    grad_a_row(dc.data(), b.data(), da.data(), static_cast<std::size_t>(i), k,
               n);
}

void matmul_grad_b_serial(std::span<const double> a, std::span<const double> dc,
                          std::span<double> db, std::size_t m, std::size_t k,
                          std::size_t n) {
  if (n == 1) return grad_b_cols(a.data(), dc.data(), db.data(), 0, k, m, k);
  for (std::size_t p = 0; p < k; ++p)
    grad_b_row(a.data(), dc.data(), db.data(), p, m, k, n);
}

void matmul_grad_b(std::span<const double> a, std::span<const double> dc,
                   std::span<double> db, std::size_t m, std::size_t k,
                   std::size_t n) {
  if (!go_parallel(m, k, n)) return matmul_grad_b_serial(a, dc, db, m, k, n);
  if (n == 1) {
    constexpr std::size_t kBlock = 64;
    const auto blocks = static_cast<std::int64_t>((k + kBlock - 1) / kBlock);
#pragma omp parallel for schedule(static)
    for (std::int64_t blk = 0; blk < blocks; ++blk) {
      const std::size_t p0 = static_cast<std::size_t>(blk) * kBlock;
      grad_b_cols(a.data(), dc.data(), db.data(), p0, std::min(k, p0 + kBlock), m, k);
    }
    return;
  }
  const auto rows = static_cast<std::int64_t>(k);
#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < rows; ++p)
    grad_b_row(a.data(), dc.data(), db.data(), static_cast<std::size_t>(p), m,
               k, n);
}

int max_threads() {
#ifdef ADAEVAL_HAVE_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace adaeval::kernels
