#include "tcvqa/kernels.hpp"

#include <cmath>
#include <cstring>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace tcv::kern {

int thread_count() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

// ===== matmul =====
// Row bodies are shared between the reference and OpenMP variants so both run
// the same accumulation order; the parallel loop only changes scheduling.

static inline void nn_row(const double* __restrict a, const double* __restrict b,
                          double* __restrict c, int64_t i, int64_t k, int64_t n) {
  double* crow = c + i * n;
  std::memset(crow, 0, sizeof(double) * static_cast<size_t>(n));
  const double* arow = a + i * k;
  for (int64_t kk = 0; kk < k; ++kk) {
    const double aik = arow[kk];
    const double* brow = b + kk * n;
    for (int64_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
  }
}

static inline void nt_row(const double* __restrict a, const double* __restrict b,
                          double* __restrict c, int64_t i, int64_t k, int64_t n) {
  const double* arow = a + i * k;
  double* crow = c + i * n;
  for (int64_t j = 0; j < n; ++j) {
    const double* brow = b + j * k;
    double s = 0.0;
    for (int64_t kk = 0; kk < k; ++kk) s += arow[kk] * brow[kk];
    crow[j] = s;
  }
}

static inline void tn_row(const double* __restrict a, const double* __restrict b,
                          double* __restrict c, int64_t i, int64_t k, int64_t m, int64_t n) {
  double* crow = c + i * n;
  std::memset(crow, 0, sizeof(double) * static_cast<size_t>(n));
  for (int64_t kk = 0; kk < k; ++kk) {
    const double aki = a[kk * m + i];
    const double* brow = b + kk * n;
    for (int64_t j = 0; j < n; ++j) crow[j] += aki * brow[j];
  }
}

void matmul_nn_ref(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) nn_row(a, b, c, i, k, n);
}

void matmul_nn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i) nn_row(a, b, c, i, k, n);
}

void matmul_nt_ref(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) nt_row(a, b, c, i, k, n);
}

void matmul_nt(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i) nt_row(a, b, c, i, k, n);
}

void matmul_tn_ref(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) tn_row(a, b, c, i, k, m, n);
}

void matmul_tn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i) tn_row(a, b, c, i, k, m, n);
}

// ===== streaming attention =====

static inline void attn_row(const double* __restrict q, const double* __restrict k,
                            const double* __restrict v, const uint8_t* permit, double* __restrict out,
                            int64_t i, int64_t lk, int64_t dk, double scale, double* scores) {
  const double* qi = q + i * dk;
  const uint8_t* prow = permit ? permit + i * lk : nullptr;
  double mx = -1.0;
  bool any = false;
  for (int64_t j = 0; j < lk; ++j) {
    if (prow && !prow[j]) continue;
    const double* kj = k + j * dk;
    double s = 0.0;
    for (int64_t d = 0; d < dk; ++d) s += qi[d] * kj[d];
    s *= scale;
    scores[j] = s;
    if (!any || s > mx) mx = s;
    any = true;
  }
  double* orow = out + i * dk;
  std::memset(orow, 0, sizeof(double) * static_cast<size_t>(dk));
  if (!any) return;  // fully masked row -> zeros
  double denom = 0.0;
  for (int64_t j = 0; j < lk; ++j) {
    if (prow && !prow[j]) continue;
    scores[j] = std::exp(scores[j] - mx);
    denom += scores[j];
  }
  const double inv = 1.0 / denom;
  for (int64_t j = 0; j < lk; ++j) {
    if (prow && !prow[j]) continue;
    const double w = scores[j] * inv;
    const double* vj = v + j * dk;
    for (int64_t d = 0; d < dk; ++d) orow[d] += w * vj[d];
  }
}

void attention_rows_ref(const double* q, const double* k, const double* v, const uint8_t* permit,
                        double* out, int64_t lq, int64_t lk, int64_t dk, double scale) {
  std::vector<double> scores(static_cast<size_t>(lk));
  for (int64_t i = 0; i < lq; ++i) attn_row(q, k, v, permit, out, i, lk, dk, scale, scores.data());
}

void attention_rows(const double* q, const double* k, const double* v, const uint8_t* permit,
                    double* out, int64_t lq, int64_t lk, int64_t dk, double scale) {
#pragma omp parallel
  {
    std::vector<double> scores(static_cast<size_t>(lk));
#pragma omp for schedule(static)
    for (int64_t i = 0; i < lq; ++i) attn_row(q, k, v, permit, out, i, lk, dk, scale, scores.data());
  }
}

}  // namespace tcv::kern
