#pragma once
// Dense f64 kernels. Each kernel has a plain serial reference (*_ref) and an
// OpenMP variant parallelized over independent output rows, so results do not
// depend on thread count. The tensor layer calls the OpenMP variants; the
// references exist for equivalence tests and the kernel benchmark.

#include <cstdint>

namespace tcv::kern {

// c[m x n] = a[m x k] * b[k x n]
void matmul_nn_ref(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
void matmul_nn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);

// c[m x n] = a[m x k] * b[n x k]^T
void matmul_nt_ref(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
void matmul_nt(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);

// c[m x n] = a[k x m]^T * b[k x n]
void matmul_tn_ref(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
void matmul_tn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);

// Single-head attention forward without materializing the Lq x Lk score matrix:
// out[i] = sum_j softmax_j(scale * q_i . k_j) * v_j over permitted j.
// permit is a row-major Lq x Lk byte mask (nonzero = attend) or nullptr for full
// attention. Rows with no permitted column come back as zeros.
void attention_rows_ref(const double* q, const double* k, const double* v, const uint8_t* permit,
                        double* out, int64_t lq, int64_t lk, int64_t dk, double scale);
void attention_rows(const double* q, const double* k, const double* v, const uint8_t* permit,
                    double* out, int64_t lq, int64_t lk, int64_t dk, double scale);

int thread_count();

}  // namespace tcv::kern
