#include <doctest.h>

#include <cmath>
#include <vector>

#include "tcvqa/kernels.hpp"
#include "tcvqa/rng.hpp"

using namespace tcv;

namespace {

std::vector<double> random_vec(size_t n, uint64_t seed) {
  rng r(seed);
  std::vector<double> v(n);
  for (double& x : v) x = r.uniform(-2.0, 2.0);
  return v;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("matmul kernels: OpenMP variant matches serial reference") {
  struct Case {
    int64_t m, k, n;
  };
  for (Case c : {Case{1, 1, 1}, Case{3, 5, 7}, Case{64, 32, 64}, Case{100, 17, 9}}) {
    auto a = random_vec(static_cast<size_t>(c.m * c.k), 11 + static_cast<uint64_t>(c.m));
    auto b = random_vec(static_cast<size_t>(c.k * c.n), 23 + static_cast<uint64_t>(c.n));
    auto bt = random_vec(static_cast<size_t>(c.n * c.k), 31);
    auto at = random_vec(static_cast<size_t>(c.k * c.m), 37);

    std::vector<double> ref(static_cast<size_t>(c.m * c.n)), par(ref.size());
    kern::matmul_nn_ref(a.data(), b.data(), ref.data(), c.m, c.k, c.n);
    kern::matmul_nn(a.data(), b.data(), par.data(), c.m, c.k, c.n);
    CHECK(max_abs_diff(ref, par) == 0.0);

    kern::matmul_nt_ref(a.data(), bt.data(), ref.data(), c.m, c.k, c.n);
    kern::matmul_nt(a.data(), bt.data(), par.data(), c.m, c.k, c.n);
    CHECK(max_abs_diff(ref, par) == 0.0);

    kern::matmul_tn_ref(at.data(), b.data(), ref.data(), c.m, c.k, c.n);
    kern::matmul_tn(at.data(), b.data(), par.data(), c.m, c.k, c.n);
    CHECK(max_abs_diff(ref, par) == 0.0);
  }
}

TEST_CASE("matmul_nt and matmul_tn agree with explicit transposition through matmul_nn") {
  const int64_t m = 6, k = 4, n = 5;
  auto a = random_vec(static_cast<size_t>(m * k), 41);
  auto b = random_vec(static_cast<size_t>(n * k), 43);  // treated as B[n x k]
  // Explicit B^T then nn.
  std::vector<double> btrans(static_cast<size_t>(k * n));
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < k; ++j) btrans[static_cast<size_t>(j * n + i)] = b[static_cast<size_t>(i * k + j)];
  std::vector<double> want(static_cast<size_t>(m * n)), got(want.size());
  kern::matmul_nn_ref(a.data(), btrans.data(), want.data(), m, k, n);
  kern::matmul_nt(a.data(), b.data(), got.data(), m, k, n);
  for (size_t i = 0; i < want.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-13));

  auto c = random_vec(static_cast<size_t>(k * m), 47);  // treated as A[k x m] for tn
  std::vector<double> ctrans(static_cast<size_t>(m * k));
  for (int64_t i = 0; i < k; ++i)
    for (int64_t j = 0; j < m; ++j) ctrans[static_cast<size_t>(j * k + i)] = c[static_cast<size_t>(i * m + j)];
  auto b2 = random_vec(static_cast<size_t>(k * n), 53);
  std::vector<double> want2(static_cast<size_t>(m * n)), got2(want2.size());
  kern::matmul_nn_ref(ctrans.data(), b2.data(), want2.data(), m, k, n);
  kern::matmul_tn(c.data(), b2.data(), got2.data(), m, k, n);
  for (size_t i = 0; i < want2.size(); ++i) CHECK(got2[i] == doctest::Approx(want2[i]).epsilon(1e-13));
}

TEST_CASE("streaming attention matches a materialized softmax computation") {
  const int64_t lq = 9, lk = 13, dk = 8;
  auto q = random_vec(static_cast<size_t>(lq * dk), 61);
  auto k = random_vec(static_cast<size_t>(lk * dk), 67);
  auto v = random_vec(static_cast<size_t>(lk * dk), 71);
  const double scl = 1.0 / std::sqrt(static_cast<double>(dk));

  // Naive: scores, per-row softmax, mix.
  std::vector<double> want(static_cast<size_t>(lq * dk), 0.0);
  for (int64_t i = 0; i < lq; ++i) {
    std::vector<double> s(static_cast<size_t>(lk));
    double mx = -1e300;
    for (int64_t j = 0; j < lk; ++j) {
      double dot = 0;
      for (int64_t d = 0; d < dk; ++d) dot += q[static_cast<size_t>(i * dk + d)] * k[static_cast<size_t>(j * dk + d)];
      s[static_cast<size_t>(j)] = dot * scl;
      mx = std::max(mx, s[static_cast<size_t>(j)]);
    }
    double denom = 0;
    for (double& x : s) {
      x = std::exp(x - mx);
      denom += x;
    }
    for (int64_t j = 0; j < lk; ++j)
      for (int64_t d = 0; d < dk; ++d)
        want[static_cast<size_t>(i * dk + d)] += s[static_cast<size_t>(j)] / denom * v[static_cast<size_t>(j * dk + d)];
  }

  std::vector<double> got(want.size()), got_ref(want.size());
  kern::attention_rows(q.data(), k.data(), v.data(), nullptr, got.data(), lq, lk, dk, scl);
  kern::attention_rows_ref(q.data(), k.data(), v.data(), nullptr, got_ref.data(), lq, lk, dk, scl);
  CHECK(max_abs_diff(got, got_ref) == 0.0);
  for (size_t i = 0; i < want.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
}

TEST_CASE("attention mask: blocked columns are ignored, fully blocked rows give zeros") {
  const int64_t lq = 3, lk = 4, dk = 2;
  auto q = random_vec(static_cast<size_t>(lq * dk), 73);
  auto k = random_vec(static_cast<size_t>(lk * dk), 79);
  auto v = random_vec(static_cast<size_t>(lk * dk), 83);
  std::vector<uint8_t> permit(static_cast<size_t>(lq * lk), 0);
  permit[0 * lk + 2] = 1;  // row 0 may only attend key 2
  // row 1 fully blocked
  for (int64_t j = 0; j < lk; ++j) permit[static_cast<size_t>(2 * lk + j)] = 1;  // row 2 full

  std::vector<double> out(static_cast<size_t>(lq * dk), -1.0);
  kern::attention_rows(q.data(), k.data(), v.data(), permit.data(), out.data(), lq, lk, dk, 1.0);
  // One permitted key -> output is exactly that value row.
  CHECK(out[0] == doctest::Approx(v[2 * dk + 0]).epsilon(1e-15));
  CHECK(out[1] == doctest::Approx(v[2 * dk + 1]).epsilon(1e-15));
  CHECK(out[2] == 0.0);
  CHECK(out[3] == 0.0);
}
