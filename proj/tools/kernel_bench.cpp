// Serial reference vs OpenMP kernels: GFLOP/s, speedup, and a max-|diff|
// column proving the parallel variants reproduce the reference bit for bit
// (both order per-row arithmetic identically; only rows run concurrently).

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tcvqa/kernels.hpp"
#include "tcvqa/rng.hpp"

namespace {

std::vector<double> random_block(int64_t n, uint64_t seed) {
  tcv::rng r(seed);
  std::vector<double> v(static_cast<size_t>(n));
  for (double& x : v) x = r.uniform(-1.0, 1.0);
  return v;
}

double best_seconds(int reps, const std::function<void()>& fn) {
  double best = 1e300;
  for (int i = 0; i < reps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
  }
  return best;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

void report(const char* name, const std::string& dims, double flops, double serial_s,
            double parallel_s, double diff) {
  std::printf("%-16s %-22s %10.3f %10.3f %8.2fx %10.3g\n", name, dims.c_str(),
              flops / serial_s * 1e-9, flops / parallel_s * 1e-9, serial_s / parallel_s, diff);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"serial-reference vs OpenMP kernel benchmark"};
  int64_t dim = 512;   // square matmul extent
  int64_t lq = 1024;   // attention rows (lk = lq)
  int64_t dk = 64;     // attention head width
  int reps = 5;        // best-of timing
  app.add_option("--dim", dim, "matmul extent (m = k = n)");
  app.add_option("--lq", lq, "attention query/key rows");
  app.add_option("--dk", dk, "attention head width");
  app.add_option("--reps", reps, "repetitions, best time kept");
  CLI11_PARSE(app, argc, argv);

  std::printf("threads %d, best of %d reps\n", tcv::kern::thread_count(), reps);
  std::printf("%-16s %-22s %10s %10s %9s %10s\n", "kernel", "dims", "serial", "openmp", "speedup",
              "max|diff|");
  std::printf("%-16s %-22s %10s %10s %9s %10s\n", "", "", "GFLOP/s", "GFLOP/s", "", "");

  const auto a = random_block(dim * dim, 1);
  const auto b = random_block(dim * dim, 2);
  std::vector<double> ref(static_cast<size_t>(dim * dim)), par(ref.size());
  const double mm_flops = 2.0 * double(dim) * double(dim) * double(dim);
  const std::string mm_dims =
      std::to_string(dim) + "x" + std::to_string(dim) + "x" + std::to_string(dim);

  using tcv::kern::matmul_nn;
  using tcv::kern::matmul_nn_ref;
  using tcv::kern::matmul_nt;
  using tcv::kern::matmul_nt_ref;
  using tcv::kern::matmul_tn;
  using tcv::kern::matmul_tn_ref;

  double s = best_seconds(reps, [&] { matmul_nn_ref(a.data(), b.data(), ref.data(), dim, dim, dim); });
  double p = best_seconds(reps, [&] { matmul_nn(a.data(), b.data(), par.data(), dim, dim, dim); });
  report("matmul_nn", mm_dims, mm_flops, s, p, max_abs_diff(ref, par));

  s = best_seconds(reps, [&] { matmul_nt_ref(a.data(), b.data(), ref.data(), dim, dim, dim); });
  p = best_seconds(reps, [&] { matmul_nt(a.data(), b.data(), par.data(), dim, dim, dim); });
  report("matmul_nt", mm_dims, mm_flops, s, p, max_abs_diff(ref, par));

  s = best_seconds(reps, [&] { matmul_tn_ref(a.data(), b.data(), ref.data(), dim, dim, dim); });
  p = best_seconds(reps, [&] { matmul_tn(a.data(), b.data(), par.data(), dim, dim, dim); });
  report("matmul_tn", mm_dims, mm_flops, s, p, max_abs_diff(ref, par));

  const auto q = random_block(lq * dk, 3);
  const auto k = random_block(lq * dk, 4);
  const auto v = random_block(lq * dk, 5);
  std::vector<double> aref(static_cast<size_t>(lq * dk)), apar(aref.size());
  const double at_flops = 4.0 * double(lq) * double(lq) * double(dk);  // scores + mix
  const double scale = 1.0 / std::sqrt(double(dk));
  const std::string at_dims = "lq=lk=" + std::to_string(lq) + " dk=" + std::to_string(dk);

  s = best_seconds(reps, [&] {
    tcv::kern::attention_rows_ref(q.data(), k.data(), v.data(), nullptr, aref.data(), lq, lq, dk, scale);
  });
  p = best_seconds(reps, [&] {
    tcv::kern::attention_rows(q.data(), k.data(), v.data(), nullptr, apar.data(), lq, lq, dk, scale);
  });
  report("attention_rows", at_dims, at_flops, s, p, max_abs_diff(aref, apar));
  return 0;
}
