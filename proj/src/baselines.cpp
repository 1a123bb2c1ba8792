#include "tcvqa/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tcvqa/common.hpp"

namespace tcv {

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace

std::vector<int64_t> farthest_point_prune(const Tensor& feats, int64_t k) {
  if (!feats.defined() || feats.shape().size() != 2 || feats.rows() == 0)
    throw shape_error("farthest_point_prune: feats must be a non-empty matrix");
  if (k < 1) throw contract_error("farthest_point_prune: k must be positive");
  const int64_t n = feats.rows();
  const int64_t d = feats.cols();
  std::span<const double> data = feats.data();
  auto row = [&](int64_t i) { return data.subspan(static_cast<size_t>(i * d), static_cast<size_t>(d)); };

  if (k >= n) {
    std::vector<int64_t> all(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) all[static_cast<size_t>(i)] = i;
    return all;
  }

  std::vector<double> centroid(static_cast<size_t>(d), 0.0);
  for (int64_t i = 0; i < n; ++i) {
    auto r = row(i);
    for (int64_t j = 0; j < d; ++j) centroid[static_cast<size_t>(j)] += r[static_cast<size_t>(j)];
  }
  for (double& c : centroid) c /= static_cast<double>(n);

  int64_t anchor = 0;
  double best = std::numeric_limits<double>::infinity();
  for (int64_t i = 0; i < n; ++i) {
    const double dist = sq_dist(row(i), centroid);
    if (dist < best) {  // strict: ties keep the lowest index
      best = dist;
      anchor = i;
    }
  }

  // min squared distance from each row to {anchor} + selected set
  std::vector<double> min_d(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) min_d[static_cast<size_t>(i)] = sq_dist(row(i), row(anchor));
  std::vector<bool> taken(static_cast<size_t>(n), false);

  std::vector<int64_t> picked;
  picked.reserve(static_cast<size_t>(k));
  for (int64_t round = 0; round < k; ++round) {
    int64_t next = -1;
    double far = -1.0;
    for (int64_t i = 0; i < n; ++i) {
      if (taken[static_cast<size_t>(i)]) continue;
      if (min_d[static_cast<size_t>(i)] > far) {
        far = min_d[static_cast<size_t>(i)];
        next = i;
      }
    }
    taken[static_cast<size_t>(next)] = true;
    picked.push_back(next);
    for (int64_t i = 0; i < n; ++i) {
      if (taken[static_cast<size_t>(i)]) continue;
      min_d[static_cast<size_t>(i)] =
          std::min(min_d[static_cast<size_t>(i)], sq_dist(row(i), row(next)));
    }
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

MilPool make_mil_pool(int64_t d_h, int64_t d_p, rng& r, double init_std) {
  if (d_h < 1 || d_p < 1) throw config_error("make_mil_pool: widths must be positive");
  MilPool p;
  p.vw = Tensor::randn({d_h, d_p}, r, 0.0, init_std, true);
  p.uw = Tensor::randn({d_h, d_p}, r, 0.0, init_std, true);
  p.w = Tensor::randn({1, d_p}, r, 0.0, init_std, true);
  return p;
}

Tensor mil_pool_forward(const MilPool& pool, const Tensor& hv, Tensor* out_weights) {
  if (!hv.defined() || hv.shape().size() != 2 || hv.rows() == 0)
    throw shape_error("mil_pool_forward: hv must be a non-empty matrix");
  if (hv.cols() != pool.vw.rows())
    throw shape_error("mil_pool_forward: hv width " + std::to_string(hv.cols()) +
                      " vs pool width " + std::to_string(pool.vw.rows()));
  Tensor gated = mul(tanh_op(matmul(hv, pool.vw)), sigmoid_op(matmul(hv, pool.uw)));
  Tensor weights = softmax_lastdim(matmul_nt(pool.w, gated));  // [1 x n]
  if (out_weights) *out_weights = weights;
  return matmul(weights, hv);  // [1 x d_h]
}

void visit_mil_params(MilPool& pool, const std::string& prefix, const param_visitor& fn) {
  fn(prefix + ".vw", pool.vw);
  fn(prefix + ".uw", pool.uw);
  fn(prefix + ".w", pool.w);
}

}  // namespace tcv
