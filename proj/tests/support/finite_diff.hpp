#pragma once
// Central finite-difference oracle used to check every analytic gradient.
// f(x +- h) evaluated with no tape active; rel error floors the denominator so
// near-zero gradient pairs compare on an absolute scale.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "tcvqa/tensor.hpp"

namespace tcv::testing {

inline double central_diff(const std::function<double()>& loss_fn, Tensor param, int64_t idx,
                           double h = 1e-5) {
  auto d = param.data();
  const double orig = d[idx];
  d[idx] = orig + h;
  const double up = loss_fn();
  d[idx] = orig - h;
  const double dn = loss_fn();
  d[idx] = orig;
  return (up - dn) / (2.0 * h);
}

inline double rel_err(double a, double b) {
  const double denom = std::max({std::abs(a), std::abs(b), 1e-6});
  return std::abs(a - b) / denom;
}

struct GradCheckReport {
  double max_rel = 0.0;
  std::string worst_param;
  int64_t worst_index = -1;
  int64_t params_checked = 0;
};

// Compares analytic grads (already accumulated on the tensors) against central
// differences of loss_fn for every entry of every named parameter.
inline GradCheckReport check_grads(const std::function<double()>& loss_fn,
                                   const std::vector<std::pair<std::string, Tensor>>& params,
                                   double h = 1e-5) {
  GradCheckReport rep;
  for (const auto& [name, p] : params) {
    Tensor t = p;
    auto g = t.grad();
    for (int64_t i = 0; i < t.numel(); ++i) {
      const double fd = central_diff(loss_fn, t, i, h);
      const double e = rel_err(g[i], fd);
      if (e > rep.max_rel) {
        rep.max_rel = e;
        rep.worst_param = name;
        rep.worst_index = i;
      }
      ++rep.params_checked;
    }
  }
  return rep;
}

}  // namespace tcv::testing
