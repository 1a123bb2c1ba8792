#pragma once
// Comparison visual paths. Farthest-point pruning keeps a diverse subset of
// patch features; gated attention pooling collapses all visual tokens into a
// single weighted average. Both are deterministic stand-ins for published
// token-reduction families, used as training-time alternatives to compression.

#include <cstdint>
#include <vector>

#include "tcvqa/nn.hpp"
#include "tcvqa/tensor.hpp"

namespace tcv {

// Greedy max-min Euclidean selection over the rows of feats [n x d].
// The row nearest the centroid anchors the distance field but is not itself
// pre-selected; each round picks the row farthest from everything chosen so
// far (ties resolve to the lowest index). Returns k ascending row indices;
// k >= n degenerates to every row.
std::vector<int64_t> farthest_point_prune(const Tensor& feats, int64_t k);

// Gated attention pooling: score_i = w . (tanh(h_i Vw) * sigmoid(h_i Uw)),
// weights = softmax(scores), output = weights . H.
struct MilPool {
  Tensor vw;  // [d_h x d_p]
  Tensor uw;  // [d_h x d_p]
  Tensor w;   // [1 x d_p]
};

MilPool make_mil_pool(int64_t d_h, int64_t d_p, rng& r, double init_std);

// hv [n x d_h] -> [1 x d_h]. out_weights, when given, receives the [1 x n]
// softmax weights (rows sum to 1).
Tensor mil_pool_forward(const MilPool& pool, const Tensor& hv, Tensor* out_weights = nullptr);

void visit_mil_params(MilPool& pool, const std::string& prefix, const param_visitor& fn);

}  // namespace tcv
