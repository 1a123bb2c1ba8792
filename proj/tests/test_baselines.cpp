#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "tcvqa/baselines.hpp"
#include "tcvqa/rng.hpp"

using namespace tcv;

TEST_CASE("farthest-point on collinear points picks the extremes") {
  // {0,1,2,3,10}: the anchor (3, nearest the 3.2 centroid) shapes distances but
  // is not pre-selected, so greedy max-min takes 10 first, then 0.
  Tensor feats = Tensor::from_vec({5, 1}, {0.0, 1.0, 2.0, 3.0, 10.0});
  std::vector<int64_t> picked = farthest_point_prune(feats, 2);
  REQUIRE(picked.size() == 2);
  CHECK(picked[0] == 0);
  CHECK(picked[1] == 4);
  CHECK(feats.data()[picked[0]] == 0.0);
  CHECK(feats.data()[picked[1]] == 10.0);

  std::vector<int64_t> three = farthest_point_prune(feats, 3);
  CHECK(std::set<int64_t>(three.begin(), three.end()).count(3) == 0);  // anchor still unused
}

TEST_CASE("identical rows tie-break to the lowest indices") {
  Tensor feats = Tensor::from_vec({3, 1}, {5.0, 5.0, 5.0});
  std::vector<int64_t> picked = farthest_point_prune(feats, 2);
  CHECK(picked == std::vector<int64_t>{0, 1});
}

TEST_CASE("k at or beyond the row count returns every row") {
  Tensor feats = Tensor::from_vec({4, 2}, {0, 0, 1, 0, 0, 1, 1, 1});
  CHECK(farthest_point_prune(feats, 4) == std::vector<int64_t>{0, 1, 2, 3});
  CHECK(farthest_point_prune(feats, 9) == std::vector<int64_t>{0, 1, 2, 3});
}

TEST_CASE("a pick lands in every well-separated cluster") {
  // Three tight clusters around a lone central point. The central point wins
  // the nearest-to-centroid seat, so it shapes the distance field without
  // being returned, and the k picks spread across all three clusters.
  rng r(11);
  std::vector<double> vals;
  const double centers[3][2] = {{0, 0}, {100, 0}, {0, 100}};
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 4; ++i) {
      vals.push_back(centers[c][0] + r.uniform(-0.1, 0.1));
      vals.push_back(centers[c][1] + r.uniform(-0.1, 0.1));
    }
  vals.push_back(33.0);  // row 12: the isolated central point
  vals.push_back(33.0);
  Tensor feats = Tensor::from_vec({13, 2}, vals);
  std::vector<int64_t> picked = farthest_point_prune(feats, 3);
  std::set<int64_t> clusters;
  for (int64_t i : picked) {
    CHECK(i != 12);
    clusters.insert(i / 4);
  }
  CHECK(clusters.size() == 3);
}

TEST_CASE("pruning rejects bad shapes and bad k") {
  CHECK_THROWS_AS(farthest_point_prune(Tensor::from_vec({3}, {1, 2, 3}), 2), shape_error);
  CHECK_THROWS_AS(farthest_point_prune(Tensor(), 2), shape_error);
  Tensor feats = Tensor::from_vec({2, 1}, {0.0, 1.0});
  CHECK_THROWS_AS(farthest_point_prune(feats, 0), contract_error);
}

TEST_CASE("gated pooling emits one row of convex weights") {
  rng r(3);
  MilPool pool = make_mil_pool(6, 4, r, 0.3);
  Tensor hv = Tensor::randn({5, 6}, r, 0.0, 1.0);
  Tensor weights;
  Tensor pooled = mil_pool_forward(pool, hv, &weights);
  REQUIRE(pooled.shape() == shape_t{1, 6});
  REQUIRE(weights.shape() == shape_t{1, 5});

  double sum = 0.0;
  for (double w : weights.data()) {
    CHECK(w >= 0.0);
    sum += w;
  }
  CHECK(std::abs(sum - 1.0) <= 1e-12);

  for (int64_t j = 0; j < 6; ++j) {
    double mix = 0.0;
    for (int64_t i = 0; i < 5; ++i) mix += weights.data()[i] * hv.data()[i * 6 + j];
    CHECK(std::abs(pooled.data()[j] - mix) <= 1e-12);
  }
}

TEST_CASE("identical instances pool to themselves with uniform weights") {
  rng r(5);
  MilPool pool = make_mil_pool(4, 4, r, 0.5);
  Tensor hv = Tensor::from_vec({3, 4}, {2, -1, 0.5, 3, 2, -1, 0.5, 3, 2, -1, 0.5, 3});
  Tensor weights;
  Tensor pooled = mil_pool_forward(pool, hv, &weights);
  for (double w : weights.data()) CHECK(std::abs(w - 1.0 / 3.0) <= 1e-12);
  for (int64_t j = 0; j < 4; ++j) CHECK(std::abs(pooled.data()[j] - hv.data()[j]) <= 1e-12);
}

TEST_CASE("gradients reach the pool parameters and the instances") {
  rng r(7);
  MilPool pool = make_mil_pool(4, 3, r, 0.4);
  Tensor hv = Tensor::randn({6, 4}, r, 0.0, 1.0, true);
  {
    TapeScope scope;
    scope.backward(sum(mil_pool_forward(pool, hv)));
  }
  for (Tensor* t : {&pool.vw, &pool.uw, &pool.w, &hv}) {
    REQUIRE(t->has_grad());
    double mag = 0.0;
    for (double g : t->grad()) mag += std::abs(g);
    CHECK(mag > 0.0);
  }
}

TEST_CASE("pooling rejects width mismatches and empty bags") {
  rng r(9);
  MilPool pool = make_mil_pool(4, 3, r, 0.4);
  CHECK_THROWS_AS(mil_pool_forward(pool, Tensor::zeros({2, 5})), shape_error);
  CHECK_THROWS_AS(mil_pool_forward(pool, Tensor()), shape_error);
  CHECK_THROWS_AS(make_mil_pool(0, 3, r, 0.4), config_error);
}

TEST_CASE("pool construction is seed-deterministic") {
  rng a(21), b(21);
  MilPool pa = make_mil_pool(5, 5, a, 0.2);
  MilPool pb = make_mil_pool(5, 5, b, 0.2);
  for (int64_t i = 0; i < pa.vw.numel(); ++i) CHECK(pa.vw.data()[i] == pb.vw.data()[i]);
  for (int64_t i = 0; i < pa.w.numel(); ++i) CHECK(pa.w.data()[i] == pb.w.data()[i]);
}
