#include <doctest.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>

#include "tcvqa/rng.hpp"
#include "tcvqa/serialize.hpp"

using namespace tcv;

namespace {

std::string tmp_path(const std::string& name) { return "serialize_test_" + name; }

}  // namespace

TEST_CASE("tensor file round trip is bit-exact for f64") {
  rng r(7);
  Tensor t = Tensor::randn({3, 5}, r, 0.0, 1.0);
  t.data()[0] = -0.0;  // signed zero survives too
  const std::string p = tmp_path("roundtrip.tcpt");
  save_tensor(p, t);
  Tensor back = load_tensor(p);
  REQUIRE(back.shape() == t.shape());
  for (int64_t i = 0; i < t.numel(); ++i) {
    // Bitwise comparison, not approx.
    CHECK(std::memcmp(&back.data()[i], &t.data()[i], sizeof(double)) == 0);
  }
  std::remove(p.c_str());
}

TEST_CASE("f32 tensor files load (widened) and re-save to identical bytes") {
  rng r(11);
  Tensor t = Tensor::randn({4, 4}, r, 0.0, 1.0);
  const std::string p1 = tmp_path("narrow1.tcpt"), p2 = tmp_path("narrow2.tcpt");
  save_tensor(p1, t, Dtype::f32);
  Tensor widened = load_tensor(p1);
  save_tensor(p2, widened, Dtype::f32);
  CHECK(hash_file(p1) == hash_file(p2));
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("corrupted tensor files report file and offset") {
  const std::string p = tmp_path("bad.tcpt");
  {
    std::ofstream out(p, std::ios::binary);
    out << "XXXX";
  }
  CHECK_THROWS_WITH_AS(load_tensor(p), doctest::Contains("bad tensor magic"), format_error);

  {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << "TCPT";
    uint32_t rank = 2;
    out.write(reinterpret_cast<const char*>(&rank), 4);
    uint64_t e = 3;
    out.write(reinterpret_cast<const char*>(&e), 8);
    // missing second extent, dtype, and data
  }
  try {
    load_tensor(p);
    FAIL("expected format_error");
  } catch (const format_error& e) {
    std::string msg = e.what();
    CHECK(msg.find(p) != std::string::npos);
    CHECK(msg.find("offset") != std::string::npos);
  }
  std::remove(p.c_str());
}

TEST_CASE("feature block round trip and corruption") {
  FeatureBlock b;
  b.rows = 6;
  b.dim = 4;
  rng r(13);
  b.vals.resize(24);
  for (double& v : b.vals) v = r.normal();
  const std::string p = tmp_path("feat.tcpf");
  save_feature_block(p, b);
  FeatureBlock back = load_feature_block(p);
  CHECK(back.rows == b.rows);
  CHECK(back.dim == b.dim);
  for (size_t i = 0; i < b.vals.size(); ++i)
    CHECK(std::memcmp(&back.vals[i], &b.vals[i], sizeof(double)) == 0);

  {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << "TCPF";
    uint32_t version = 9;
    out.write(reinterpret_cast<const char*>(&version), 4);
  }
  CHECK_THROWS_WITH_AS(load_feature_block(p), doctest::Contains("version"), format_error);
  std::remove(p.c_str());
}

TEST_CASE("value hashing distinguishes tensors and is stable") {
  Tensor a = Tensor::from_vec({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from_vec({2, 2}, {1, 2, 3, 5});
  CHECK(hash_tensor_values(a) == hash_tensor_values(a.clone_values()));
  CHECK(hash_tensor_values(a) != hash_tensor_values(b));
}
