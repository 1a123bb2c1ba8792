#include "tcvqa/serialize.hpp"

#include <cstring>
#include <fstream>

#include "tcvqa/common.hpp"

namespace tcv {

std::string to_hex(uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

namespace {

constexpr char kTensorMagic[4] = {'T', 'C', 'P', 'T'};
constexpr char kFeatureMagic[4] = {'T', 'C', 'P', 'F'};

class reader {
 public:
  reader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw format_error(path + ": cannot open");
  }
  void read(void* dst, size_t n) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(in_.gcount()) != n)
      throw format_error(path_ + ": truncated at byte offset " + std::to_string(off_));
    off_ += n;
  }
  template <typename T>
  T get() {
    T v;
    read(&v, sizeof(T));
    return v;
  }
  size_t offset() const { return off_; }
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::ifstream in_;
  size_t off_ = 0;
};

class writer {
 public:
  writer(const std::string& path) : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw format_error(path + ": cannot open for write");
  }
  void write(const void* src, size_t n) { out_.write(static_cast<const char*>(src), static_cast<std::streamsize>(n)); }
  template <typename T>
  void put(T v) {
    write(&v, sizeof(T));
  }
  ~writer() { out_.flush(); }

 private:
  std::string path_;
  std::ofstream out_;
};

}  // namespace

void save_tensor(const std::string& path, const Tensor& t, Dtype dtype) {
  writer w(path);
  w.write(kTensorMagic, 4);
  const auto& shape = t.shape();
  w.put<uint32_t>(static_cast<uint32_t>(shape.size()));
  for (int64_t e : shape) w.put<uint64_t>(static_cast<uint64_t>(e));
  w.put<uint8_t>(static_cast<uint8_t>(dtype));
  auto vals = t.data();
  if (dtype == Dtype::f64) {
    w.write(vals.data(), vals.size() * sizeof(double));
  } else {
    std::vector<float> f(vals.size());
    for (size_t i = 0; i < vals.size(); ++i) f[i] = static_cast<float>(vals[i]);
    w.write(f.data(), f.size() * sizeof(float));
  }
}

Tensor load_tensor(const std::string& path) {
  reader r(path);
  char magic[4];
  r.read(magic, 4);
  if (std::memcmp(magic, kTensorMagic, 4) != 0)
    throw format_error(path + ": bad tensor magic at byte offset 0");
  const uint32_t rank = r.get<uint32_t>();
  if (rank > 8) throw format_error(path + ": implausible rank " + std::to_string(rank) +
                                   " at byte offset 4");
  shape_t shape(rank);
  int64_t n = 1;
  for (uint32_t i = 0; i < rank; ++i) {
    shape[i] = static_cast<int64_t>(r.get<uint64_t>());
    if (shape[i] < 0) throw format_error(path + ": negative extent at byte offset " +
                                         std::to_string(r.offset() - 8));
    n *= shape[i];
  }
  const uint8_t dt = r.get<uint8_t>();
  std::vector<double> vals(static_cast<size_t>(n));
  if (dt == static_cast<uint8_t>(Dtype::f64)) {
    r.read(vals.data(), vals.size() * sizeof(double));
  } else if (dt == static_cast<uint8_t>(Dtype::f32)) {
    std::vector<float> f(static_cast<size_t>(n));
    r.read(f.data(), f.size() * sizeof(float));
    for (size_t i = 0; i < f.size(); ++i) vals[i] = static_cast<double>(f[i]);
  } else {
    throw format_error(path + ": unknown dtype code " + std::to_string(dt) + " at byte offset " +
                       std::to_string(r.offset() - 1));
  }
  return Tensor::from_vec(std::move(shape), std::move(vals));
}

void save_feature_block(const std::string& path, const FeatureBlock& block) {
  if (block.rows * block.dim != static_cast<int64_t>(block.vals.size()))
    throw contract_error("save_feature_block: rows*dim != values");
  writer w(path);
  w.write(kFeatureMagic, 4);
  w.put<uint32_t>(1);  // version
  w.put<uint64_t>(static_cast<uint64_t>(block.rows));
  w.put<uint32_t>(static_cast<uint32_t>(block.dim * static_cast<int64_t>(sizeof(double))));
  w.write(block.vals.data(), block.vals.size() * sizeof(double));
}

FeatureBlock load_feature_block(const std::string& path) {
  reader r(path);
  char magic[4];
  r.read(magic, 4);
  if (std::memcmp(magic, kFeatureMagic, 4) != 0)
    throw format_error(path + ": bad feature magic at byte offset 0");
  const uint32_t version = r.get<uint32_t>();
  if (version != 1)
    throw format_error(path + ": unsupported feature version " + std::to_string(version) +
                       " at byte offset 4");
  FeatureBlock b;
  b.rows = static_cast<int64_t>(r.get<uint64_t>());
  const uint32_t payload = r.get<uint32_t>();
  if (payload == 0 || payload % sizeof(double) != 0)
    throw format_error(path + ": payload length " + std::to_string(payload) +
                       " not a multiple of 8 at byte offset 16");
  b.dim = static_cast<int64_t>(payload / sizeof(double));
  b.vals.resize(static_cast<size_t>(b.rows * b.dim));
  r.read(b.vals.data(), b.vals.size() * sizeof(double));
  return b;
}

uint64_t hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw format_error(path + ": cannot open for hashing");
  uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    h = fnv1a64_bytes(buf, static_cast<size_t>(in.gcount()), h);
  }
  return h;
}

uint64_t hash_tensor_values(const Tensor& t) {
  auto v = t.data();
  return fnv1a64_bytes(v.data(), v.size() * sizeof(double));
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw format_error(path + ": cannot open");
  std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return s;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw format_error(path + ": cannot open for write");
  out << text;
}

}  // namespace tcv
