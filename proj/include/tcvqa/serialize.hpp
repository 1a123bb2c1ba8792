#pragma once
// Binary file formats.
//   Tensor file:  magic "TCPT" | u32 rank | u64 extents[rank] | u8 dtype | raw data
//                 dtype 0 = f64 (native), 1 = f32. Data is little-endian.
//   Feature file: magic "TCPF" | u32 version=1 | u64 row_count | u32 payload_bytes
//                 | row_count payloads of payload_bytes each (f64 entries).
// Readers fail with a format error naming the file and byte offset.

#include <cstdint>
#include <string>
#include <vector>

#include "tcvqa/tensor.hpp"

namespace tcv {

enum class Dtype : uint8_t { f64 = 0, f32 = 1 };

void save_tensor(const std::string& path, const Tensor& t, Dtype dtype = Dtype::f64);
Tensor load_tensor(const std::string& path);  // f32 payloads widen to f64

struct FeatureBlock {
  int64_t rows = 0;
  int64_t dim = 0;  // f64 entries per row
  std::vector<double> vals;
};

void save_feature_block(const std::string& path, const FeatureBlock& block);
FeatureBlock load_feature_block(const std::string& path);

uint64_t hash_file(const std::string& path);
uint64_t hash_tensor_values(const Tensor& t);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace tcv
