#pragma once
// Shared error types and small utilities used across the library.

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>

namespace tcv {

// Error hierarchy. Everything user-facing derives from std::runtime_error so the
// CLI can map failures to exit codes without caring about the precise subtype.
struct shape_error : std::runtime_error {
  explicit shape_error(const std::string& msg) : std::runtime_error("shape error: " + msg) {}
};
struct index_error : std::runtime_error {
  explicit index_error(const std::string& msg) : std::runtime_error("index error: " + msg) {}
};
struct format_error : std::runtime_error {
  explicit format_error(const std::string& msg) : std::runtime_error("format error: " + msg) {}
};
struct config_error : std::runtime_error {
  explicit config_error(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};
struct contract_error : std::runtime_error {
  explicit contract_error(const std::string& msg) : std::runtime_error("contract error: " + msg) {}
};
struct eval_error : std::runtime_error {
  explicit eval_error(const std::string& msg) : std::runtime_error("eval error: " + msg) {}
};

// FNV-1a 64-bit. Used for parameter-group and file hashes in the freeze-contract
// and determinism checks; not cryptographic, just stable and dependency-free.
inline uint64_t fnv1a64(std::span<const unsigned char> bytes, uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t fnv1a64_bytes(const void* p, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
  return fnv1a64({static_cast<const unsigned char*>(p), n}, h);
}

std::string to_hex(uint64_t v);

}  // namespace tcv
