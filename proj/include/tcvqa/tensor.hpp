#pragma once
// Reverse-mode autodiff over dense f64 matrices. A thread-local tape records
// closures during the forward pass; backward() replays them once in reverse.
// Training is single-writer: one logical thread builds one tape at a time.

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tcvqa/common.hpp"
#include "tcvqa/rng.hpp"

namespace tcv {

using shape_t = std::vector<int64_t>;

std::string shape_str(const shape_t& s);

struct tensor_data {
  shape_t shape;
  std::vector<double> vals;
  std::vector<double> grad;    // allocated lazily, zero-initialized
  bool requires_grad = false;  // set on leaves (trainable parameters)
  bool on_grad_path = false;   // produced by a recorded op that can reach a leaf
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(shape_t shape, bool requires_grad = false);
  static Tensor full(shape_t shape, double v, bool requires_grad = false);
  static Tensor from_vec(shape_t shape, std::vector<double> vals, bool requires_grad = false);
  static Tensor scalar(double v);
  // Entries drawn i.i.d. from N(mean, stddev^2).
  static Tensor randn(shape_t shape, rng& r, double mean, double stddev, bool requires_grad = false);

  bool defined() const { return d_ != nullptr; }
  const shape_t& shape() const;
  int64_t numel() const;
  int64_t rows() const;  // first extent (rank >= 1)
  int64_t cols() const;  // last extent (rank >= 1)

  std::span<double> data();
  std::span<const double> data() const;
  double item() const;  // numel()==1 only

  bool requires_grad() const;
  void set_requires_grad(bool rg);
  bool on_grad_path() const;

  std::span<double> grad();  // allocates zeros on first use
  bool has_grad() const;
  void zero_grad();

  // Overwrite values from another tensor of identical shape (grads untouched).
  void copy_values_from(const Tensor& src);
  Tensor clone_values() const;  // detached value copy

  tensor_data* raw() const { return d_.get(); }
  std::shared_ptr<tensor_data> handle() const { return d_; }

 private:
  explicit Tensor(std::shared_ptr<tensor_data> d) : d_(std::move(d)) {}
  std::shared_ptr<tensor_data> d_;
  friend class GradTape;
  friend Tensor make_op_output(shape_t shape, bool track);
};

// ===== tape =====

class GradTape {
 public:
  GradTape() = default;
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  void record(std::shared_ptr<tensor_data> out, std::function<void()> fn);
  // Seeds d(loss)/d(loss)=1 and replays nodes newest-to-oldest, visiting each
  // exactly once. Leaf grads accumulate across calls; intermediate grads are
  // re-zeroed per call.
  void backward(const Tensor& loss);
  void clear();
  size_t size() const { return nodes_.size(); }

  static GradTape* active();

 private:
  struct Node {
    std::shared_ptr<tensor_data> out;
    std::function<void()> fn;
  };
  std::vector<Node> nodes_;
  friend class TapeScope;
};

// RAII activation of a tape on this thread. Ops record only while a scope is live.
class TapeScope {
 public:
  TapeScope();
  explicit TapeScope(GradTape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

  GradTape& tape() { return *tape_; }
  void backward(const Tensor& loss) { tape_->backward(loss); }

 private:
  GradTape owned_;
  GradTape* tape_ = nullptr;
  GradTape* prev_ = nullptr;
};

void backward(const Tensor& loss);  // uses the active scope's tape

// ===== attention mask =====

// Row-major permit bytes: permit[i*lk + j] nonzero means query i may attend key j.
struct AttnMask {
  int64_t lq = 0;
  int64_t lk = 0;
  std::vector<uint8_t> permit;
  bool full = true;  // true = no mask storage, everything permitted

  static AttnMask all(int64_t lq, int64_t lk);
  static AttnMask blocked(int64_t lq, int64_t lk);  // all zeros, caller opens entries
  bool permitted(int64_t i, int64_t j) const { return full || permit[i * lk + j] != 0; }
};

// ===== ops =====

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
// x[r x c] + row vector v[c] broadcast over rows.
Tensor add_rowvec(const Tensor& x, const Tensor& v);
Tensor sum(const Tensor& x);  // scalar

Tensor matmul(const Tensor& a, const Tensor& b);     // a[m x k] * b[k x n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a[m x k] * b[n x k]^T
Tensor matmul_tn(const Tensor& a, const Tensor& b);  // a[k x m]^T * b[k x n]

Tensor gelu(const Tensor& x);     // exact erf form
Tensor tanh_op(const Tensor& x);
Tensor sigmoid_op(const Tensor& x);

Tensor softmax_lastdim(const Tensor& x);
// Masked rows get -inf pre-softmax treatment internally; fully masked rows
// come out as zeros (never NaN).
Tensor masked_softmax(const Tensor& x, const AttnMask& mask);

// Per-row normalization over the last dim: gain * (x - mu) / sqrt(var + eps) + bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);

// Per-row negative log-likelihood of targets under softmax(logits): shape [n].
Tensor cross_entropy_rows(const Tensor& logits, std::span<const int32_t> targets);
// Mean of cross_entropy_rows: scalar.
Tensor cross_entropy_logits(const Tensor& logits, std::span<const int32_t> targets);

// Gather rows of an embedding table; backward scatter-adds into the table grad.
Tensor embed_rows(const Tensor& table, std::span<const int32_t> ids);

Tensor concat_rows(const std::vector<Tensor>& parts);  // skips undefined/empty parts
Tensor slice_rows(const Tensor& x, int64_t r0, int64_t r1);
Tensor slice_cols(const Tensor& x, int64_t c0, int64_t c1);
Tensor concat_cols(const std::vector<Tensor>& parts);

// True when every entry is finite. Used by tests and the trainer's loss guard.
bool all_finite(const Tensor& x);

}  // namespace tcv
