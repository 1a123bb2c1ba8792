#include "tcvqa/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "tcvqa/kernels.hpp"

namespace tcv {

std::string shape_str(const shape_t& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

static int64_t numel_of(const shape_t& s) {
  int64_t n = 1;
  for (int64_t e : s) n *= e;
  return n;
}

// ===== Tensor =====

Tensor Tensor::zeros(shape_t shape, bool requires_grad) {
  auto d = std::make_shared<tensor_data>();
  d->vals.assign(static_cast<size_t>(numel_of(shape)), 0.0);
  d->shape = std::move(shape);
  d->requires_grad = requires_grad;
  return Tensor(std::move(d));
}

Tensor Tensor::full(shape_t shape, double v, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.d_->vals.begin(), t.d_->vals.end(), v);
  return t;
}

Tensor Tensor::from_vec(shape_t shape, std::vector<double> vals, bool requires_grad) {
  if (numel_of(shape) != static_cast<int64_t>(vals.size()))
    throw shape_error("from_vec: " + shape_str(shape) + " needs " + std::to_string(numel_of(shape)) +
                      " values, got " + std::to_string(vals.size()));
  auto d = std::make_shared<tensor_data>();
  d->shape = std::move(shape);
  d->vals = std::move(vals);
  d->requires_grad = requires_grad;
  return Tensor(std::move(d));
}

Tensor Tensor::scalar(double v) { return from_vec({1}, {v}); }

Tensor Tensor::randn(shape_t shape, rng& r, double mean, double stddev, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (double& v : t.d_->vals) v = r.normal(mean, stddev);
  return t;
}

const shape_t& Tensor::shape() const {
  if (!d_) throw contract_error("shape() on undefined tensor");
  return d_->shape;
}

int64_t Tensor::numel() const { return d_ ? static_cast<int64_t>(d_->vals.size()) : 0; }

int64_t Tensor::rows() const {
  if (!d_ || d_->shape.empty()) throw contract_error("rows() needs rank >= 1");
  return d_->shape.front();
}

int64_t Tensor::cols() const {
  if (!d_ || d_->shape.empty()) throw contract_error("cols() needs rank >= 1");
  return d_->shape.back();
}

std::span<double> Tensor::data() {
  if (!d_) throw contract_error("data() on undefined tensor");
  return d_->vals;
}

std::span<const double> Tensor::data() const {
  if (!d_) throw contract_error("data() on undefined tensor");
  return d_->vals;
}

double Tensor::item() const {
  if (numel() != 1) throw contract_error("item() needs numel 1, have " + shape_str(shape()));
  return d_->vals[0];
}

bool Tensor::requires_grad() const { return d_ && d_->requires_grad; }
void Tensor::set_requires_grad(bool rg) {
  if (!d_) throw contract_error("set_requires_grad on undefined tensor");
  d_->requires_grad = rg;
}
bool Tensor::on_grad_path() const { return d_ && (d_->on_grad_path || d_->requires_grad); }

static void ensure_grad(tensor_data* d) {
  if (d->grad.size() != d->vals.size()) d->grad.assign(d->vals.size(), 0.0);
}

std::span<double> Tensor::grad() {
  if (!d_) throw contract_error("grad() on undefined tensor");
  ensure_grad(d_.get());
  return d_->grad;
}

bool Tensor::has_grad() const { return d_ && d_->grad.size() == d_->vals.size(); }

void Tensor::zero_grad() {
  if (d_ && !d_->grad.empty()) std::fill(d_->grad.begin(), d_->grad.end(), 0.0);
}

void Tensor::copy_values_from(const Tensor& src) {
  if (!d_ || !src.d_) throw contract_error("copy_values_from on undefined tensor");
  if (d_->shape != src.d_->shape)
    throw shape_error("copy_values_from: " + shape_str(d_->shape) + " vs " + shape_str(src.d_->shape));
  d_->vals = src.d_->vals;
}

Tensor Tensor::clone_values() const {
  if (!d_) throw contract_error("clone_values on undefined tensor");
  return from_vec(d_->shape, d_->vals);
}

// ===== tape =====

static thread_local GradTape* g_active_tape = nullptr;

GradTape* GradTape::active() { return g_active_tape; }

void GradTape::record(std::shared_ptr<tensor_data> out, std::function<void()> fn) {
  out->on_grad_path = true;
  nodes_.push_back({std::move(out), std::move(fn)});
}

void GradTape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw contract_error("backward: loss must be a defined scalar");
  if (!loss.on_grad_path())
    throw contract_error("backward: loss is not on this tape's grad path");
  // Re-zero intermediate grads (leaves keep theirs so repeated calls accumulate).
  for (Node& n : nodes_) {
    ensure_grad(n.out.get());
    std::fill(n.out->grad.begin(), n.out->grad.end(), 0.0);
  }
  ensure_grad(loss.raw());
  loss.raw()->grad[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->fn();
}

void GradTape::clear() { nodes_.clear(); }

TapeScope::TapeScope() : tape_(&owned_), prev_(g_active_tape) { g_active_tape = tape_; }
TapeScope::TapeScope(GradTape& tape) : tape_(&tape), prev_(g_active_tape) { g_active_tape = tape_; }
TapeScope::~TapeScope() { g_active_tape = prev_; }

void backward(const Tensor& loss) {
  if (!g_active_tape) throw contract_error("backward: no active tape scope");
  g_active_tape->backward(loss);
}

// ===== op plumbing =====

Tensor make_op_output(shape_t shape, bool track) {
  Tensor t = Tensor::zeros(std::move(shape));
  t.raw()->on_grad_path = track;
  return t;
}

static bool wants_grad(const Tensor& t) { return t.on_grad_path(); }

static bool tracking(std::initializer_list<const Tensor*> ins) {
  if (!GradTape::active()) return false;
  for (const Tensor* t : ins)
    if (t->defined() && wants_grad(*t)) return true;
  return false;
}

static void axpy(double a, std::span<const double> x, std::span<double> y) {
  for (size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

static void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw shape_error(std::string(op) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

#define GRAD_OF(t) ((t).grad())

// ===== elementwise =====

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  bool track = tracking({&a, &b});
  Tensor out = make_op_output(a.shape(), track);
  auto av = a.data(), bv = b.data();
  auto ov = out.data();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
  if (track) {
    Tensor ac = a, bc = b, oc = out;
    GradTape::active()->record(out.handle(), [ac, bc, oc]() mutable {
      auto g = oc.grad();
      if (ac.on_grad_path()) axpy(1.0, g, ac.grad());
      if (bc.on_grad_path()) axpy(1.0, g, bc.grad());
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  bool track = tracking({&a, &b});
  Tensor out = make_op_output(a.shape(), track);
  auto av = a.data(), bv = b.data();
  auto ov = out.data();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] - bv[i];
  if (track) {
    Tensor ac = a, bc = b, oc = out;
    GradTape::active()->record(out.handle(), [ac, bc, oc]() mutable {
      auto g = oc.grad();
      if (ac.on_grad_path()) axpy(1.0, g, ac.grad());
      if (bc.on_grad_path()) axpy(-1.0, g, bc.grad());
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  bool track = tracking({&a, &b});
  Tensor out = make_op_output(a.shape(), track);
  auto av = a.data(), bv = b.data();
  auto ov = out.data();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
  if (track) {
    Tensor ac = a, bc = b, oc = out;
    GradTape::active()->record(out.handle(), [ac, bc, oc]() mutable {
      auto g = oc.grad();
      auto av2 = ac.data(), bv2 = bc.data();
      if (ac.on_grad_path()) {
        auto ga = ac.grad();
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv2[i];
      }
      if (bc.on_grad_path()) {
        auto gb = bc.grad();
        for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av2[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double s) {
  bool track = tracking({&a});
  Tensor out = make_op_output(a.shape(), track);
  auto av = a.data();
  auto ov = out.data();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * s;
  if (track) {
    Tensor ac = a, oc = out;
    GradTape::active()->record(out.handle(), [ac, oc, s]() mutable {
      if (ac.on_grad_path()) axpy(s, oc.grad(), ac.grad());
    });
  }
  return out;
}

Tensor add_rowvec(const Tensor& x, const Tensor& v) {
  if (x.shape().size() != 2 || v.shape().size() != 1 || x.cols() != v.cols())
    throw shape_error("add_rowvec: " + shape_str(x.shape()) + " vs " + shape_str(v.shape()));
  bool track = tracking({&x, &v});
  Tensor out = make_op_output(x.shape(), track);
  const int64_t r = x.rows(), c = x.cols();
  auto xv = x.data(), vv = v.data();
  auto ov = out.data();
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c; ++j) ov[i * c + j] = xv[i * c + j] + vv[j];
  if (track) {
    Tensor xc = x, vc = v, oc = out;
    GradTape::active()->record(out.handle(), [xc, vc, oc, r, c]() mutable {
      auto g = oc.grad();
      if (xc.on_grad_path()) axpy(1.0, g, xc.grad());
      if (vc.on_grad_path()) {
        auto gv = vc.grad();
        for (int64_t i = 0; i < r; ++i)
          for (int64_t j = 0; j < c; ++j) gv[j] += g[i * c + j];
      }
    });
  }
  return out;
}

Tensor sum(const Tensor& x) {
  bool track = tracking({&x});
  Tensor out = make_op_output({1}, track);
  double s = 0.0;
  for (double v : x.data()) s += v;
  out.data()[0] = s;
  if (track) {
    Tensor xc = x, oc = out;
    GradTape::active()->record(out.handle(), [xc, oc]() mutable {
      if (!xc.on_grad_path()) return;
      const double g = oc.grad()[0];
      auto gx = xc.grad();
      for (size_t i = 0; i < gx.size(); ++i) gx[i] += g;
    });
  }
  return out;
}

// ===== matmul family =====

static void check_mm(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape().size() != 2 || b.shape().size() != 2)
    throw shape_error(std::string(op) + ": rank-2 operands required, got " + shape_str(a.shape()) +
                      " and " + shape_str(b.shape()));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_mm(a, b, "matmul");
  if (a.cols() != b.rows())
    throw shape_error("matmul: inner dims differ, " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const int64_t m = a.rows(), k = a.cols(), n = b.cols();
  bool track = tracking({&a, &b});
  Tensor out = make_op_output({m, n}, track);
  kern::matmul_nn(a.data().data(), b.data().data(), out.data().data(), m, k, n);
  if (track) {
    Tensor ac = a, bc = b, oc = out;
    GradTape::active()->record(out.handle(), [ac, bc, oc, m, k, n]() mutable {
      auto g = oc.grad();
      if (ac.on_grad_path()) {  // dA += dC * B^T
        std::vector<double> tmp(static_cast<size_t>(m * k));
        kern::matmul_nt(g.data(), bc.data().data(), tmp.data(), m, n, k);
        axpy(1.0, tmp, ac.grad());
      }
      if (bc.on_grad_path()) {  // dB += A^T * dC
        std::vector<double> tmp(static_cast<size_t>(k * n));
        kern::matmul_tn(ac.data().data(), g.data(), tmp.data(), k, m, n);
        axpy(1.0, tmp, bc.grad());
      }
    });
  }
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  check_mm(a, b, "matmul_nt");
  if (a.cols() != b.cols())
    throw shape_error("matmul_nt: inner dims differ, " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const int64_t m = a.rows(), k = a.cols(), n = b.rows();
  bool track = tracking({&a, &b});
  Tensor out = make_op_output({m, n}, track);
  kern::matmul_nt(a.data().data(), b.data().data(), out.data().data(), m, k, n);
  if (track) {
    Tensor ac = a, bc = b, oc = out;
    GradTape::active()->record(out.handle(), [ac, bc, oc, m, k, n]() mutable {
      auto g = oc.grad();
      if (ac.on_grad_path()) {  // dA += dC * B
        std::vector<double> tmp(static_cast<size_t>(m * k));
        kern::matmul_nn(g.data(), bc.data().data(), tmp.data(), m, n, k);
        axpy(1.0, tmp, ac.grad());
      }
      if (bc.on_grad_path()) {  // dB += dC^T * A
        std::vector<double> tmp(static_cast<size_t>(n * k));
        kern::matmul_tn(g.data(), ac.data().data(), tmp.data(), n, m, k);
        axpy(1.0, tmp, bc.grad());
      }
    });
  }
  return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  check_mm(a, b, "matmul_tn");
  if (a.rows() != b.rows())
    throw shape_error("matmul_tn: inner dims differ, " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const int64_t k = a.rows(), m = a.cols(), n = b.cols();
  bool track = tracking({&a, &b});
  Tensor out = make_op_output({m, n}, track);
  kern::matmul_tn(a.data().data(), b.data().data(), out.data().data(), m, k, n);
  if (track) {
    Tensor ac = a, bc = b, oc = out;
    GradTape::active()->record(out.handle(), [ac, bc, oc, m, k, n]() mutable {
      auto g = oc.grad();
      if (ac.on_grad_path()) {  // dA += B * dC^T
        std::vector<double> tmp(static_cast<size_t>(k * m));
        kern::matmul_nt(bc.data().data(), g.data(), tmp.data(), k, n, m);
        axpy(1.0, tmp, ac.grad());
      }
      if (bc.on_grad_path()) {  // dB += A * dC
        std::vector<double> tmp(static_cast<size_t>(k * n));
        kern::matmul_nn(ac.data().data(), g.data(), tmp.data(), k, m, n);
        axpy(1.0, tmp, bc.grad());
      }
    });
  }
  return out;
}

// ===== nonlinearities =====

static constexpr double kInvSqrt2 = 0.70710678118654752440;
static constexpr double kInvSqrt2Pi = 0.39894228040143267794;

Tensor gelu(const Tensor& x) {
  bool track = tracking({&x});
  Tensor out = make_op_output(x.shape(), track);
  auto xv = x.data();
  auto ov = out.data();
  for (size_t i = 0; i < ov.size(); ++i)
    ov[i] = 0.5 * xv[i] * (1.0 + std::erf(xv[i] * kInvSqrt2));
  if (track) {
    Tensor xc = x, oc = out;
    GradTape::active()->record(out.handle(), [xc, oc]() mutable {
      if (!xc.on_grad_path()) return;
      auto g = oc.grad();
      auto xv2 = xc.data();
      auto gx = xc.grad();
      for (size_t i = 0; i < g.size(); ++i) {
        const double cdf = 0.5 * (1.0 + std::erf(xv2[i] * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * xv2[i] * xv2[i]);
        gx[i] += g[i] * (cdf + xv2[i] * pdf);
      }
    });
  }
  return out;
}

Tensor tanh_op(const Tensor& x) {
  bool track = tracking({&x});
  Tensor out = make_op_output(x.shape(), track);
  auto xv = x.data();
  auto ov = out.data();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = std::tanh(xv[i]);
  if (track) {
    Tensor xc = x, oc = out;
    GradTape::active()->record(out.handle(), [xc, oc]() mutable {
      if (!xc.on_grad_path()) return;
      auto g = oc.grad();
      auto yv = oc.data();
      auto gx = xc.grad();
      for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (1.0 - yv[i] * yv[i]);
    });
  }
  return out;
}

Tensor sigmoid_op(const Tensor& x) {
  bool track = tracking({&x});
  Tensor out = make_op_output(x.shape(), track);
  auto xv = x.data();
  auto ov = out.data();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = 1.0 / (1.0 + std::exp(-xv[i]));
  if (track) {
    Tensor xc = x, oc = out;
    GradTape::active()->record(out.handle(), [xc, oc]() mutable {
      if (!xc.on_grad_path()) return;
      auto g = oc.grad();
      auto yv = oc.data();
      auto gx = xc.grad();
      for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * yv[i] * (1.0 - yv[i]);
    });
  }
  return out;
}

// ===== softmax / layer norm / cross entropy =====

static void softmax_backward_rows(const Tensor& y, Tensor& x, const std::span<double> gout,
                                  int64_t r, int64_t c) {
  auto yv = y.data();
  auto gx = x.grad();
  for (int64_t i = 0; i < r; ++i) {
    double dot = 0.0;
    for (int64_t j = 0; j < c; ++j) dot += gout[i * c + j] * yv[i * c + j];
    for (int64_t j = 0; j < c; ++j)
      gx[i * c + j] += yv[i * c + j] * (gout[i * c + j] - dot);
  }
}

Tensor softmax_lastdim(const Tensor& x) {
  if (x.shape().empty()) throw shape_error("softmax_lastdim: rank >= 1 required");
  const int64_t c = x.cols();
  const int64_t r = x.numel() / c;
  bool track = tracking({&x});
  Tensor out = make_op_output(x.shape(), track);
  auto xv = x.data();
  auto ov = out.data();
  for (int64_t i = 0; i < r; ++i) {
    double mx = xv[i * c];
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, xv[i * c + j]);
    double s = 0.0;
    for (int64_t j = 0; j < c; ++j) {
      ov[i * c + j] = std::exp(xv[i * c + j] - mx);
      s += ov[i * c + j];
    }
    const double inv = 1.0 / s;
    for (int64_t j = 0; j < c; ++j) ov[i * c + j] *= inv;
  }
  if (track) {
    Tensor xc = x, oc = out;
    GradTape::active()->record(out.handle(), [xc, oc, r, c]() mutable {
      if (!xc.on_grad_path()) return;
      softmax_backward_rows(oc, xc, oc.grad(), r, c);
    });
  }
  return out;
}

Tensor masked_softmax(const Tensor& x, const AttnMask& mask) {
  if (x.shape().size() != 2) throw shape_error("masked_softmax: rank-2 required, got " + shape_str(x.shape()));
  const int64_t r = x.rows(), c = x.cols();
  if (mask.lq != r || mask.lk != c)
    throw shape_error("masked_softmax: mask " + shape_str({mask.lq, mask.lk}) + " vs scores " +
                      shape_str(x.shape()));
  bool track = tracking({&x});
  Tensor out = make_op_output(x.shape(), track);
  auto xv = x.data();
  auto ov = out.data();
  for (int64_t i = 0; i < r; ++i) {
    double mx = 0.0;
    bool any = false;
    for (int64_t j = 0; j < c; ++j) {
      if (!mask.permitted(i, j)) continue;
      if (!any || xv[i * c + j] > mx) mx = xv[i * c + j];
      any = true;
    }
    if (!any) continue;  // fully masked row stays zero
    double s = 0.0;
    for (int64_t j = 0; j < c; ++j) {
      if (!mask.permitted(i, j)) continue;
      ov[i * c + j] = std::exp(xv[i * c + j] - mx);
      s += ov[i * c + j];
    }
    const double inv = 1.0 / s;
    for (int64_t j = 0; j < c; ++j) ov[i * c + j] *= inv;
  }
  if (track) {
    Tensor xc = x, oc = out;
    GradTape::active()->record(out.handle(), [xc, oc, r, c]() mutable {
      if (!xc.on_grad_path()) return;
      // Masked entries have y == 0, so the softmax backward zeroes them naturally.
      softmax_backward_rows(oc, xc, oc.grad(), r, c);
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (x.shape().size() != 2) throw shape_error("layer_norm: rank-2 required, got " + shape_str(x.shape()));
  const int64_t r = x.rows(), c = x.cols();
  if (gain.numel() != c || bias.numel() != c)
    throw shape_error("layer_norm: gain " + shape_str(gain.shape()) + ", bias " + shape_str(bias.shape()) +
                      " vs row width " + std::to_string(c));
  bool track = tracking({&x, &gain, &bias});
  Tensor out = make_op_output(x.shape(), track);
  auto xv = x.data();
  auto gv = gain.data();
  auto bv = bias.data();
  auto ov = out.data();
  std::vector<double> yhat(static_cast<size_t>(r * c));
  std::vector<double> inv_sd(static_cast<size_t>(r));
  for (int64_t i = 0; i < r; ++i) {
    double mu = 0.0;
    for (int64_t j = 0; j < c; ++j) mu += xv[i * c + j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (int64_t j = 0; j < c; ++j) {
      const double d = xv[i * c + j] - mu;
      var += d * d;
    }
    var /= static_cast<double>(c);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_sd[static_cast<size_t>(i)] = inv;
    for (int64_t j = 0; j < c; ++j) {
      const double yh = (xv[i * c + j] - mu) * inv;
      yhat[static_cast<size_t>(i * c + j)] = yh;
      ov[i * c + j] = yh * gv[j] + bv[j];
    }
  }
  if (track) {
    Tensor xc = x, gc = gain, bc = bias, oc = out;
    GradTape::active()->record(out.handle(), [xc, gc, bc, oc, r, c, yhat = std::move(yhat),
                                              inv_sd = std::move(inv_sd)]() mutable {
      auto g = oc.grad();
      auto gv2 = gc.data();
      if (gc.on_grad_path()) {
        auto gg = gc.grad();
        for (int64_t i = 0; i < r; ++i)
          for (int64_t j = 0; j < c; ++j) gg[j] += g[i * c + j] * yhat[static_cast<size_t>(i * c + j)];
      }
      if (bc.on_grad_path()) {
        auto gb = bc.grad();
        for (int64_t i = 0; i < r; ++i)
          for (int64_t j = 0; j < c; ++j) gb[j] += g[i * c + j];
      }
      if (xc.on_grad_path()) {
        auto gx = xc.grad();
        for (int64_t i = 0; i < r; ++i) {
          double m1 = 0.0, m2 = 0.0;  // mean(dy), mean(dy * yhat)
          for (int64_t j = 0; j < c; ++j) {
            const double dy = g[i * c + j] * gv2[j];
            m1 += dy;
            m2 += dy * yhat[static_cast<size_t>(i * c + j)];
          }
          m1 /= static_cast<double>(c);
          m2 /= static_cast<double>(c);
          for (int64_t j = 0; j < c; ++j) {
            const double dy = g[i * c + j] * gv2[j];
            gx[i * c + j] += inv_sd[static_cast<size_t>(i)] *
                             (dy - m1 - yhat[static_cast<size_t>(i * c + j)] * m2);
          }
        }
      }
    });
  }
  return out;
}

Tensor cross_entropy_rows(const Tensor& logits, std::span<const int32_t> targets) {
  if (logits.shape().size() != 2)
    throw shape_error("cross_entropy_rows: rank-2 logits required, got " + shape_str(logits.shape()));
  const int64_t n = logits.rows(), v = logits.cols();
  if (static_cast<int64_t>(targets.size()) != n)
    throw shape_error("cross_entropy_rows: " + std::to_string(targets.size()) + " targets vs " +
                      std::to_string(n) + " rows");
  for (int32_t t : targets)
    if (t < 0 || t >= v)
      throw index_error("cross_entropy_rows: target " + std::to_string(t) + " outside vocab " +
                        std::to_string(v));
  bool track = tracking({&logits});
  Tensor out = make_op_output({n}, track);
  auto lv = logits.data();
  auto ov = out.data();
  std::vector<double> lse(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    double mx = lv[i * v];
    for (int64_t j = 1; j < v; ++j) mx = std::max(mx, lv[i * v + j]);
    double s = 0.0;
    for (int64_t j = 0; j < v; ++j) s += std::exp(lv[i * v + j] - mx);
    lse[static_cast<size_t>(i)] = mx + std::log(s);
    ov[i] = lse[static_cast<size_t>(i)] - lv[i * v + targets[i]];
  }
  if (track) {
    Tensor lc = logits, oc = out;
    std::vector<int32_t> tg(targets.begin(), targets.end());
    GradTape::active()->record(out.handle(), [lc, oc, n, v, tg = std::move(tg),
                                              lse = std::move(lse)]() mutable {
      if (!lc.on_grad_path()) return;
      auto g = oc.grad();
      auto lv2 = lc.data();
      auto gl = lc.grad();
      for (int64_t i = 0; i < n; ++i) {
        const double gi = g[i];
        for (int64_t j = 0; j < v; ++j) {
          const double p = std::exp(lv2[i * v + j] - lse[static_cast<size_t>(i)]);
          gl[i * v + j] += gi * (p - (j == tg[static_cast<size_t>(i)] ? 1.0 : 0.0));
        }
      }
    });
  }
  return out;
}

Tensor cross_entropy_logits(const Tensor& logits, std::span<const int32_t> targets) {
  Tensor rows = cross_entropy_rows(logits, targets);
  return scale(sum(rows), 1.0 / static_cast<double>(rows.numel()));
}

// ===== gather / scatter / reshuffles =====

Tensor embed_rows(const Tensor& table, std::span<const int32_t> ids) {
  if (table.shape().size() != 2)
    throw shape_error("embed_rows: rank-2 table required, got " + shape_str(table.shape()));
  const int64_t rtab = table.rows(), c = table.cols();
  for (int32_t id : ids)
    if (id < 0 || id >= rtab)
      throw index_error("embed_rows: id " + std::to_string(id) + " outside table rows " +
                        std::to_string(rtab));
  const int64_t n = static_cast<int64_t>(ids.size());
  bool track = tracking({&table});
  Tensor out = make_op_output({n, c}, track);
  auto tv = table.data();
  auto ov = out.data();
  for (int64_t i = 0; i < n; ++i)
    std::memcpy(ov.data() + i * c, tv.data() + static_cast<int64_t>(ids[i]) * c,
                sizeof(double) * static_cast<size_t>(c));
  if (track) {
    Tensor tc = table, oc = out;
    std::vector<int32_t> idc(ids.begin(), ids.end());
    GradTape::active()->record(out.handle(), [tc, oc, c, idc = std::move(idc)]() mutable {
      if (!tc.on_grad_path()) return;
      auto g = oc.grad();
      auto gt = tc.grad();
      for (size_t i = 0; i < idc.size(); ++i)
        for (int64_t j = 0; j < c; ++j)
          gt[static_cast<int64_t>(idc[i]) * c + j] += g[static_cast<int64_t>(i) * c + j];
    });
  }
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  std::vector<Tensor> live;
  for (const Tensor& p : parts)
    if (p.defined() && p.rows() > 0) live.push_back(p);
  if (live.empty()) throw contract_error("concat_rows: nothing to concatenate");
  const int64_t c = live[0].cols();
  int64_t r = 0;
  for (const Tensor& p : live) {
    if (p.shape().size() != 2 || p.cols() != c)
      throw shape_error("concat_rows: " + shape_str(p.shape()) + " vs width " + std::to_string(c));
    r += p.rows();
  }
  bool track = false;
  for (const Tensor& p : live) track = track || (GradTape::active() && p.on_grad_path());
  Tensor out = make_op_output({r, c}, track);
  auto ov = out.data();
  int64_t off = 0;
  for (const Tensor& p : live) {
    auto pv = p.data();
    std::memcpy(ov.data() + off * c, pv.data(), sizeof(double) * pv.size());
    off += p.rows();
  }
  if (track) {
    std::vector<Tensor> pc = live;
    Tensor oc = out;
    GradTape::active()->record(out.handle(), [pc, oc, c]() mutable {
      auto g = oc.grad();
      int64_t off2 = 0;
      for (Tensor& p : pc) {
        if (p.on_grad_path()) {
          auto gp = p.grad();
          for (size_t i = 0; i < gp.size(); ++i) gp[i] += g[off2 * c + static_cast<int64_t>(i)];
        }
        off2 += p.rows();
      }
    });
  }
  return out;
}

Tensor slice_rows(const Tensor& x, int64_t r0, int64_t r1) {
  if (x.shape().size() != 2) throw shape_error("slice_rows: rank-2 required, got " + shape_str(x.shape()));
  if (r0 < 0 || r1 < r0 || r1 > x.rows())
    throw index_error("slice_rows: [" + std::to_string(r0) + ", " + std::to_string(r1) + ") outside " +
                      shape_str(x.shape()));
  const int64_t c = x.cols(), n = r1 - r0;
  bool track = tracking({&x});
  Tensor out = make_op_output({n, c}, track);
  std::memcpy(out.data().data(), x.data().data() + r0 * c, sizeof(double) * static_cast<size_t>(n * c));
  if (track) {
    Tensor xc = x, oc = out;
    GradTape::active()->record(out.handle(), [xc, oc, r0, n, c]() mutable {
      if (!xc.on_grad_path()) return;
      auto g = oc.grad();
      auto gx = xc.grad();
      for (int64_t i = 0; i < n * c; ++i) gx[r0 * c + i] += g[i];
    });
  }
  return out;
}

Tensor slice_cols(const Tensor& x, int64_t c0, int64_t c1) {
  if (x.shape().size() != 2) throw shape_error("slice_cols: rank-2 required, got " + shape_str(x.shape()));
  if (c0 < 0 || c1 < c0 || c1 > x.cols())
    throw index_error("slice_cols: [" + std::to_string(c0) + ", " + std::to_string(c1) + ") outside " +
                      shape_str(x.shape()));
  const int64_t r = x.rows(), c = x.cols(), w = c1 - c0;
  bool track = tracking({&x});
  Tensor out = make_op_output({r, w}, track);
  auto xv = x.data();
  auto ov = out.data();
  for (int64_t i = 0; i < r; ++i)
    std::memcpy(ov.data() + i * w, xv.data() + i * c + c0, sizeof(double) * static_cast<size_t>(w));
  if (track) {
    Tensor xc = x, oc = out;
    GradTape::active()->record(out.handle(), [xc, oc, r, c, c0, w]() mutable {
      if (!xc.on_grad_path()) return;
      auto g = oc.grad();
      auto gx = xc.grad();
      for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < w; ++j) gx[i * c + c0 + j] += g[i * w + j];
    });
  }
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw contract_error("concat_cols: nothing to concatenate");
  const int64_t r = parts[0].rows();
  int64_t c = 0;
  for (const Tensor& p : parts) {
    if (p.shape().size() != 2 || p.rows() != r)
      throw shape_error("concat_cols: " + shape_str(p.shape()) + " vs rows " + std::to_string(r));
    c += p.cols();
  }
  bool track = false;
  for (const Tensor& p : parts) track = track || (GradTape::active() && p.on_grad_path());
  Tensor out = make_op_output({r, c}, track);
  auto ov = out.data();
  int64_t off = 0;
  for (const Tensor& p : parts) {
    auto pv = p.data();
    const int64_t w = p.cols();
    for (int64_t i = 0; i < r; ++i)
      std::memcpy(ov.data() + i * c + off, pv.data() + i * w, sizeof(double) * static_cast<size_t>(w));
    off += w;
  }
  if (track) {
    std::vector<Tensor> pc = parts;
    Tensor oc = out;
    GradTape::active()->record(out.handle(), [pc, oc, r, c]() mutable {
      auto g = oc.grad();
      int64_t off2 = 0;
      for (Tensor& p : pc) {
        const int64_t w = p.cols();
        if (p.on_grad_path()) {
          auto gp = p.grad();
          for (int64_t i = 0; i < r; ++i)
            for (int64_t j = 0; j < w; ++j) gp[i * w + j] += g[i * c + off2 + j];
        }
        off2 += w;
      }
    });
  }
  return out;
}

bool all_finite(const Tensor& x) {
  for (double v : x.data())
    if (!std::isfinite(v)) return false;
  return true;
}

// ===== mask =====

AttnMask AttnMask::all(int64_t lq, int64_t lk) {
  AttnMask m;
  m.lq = lq;
  m.lk = lk;
  m.full = true;
  return m;
}

AttnMask AttnMask::blocked(int64_t lq, int64_t lk) {
  AttnMask m;
  m.lq = lq;
  m.lk = lk;
  m.full = false;
  m.permit.assign(static_cast<size_t>(lq * lk), 0);
  return m;
}

}  // namespace tcv
