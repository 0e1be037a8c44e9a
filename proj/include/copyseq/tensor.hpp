#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <new>
#include <string>
#include <vector>

#include "copyseq/errors.hpp"
#include "copyseq/rng.hpp"

namespace copyseq {

// Finite stand-in for the -inf score sentinel: exp() underflows to exactly
// 0.0, so masked softmax entries carry exactly zero probability while no
// tensor ever holds an actual Inf/NaN.
inline constexpr double kMaskedScore = -1e30;

inline bool is_masked_score(double s) { return s <= kMaskedScore * 0.5; }

namespace detail {

// 64-byte-aligned storage: identical buffer alignment makes vectorized
// kernels split their loops identically on every run, keeping results
// bit-reproducible regardless of heap history.
template <typename T, std::size_t Align>
struct AlignedAllocator {
  using value_type = T;
  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U, Align>&) {}
  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t(Align)));
  }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, std::align_val_t(Align)); }
  template <class U>
  struct rebind {
    using other = AlignedAllocator<U, Align>;
  };
  bool operator==(const AlignedAllocator&) const { return true; }
  bool operator!=(const AlignedAllocator&) const { return false; }
};

}  // namespace detail

using DVec = std::vector<double, detail::AlignedAllocator<double, 64>>;

namespace detail {
struct TensorImpl {
  std::vector<std::size_t> shape;
  DVec values;
  DVec grad;  // empty until a backward pass touches it
  bool requires_grad = false;
};
}  // namespace detail

// Dense row-major tensor of doubles with shared storage. Copies are shallow;
// a Tensor without grad is immutable by convention once built and safe to
// share across threads.
class Tensor {
 public:
  Tensor() : impl_(std::make_shared<detail::TensorImpl>()) {}

  static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false);
  static Tensor full(std::vector<std::size_t> shape, double value, bool requires_grad = false);
  static Tensor of(std::vector<std::size_t> shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);
  // Uniform values in [-range, range].
  static Tensor uniform(std::vector<std::size_t> shape, Rng& rng, double range, bool requires_grad = false);

  const std::vector<std::size_t>& shape() const { return impl_->shape; }
  std::size_t ndim() const { return impl_->shape.size(); }
  std::size_t size() const { return impl_->values.size(); }
  std::size_t rows() const { return impl_->shape.empty() ? 0 : impl_->shape[0]; }
  std::size_t cols() const { return impl_->shape.size() < 2 ? (impl_->shape.empty() ? 0 : 1) : impl_->shape[1]; }

  double* data() { return impl_->values.data(); }
  const double* data() const { return impl_->values.data(); }
  DVec& values() { return impl_->values; }
  const DVec& values() const { return impl_->values; }

  double& at(std::size_t r, std::size_t c) { return impl_->values[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return impl_->values[r * cols() + c]; }
  double item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool v) { impl_->requires_grad = v; }

  bool has_grad() const { return !impl_->grad.empty(); }
  // Grad buffer, zero-allocated on first use. Usable through const handles:
  // Tensor is a shared handle, so constness does not propagate to storage.
  DVec& grad() const;
  const DVec& grad_view() const { return impl_->grad; }
  void zero_grad() const { impl_->grad.clear(); }

  bool same_storage(const Tensor& o) const { return impl_ == o.impl_; }
  std::string shape_str() const;

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

// Define-by-run record of executed ops. backward() replays the chain rule
// over the record exactly once, in reverse execution order; gradients of a
// value used k times accumulate additively. A Graph must not be shared
// across threads.
class Graph {
 public:
  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  bool grad_enabled() const { return grad_enabled_; }
  std::size_t size() const { return ops_.size(); }

  void record(std::function<void()> back) {
    if (grad_enabled_) ops_.push_back(std::move(back));
  }

  // Seeds d(loss)/d(loss) = 1 and replays the record in reverse. loss must be
  // scalar. A graph can only be walked backward once.
  void backward(Tensor loss);

 private:
  bool grad_enabled_;
  bool used_ = false;
  std::vector<std::function<void()>> ops_;
};

// ---------------------------------------------------------------------------
// Ops. All take the graph first; outputs require grad iff grad is enabled and
// any differentiable input requires grad.
// ---------------------------------------------------------------------------

// c[i,j] = sum_l a[i,l] * b[l,j]
Tensor matmul(Graph& g, const Tensor& a, const Tensor& b);

// Pointwise with limited broadcasting: same shape, scalar<->tensor (either
// side), or row-vector<->matrix (either side).
Tensor add(Graph& g, const Tensor& a, const Tensor& b);
Tensor sub(Graph& g, const Tensor& a, const Tensor& b);
Tensor mul(Graph& g, const Tensor& a, const Tensor& b);

Tensor tanh(Graph& g, const Tensor& x);
Tensor sigmoid(Graph& g, const Tensor& x);
Tensor exp(Graph& g, const Tensor& x);
Tensor log(Graph& g, const Tensor& x);  // DomainError on nonpositive input
Tensor scale(Graph& g, const Tensor& x, double c);

// Row-wise log-softmax over unmasked entries (mask 1 = keep). Masked entries
// map to the kMaskedScore sentinel (probability exactly 0) and receive
// exactly zero gradient. MaskError on a fully masked row.
Tensor masked_log_softmax(Graph& g, const Tensor& scores, const Tensor& mask);

// Row lookup: out[i,:] = table[ids[i],:]. Backward scatter-adds duplicated
// ids. IndexError on out-of-range ids.
Tensor gather_rows(Graph& g, const Tensor& table, const std::vector<int>& ids);

// The gradient kernel of gather_rows, exposed on its own:
// dest[ids[i],:] += src[i,:], duplicates accumulate.
void scatter_add(Tensor& dest, const std::vector<int>& ids, const Tensor& src);

// out[b,0] = x[b, ids[b]]
Tensor pick_per_row(Graph& g, const Tensor& x, const std::vector<int>& ids);

Tensor concat_cols(Graph& g, const std::vector<Tensor>& parts);
Tensor slice_cols(Graph& g, const Tensor& x, std::size_t from, std::size_t len);

// T step tensors [B x d] -> block matrix [(B*T) x d], row b*T + t (b-major).
Tensor pack_blocks(Graph& g, const std::vector<Tensor>& steps);

// big [(B*T) x d] + small[b,:] added to every row of block b.
Tensor block_rowwise_add(Graph& g, const Tensor& big, const Tensor& small, std::size_t block_len);

// out[b,t] = dot(big[b*T+t,:], v[b,:])
Tensor blockwise_matvec(Graph& g, const Tensor& big, const Tensor& v, std::size_t block_len);

// out[b,:] = sum_t w[b,t] * big[b*T+t,:]
Tensor blockwise_weighted_sum(Graph& g, const Tensor& big, const Tensor& w);

// out[b,:] = big[b*T + pos[b],:]
Tensor select_block_row(Graph& g, const Tensor& big, const std::vector<std::size_t>& pos, std::size_t block_len);

// out[b,:] = take_a[b] ? a[b,:] : b[b,:]; gradient routes to the chosen side.
Tensor row_where(Graph& g, const std::vector<unsigned char>& take_a, const Tensor& a, const Tensor& b);

// Per-row renormalization over matching entries (match is a 0/1 constant):
// with q = p*match and K = sum(q): rho = q/K when K >= 1e-12; uniform over
// matches when K underflows but matches exist; all-zero when no match.
Tensor normalize_matched(Graph& g, const Tensor& p, const Tensor& match);

// out[b, col_map[b][j]] += x[b,j]; map entry -1 drops the column.
Tensor scatter_cols(Graph& g, const Tensor& x, const std::vector<std::vector<int>>& col_map, std::size_t out_cols);

Tensor sum_all(Graph& g, const Tensor& x);  // [1]
Tensor reshape(Graph& g, const Tensor& x, std::vector<std::size_t> shape);

}  // namespace copyseq
