#include "copyseq/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace copyseq {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<EMat>;
using MapC = Eigen::Map<const EMat>;

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return shape.empty() ? 0 : n;
}

std::string shape_to_string(const std::vector<std::size_t>& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

void require_2d(const Tensor& t, const char* who) {
  if (t.ndim() != 2) throw DimensionError(std::string(who) + ": expected 2-D tensor, got " + t.shape_str());
}

bool track(Graph& g, std::initializer_list<const Tensor*> ins) {
  if (!g.grad_enabled()) return false;
  for (const Tensor* t : ins)
    if (t->requires_grad()) return true;
  return false;
}

// Accumulate src into t's grad buffer.
void accum(const Tensor& t, const DVec& src) {
  auto& gbuf = t.grad();
  for (std::size_t i = 0; i < src.size(); ++i) gbuf[i] += src[i];
}

}  // namespace

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
  Tensor t;
  t.impl_->values.assign(shape_numel(shape), 0.0);
  t.impl_->shape = std::move(shape);
  t.impl_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.impl_->values.begin(), t.impl_->values.end(), value);
  return t;
}

Tensor Tensor::of(std::vector<std::size_t> shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size())
    throw DimensionError("Tensor::of: shape " + shape_to_string(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
  Tensor t;
  t.impl_->shape = std::move(shape);
  t.impl_->values.assign(values.begin(), values.end());
  t.impl_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(double v, bool requires_grad) { return of({1}, {v}, requires_grad); }

Tensor Tensor::uniform(std::vector<std::size_t> shape, Rng& rng, double range, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (double& v : t.impl_->values) v = rng.uniform(-range, range);
  return t;
}

double Tensor::item() const {
  if (size() != 1) throw DimensionError("item(): tensor " + shape_str() + " is not scalar");
  return impl_->values[0];
}

DVec& Tensor::grad() const {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->values.size(), 0.0);
  return impl_->grad;
}

std::string Tensor::shape_str() const { return shape_to_string(impl_->shape); }

void Graph::backward(Tensor loss) {
  if (used_) throw Error("Graph::backward called twice on the same graph");
  used_ = true;
  if (loss.size() != 1) throw DimensionError("backward: loss must be scalar, got " + loss.shape_str());
  loss.grad()[0] += 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
}

// ---------------------------------------------------------------------------

Tensor matmul(Graph& g, const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  if (a.cols() != b.rows())
    throw DimensionError("matmul: inner dimensions differ, " + a.shape_str() + " x " + b.shape_str());
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor c = Tensor::zeros({m, n}, track(g, {&a, &b}));
  MapC A(a.data(), m, k), B(b.data(), k, n);
  MapM C(c.data(), m, n);
  C.noalias() = A * B;
  if (c.requires_grad()) {
    g.record([a, b, c]() mutable {
      if (!c.has_grad()) return;
      const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
      MapC GC(c.grad_view().data(), m, n);
      if (a.requires_grad()) {
        MapC B(b.data(), k, n);
        MapM GA(a.grad().data(), m, k);
        GA.noalias() += GC * B.transpose();
      }
      if (b.requires_grad()) {
        MapC A(a.data(), m, k);
        MapM GB(b.grad().data(), k, n);
        GB.noalias() += A.transpose() * GC;
      }
    });
  }
  return c;
}

namespace {

enum class Bcast { Same, ScalarRight, ScalarLeft, RowRight, RowLeft };

Bcast broadcast_kind(const Tensor& a, const Tensor& b, const char* who) {
  if (a.shape() == b.shape()) return Bcast::Same;
  if (b.size() == 1) return Bcast::ScalarRight;
  if (a.size() == 1) return Bcast::ScalarLeft;
  if (a.ndim() == 2 && (b.ndim() == 1 || (b.ndim() == 2 && b.rows() == 1)) && b.size() == a.cols())
    return Bcast::RowRight;
  if (b.ndim() == 2 && (a.ndim() == 1 || (a.ndim() == 2 && a.rows() == 1)) && a.size() == b.cols())
    return Bcast::RowLeft;
  throw DimensionError(std::string(who) + ": shapes " + a.shape_str() + " and " + b.shape_str() +
                       " are not broadcast-compatible (supported: same shape, scalar, row vector)");
}

enum class BinOp { Add, Sub, Mul };

using ArrMap = Eigen::Map<Eigen::ArrayXd>;
using ArrMapC = Eigen::Map<const Eigen::ArrayXd>;

ArrMap arr(Tensor& t) { return {t.data(), static_cast<Eigen::Index>(t.size())}; }
ArrMapC carr(const Tensor& t) { return {t.data(), static_cast<Eigen::Index>(t.size())}; }
ArrMap garr(const Tensor& t) { return {t.grad().data(), static_cast<Eigen::Index>(t.size())}; }
ArrMapC row_of(const Tensor& t, std::size_t r, std::size_t n) {
  return {t.data() + r * n, static_cast<Eigen::Index>(n)};
}

Tensor binary_op(Graph& g, const Tensor& a, const Tensor& b, BinOp op, const char* who) {
  const Bcast k = broadcast_kind(a, b, who);
  const Tensor& big = (k == Bcast::ScalarLeft || k == Bcast::RowLeft) ? b : a;
  Tensor out = Tensor::zeros(big.shape(), track(g, {&a, &b}));
  const std::size_t rows = big.ndim() == 2 ? big.rows() : 1;
  const std::size_t cols = big.ndim() == 2 ? big.cols() : big.size();
  auto O = arr(out);
  auto apply = [op](auto&& x, auto&& y, auto&& dst) {
    switch (op) {
      case BinOp::Add: dst = x + y; break;
      case BinOp::Sub: dst = x - y; break;
      case BinOp::Mul: dst = x * y; break;
    }
  };
  switch (k) {
    case Bcast::Same: apply(carr(a), carr(b), O); break;
    case Bcast::ScalarRight: apply(carr(a), b.data()[0], O); break;
    case Bcast::ScalarLeft: apply(a.data()[0], carr(b), O); break;
    case Bcast::RowRight:
      for (std::size_t r = 0; r < rows; ++r) {
        ArrMap orow(out.data() + r * cols, static_cast<Eigen::Index>(cols));
        apply(row_of(a, r, cols), row_of(b, 0, cols), orow);
      }
      break;
    case Bcast::RowLeft:
      for (std::size_t r = 0; r < rows; ++r) {
        ArrMap orow(out.data() + r * cols, static_cast<Eigen::Index>(cols));
        apply(row_of(a, 0, cols), row_of(b, r, cols), orow);
      }
      break;
  }
  if (out.requires_grad()) {
    g.record([a, b, out, op, k, rows, cols]() {
      if (!out.has_grad()) return;
      ArrMapC GO(out.grad_view().data(), static_cast<Eigen::Index>(out.size()));
      // d/da
      if (a.requires_grad()) {
        auto GA = garr(a);
        switch (k) {
          case Bcast::Same:
          case Bcast::RowRight:  // a is the full operand in both
          case Bcast::ScalarRight:
            if (op == BinOp::Mul) {
              if (k == Bcast::Same)
                GA += GO * carr(b);
              else if (k == Bcast::ScalarRight)
                GA += GO * b.data()[0];
              else
                for (std::size_t r = 0; r < rows; ++r) {
                  ArrMap gar(a.grad().data() + r * cols, static_cast<Eigen::Index>(cols));
                  ArrMapC gor(out.grad_view().data() + r * cols, static_cast<Eigen::Index>(cols));
                  gar += gor * row_of(b, 0, cols);
                }
            } else {
              GA += GO;
            }
            break;
          case Bcast::ScalarLeft: {
            double acc = 0.0;
            if (op == BinOp::Mul)
              acc = (GO * carr(b)).sum();
            else
              acc = GO.sum();
            a.grad()[0] += acc;
            break;
          }
          case Bcast::RowLeft:
            for (std::size_t r = 0; r < rows; ++r) {
              ArrMap gar(a.grad().data(), static_cast<Eigen::Index>(cols));
              ArrMapC gor(out.grad_view().data() + r * cols, static_cast<Eigen::Index>(cols));
              if (op == BinOp::Mul)
                gar += gor * row_of(b, r, cols);
              else
                gar += gor;
            }
            break;
        }
      }
      // d/db
      if (b.requires_grad()) {
        const double sign = op == BinOp::Sub ? -1.0 : 1.0;
        auto GB = garr(b);
        switch (k) {
          case Bcast::Same:
          case Bcast::RowLeft:
          case Bcast::ScalarLeft:
            if (op == BinOp::Mul) {
              if (k == Bcast::Same)
                GB += GO * carr(a);
              else if (k == Bcast::ScalarLeft)
                GB += GO * a.data()[0];
              else
                for (std::size_t r = 0; r < rows; ++r) {
                  ArrMap gbr(b.grad().data() + r * cols, static_cast<Eigen::Index>(cols));
                  ArrMapC gor(out.grad_view().data() + r * cols, static_cast<Eigen::Index>(cols));
                  gbr += gor * row_of(a, 0, cols);
                }
            } else {
              GB += sign * GO;
            }
            break;
          case Bcast::ScalarRight: {
            double acc = op == BinOp::Mul ? (GO * carr(a)).sum() : sign * GO.sum();
            b.grad()[0] += acc;
            break;
          }
          case Bcast::RowRight:
            for (std::size_t r = 0; r < rows; ++r) {
              ArrMap gbr(b.grad().data(), static_cast<Eigen::Index>(cols));
              ArrMapC gor(out.grad_view().data() + r * cols, static_cast<Eigen::Index>(cols));
              if (op == BinOp::Mul)
                gbr += gor * row_of(a, r, cols);
              else
                gbr += sign * gor;
            }
            break;
        }
      }
    });
  }
  return out;
}

}  // namespace

Tensor add(Graph& g, const Tensor& a, const Tensor& b) { return binary_op(g, a, b, BinOp::Add, "add"); }

Tensor sub(Graph& g, const Tensor& a, const Tensor& b) { return binary_op(g, a, b, BinOp::Sub, "sub"); }

Tensor mul(Graph& g, const Tensor& a, const Tensor& b) { return binary_op(g, a, b, BinOp::Mul, "mul"); }

namespace {

enum class UnOp { Tanh, Sigmoid, Exp, Scale };

// tanh and sigmoid through the vectorized exp kernel: Eigen has no packet
// tanh/logistic for doubles, and scalar std::tanh dominates the profile.
Tensor unary_op(Graph& g, const Tensor& x, UnOp op, double c = 0.0) {
  Tensor out = Tensor::zeros(x.shape(), track(g, {&x}));
  auto O = arr(out);
  auto X = carr(x);
  switch (op) {
    case UnOp::Tanh: O = 1.0 - 2.0 / ((2.0 * X).exp() + 1.0); break;
    case UnOp::Sigmoid: O = 1.0 / (1.0 + (-X).exp()); break;
    case UnOp::Exp:
      // packet exp clamps its argument instead of underflowing; force true
      // zeros so masked-score sentinels keep probability exactly 0
      O = (X < -745.0).select(0.0, X.min(700.0).exp());
      break;
    case UnOp::Scale: O = c * X; break;
  }
  if (out.requires_grad()) {
    g.record([x, out, op, c]() {
      if (!out.has_grad()) return;
      ArrMapC GO(out.grad_view().data(), static_cast<Eigen::Index>(out.size()));
      ArrMapC Y(out.data(), static_cast<Eigen::Index>(out.size()));
      auto GX = garr(x);
      switch (op) {
        case UnOp::Tanh: GX += GO * (1.0 - Y * Y); break;
        case UnOp::Sigmoid: GX += GO * Y * (1.0 - Y); break;
        case UnOp::Exp: GX += GO * Y; break;
        case UnOp::Scale: GX += c * GO; break;
      }
    });
  }
  return out;
}

}  // namespace

Tensor tanh(Graph& g, const Tensor& x) { return unary_op(g, x, UnOp::Tanh); }

Tensor sigmoid(Graph& g, const Tensor& x) { return unary_op(g, x, UnOp::Sigmoid); }

Tensor exp(Graph& g, const Tensor& x) { return unary_op(g, x, UnOp::Exp); }

Tensor log(Graph& g, const Tensor& x) {
  // NaN passes through (divergence surfaces at the loss check instead)
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x.data()[i] <= 0.0)
      throw DomainError("log: nonpositive value " + std::to_string(x.data()[i]) + " at index " +
                        std::to_string(i));
  Tensor out = Tensor::zeros(x.shape(), track(g, {&x}));
  arr(out) = carr(x).log();
  if (out.requires_grad()) {
    g.record([x, out]() {
      if (!out.has_grad()) return;
      ArrMapC GO(out.grad_view().data(), static_cast<Eigen::Index>(out.size()));
      garr(x) += GO / carr(x);
    });
  }
  return out;
}

Tensor scale(Graph& g, const Tensor& x, double c) { return unary_op(g, x, UnOp::Scale, c); }

Tensor masked_log_softmax(Graph& g, const Tensor& scores, const Tensor& mask) {
  require_2d(scores, "masked_log_softmax");
  if (scores.shape() != mask.shape())
    throw DimensionError("masked_log_softmax: scores " + scores.shape_str() + " vs mask " + mask.shape_str());
  const std::size_t B = scores.rows(), K = scores.cols();
  Tensor out = Tensor::zeros({B, K}, track(g, {&scores}));
  for (std::size_t b = 0; b < B; ++b) {
    double mx = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t j = 0; j < K; ++j) {
      if (mask.at(b, j) != 0.0) {
        any = true;
        mx = std::max(mx, scores.at(b, j));
      }
    }
    if (!any) throw MaskError("masked_log_softmax: row " + std::to_string(b) + " is fully masked");
    double z = 0.0;
    for (std::size_t j = 0; j < K; ++j)
      if (mask.at(b, j) != 0.0) z += std::exp(scores.at(b, j) - mx);
    double lz = std::log(z);
    for (std::size_t j = 0; j < K; ++j)
      out.at(b, j) = mask.at(b, j) != 0.0 ? scores.at(b, j) - mx - lz : kMaskedScore;
  }
  if (out.requires_grad()) {
    g.record([scores, mask, out]() mutable {
      if (!out.has_grad()) return;
      const std::size_t B = scores.rows(), K = scores.cols();
      const auto& go = out.grad_view();
      auto& gs = scores.grad();
      for (std::size_t b = 0; b < B; ++b) {
        double gsum = 0.0;
        for (std::size_t j = 0; j < K; ++j)
          if (mask.at(b, j) != 0.0) gsum += go[b * K + j];
        for (std::size_t j = 0; j < K; ++j) {
          if (mask.at(b, j) == 0.0) continue;  // masked scores get exactly zero gradient
          double p = std::exp(out.at(b, j));
          gs[b * K + j] += go[b * K + j] - p * gsum;
        }
      }
    });
  }
  return out;
}

Tensor gather_rows(Graph& g, const Tensor& table, const std::vector<int>& ids) {
  require_2d(table, "gather_rows");
  const std::size_t V = table.rows(), d = table.cols();
  for (int id : ids)
    if (id < 0 || static_cast<std::size_t>(id) >= V)
      throw IndexError("gather_rows: id " + std::to_string(id) + " out of range [0," + std::to_string(V) + ")");
  Tensor out = Tensor::zeros({ids.size(), d}, track(g, {&table}));
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::copy_n(table.data() + static_cast<std::size_t>(ids[i]) * d, d, out.data() + i * d);
  if (out.requires_grad()) {
    g.record([table, ids, out]() mutable {
      if (!out.has_grad()) return;
      const std::size_t d = table.cols();
      auto& gt = table.grad();
      const auto& go = out.grad_view();
      for (std::size_t i = 0; i < ids.size(); ++i) {
        double* dst = gt.data() + static_cast<std::size_t>(ids[i]) * d;
        const double* src = go.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
      }
    });
  }
  return out;
}

void scatter_add(Tensor& dest, const std::vector<int>& ids, const Tensor& src) {
  require_2d(dest, "scatter_add");
  require_2d(src, "scatter_add");
  if (src.rows() != ids.size() || src.cols() != dest.cols())
    throw DimensionError("scatter_add: src " + src.shape_str() + " vs dest " + dest.shape_str() + " with " +
                         std::to_string(ids.size()) + " ids");
  const std::size_t d = dest.cols();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= dest.rows())
      throw IndexError("scatter_add: id " + std::to_string(ids[i]) + " out of range");
    for (std::size_t j = 0; j < d; ++j) dest.at(static_cast<std::size_t>(ids[i]), j) += src.at(i, j);
  }
}

Tensor pick_per_row(Graph& g, const Tensor& x, const std::vector<int>& ids) {
  require_2d(x, "pick_per_row");
  if (ids.size() != x.rows())
    throw DimensionError("pick_per_row: " + std::to_string(ids.size()) + " ids for " + x.shape_str());
  for (int id : ids)
    if (id < 0 || static_cast<std::size_t>(id) >= x.cols())
      throw IndexError("pick_per_row: id " + std::to_string(id) + " out of range [0," +
                       std::to_string(x.cols()) + ")");
  const std::size_t B = x.rows();
  Tensor out = Tensor::zeros({B, 1}, track(g, {&x}));
  for (std::size_t b = 0; b < B; ++b) out.data()[b] = x.at(b, static_cast<std::size_t>(ids[b]));
  if (out.requires_grad()) {
    g.record([x, ids, out]() mutable {
      if (!out.has_grad()) return;
      auto& gx = x.grad();
      const auto& go = out.grad_view();
      for (std::size_t b = 0; b < x.rows(); ++b)
        gx[b * x.cols() + static_cast<std::size_t>(ids[b])] += go[b];
    });
  }
  return out;
}

Tensor concat_cols(Graph& g, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no parts");
  const std::size_t B = parts[0].rows();
  std::size_t total = 0;
  bool need = false;
  for (const Tensor& p : parts) {
    require_2d(p, "concat_cols");
    if (p.rows() != B)
      throw DimensionError("concat_cols: row mismatch " + p.shape_str() + " vs " + parts[0].shape_str());
    total += p.cols();
    need = need || (g.grad_enabled() && p.requires_grad());
  }
  Tensor out = Tensor::zeros({B, total}, need);
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    for (std::size_t b = 0; b < B; ++b)
      std::copy_n(p.data() + b * p.cols(), p.cols(), out.data() + b * total + off);
    off += p.cols();
  }
  if (out.requires_grad()) {
    g.record([parts, out, total]() mutable {
      if (!out.has_grad()) return;
      const auto& go = out.grad_view();
      std::size_t off = 0;
      for (const Tensor& p : parts) {
        if (p.requires_grad()) {
          auto& gp = p.grad();
          for (std::size_t b = 0; b < p.rows(); ++b)
            for (std::size_t j = 0; j < p.cols(); ++j) gp[b * p.cols() + j] += go[b * total + off + j];
        }
        off += p.cols();
      }
    });
  }
  return out;
}

Tensor slice_cols(Graph& g, const Tensor& x, std::size_t from, std::size_t len) {
  require_2d(x, "slice_cols");
  if (from + len > x.cols())
    throw DimensionError("slice_cols: [" + std::to_string(from) + "," + std::to_string(from + len) +
                         ") out of " + x.shape_str());
  const std::size_t B = x.rows();
  Tensor out = Tensor::zeros({B, len}, track(g, {&x}));
  for (std::size_t b = 0; b < B; ++b) std::copy_n(x.data() + b * x.cols() + from, len, out.data() + b * len);
  if (out.requires_grad()) {
    g.record([x, out, from, len]() mutable {
      if (!out.has_grad()) return;
      auto& gx = x.grad();
      const auto& go = out.grad_view();
      for (std::size_t b = 0; b < x.rows(); ++b)
        for (std::size_t j = 0; j < len; ++j) gx[b * x.cols() + from + j] += go[b * len + j];
    });
  }
  return out;
}

Tensor pack_blocks(Graph& g, const std::vector<Tensor>& steps) {
  if (steps.empty()) throw DimensionError("pack_blocks: no steps");
  const std::size_t B = steps[0].rows(), d = steps[0].cols(), T = steps.size();
  bool need = false;
  for (const Tensor& s : steps) {
    if (s.rows() != B || s.cols() != d)
      throw DimensionError("pack_blocks: inconsistent step shape " + s.shape_str());
    need = need || (g.grad_enabled() && s.requires_grad());
  }
  Tensor out = Tensor::zeros({B * T, d}, need);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t b = 0; b < B; ++b)
      std::copy_n(steps[t].data() + b * d, d, out.data() + (b * T + t) * d);
  if (out.requires_grad()) {
    g.record([steps, out, B, d, T]() mutable {
      if (!out.has_grad()) return;
      const auto& go = out.grad_view();
      for (std::size_t t = 0; t < T; ++t) {
        const Tensor& s = steps[t];
        if (!s.requires_grad()) continue;
        auto& gs = s.grad();
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t j = 0; j < d; ++j) gs[b * d + j] += go[(b * T + t) * d + j];
      }
    });
  }
  return out;
}

Tensor block_rowwise_add(Graph& g, const Tensor& big, const Tensor& small, std::size_t block_len) {
  require_2d(big, "block_rowwise_add");
  require_2d(small, "block_rowwise_add");
  const std::size_t T = block_len, B = small.rows(), d = small.cols();
  if (big.rows() != B * T || big.cols() != d)
    throw DimensionError("block_rowwise_add: big " + big.shape_str() + " vs small " + small.shape_str() +
                         " with block " + std::to_string(T));
  Tensor out = Tensor::zeros(big.shape(), track(g, {&big, &small}));
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t j = 0; j < d; ++j) out.at(b * T + t, j) = big.at(b * T + t, j) + small.at(b, j);
  if (out.requires_grad()) {
    g.record([big, small, out, B, T, d]() mutable {
      if (!out.has_grad()) return;
      const auto& go = out.grad_view();
      if (big.requires_grad()) accum(big, go);
      if (small.requires_grad()) {
        auto& gs = small.grad();
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t t = 0; t < T; ++t)
            for (std::size_t j = 0; j < d; ++j) gs[b * d + j] += go[(b * T + t) * d + j];
      }
    });
  }
  return out;
}

Tensor blockwise_matvec(Graph& g, const Tensor& big, const Tensor& v, std::size_t block_len) {
  require_2d(big, "blockwise_matvec");
  require_2d(v, "blockwise_matvec");
  const std::size_t T = block_len, B = v.rows(), d = v.cols();
  if (big.rows() != B * T || big.cols() != d)
    throw DimensionError("blockwise_matvec: big " + big.shape_str() + " vs v " + v.shape_str() +
                         " with block " + std::to_string(T));
  Tensor out = Tensor::zeros({B, T}, track(g, {&big, &v}));
  for (std::size_t b = 0; b < B; ++b) {
    MapC Hb(big.data() + b * T * d, T, d);
    Eigen::Map<const Eigen::VectorXd> vb(v.data() + b * d, d);
    Eigen::Map<Eigen::VectorXd> ob(out.data() + b * T, T);
    ob.noalias() = Hb * vb;
  }
  if (out.requires_grad()) {
    g.record([big, v, out, B, T, d]() mutable {
      if (!out.has_grad()) return;
      const auto& go = out.grad_view();
      for (std::size_t b = 0; b < B; ++b) {
        Eigen::Map<const Eigen::VectorXd> gb(go.data() + b * T, T);
        if (big.requires_grad()) {
          MapM GH(big.grad().data() + b * T * d, T, d);
          Eigen::Map<const Eigen::VectorXd> vb(v.data() + b * d, d);
          GH.noalias() += gb * vb.transpose();
        }
        if (v.requires_grad()) {
          Eigen::Map<Eigen::VectorXd> gv(v.grad().data() + b * d, d);
          MapC Hb(big.data() + b * T * d, T, d);
          gv.noalias() += Hb.transpose() * gb;
        }
      }
    });
  }
  return out;
}

Tensor blockwise_weighted_sum(Graph& g, const Tensor& big, const Tensor& w) {
  require_2d(big, "blockwise_weighted_sum");
  require_2d(w, "blockwise_weighted_sum");
  const std::size_t B = w.rows(), T = w.cols(), d = big.cols();
  if (big.rows() != B * T)
    throw DimensionError("blockwise_weighted_sum: big " + big.shape_str() + " vs weights " + w.shape_str());
  Tensor out = Tensor::zeros({B, d}, track(g, {&big, &w}));
  for (std::size_t b = 0; b < B; ++b) {
    MapC Hb(big.data() + b * T * d, T, d);
    Eigen::Map<const Eigen::VectorXd> wb(w.data() + b * T, T);
    Eigen::Map<Eigen::VectorXd> ob(out.data() + b * d, d);
    ob.noalias() = Hb.transpose() * wb;
  }
  if (out.requires_grad()) {
    g.record([big, w, out, B, T, d]() mutable {
      if (!out.has_grad()) return;
      const auto& go = out.grad_view();
      for (std::size_t b = 0; b < B; ++b) {
        Eigen::Map<const Eigen::VectorXd> gb(go.data() + b * d, d);
        if (big.requires_grad()) {
          MapM GH(big.grad().data() + b * T * d, T, d);
          Eigen::Map<const Eigen::VectorXd> wb(w.data() + b * T, T);
          GH.noalias() += wb * gb.transpose();
        }
        if (w.requires_grad()) {
          Eigen::Map<Eigen::VectorXd> gw(w.grad().data() + b * T, T);
          MapC Hb(big.data() + b * T * d, T, d);
          gw.noalias() += Hb * gb;
        }
      }
    });
  }
  return out;
}

Tensor select_block_row(Graph& g, const Tensor& big, const std::vector<std::size_t>& pos, std::size_t block_len) {
  require_2d(big, "select_block_row");
  const std::size_t T = block_len, B = pos.size(), d = big.cols();
  if (big.rows() != B * T)
    throw DimensionError("select_block_row: big " + big.shape_str() + " vs " + std::to_string(B) +
                         " blocks of " + std::to_string(T));
  for (std::size_t p : pos)
    if (p >= T) throw IndexError("select_block_row: position " + std::to_string(p) + " out of block");
  Tensor out = Tensor::zeros({B, d}, track(g, {&big}));
  for (std::size_t b = 0; b < B; ++b) std::copy_n(big.data() + (b * T + pos[b]) * d, d, out.data() + b * d);
  if (out.requires_grad()) {
    g.record([big, pos, out, T, d]() mutable {
      if (!out.has_grad()) return;
      auto& gb = big.grad();
      const auto& go = out.grad_view();
      for (std::size_t b = 0; b < pos.size(); ++b)
        for (std::size_t j = 0; j < d; ++j) gb[(b * T + pos[b]) * d + j] += go[b * d + j];
    });
  }
  return out;
}

Tensor row_where(Graph& g, const std::vector<unsigned char>& take_a, const Tensor& a, const Tensor& b) {
  require_2d(a, "row_where");
  if (a.shape() != b.shape())
    throw DimensionError("row_where: " + a.shape_str() + " vs " + b.shape_str());
  if (take_a.size() != a.rows())
    throw DimensionError("row_where: " + std::to_string(take_a.size()) + " conditions for " + a.shape_str());
  const std::size_t B = a.rows(), d = a.cols();
  Tensor out = Tensor::zeros(a.shape(), track(g, {&a, &b}));
  for (std::size_t r = 0; r < B; ++r)
    std::copy_n((take_a[r] ? a.data() : b.data()) + r * d, d, out.data() + r * d);
  if (out.requires_grad()) {
    g.record([take_a, a, b, out, B, d]() mutable {
      if (!out.has_grad()) return;
      const auto& go = out.grad_view();
      for (std::size_t r = 0; r < B; ++r) {
        const Tensor& dst = take_a[r] ? a : b;
        if (!dst.requires_grad()) continue;
        auto& gd = dst.grad();
        for (std::size_t j = 0; j < d; ++j) gd[r * d + j] += go[r * d + j];
      }
    });
  }
  return out;
}

Tensor normalize_matched(Graph& g, const Tensor& p, const Tensor& match) {
  require_2d(p, "normalize_matched");
  if (p.shape() != match.shape())
    throw DimensionError("normalize_matched: " + p.shape_str() + " vs " + match.shape_str());
  const std::size_t B = p.rows(), T = p.cols();
  constexpr double kUnderflow = 1e-12;
  Tensor out = Tensor::zeros(p.shape(), track(g, {&p}));
  std::vector<double> ksum(B, 0.0);
  for (std::size_t b = 0; b < B; ++b) {
    double K = 0.0;
    std::size_t cnt = 0;
    for (std::size_t t = 0; t < T; ++t) {
      if (match.at(b, t) != 0.0) {
        ++cnt;
        K += p.at(b, t);
      }
    }
    ksum[b] = K;
    if (cnt == 0) continue;  // row stays zero
    if (K >= kUnderflow) {
      for (std::size_t t = 0; t < T; ++t)
        if (match.at(b, t) != 0.0) out.at(b, t) = p.at(b, t) / K;
    } else {
      // Degenerate underflow: uniform over matching positions.
      for (std::size_t t = 0; t < T; ++t)
        if (match.at(b, t) != 0.0) out.at(b, t) = 1.0 / static_cast<double>(cnt);
    }
  }
  if (out.requires_grad()) {
    g.record([p, match, out, ksum, B, T]() mutable {
      if (!out.has_grad()) return;
      const auto& go = out.grad_view();
      auto& gp = p.grad();
      for (std::size_t b = 0; b < B; ++b) {
        double K = ksum[b];
        if (K < kUnderflow) continue;  // uniform/zero branches are constant in p
        double dot = 0.0;
        for (std::size_t t = 0; t < T; ++t)
          if (match.at(b, t) != 0.0) dot += go[b * T + t] * out.at(b, t);
        for (std::size_t t = 0; t < T; ++t)
          if (match.at(b, t) != 0.0) gp[b * T + t] += (go[b * T + t] - dot) / K;
      }
    });
  }
  return out;
}

Tensor scatter_cols(Graph& g, const Tensor& x, const std::vector<std::vector<int>>& col_map, std::size_t out_cols) {
  require_2d(x, "scatter_cols");
  const std::size_t B = x.rows(), K = x.cols();
  if (col_map.size() != B)
    throw DimensionError("scatter_cols: " + std::to_string(col_map.size()) + " maps for " + x.shape_str());
  for (const auto& m : col_map) {
    if (m.size() != K) throw DimensionError("scatter_cols: map width mismatch");
    for (int c : m)
      if (c >= static_cast<int>(out_cols)) throw IndexError("scatter_cols: target column out of range");
  }
  Tensor out = Tensor::zeros({B, out_cols}, track(g, {&x}));
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t j = 0; j < K; ++j) {
      int c = col_map[b][j];
      if (c >= 0) out.at(b, static_cast<std::size_t>(c)) += x.at(b, j);
    }
  if (out.requires_grad()) {
    g.record([x, col_map, out, B, K, out_cols]() mutable {
      if (!out.has_grad()) return;
      auto& gx = x.grad();
      const auto& go = out.grad_view();
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t j = 0; j < K; ++j) {
          int c = col_map[b][j];
          if (c >= 0) gx[b * K + j] += go[b * out_cols + static_cast<std::size_t>(c)];
        }
    });
  }
  return out;
}

Tensor sum_all(Graph& g, const Tensor& x) {
  Tensor out = Tensor::zeros({1}, track(g, {&x}));
  out.data()[0] = std::accumulate(x.data(), x.data() + x.size(), 0.0);
  if (out.requires_grad()) {
    g.record([x, out]() mutable {
      if (!out.has_grad()) return;
      double go = out.grad_view()[0];
      auto& gx = x.grad();
      for (double& v : gx) v += go;
    });
  }
  return out;
}

Tensor reshape(Graph& g, const Tensor& x, std::vector<std::size_t> shape) {
  if (shape_numel(shape) != x.size())
    throw DimensionError("reshape: " + x.shape_str() + " to " + shape_to_string(shape));
  Tensor out = Tensor::zeros(std::move(shape), track(g, {&x}));
  out.values() = x.values();
  if (out.requires_grad()) {
    g.record([x, out]() mutable {
      if (!out.has_grad()) return;
      accum(x, out.grad_view());
    });
  }
  return out;
}

}  // namespace copyseq
