#pragma once

#include <string>
#include <utility>
#include <vector>

#include "copyseq/rng.hpp"
#include "copyseq/tensor.hpp"

namespace copyseq {

// Update-gate / reset-gate / candidate weights. w: [d_in x d_h],
// u: [d_h x d_h], b: [1 x d_h].
struct GruParams {
  Tensor wz, uz, bz;
  Tensor wr, ur, br;
  Tensor wh, uh, bh;
  std::size_t d_in = 0, d_h = 0;

  std::vector<std::pair<std::string, Tensor>> named(const std::string& prefix) const;
};

// Weights uniform in [-0.08, 0.08], biases zero.
GruParams make_gru_params(std::size_t d_in, std::size_t d_h, Rng& rng, double init_range = 0.08);

// z = sigmoid(Wz x + Uz h + bz); r = sigmoid(Wr x + Ur h + br);
// cand = tanh(Wh x + Uh (r*h) + bh); h' = z*h + (1-z)*cand.
Tensor gru_step(Graph& g, const Tensor& x, const Tensor& h, const GruParams& p);

// Same cell with the three input projections fused into one GEMM (and the
// z/r state projections into another). Weight concatenation happens once per
// graph; gradients flow back to the original parameter tensors.
class GruRun {
 public:
  GruRun(Graph& g, const GruParams& p);
  Tensor step(Graph& g, const Tensor& x, const Tensor& h) const;
  const GruParams& params() const { return *p_; }

 private:
  const GruParams* p_;
  Tensor w_cat_;  // [d_in x 3 d_h]: z | r | cand
  Tensor u_zr_;   // [d_h x 2 d_h]: z | r
};

}  // namespace copyseq
