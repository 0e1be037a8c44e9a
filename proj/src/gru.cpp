#include "copyseq/gru.hpp"

namespace copyseq {

std::vector<std::pair<std::string, Tensor>> GruParams::named(const std::string& prefix) const {
  return {{prefix + ".wz", wz}, {prefix + ".uz", uz}, {prefix + ".bz", bz},
          {prefix + ".wr", wr}, {prefix + ".ur", ur}, {prefix + ".br", br},
          {prefix + ".wh", wh}, {prefix + ".uh", uh}, {prefix + ".bh", bh}};
}

GruParams make_gru_params(std::size_t d_in, std::size_t d_h, Rng& rng, double init_range) {
  GruParams p;
  p.d_in = d_in;
  p.d_h = d_h;
  p.wz = Tensor::uniform({d_in, d_h}, rng, init_range, true);
  p.uz = Tensor::uniform({d_h, d_h}, rng, init_range, true);
  p.bz = Tensor::zeros({1, d_h}, true);
  p.wr = Tensor::uniform({d_in, d_h}, rng, init_range, true);
  p.ur = Tensor::uniform({d_h, d_h}, rng, init_range, true);
  p.br = Tensor::zeros({1, d_h}, true);
  p.wh = Tensor::uniform({d_in, d_h}, rng, init_range, true);
  p.uh = Tensor::uniform({d_h, d_h}, rng, init_range, true);
  p.bh = Tensor::zeros({1, d_h}, true);
  return p;
}

Tensor gru_step(Graph& g, const Tensor& x, const Tensor& h, const GruParams& p) {
  Tensor z = sigmoid(g, add(g, add(g, matmul(g, x, p.wz), matmul(g, h, p.uz)), p.bz));
  Tensor r = sigmoid(g, add(g, add(g, matmul(g, x, p.wr), matmul(g, h, p.ur)), p.br));
  Tensor cand = tanh(g, add(g, add(g, matmul(g, x, p.wh), matmul(g, mul(g, r, h), p.uh)), p.bh));
  return add(g, mul(g, z, h), mul(g, sub(g, Tensor::scalar(1.0), z), cand));
}

GruRun::GruRun(Graph& g, const GruParams& p) : p_(&p) {
  w_cat_ = concat_cols(g, {p.wz, p.wr, p.wh});
  u_zr_ = concat_cols(g, {p.uz, p.ur});
}

Tensor GruRun::step(Graph& g, const Tensor& x, const Tensor& h) const {
  const GruParams& p = *p_;
  const std::size_t d = p.d_h;
  Tensor xw = matmul(g, x, w_cat_);  // [B x 3d]
  Tensor hu = matmul(g, h, u_zr_);   // [B x 2d]
  Tensor z = sigmoid(g, add(g, add(g, slice_cols(g, xw, 0, d), slice_cols(g, hu, 0, d)), p.bz));
  Tensor r = sigmoid(g, add(g, add(g, slice_cols(g, xw, d, d), slice_cols(g, hu, d, d)), p.br));
  Tensor cand = tanh(g, add(g, add(g, slice_cols(g, xw, 2 * d, d), matmul(g, mul(g, r, h), p.uh)), p.bh));
  return add(g, mul(g, z, h), mul(g, sub(g, Tensor::scalar(1.0), z), cand));
}

}  // namespace copyseq
