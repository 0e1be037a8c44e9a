#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "copyseq/rng.hpp"
#include "copyseq/tensor.hpp"

namespace copyseq::testing {

// rel error <= rtol with an absolute floor: differences below `floor` pass.
inline bool grad_close(double analytic, double numeric, double rtol = 1e-4, double floor = 1e-8) {
  double diff = std::abs(analytic - numeric);
  if (diff <= floor) return true;
  double scale = std::max(std::abs(analytic), std::abs(numeric));
  return diff <= rtol * scale;
}

struct GradCheckResult {
  bool ok = true;
  double worst_rel = 0.0;
  std::size_t fail_input = 0, fail_index = 0;
  double fail_analytic = 0.0, fail_numeric = 0.0;
};

// Central finite differences against reverse-mode gradients. `fn` must build
// the scalar loss from scratch on every call (define-by-run).
inline GradCheckResult check_gradients(
    const std::function<Tensor(Graph&, std::vector<Tensor>&)>& fn, std::vector<Tensor>& inputs,
    double h = 1e-5, double rtol = 1e-4, double floor = 1e-8) {
  for (Tensor& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  Graph g;
  Tensor loss = fn(g, inputs);
  g.backward(loss);
  std::vector<std::vector<double>> analytic;
  for (Tensor& t : inputs) {
    if (t.has_grad())
      analytic.emplace_back(t.grad().begin(), t.grad().end());
    else
      analytic.emplace_back(t.size(), 0.0);
  }

  GradCheckResult res;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Tensor& t = inputs[i];
    for (std::size_t j = 0; j < t.size(); ++j) {
      double saved = t.data()[j];
      t.data()[j] = saved + h;
      Graph gp(false);
      double lp = fn(gp, inputs).item();
      t.data()[j] = saved - h;
      Graph gm(false);
      double lm = fn(gm, inputs).item();
      t.data()[j] = saved;
      double fd = (lp - lm) / (2.0 * h);
      double a = analytic[i][j];
      double diff = std::abs(a - fd);
      double rel = diff / std::max({std::abs(a), std::abs(fd), 1e-300});
      if (diff > floor) res.worst_rel = std::max(res.worst_rel, rel);
      if (!grad_close(a, fd, rtol, floor)) {
        res.ok = false;
        res.fail_input = i;
        res.fail_index = j;
        res.fail_analytic = a;
        res.fail_numeric = fd;
        return res;
      }
    }
  }
  return res;
}

// Random weights for reducing an op output to a scalar so FD exercises every
// output element with distinct sensitivities.
inline Tensor random_weights(const std::vector<std::size_t>& shape, Rng& rng) {
  Tensor r = Tensor::zeros(shape);
  for (std::size_t i = 0; i < r.size(); ++i) r.data()[i] = rng.uniform(-1.0, 1.0);
  return r;
}

}  // namespace copyseq::testing
