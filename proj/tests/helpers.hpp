#pragma once

// Shared fixtures and reference implementations for the test suites.

#include <cmath>
#include <cstddef>
#include <vector>

#include "relucert/relucert.hpp"

namespace testutil {

using namespace relucert;

// Two-class identity network: f(x) = x, margin g = x_1 - x_2.
inline Network identity_net(std::size_t n = 2) {
  Network net;
  Layer L;
  L.W = Matrix::identity(n);
  L.b = Vec(n, 0.0);
  net.layers.push_back(std::move(L));
  return net;
}

// g(x) = sigma(x) + sigma(-x) = |x|. One input, two hidden neurons, already
// in margin form. Over eps=1 at x0=0 both hidden neurons are uncertain.
inline MarginNetwork hat_net() {
  Network net;
  Layer l1;
  l1.W = Matrix(2, 1);
  l1.W(0, 0) = 1.0;
  l1.W(1, 0) = -1.0;
  l1.b = Vec(2, 0.0);
  Layer l2;
  l2.W = Matrix(1, 2);
  l2.W(0, 0) = 1.0;
  l2.W(0, 1) = 1.0;
  l2.b = Vec(1, 0.0);
  net.layers.push_back(std::move(l1));
  net.layers.push_back(std::move(l2));
  return MarginNetwork(std::move(net));
}

// W1 = I2, W2 = I2: f(x) = sigma(x); margin 0 vs 1 at x0=(1,0) has true
// minimum distortion 0.5 (p=inf).
inline Network diag_relu_net() {
  Network net;
  Layer l1;
  l1.W = Matrix::identity(2);
  l1.b = Vec(2, 0.0);
  Layer l2;
  l2.W = Matrix::identity(2);
  l2.b = Vec(2, 0.0);
  net.layers.push_back(std::move(l1));
  net.layers.push_back(std::move(l2));
  return net;
}

inline Matrix make_matrix(std::size_t r, std::size_t c,
                          std::initializer_list<double> vals) {
  Matrix m(r, c);
  std::size_t i = 0;
  for (double v : vals) m.a[i++] = v;
  return m;
}

// Margin instance on a seeded random net: anchor, predicted class, runner-up
// target. Skips nothing; callers filter if they need g0 > 0.
struct Instance {
  Network net;
  MarginNetwork margin;
  Vec x0;
  std::size_t c, j;
  double g0;
};

inline Instance random_instance(const std::vector<std::size_t>& dims,
                                std::uint64_t seed) {
  Instance inst;
  inst.net = random_network(dims, seed);
  Rng rng(Rng::split(seed, 77));
  inst.x0.resize(dims.front());
  for (double& v : inst.x0) v = rng.normal();
  const Vec logits = forward(inst.net, inst.x0);
  inst.c = static_cast<std::size_t>(
      std::max_element(logits.begin(), logits.end()) - logits.begin());
  inst.j = select_target(logits, inst.c, TargetMode::runner_up);
  inst.margin = merge_last_layer(inst.net, inst.c, inst.j);
  inst.g0 = forward_margin(inst.margin, inst.x0);
  return inst;
}

// Reference gradient-bound fold in the naive orientation: start from the
// first layer's weights and absorb each following layer with
// bound_layer_grad. Kept out of the library on purpose; the production fold
// runs the other way.
inline Vec grad_bound_all_naive(const MarginNetwork& m, const LayerBounds& lb) {
  const Network& net = m.net;
  const std::size_t depth = net.layers.size();
  GradBoundState s;
  s.C = net.layers[0].W;
  s.L = Matrix(s.C.rows, s.C.cols);
  s.U = Matrix(s.C.rows, s.C.cols);
  for (std::size_t l = 1; l < depth; ++l) {
    const NeuronPartition part = classify_neurons(lb.l[l - 1], lb.u[l - 1]);
    s = bound_layer_grad(s, net.layers[l].W, part);
  }
  return detail::state_to_v(s);
}

}  // namespace testutil
