#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "spikekour/graph.hpp"
#include "spikekour/rng.hpp"

namespace spikekour::num {

struct AdamConfig {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

// Standard Adam with bias correction. Requires grads to be populated
// (zero_grads + backward) for every parameter.
inline void adam_step(ParamStore& store, const AdamConfig& cfg) {
  if (!store.has_grads()) throw Error("adam_step: no gradients populated");
  for (auto& [name, p] : store.params()) {
    const Tensor& g = store.grad(name);
    require_same_shape(p, g, "adam_step");
    AdamMoments& mom = store.moments()[name];
    if (mom.m.numel() == 0) {
      mom.m = Tensor(p.shape);
      mom.v = Tensor(p.shape);
    }
    mom.step += 1;
    double bc1 = 1.0 - std::pow(static_cast<double>(cfg.beta1), static_cast<double>(mom.step));
    double bc2 = 1.0 - std::pow(static_cast<double>(cfg.beta2), static_cast<double>(mom.step));
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      float gi = g.data[i];
      if (!std::isfinite(gi)) throw TrainDivergence("adam_step: non-finite gradient in " + name);
      mom.m.data[i] = cfg.beta1 * mom.m.data[i] + (1.0f - cfg.beta1) * gi;
      mom.v.data[i] = cfg.beta2 * mom.v.data[i] + (1.0f - cfg.beta2) * gi * gi;
      double mhat = mom.m.data[i] / bc1;
      double vhat = mom.v.data[i] / bc2;
      p.data[i] -= static_cast<float>(cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
}

inline Tensor xavier_uniform(std::vector<int> shape, int fan_in, int fan_out, std::mt19937& rng,
                             float gain = 1.0f) {
  float s = gain * std::sqrt(6.0f / static_cast<float>(fan_in + fan_out));
  return uniform(std::move(shape), -s, s, rng);
}

// Creates W[in,out] + b[out] under prefix; returns nothing, params live in the store.
inline void init_linear(ParamStore& store, const std::string& prefix, int in, int out,
                        std::mt19937& rng, float gain = 1.0f) {
  store.create(prefix + ".w", xavier_uniform({in, out}, in, out, rng, gain));
  store.create(prefix + ".b", Tensor({out}));
}

inline Var linear(Graph& g, Var x, const std::string& prefix) {
  return g.affine(x, g.param(prefix + ".w"), g.param(prefix + ".b"));
}

inline void init_conv(ParamStore& store, const std::string& prefix, int in_ch, int out_ch, int k,
                      std::mt19937& rng, float gain = 1.0f) {
  int fan_in = in_ch * k * k;
  int fan_out = out_ch * k * k;
  store.create(prefix + ".k", xavier_uniform({out_ch, in_ch, k, k}, fan_in, fan_out, rng, gain));
}

inline void init_gru(ParamStore& store, const std::string& prefix, int in, int hidden,
                     std::mt19937& rng) {
  init_linear(store, prefix + ".z_x", in, hidden, rng);
  init_linear(store, prefix + ".z_h", hidden, hidden, rng);
  init_linear(store, prefix + ".r_x", in, hidden, rng);
  init_linear(store, prefix + ".r_h", hidden, hidden, rng);
  init_linear(store, prefix + ".n_x", in, hidden, rng);
  init_linear(store, prefix + ".n_h", hidden, hidden, rng);
}

// GRU cell (update gate z, reset gate r, candidate n):
//   z = sigmoid(x Wzx + h Wzh + bz)
//   r = sigmoid(x Wrx + h Wrh + br)
//   n = tanh(x Wnx + bnx + r * (h Wnh + bnh))
//   h' = (1 - z) * n + z * h
inline Var gru_cell(Graph& g, Var x, Var h, const std::string& prefix) {
  if (g.value(x).rank() != 2 || g.value(h).rank() != 2 ||
      g.value(x).dim(0) != g.value(h).dim(0))
    throw Error("gru_cell: expected x[B,I], h[B,H]");
  Var z = g.sigmoid(g.add(linear(g, x, prefix + ".z_x"), linear(g, h, prefix + ".z_h")));
  Var r = g.sigmoid(g.add(linear(g, x, prefix + ".r_x"), linear(g, h, prefix + ".r_h")));
  Var n = g.tanh_(g.add(linear(g, x, prefix + ".n_x"), g.mul(r, linear(g, h, prefix + ".n_h"))));
  Var one_minus_z = g.add_scalar(g.neg(z), 1.0f);
  return g.add(g.mul(one_minus_z, n), g.mul(z, h));
}

inline void require_finite(const Tensor& t, const char* what) {
  if (!t.all_finite()) throw TrainDivergence(std::string(what) + ": non-finite values");
}

}  // namespace spikekour::num
