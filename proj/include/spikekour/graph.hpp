#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "spikekour/tensor.hpp"

namespace spikekour::num {

struct AdamMoments {
  Tensor m;
  Tensor v;
  int64_t step = 0;
};

// Named parameters plus their gradients and optimizer moments. std::map keeps
// iteration order deterministic, which checkpoint byte-identity relies on.
class ParamStore {
 public:
  Tensor& create(const std::string& name, Tensor init) {
    if (params_.count(name)) throw Error("parameter already exists: " + name);
    return params_[name] = std::move(init);
  }

  bool has(const std::string& name) const { return params_.count(name) != 0; }

  Tensor& get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw Error("unknown parameter: " + name);
    return it->second;
  }
  const Tensor& get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw Error("unknown parameter: " + name);
    return it->second;
  }

  Tensor& grad(const std::string& name) {
    auto it = grads_.find(name);
    if (it == grads_.end()) throw Error("no gradient for parameter: " + name);
    return it->second;
  }

  bool has_grads() const { return !grads_.empty(); }

  void zero_grads() {
    for (auto& [name, p] : params_) grads_[name] = Tensor(p.shape);
  }

  void accumulate_grad(const std::string& name, const Tensor& g) {
    auto it = grads_.find(name);
    if (it == grads_.end()) {
      grads_[name] = g;
      return;
    }
    require_same_shape(it->second, g, "accumulate_grad");
    for (std::size_t i = 0; i < g.data.size(); ++i) it->second.data[i] += g.data[i];
  }

  const std::map<std::string, Tensor>& params() const { return params_; }
  std::map<std::string, Tensor>& params() { return params_; }
  const std::map<std::string, Tensor>& grads() const { return grads_; }
  std::map<std::string, AdamMoments>& moments() { return moments_; }

  int64_t total_count() const {
    int64_t n = 0;
    for (auto& [k, v] : params_) n += v.numel();
    return n;
  }

 private:
  std::map<std::string, Tensor> params_;
  std::map<std::string, Tensor> grads_;
  std::map<std::string, AdamMoments> moments_;
};

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape over Tensors. Nodes are appended in forward order, so a
// reverse sweep over creation order is a valid reverse topological order.
class Graph {
 public:
  explicit Graph(ParamStore* store = nullptr) : store_(store) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  const Tensor& value(Var v) const { return node(v.id).value; }
  const Tensor& grad(Var v) const { return node(v.id).grad; }

  Var leaf(Tensor t) { return push(std::move(t), {}, nullptr); }

  Var param(const std::string& name) {
    if (!store_) throw Error("graph has no parameter store");
    auto it = param_vars_.find(name);
    if (it != param_vars_.end()) return it->second;
    Var v = push(store_->get(name), {}, nullptr);
    nodes_[v.id].param_name = name;
    param_vars_[name] = v;
    return v;
  }

  // y = x W + b; the bias add is the only implicit broadcast in the library.
  Var affine(Var xv, Var wv, Var bv) {
    const Tensor& x = value(xv);
    const Tensor& w = value(wv);
    const Tensor& b = value(bv);
    if (x.rank() != 2 || w.rank() != 2 || b.rank() != 1)
      throw Error("affine: expected x[B,I], W[I,O], b[O]");
    int B = x.dim(0), I = x.dim(1), O = w.dim(1);
    if (w.dim(0) != I || b.dim(0) != O)
      throw Error("affine: shape mismatch x" + x.shape_str() + " W" + w.shape_str() + " b" +
                  b.shape_str());
    Tensor y({B, O});
    for (int i = 0; i < B; ++i) {
      const float* xr = &x.data[static_cast<std::size_t>(i) * I];
      for (int o = 0; o < O; ++o) {
        double acc = b.data[o];
        for (int k = 0; k < I; ++k) acc += static_cast<double>(xr[k]) * w.data[static_cast<std::size_t>(k) * O + o];
        y.at2(i, o) = static_cast<float>(acc);
      }
    }
    return push(std::move(y), {xv.id, wv.id, bv.id}, [B, I, O](Graph& g, int self) {
      Node& n = g.nodes_[self];
      const Tensor& gy = n.grad;
      const Tensor& x = g.nodes_[n.in[0]].value;
      const Tensor& w = g.nodes_[n.in[1]].value;
      Tensor& gx = g.grad_buf(n.in[0]);
      Tensor& gw = g.grad_buf(n.in[1]);
      Tensor& gb = g.grad_buf(n.in[2]);
      for (int i = 0; i < B; ++i) {
        const float* gyr = &gy.data[static_cast<std::size_t>(i) * O];
        const float* xr = &x.data[static_cast<std::size_t>(i) * I];
        for (int k = 0; k < I; ++k) {
          double acc = 0.0;
          const float* wr = &w.data[static_cast<std::size_t>(k) * O];
          float* gwr = &gw.data[static_cast<std::size_t>(k) * O];
          float xv_ = xr[k];
          for (int o = 0; o < O; ++o) {
            acc += static_cast<double>(gyr[o]) * wr[o];
            gwr[o] += xv_ * gyr[o];
          }
          gx.data[static_cast<std::size_t>(i) * I + k] += static_cast<float>(acc);
        }
        for (int o = 0; o < O; ++o) gb.data[o] += gyr[o];
      }
    });
  }

  // Cross-correlation, zero padding, square kernel.
  Var conv2d(Var xv, Var kv, int stride, int pad) {
    const Tensor& x = value(xv);
    const Tensor& k = value(kv);
    if (x.rank() != 4 || k.rank() != 4) throw Error("conv2d: expected x[B,C,H,W], K[F,C,k,k]");
    if (stride < 1) throw Error("conv2d: stride must be >= 1");
    if (pad < 0) throw Error("conv2d: pad must be >= 0");
    int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    int F = k.dim(0), kk = k.dim(2);
    if (k.dim(1) != C) throw Error("conv2d: channel mismatch");
    if (k.dim(3) != kk) throw Error("conv2d: kernel must be square");
    if (kk > H + 2 * pad || kk > W + 2 * pad)
      throw Error("conv2d: kernel larger than padded input");
    int Ho = (H + 2 * pad - kk) / stride + 1;
    int Wo = (W + 2 * pad - kk) / stride + 1;
    Tensor y({B, F, Ho, Wo});
    for (int b = 0; b < B; ++b)
      for (int f = 0; f < F; ++f)
        for (int oh = 0; oh < Ho; ++oh)
          for (int ow = 0; ow < Wo; ++ow) {
            double acc = 0.0;
            for (int c = 0; c < C; ++c)
              for (int kh = 0; kh < kk; ++kh) {
                int ih = oh * stride + kh - pad;
                if (ih < 0 || ih >= H) continue;
                for (int kw = 0; kw < kk; ++kw) {
                  int iw = ow * stride + kw - pad;
                  if (iw < 0 || iw >= W) continue;
                  acc += static_cast<double>(x.at4(b, c, ih, iw)) * k.at4(f, c, kh, kw);
                }
              }
            y.at4(b, f, oh, ow) = static_cast<float>(acc);
          }
    return push(std::move(y), {xv.id, kv.id},
                [B, C, H, W, F, kk, Ho, Wo, stride, pad](Graph& g, int self) {
                  Node& n = g.nodes_[self];
                  const Tensor& gy = n.grad;
                  const Tensor& x = g.nodes_[n.in[0]].value;
                  const Tensor& k = g.nodes_[n.in[1]].value;
                  Tensor& gx = g.grad_buf(n.in[0]);
                  Tensor& gk = g.grad_buf(n.in[1]);
                  for (int b = 0; b < B; ++b)
                    for (int f = 0; f < F; ++f)
                      for (int oh = 0; oh < Ho; ++oh)
                        for (int ow = 0; ow < Wo; ++ow) {
                          float gv = gy.at4(b, f, oh, ow);
                          if (gv == 0.0f) continue;
                          for (int c = 0; c < C; ++c)
                            for (int kh = 0; kh < kk; ++kh) {
                              int ih = oh * stride + kh - pad;
                              if (ih < 0 || ih >= H) continue;
                              for (int kw = 0; kw < kk; ++kw) {
                                int iw = ow * stride + kw - pad;
                                if (iw < 0 || iw >= W) continue;
                                gx.at4(b, c, ih, iw) += gv * k.at4(f, c, kh, kw);
                                gk.at4(f, c, kh, kw) += gv * x.at4(b, c, ih, iw);
                              }
                            }
                        }
                });
  }

  Var reshape(Var v, std::vector<int> shape) {
    Tensor y = value(v).reshaped(shape);
    return push(std::move(y), {v.id}, [](Graph& g, int self) {
      Node& n = g.nodes_[self];
      Tensor& gi = g.grad_buf(n.in[0]);
      for (std::size_t i = 0; i < gi.data.size(); ++i) gi.data[i] += n.grad.data[i];
    });
  }

  Var concat_cols(Var av, Var bv) {
    const Tensor& a = value(av);
    const Tensor& b = value(bv);
    if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0))
      throw Error("concat_cols: expected [B,I1],[B,I2]");
    int B = a.dim(0), I1 = a.dim(1), I2 = b.dim(1);
    Tensor y({B, I1 + I2});
    for (int i = 0; i < B; ++i) {
      for (int j = 0; j < I1; ++j) y.at2(i, j) = a.at2(i, j);
      for (int j = 0; j < I2; ++j) y.at2(i, I1 + j) = b.at2(i, j);
    }
    return push(std::move(y), {av.id, bv.id}, [B, I1, I2](Graph& g, int self) {
      Node& n = g.nodes_[self];
      Tensor& ga = g.grad_buf(n.in[0]);
      Tensor& gb = g.grad_buf(n.in[1]);
      for (int i = 0; i < B; ++i) {
        for (int j = 0; j < I1; ++j) ga.at2(i, j) += n.grad.at2(i, j);
        for (int j = 0; j < I2; ++j) gb.at2(i, j) += n.grad.at2(i, I1 + j);
      }
    });
  }

  Var slice_cols(Var v, int begin, int end) {
    const Tensor& a = value(v);
    if (a.rank() != 2 || begin < 0 || end > a.dim(1) || begin >= end)
      throw Error("slice_cols: bad range");
    int B = a.dim(0), O = end - begin;
    Tensor y({B, O});
    for (int i = 0; i < B; ++i)
      for (int j = 0; j < O; ++j) y.at2(i, j) = a.at2(i, begin + j);
    return push(std::move(y), {v.id}, [B, O, begin](Graph& g, int self) {
      Node& n = g.nodes_[self];
      Tensor& gi = g.grad_buf(n.in[0]);
      for (int i = 0; i < B; ++i)
        for (int j = 0; j < O; ++j) gi.at2(i, begin + j) += n.grad.at2(i, j);
    });
  }

  Var broadcast_rows(Var v, int rows) {
    const Tensor& a = value(v);
    if (a.rank() != 1) throw Error("broadcast_rows: expected rank-1");
    int O = a.dim(0);
    Tensor y({rows, O});
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < O; ++j) y.at2(i, j) = a.data[j];
    return push(std::move(y), {v.id}, [rows, O](Graph& g, int self) {
      Node& n = g.nodes_[self];
      Tensor& gi = g.grad_buf(n.in[0]);
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < O; ++j) gi.data[j] += n.grad.at2(i, j);
    });
  }

  Var add(Var a, Var b) {
    return binary_ew(
        a, b, "add", [](float x, float y) { return x + y; },
        [](Graph& g, const Node& n) {
          g.accum_ew(n.in[0], n.grad, 1.0f);
          g.accum_ew(n.in[1], n.grad, 1.0f);
        });
  }

  Var sub(Var a, Var b) {
    return binary_ew(
        a, b, "sub", [](float x, float y) { return x - y; },
        [](Graph& g, const Node& n) {
          g.accum_ew(n.in[0], n.grad, 1.0f);
          g.accum_ew(n.in[1], n.grad, -1.0f);
        });
  }

  Var mul(Var a, Var b) {
    return binary_ew(
        a, b, "mul", [](float x, float y) { return x * y; },
        [](Graph& g, const Node& n) {
          const Tensor& av = g.nodes_[n.in[0]].value;
          const Tensor& bv = g.nodes_[n.in[1]].value;
          Tensor& ga = g.grad_buf(n.in[0]);
          Tensor& gb = g.grad_buf(n.in[1]);
          for (std::size_t i = 0; i < n.grad.data.size(); ++i) {
            ga.data[i] += n.grad.data[i] * bv.data[i];
            gb.data[i] += n.grad.data[i] * av.data[i];
          }
        });
  }

  Var min_ew(Var a, Var b) {
    return binary_ew(
        a, b, "min_ew", [](float x, float y) { return x < y ? x : y; },
        [](Graph& g, const Node& n) {
          const Tensor& av = g.nodes_[n.in[0]].value;
          const Tensor& bv = g.nodes_[n.in[1]].value;
          Tensor& ga = g.grad_buf(n.in[0]);
          Tensor& gb = g.grad_buf(n.in[1]);
          for (std::size_t i = 0; i < n.grad.data.size(); ++i) {
            if (av.data[i] <= bv.data[i])
              ga.data[i] += n.grad.data[i];
            else
              gb.data[i] += n.grad.data[i];
          }
        });
  }

  Var neg(Var v) { return scale(v, -1.0f); }

  Var scale(Var v, float c) {
    return unary_ew(
        v, [c](float x) { return c * x; },
        [c](Graph& g, const Node& n) { g.accum_ew(n.in[0], n.grad, c); });
  }

  Var add_scalar(Var v, float c) {
    return unary_ew(
        v, [c](float x) { return x + c; },
        [](Graph& g, const Node& n) { g.accum_ew(n.in[0], n.grad, 1.0f); });
  }

  Var sigmoid(Var v) {
    Var out = unary_ew(
        v, [](float x) { return 1.0f / (1.0f + std::exp(-x)); },
        [](Graph& g, const Node& n) {
          Tensor& gi = g.grad_buf(n.in[0]);
          for (std::size_t i = 0; i < n.grad.data.size(); ++i) {
            float s = n.value.data[i];
            gi.data[i] += n.grad.data[i] * s * (1.0f - s);
          }
        });
    return out;
  }

  Var tanh_(Var v) {
    return unary_ew(
        v, [](float x) { return std::tanh(x); },
        [](Graph& g, const Node& n) {
          Tensor& gi = g.grad_buf(n.in[0]);
          for (std::size_t i = 0; i < n.grad.data.size(); ++i) {
            float t = n.value.data[i];
            gi.data[i] += n.grad.data[i] * (1.0f - t * t);
          }
        });
  }

  Var exp_(Var v) {
    return unary_ew(
        v, [](float x) { return std::exp(x); },
        [](Graph& g, const Node& n) {
          Tensor& gi = g.grad_buf(n.in[0]);
          for (std::size_t i = 0; i < n.grad.data.size(); ++i)
            gi.data[i] += n.grad.data[i] * n.value.data[i];
        });
  }

  Var clamp(Var v, float lo, float hi) {
    return unary_ew(
        v, [lo, hi](float x) { return x < lo ? lo : (x > hi ? hi : x); },
        [lo, hi](Graph& g, const Node& n) {
          const Tensor& x = g.nodes_[n.in[0]].value;
          Tensor& gi = g.grad_buf(n.in[0]);
          for (std::size_t i = 0; i < n.grad.data.size(); ++i)
            if (x.data[i] > lo && x.data[i] < hi) gi.data[i] += n.grad.data[i];
        });
  }

  // Elementwise wrap of (a - b) into (-pi, pi]; derivative is 1 a.e.
  Var wrapped_diff(Var a, Var b) {
    return binary_ew(
        a, b, "wrapped_diff",
        [](float x, float y) {
          double d = std::fmod(static_cast<double>(x) - y + M_PI, 2.0 * M_PI);
          if (d <= 0.0) d += 2.0 * M_PI;
          return static_cast<float>(d - M_PI);
        },
        [](Graph& g, const Node& n) {
          g.accum_ew(n.in[0], n.grad, 1.0f);
          g.accum_ew(n.in[1], n.grad, -1.0f);
        });
  }

  // Heaviside spike with rectangular surrogate derivative 1/(2w) inside
  // |v - theta| < w. With surrogate_forward the forward emits the matching
  // piecewise-linear ramp instead of the step, so finite differences of the
  // forward agree with the analytic gradient.
  Var spike(Var v, float theta, float width, bool surrogate_forward = false) {
    if (width <= 0.0f) throw Error("spike: surrogate width must be > 0");
    const Tensor& x = value(v);
    Tensor y(x.shape);
    if (surrogate_forward) {
      for (std::size_t i = 0; i < x.data.size(); ++i) {
        float r = (x.data[i] - theta + width) / (2.0f * width);
        y.data[i] = r < 0.0f ? 0.0f : (r > 1.0f ? 1.0f : r);
      }
    } else {
      for (std::size_t i = 0; i < x.data.size(); ++i)
        y.data[i] = x.data[i] >= theta ? 1.0f : 0.0f;
    }
    return push(std::move(y), {v.id}, [theta, width](Graph& g, int self) {
      Node& n = g.nodes_[self];
      const Tensor& x = g.nodes_[n.in[0]].value;
      Tensor& gi = g.grad_buf(n.in[0]);
      float slope = 1.0f / (2.0f * width);
      for (std::size_t i = 0; i < n.grad.data.size(); ++i)
        if (std::fabs(x.data[i] - theta) < width) gi.data[i] += n.grad.data[i] * slope;
    });
  }

  Var sum_cols(Var v) {
    const Tensor& a = value(v);
    if (a.rank() != 2) throw Error("sum_cols: expected rank-2");
    int B = a.dim(0), O = a.dim(1);
    Tensor y({B, 1});
    for (int i = 0; i < B; ++i) {
      double acc = 0.0;
      for (int j = 0; j < O; ++j) acc += a.at2(i, j);
      y.at2(i, 0) = static_cast<float>(acc);
    }
    return push(std::move(y), {v.id}, [B, O](Graph& g, int self) {
      Node& n = g.nodes_[self];
      Tensor& gi = g.grad_buf(n.in[0]);
      for (int i = 0; i < B; ++i)
        for (int j = 0; j < O; ++j) gi.at2(i, j) += n.grad.at2(i, 0);
    });
  }

  Var sum_all(Var v) {
    const Tensor& a = value(v);
    double acc = 0.0;
    for (float x : a.data) acc += x;
    Tensor y({1});
    y.data[0] = static_cast<float>(acc);
    return push(std::move(y), {v.id}, [](Graph& g, int self) {
      Node& n = g.nodes_[self];
      g.accum_ew_scalar(n.in[0], n.grad.data[0]);
    });
  }

  Var mean_all(Var v) {
    const Tensor& a = value(v);
    if (a.numel() == 0) throw Error("mean_all: empty tensor");
    double acc = 0.0;
    for (float x : a.data) acc += x;
    Tensor y({1});
    y.data[0] = static_cast<float>(acc / static_cast<double>(a.numel()));
    float inv_n = 1.0f / static_cast<float>(a.numel());
    return push(std::move(y), {v.id}, [inv_n](Graph& g, int self) {
      Node& n = g.nodes_[self];
      g.accum_ew_scalar(n.in[0], n.grad.data[0] * inv_n);
    });
  }

  // mean over all elements of (a-b)^2, accumulated in double
  Var mse(Var av, Var bv) {
    const Tensor& a = value(av);
    const Tensor& b = value(bv);
    require_same_shape(a, b, "mse");
    if (a.numel() == 0) throw Error("mse: empty tensors");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
      double d = static_cast<double>(a.data[i]) - b.data[i];
      acc += d * d;
    }
    Tensor y({1});
    y.data[0] = static_cast<float>(acc / static_cast<double>(a.numel()));
    float inv_n = 1.0f / static_cast<float>(a.numel());
    return push(std::move(y), {av.id, bv.id}, [inv_n](Graph& g, int self) {
      Node& n = g.nodes_[self];
      const Tensor& a = g.nodes_[n.in[0]].value;
      const Tensor& b = g.nodes_[n.in[1]].value;
      Tensor& ga = g.grad_buf(n.in[0]);
      Tensor& gb = g.grad_buf(n.in[1]);
      float s = 2.0f * inv_n * n.grad.data[0];
      for (std::size_t i = 0; i < a.data.size(); ++i) {
        float d = a.data[i] - b.data[i];
        ga.data[i] += s * d;
        gb.data[i] -= s * d;
      }
    });
  }

  // Reverse sweep from a scalar loss. Parameter gradients are accumulated
  // into the store; parameters not reachable from the loss get zero grads.
  void backward(Var loss) {
    if (backward_done_)
      throw Error("backward called twice on one graph; rebuild the forward pass first");
    backward_done_ = true;
    const Tensor& l = value(loss);
    if (l.numel() != 1) throw Error("backward: loss must be scalar");
    std::vector<char> reachable(nodes_.size(), 0);
    std::vector<int> stack{loss.id};
    reachable[loss.id] = 1;
    while (!stack.empty()) {
      int u = stack.back();
      stack.pop_back();
      for (int in : nodes_[u].in) {
        if (in >= 0 && !reachable[in]) {
          reachable[in] = 1;
          stack.push_back(in);
        }
      }
    }
    grad_buf(loss.id).data[0] = 1.0f;
    for (int id = loss.id; id >= 0; --id) {
      if (!reachable[id] || !nodes_[id].bwd) continue;
      if (nodes_[id].grad.numel() == 0) continue;
      nodes_[id].bwd(*this, id);
    }
    if (store_) {
      if (!store_->has_grads()) store_->zero_grads();
      for (auto& [name, var] : param_vars_) {
        if (reachable[var.id] && nodes_[var.id].grad.numel() > 0)
          store_->accumulate_grad(name, nodes_[var.id].grad);
      }
    }
  }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::array<int, 3> in{-1, -1, -1};
    std::function<void(Graph&, int)> bwd;
    std::string param_name;
  };

  const Node& node(int id) const {
    if (id < 0 || id >= static_cast<int>(nodes_.size())) throw Error("invalid Var");
    return nodes_[static_cast<std::size_t>(id)];
  }

  Tensor& grad_buf(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.numel() == 0) n.grad = Tensor(n.value.shape);
    return n.grad;
  }

  void accum_ew(int id, const Tensor& g, float scale) {
    Tensor& gi = grad_buf(id);
    for (std::size_t i = 0; i < g.data.size(); ++i) gi.data[i] += scale * g.data[i];
  }

  void accum_ew_scalar(int id, float g) {
    Tensor& gi = grad_buf(id);
    for (auto& v : gi.data) v += g;
  }

  Var push(Tensor value, std::initializer_list<int> inputs,
           std::function<void(Graph&, int)> bwd) {
    Node n;
    n.value = std::move(value);
    int i = 0;
    for (int in : inputs) n.in[i++] = in;
    n.bwd = std::move(bwd);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  template <typename F, typename B>
  Var unary_ew(Var v, F f, B bwd) {
    const Tensor& a = value(v);
    Tensor y(a.shape);
    for (std::size_t i = 0; i < a.data.size(); ++i) y.data[i] = f(a.data[i]);
    return push(std::move(y), {v.id},
                [bwd](Graph& g, int self) { bwd(g, g.nodes_[self]); });
  }

  template <typename F, typename B>
  Var binary_ew(Var av, Var bv, const char* op, F f, B bwd) {
    const Tensor& a = value(av);
    const Tensor& b = value(bv);
    require_same_shape(a, b, op);
    Tensor y(a.shape);
    for (std::size_t i = 0; i < a.data.size(); ++i) y.data[i] = f(a.data[i], b.data[i]);
    return push(std::move(y), {av.id, bv.id},
                [bwd](Graph& g, int self) { bwd(g, g.nodes_[self]); });
  }

  ParamStore* store_;
  std::vector<Node> nodes_;
  std::map<std::string, Var> param_vars_;
  bool backward_done_ = false;
};

}  // namespace spikekour::num
