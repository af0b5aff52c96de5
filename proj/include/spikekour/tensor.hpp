#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "spikekour/common.hpp"

namespace spikekour::num {

// Dense row-major float tensor. Shapes are explicit; the only broadcast in the
// whole library is the bias add inside affine().
struct Tensor {
  std::vector<int> shape;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, float fill = 0.0f) : shape(std::move(s)) {
    data.assign(static_cast<std::size_t>(count(shape)), fill);
  }
  Tensor(std::vector<int> s, std::vector<float> d) : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<int64_t>(data.size()) != count(shape))
      throw Error("tensor data length " + std::to_string(data.size()) +
                  " does not match shape " + shape_str());
  }

  static int64_t count(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) {
      if (d < 0) throw Error("negative dimension in shape");
      n *= d;
    }
    return n;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape.at(static_cast<std::size_t>(i)); }

  float& at2(int i, int j) { return data[static_cast<std::size_t>(i) * shape[1] + j]; }
  float at2(int i, int j) const { return data[static_cast<std::size_t>(i) * shape[1] + j]; }

  float& at4(int b, int c, int h, int w) {
    return data[((static_cast<std::size_t>(b) * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }
  float at4(int b, int c, int h, int w) const {
    return data[((static_cast<std::size_t>(b) * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  std::string shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i)
      s += (i ? "," : "") + std::to_string(shape[i]);
    return s + "]";
  }

  bool all_finite() const {
    for (float v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  Tensor reshaped(std::vector<int> s) const {
    if (count(s) != numel())
      throw Error("reshape " + shape_str() + " -> incompatible element count");
    Tensor t;
    t.shape = std::move(s);
    t.data = data;
    return t;
  }
};

inline Tensor zeros_like(const Tensor& t) { return Tensor(t.shape); }

inline Tensor full(std::vector<int> shape, float v) { return Tensor(std::move(shape), v); }

inline Tensor uniform(std::vector<int> shape, float lo, float hi, std::mt19937& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<float> dist(lo, hi);
  for (auto& v : t.data) v = dist(rng);
  return t;
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw Error(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

}  // namespace spikekour::num
