#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace hypertta {

// Dense row-major f64 tensor. Owns its storage; no views, no broadcasting.
// Model compute is 64-bit throughout; cube files stay f32 and widen on load.
struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::int64_t> s);
  Tensor(std::initializer_list<std::int64_t> s) : Tensor(std::vector<std::int64_t>(s)) {}

  static Tensor zeros(std::vector<std::int64_t> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<std::int64_t> s, double v);
  static Tensor scalar(double v);
  static Tensor from(std::vector<std::int64_t> s, std::vector<double> values);

  std::int64_t numel() const;
  std::int64_t dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
  int rank() const { return static_cast<int>(shape.size()); }

  double* ptr() { return data.data(); }
  const double* ptr() const { return data.data(); }

  // Flat row-major offsets for the common ranks.
  double& at2(std::int64_t i, std::int64_t j) { return data[i * shape[1] + j]; }
  double at2(std::int64_t i, std::int64_t j) const { return data[i * shape[1] + j]; }
  double& at3(std::int64_t i, std::int64_t j, std::int64_t k) {
    return data[(i * shape[1] + j) * shape[2] + k];
  }
  double at3(std::int64_t i, std::int64_t j, std::int64_t k) const {
    return data[(i * shape[1] + j) * shape[2] + k];
  }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  std::string shape_str() const;
  void fill(double v);
};

}  // namespace hypertta
