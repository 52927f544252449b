#include "hypertta/tensor.hpp"

#include <sstream>

#include "hypertta/common.hpp"

namespace hypertta {

namespace {

std::int64_t checked_numel(const std::vector<std::int64_t>& shape) {
  std::int64_t n = 1;
  for (std::int64_t d : shape) {
    if (d < 0) throw ConfigError("tensor dimension must be nonnegative");
    n *= d;
  }
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<std::int64_t> s) : shape(std::move(s)) {
  data.assign(static_cast<std::size_t>(checked_numel(shape)), 0.0);
}

Tensor Tensor::full(std::vector<std::int64_t> s, double v) {
  Tensor t(std::move(s));
  t.fill(v);
  return t;
}

Tensor Tensor::scalar(double v) {
  Tensor t;
  t.shape = {};
  t.data = {v};
  return t;
}

Tensor Tensor::from(std::vector<std::int64_t> s, std::vector<double> values) {
  const std::int64_t n = checked_numel(s);
  if (n != static_cast<std::int64_t>(values.size())) {
    throw ConfigError("tensor literal: value count does not match shape");
  }
  Tensor t;
  t.shape = std::move(s);
  t.data = std::move(values);
  return t;
}

std::int64_t Tensor::numel() const {
  return static_cast<std::int64_t>(data.size());
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

void Tensor::fill(double v) {
  std::fill(data.begin(), data.end(), v);
}

}  // namespace hypertta
