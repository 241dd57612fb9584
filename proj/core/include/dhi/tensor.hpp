#pragma once

#include <cstdint>
#include <vector>

namespace dhi {

// Dense row-major tensor of 64-bit reals. Rank is implied by the shape.
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<double> data;

  Tensor() = default;

  static Tensor zeros(std::vector<int64_t> shape);

  int64_t numel() const;

  double& operator()(int64_t i) { return data[static_cast<size_t>(i)]; }
  double operator()(int64_t i) const { return data[static_cast<size_t>(i)]; }

  // 2-D access, row-major: shape = [rows, cols].
  double& operator()(int64_t i, int64_t j) {
    return data[static_cast<size_t>(i * shape[1] + j)];
  }
  double operator()(int64_t i, int64_t j) const {
    return data[static_cast<size_t>(i * shape[1] + j)];
  }

  double* row(int64_t i) { return data.data() + i * shape[1]; }
  const double* row(int64_t i) const { return data.data() + i * shape[1]; }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  bool all_finite() const;
  void fill(double v);
};

}  // namespace dhi
