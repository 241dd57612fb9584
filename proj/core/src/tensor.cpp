#include "dhi/tensor.hpp"

#include <cmath>

namespace dhi {

Tensor Tensor::zeros(std::vector<int64_t> shape) {
  Tensor t;
  int64_t n = 1;
  for (int64_t s : shape) n *= s;
  t.shape = std::move(shape);
  t.data.assign(static_cast<size_t>(n), 0.0);
  return t;
}

int64_t Tensor::numel() const {
  int64_t n = 1;
  for (int64_t s : shape) n *= s;
  return n;
}

bool Tensor::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::fill(double v) {
  for (double& x : data) x = v;
}

}  // namespace dhi
