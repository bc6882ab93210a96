#ifndef GMA_TENSOR_HPP
#define GMA_TENSOR_HPP

#include <cmath>
#include <cstddef>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace gma {

/// Dense rank-<=2 real array, row-major. The universal value type of the
/// whole pipeline; batching is an outer loop, so rank 2 is all we need.
template <class R = double>
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<R> data;

  // Gradient slot used by parameter stores; empty means "no grad yet".
  bool requires_grad = false;
  std::vector<R> grad;

  Tensor() = default;
  Tensor(int r, int c, R fill = R(0))
      : rows(r), cols(c), data(static_cast<size_t>(r) * c, fill) {
    if (r < 0 || c < 0) throw std::invalid_argument("Tensor: negative extent");
  }
  Tensor(int r, int c, std::vector<R> values)
      : rows(r), cols(c), data(std::move(values)) {
    if (data.size() != static_cast<size_t>(r) * c)
      throw std::invalid_argument("Tensor: data length != rows*cols");
  }

  R& at(int i, int j) { return data[static_cast<size_t>(i) * cols + j]; }
  const R& at(int i, int j) const {
    return data[static_cast<size_t>(i) * cols + j];
  }
  size_t size() const { return data.size(); }
  bool same_shape(const Tensor& o) const {
    return rows == o.rows && cols == o.cols;
  }

  void zero_grad() {
    grad.assign(data.size(), R(0));
  }
  void accumulate_grad(const std::vector<R>& g) {
    if (grad.size() != data.size()) grad.assign(data.size(), R(0));
    for (size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
  }

  bool all_finite() const {
    for (R v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  static Tensor zeros(int r, int c) { return Tensor(r, c, R(0)); }
  static Tensor ones(int r, int c) { return Tensor(r, c, R(1)); }
  static Tensor identity(int n) {
    Tensor t(n, n);
    for (int i = 0; i < n; ++i) t.at(i, i) = R(1);
    return t;
  }
  /// Uniform in +-1/sqrt(fan_in); the init used for every trainable matrix.
  static Tensor uniform_fan_in(int r, int c, int fan_in, std::mt19937_64& rng) {
    R bound = static_cast<R>(1.0 / std::sqrt(static_cast<double>(fan_in)));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor t(r, c);
    for (R& v : t.data) v = static_cast<R>(dist(rng));
    return t;
  }
};

inline std::string shape_str(int r, int c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

}  // namespace gma

#endif  // GMA_TENSOR_HPP
