#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace evg {

/// Dense row-major tensor of doubles. Deliberately minimal: exactly the
/// surface the kernels need, no views, no broadcasting.
struct TensorN {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  TensorN() = default;
  explicit TensorN(std::vector<std::size_t> s);
  TensorN(std::vector<std::size_t> s, std::vector<double> d);

  std::size_t rank() const { return shape.size(); }
  std::size_t numel() const { return data.size(); }
  std::size_t extent(std::size_t axis) const { return shape[axis]; }

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  std::size_t idx(std::size_t i, std::size_t j) const { return i * shape[1] + j; }
  std::size_t idx(std::size_t i, std::size_t j, std::size_t k) const {
    return (i * shape[1] + j) * shape[2] + k;
  }
  std::size_t idx(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
    return ((i * shape[1] + j) * shape[2] + k) * shape[3] + l;
  }
  std::size_t idx(std::size_t i, std::size_t j, std::size_t k, std::size_t l,
                  std::size_t m) const {
    return (((i * shape[1] + j) * shape[2] + k) * shape[3] + l) * shape[4] + m;
  }

  void fill(double v);
  bool same_shape(const TensorN& o) const { return shape == o.shape; }

  static TensorN zeros(std::vector<std::size_t> s) { return TensorN(std::move(s)); }
  static TensorN full(std::vector<std::size_t> s, double v);
};

std::size_t checked_numel(const std::vector<std::size_t>& shape);
std::string shape_string(const std::vector<std::size_t>& shape);
void require_same_shape(const TensorN& a, const TensorN& b, const char* what);
void require_rank(const TensorN& t, std::size_t rank, const char* what);

double tensor_sum(const TensorN& t);
double tensor_max_abs(const TensorN& t);
void add_inplace(TensorN& dst, const TensorN& src);
void scale_inplace(TensorN& t, double s);

/// A value tensor with its gradient accumulator; shapes always equal.
struct GradPair {
  TensorN value;
  TensorN grad;

  GradPair() = default;
  explicit GradPair(std::vector<std::size_t> s) : value(s), grad(std::move(s)) {}

  void zero_grad() { grad.fill(0.0); }
};

}  // namespace evg
