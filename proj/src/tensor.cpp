#include "evg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace evg {

std::size_t checked_numel(const std::vector<std::size_t>& shape) {
  if (shape.empty()) throw std::invalid_argument("tensor: empty shape");
  std::size_t n = 1;
  for (std::size_t e : shape) {
    if (e == 0) throw std::invalid_argument("tensor: zero extent in " + shape_string(shape));
    n *= e;
  }
  return n;
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

TensorN::TensorN(std::vector<std::size_t> s) : shape(std::move(s)) {
  data.assign(checked_numel(shape), 0.0);
}

TensorN::TensorN(std::vector<std::size_t> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
  if (checked_numel(shape) != data.size())
    throw std::invalid_argument("tensor: data length does not match shape " +
                                shape_string(shape));
}

void TensorN::fill(double v) { std::fill(data.begin(), data.end(), v); }

TensorN TensorN::full(std::vector<std::size_t> s, double v) {
  TensorN t(std::move(s));
  t.fill(v);
  return t;
}

void require_same_shape(const TensorN& a, const TensorN& b, const char* what) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(what) + ": shape mismatch " +
                                shape_string(a.shape) + " vs " + shape_string(b.shape));
}

void require_rank(const TensorN& t, std::size_t rank, const char* what) {
  if (t.rank() != rank)
    throw std::invalid_argument(std::string(what) + ": expected rank " +
                                std::to_string(rank) + ", got " + shape_string(t.shape));
}

double tensor_sum(const TensorN& t) {
  double s = 0.0;
  for (double v : t.data) s += v;
  return s;
}

double tensor_max_abs(const TensorN& t) {
  double m = 0.0;
  for (double v : t.data) m = std::max(m, std::fabs(v));
  return m;
}

void add_inplace(TensorN& dst, const TensorN& src) {
  require_same_shape(dst, src, "add_inplace");
  for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

void scale_inplace(TensorN& t, double s) {
  for (double& v : t.data) v *= s;
}

}  // namespace evg
