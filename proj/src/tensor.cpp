#include "dalab/tensor.hpp"

#include <cmath>
#include <sstream>

namespace dalab {

int64_t numel_of(const Shape& shape) {
  int64_t n = 1;
  for (int64_t e : shape) {
    if (e <= 0) throw ShapeError("non-positive extent in shape " + shape_str(shape));
    n *= e;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

void check_finite(const std::vector<double>& data, const std::string& what) {
  for (double v : data) {
    if (!std::isfinite(v)) throw NonFiniteError("non-finite value in " + what);
  }
}

Tensor::Tensor(Shape s) : shape(std::move(s)) {
  data.assign(static_cast<size_t>(numel_of(shape)), 0.0);
}

Tensor::Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
  if (numel_of(shape) != static_cast<int64_t>(data.size()))
    throw ShapeError("shape " + shape_str(shape) + " does not match data length " +
                     std::to_string(data.size()));
  check_finite(data, "tensor construction");
}

double Tensor::l2_norm() const {
  double s = 0.0;
  for (double v : data) s += v * v;
  return std::sqrt(s);
}

double Tensor::grad_l2_norm() const {
  double s = 0.0;
  for (double v : grad) s += v * v;
  return std::sqrt(s);
}

Tensor Tensor::full(Shape s, double v) {
  Tensor t(std::move(s));
  t.data.assign(t.data.size(), v);
  return t;
}

}  // namespace dalab
