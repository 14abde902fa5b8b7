#ifndef DALAB_TENSOR_HPP
#define DALAB_TENSOR_HPP

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace dalab {

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NonFiniteError : std::runtime_error {
  explicit NonFiniteError(const std::string& msg) : std::runtime_error(msg) {}
};

using Shape = std::vector<int64_t>;

int64_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);
void check_finite(const std::vector<double>& data, const std::string& what);

// Dense row-major 64-bit float tensor. grad is empty until ensure_grad();
// once present it has the same extent as data.
struct Tensor {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;

  Tensor() = default;
  explicit Tensor(Shape s);
  Tensor(Shape s, std::vector<double> d);

  int64_t numel() const { return static_cast<int64_t>(data.size()); }

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
  void zero_grad() { grad.assign(data.size(), 0.0); }

  double l2_norm() const;
  double grad_l2_norm() const;

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
  static Tensor full(Shape s, double v);
  static Tensor scalar(double v) { return Tensor({1}, {v}); }
};

}  // namespace dalab

#endif
