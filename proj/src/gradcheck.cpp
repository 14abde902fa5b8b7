#include "dalab/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace dalab {

double gradcheck(const TapeFn& f, const Tensor& point, double step) {
  if (step <= 0.0) throw std::invalid_argument("gradcheck step must be positive");

  Tensor p(point.shape, point.data);
  p.requires_grad = true;
  {
    Tape tape;
    ValId loss = f(tape, p);
    tape.backward(loss);
  }
  std::vector<double> analytic = p.grad;

  Tensor q(point.shape, point.data);
  q.requires_grad = false;
  auto eval = [&]() {
    Tape tape;
    return tape.scalar_value(f(tape, q));
  };

  double worst = 0.0;
  for (size_t i = 0; i < q.data.size(); ++i) {
    const double orig = q.data[i];
    q.data[i] = orig + step;
    const double hi = eval();
    q.data[i] = orig - step;
    const double lo = eval();
    q.data[i] = orig;
    const double fd = (hi - lo) / (2.0 * step);
    const double err = std::fabs(analytic[i] - fd) / std::max(1.0, std::fabs(analytic[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace dalab
