#ifndef DALAB_TESTS_QUADRATIC_TOY_HPP
#define DALAB_TESTS_QUADRATIC_TOY_HPP

#include "dalab/model.hpp"

// Scalar toy L(theta, x) = 1/2 (theta*x - y)^2 with one parameter "theta".
// Small enough that every attack quantity has a closed form.
class QuadraticToy : public dalab::Model {
 public:
  QuadraticToy(double theta, double y) : Model(make_spec()), y_(y) {
    dalab::Tensor t({1}, {theta});
    params_.add("theta", std::move(t), true);
  }

  dalab::Shape input_overlay_shape(const dalab::Batch& batch) const override {
    return batch.x.shape;
  }

  dalab::ValId logits(dalab::Tape& tape, const dalab::Batch& batch,
                      const dalab::Overlays* ov = nullptr,
                      const dalab::ForwardOpts& = {}) override {
    dalab::ValId x = tape.constant(batch.x);
    if (ov && ov->input) x = tape.add(x, tape.leaf(*ov->input));
    return tape.mul(x, weight(tape, ov, "theta"));
  }

  dalab::ValId loss(dalab::Tape& tape, const dalab::Batch& batch,
                    const dalab::Overlays* ov = nullptr,
                    const dalab::ForwardOpts& opts = {}) override {
    dalab::ValId pred = logits(tape, batch, ov, opts);
    dalab::ValId diff = tape.add(pred, tape.constant(dalab::Tensor({1}, {-y_})));
    return tape.scale(tape.sum(tape.mul(diff, diff)), 0.5);
  }

  static dalab::Batch point(double x) {
    dalab::Batch b;
    b.x = dalab::Tensor({1}, {x});
    b.labels = {0};
    return b;
  }

 private:
  static dalab::ModelSpec make_spec() {
    dalab::ModelSpec s;
    s.arch = "quadratic_toy";
    s.classes = 2;
    return s;
  }

  double y_;
};

#endif
