#ifndef DALAB_PERTURB_HPP
#define DALAB_PERTURB_HPP

#include <map>
#include <string>
#include <vector>

#include "dalab/model.hpp"
#include "dalab/rng.hpp"
#include "dalab/tensor.hpp"

namespace dalab {

// Hyperparameters of the masked-perturbation attacks and the classical
// baselines. "input" is the reserved pseudo-target for the model input.
struct AttackConfig {
  std::string method = "dropattack";  // fgsm | fgm | pgd | dropattack | dropattack_k
  double eps_x = 0.0;
  double eps_theta = 0.0;
  double p_x = 0.0;
  double p_theta = 0.0;
  int64_t K = 1;
  double pgd_radius = 0.0;
  double pgd_step_size = 0.0;
  std::vector<std::string> targets;

  void validate() const;
  bool has_input_target() const;
  std::vector<std::string> weight_targets() const;
};

// 0/1 tensors keyed by target name.
struct AttackMask {
  std::map<std::string, Tensor> masks;
};

using GradMap = std::map<std::string, std::vector<double>>;

Tensor fgsm(const Tensor& grad, double eps);
// eps * g / ||g||2; zero tensor when ||g||2 <= 1e-12.
Tensor fgm(const Tensor& grad, double eps);
// One ascent step of length alpha along g/||g||2 followed by projection of
// the offset from x0 back onto the L2 ball of the given radius.
Tensor pgd_step(const Tensor& x_t, const Tensor& grad, double alpha, const Tensor& x0,
                double radius);
AttackMask sample_mask(const std::map<std::string, Shape>& shapes, double p, Rng& rng);

// Optional diagnostics captured during an attack evaluation.
struct AttackRecord {
  std::vector<AttackMask> masks_per_step;
  GradMap input_branch_grad;   // parameter gradient of the input-branch loss
  GradMap weight_branch_grad;  // parameter gradient of the weight-branch loss
};

struct AdvResult {
  GradMap clean_grad;  // parameter gradient of the clean loss
  GradMap adv_grad;    // accumulated adversarial parameter gradient
  double clean_loss = 0.0;
  int64_t fb_count = 0;  // forward + backward tape executions consumed
};

// Single-step masked dual attack: clean pass, per-target normalized
// perturbations, Bernoulli masks, then one dual-branch adversarial pass
// (input branch + weight branch, losses summed, one backward).
AdvResult dropattack_step(Model& model, const Batch& batch, const AttackConfig& cfg, Rng& rng,
                          AttackRecord* rec = nullptr);

// K-step variant: masks sampled once at the first step and reused, ascent
// gradients accumulated with weight 1/K per step, adversarial parameter
// gradients averaged over the K evaluations.
AdvResult dropattack_k(Model& model, const Batch& batch, const AttackConfig& cfg, Rng& rng,
                       AttackRecord* rec = nullptr);

// Input-only single-step baselines (method fgsm or fgm).
AdvResult input_attack_step(Model& model, const Batch& batch, const AttackConfig& cfg);

// Input-only K-step projected ascent baseline.
AdvResult pgd_attack(Model& model, const Batch& batch, const AttackConfig& cfg);

}  // namespace dalab

#endif
