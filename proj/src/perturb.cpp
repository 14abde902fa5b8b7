#include "dalab/perturb.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dalab {

namespace {
constexpr double kDegenerateNorm = 1e-12;

Tensor masked(const Tensor& mask, const Tensor& r) {
  Tensor out(r.shape);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = mask.data[i] * r.data[i];
  return out;
}

void axpy(GradMap& acc, const GradMap& g, double a) {
  for (const auto& kv : g) {
    auto& dst = acc[kv.first];
    if (dst.empty()) dst.assign(kv.second.size(), 0.0);
    for (size_t i = 0; i < kv.second.size(); ++i) dst[i] += a * kv.second[i];
  }
}
}  // namespace

void AttackConfig::validate() const {
  if (method != "fgsm" && method != "fgm" && method != "pgd" && method != "dropattack" &&
      method != "dropattack_k")
    throw std::invalid_argument("unknown attack method: " + method);
  if (eps_x < 0.0 || eps_theta < 0.0)
    throw std::invalid_argument("perturbation coefficients must be >= 0");
  if (p_x < 0.0 || p_x > 1.0 || p_theta < 0.0 || p_theta > 1.0)
    throw std::invalid_argument("attack probabilities must be in [0,1]");
  if (K < 1) throw std::invalid_argument("K must be >= 1");
  if (method == "pgd" && (pgd_radius <= 0.0 || pgd_step_size <= 0.0))
    throw std::invalid_argument("pgd requires positive radius and step size");
}

bool AttackConfig::has_input_target() const {
  return std::find(targets.begin(), targets.end(), "input") != targets.end();
}

std::vector<std::string> AttackConfig::weight_targets() const {
  std::vector<std::string> out;
  for (const std::string& t : targets)
    if (t != "input") out.push_back(t);
  return out;
}

Tensor fgsm(const Tensor& grad, double eps) {
  if (eps < 0.0) throw std::invalid_argument("fgsm eps must be >= 0");
  Tensor out(grad.shape);
  for (size_t i = 0; i < out.data.size(); ++i) {
    const double g = grad.data[i];
    out.data[i] = g > 0.0 ? eps : (g < 0.0 ? -eps : 0.0);
  }
  return out;
}

Tensor fgm(const Tensor& grad, double eps) {
  if (eps < 0.0) throw std::invalid_argument("fgm eps must be >= 0");
  const double norm = grad.l2_norm();
  Tensor out(grad.shape);
  if (norm <= kDegenerateNorm) return out;
  const double s = eps / norm;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = s * grad.data[i];
  return out;
}

Tensor pgd_step(const Tensor& x_t, const Tensor& grad, double alpha, const Tensor& x0,
                double radius) {
  if (alpha <= 0.0 || radius <= 0.0)
    throw std::invalid_argument("pgd_step requires positive alpha and radius");
  if (x_t.shape != grad.shape || x_t.shape != x0.shape)
    throw ShapeError("pgd_step shape mismatch");
  const double gnorm = grad.l2_norm();
  Tensor next(x_t.shape, x_t.data);
  if (gnorm > kDegenerateNorm) {
    const double s = alpha / gnorm;
    for (size_t i = 0; i < next.data.size(); ++i) next.data[i] += s * grad.data[i];
  }
  double off2 = 0.0;
  for (size_t i = 0; i < next.data.size(); ++i) {
    const double d = next.data[i] - x0.data[i];
    off2 += d * d;
  }
  const double off = std::sqrt(off2);
  if (off > radius) {
    const double s = radius / off;
    for (size_t i = 0; i < next.data.size(); ++i)
      next.data[i] = x0.data[i] + s * (next.data[i] - x0.data[i]);
  }
  return next;
}

AttackMask sample_mask(const std::map<std::string, Shape>& shapes, double p, Rng& rng) {
  if (p < 0.0 || p > 1.0) throw std::invalid_argument("mask probability must be in [0,1]");
  AttackMask out;
  for (const auto& kv : shapes) {
    Tensor m(kv.second);
    for (double& v : m.data) v = rng.bernoulli(p) ? 1.0 : 0.0;
    out.masks.emplace(kv.first, std::move(m));
  }
  return out;
}

namespace {

// Zero requires-grad overlays for every configured target, plus the Overlays
// view pointing at them.
struct TargetOverlays {
  Tensor input;
  std::map<std::string, Tensor> weights;
  bool use_input = false;

  Overlays view() {
    Overlays ov;
    if (use_input) ov.input = &input;
    for (auto& kv : weights) ov.weights[kv.first] = &kv.second;
    return ov;
  }
};

TargetOverlays make_zero_overlays(Model& model, const Batch& batch, const AttackConfig& cfg) {
  TargetOverlays t;
  if (cfg.has_input_target()) {
    t.use_input = true;
    t.input = Tensor(model.input_overlay_shape(batch));
    t.input.requires_grad = true;
  }
  for (const std::string& name : cfg.weight_targets()) {
    Tensor z(model.params().at(name).shape);
    z.requires_grad = true;
    t.weights.emplace(name, std::move(z));
  }
  return t;
}

struct CleanPass {
  double loss;
  GradMap param_grad;
  Tensor g_input;                       // gradient w.r.t. the input overlay
  std::map<std::string, Tensor> g_weights;  // per weight-target overlay gradients
};

CleanPass clean_pass(Model& model, const Batch& batch, const AttackConfig& cfg) {
  TargetOverlays ov = make_zero_overlays(model, batch, cfg);
  model.params().zero_grads();
  Tape tape;
  Overlays view = ov.view();
  ValId loss = model.loss(tape, batch, &view);
  tape.backward(loss);

  CleanPass out;
  out.loss = tape.scalar_value(loss);
  out.param_grad = model.params().grads();
  if (ov.use_input) {
    out.g_input = Tensor(ov.input.shape, ov.input.grad);
  }
  for (auto& kv : ov.weights) out.g_weights.emplace(kv.first, Tensor(kv.second.shape, kv.second.grad));
  return out;
}

// Dual-branch adversarial loss on one tape: input-branch term plus
// weight-branch term (each falling back to the clean loss when that branch
// has no targets). The perturbation tensors participate as requires_grad
// leaves so their gradients drive the K-step ascent.
struct DualPass {
  double loss_total;
  GradMap param_grad;
  Tensor g_input;
  std::map<std::string, Tensor> g_weights;
  GradMap input_branch_grad, weight_branch_grad;  // filled only when requested
};

DualPass dual_adversarial_pass(Model& model, const Batch& batch, const AttackConfig& cfg,
                               Tensor& input_pert, std::map<std::string, Tensor>& weight_perts,
                               bool want_branch_grads) {
  Tape tape;
  Overlays input_ov;
  if (cfg.has_input_target()) input_ov.input = &input_pert;
  ValId loss_a = model.loss(tape, batch, &input_ov);

  Overlays weight_ov;
  for (auto& kv : weight_perts) weight_ov.weights[kv.first] = &kv.second;
  ValId loss_b = model.loss(tape, batch, &weight_ov);

  DualPass out;
  model.params().zero_grads();
  if (want_branch_grads) {
    // branch-by-branch backward; the concatenation is bit-identical to one
    // backward of the sum because the leaves of the two branches are disjoint
    tape.backward(loss_a);
    out.input_branch_grad = model.params().grads();
    model.params().zero_grads();
    tape.backward(loss_b);
    out.weight_branch_grad = model.params().grads();
    out.param_grad = out.input_branch_grad;
    axpy(out.param_grad, out.weight_branch_grad, 1.0);
  } else {
    ValId total = tape.add(loss_a, loss_b);
    tape.backward(total);
    out.param_grad = model.params().grads();
  }
  out.loss_total = tape.scalar_value(loss_a) + tape.scalar_value(loss_b);
  if (cfg.has_input_target()) out.g_input = Tensor(input_pert.shape, input_pert.grad);
  for (auto& kv : weight_perts) out.g_weights.emplace(kv.first, Tensor(kv.second.shape, kv.second.grad));
  return out;
}

}  // namespace

AdvResult dropattack_step(Model& model, const Batch& batch, const AttackConfig& cfg, Rng& rng,
                          AttackRecord* rec) {
  AttackConfig k1 = cfg;
  k1.K = 1;
  return dropattack_k(model, batch, k1, rng, rec);
}

AdvResult dropattack_k(Model& model, const Batch& batch, const AttackConfig& cfg, Rng& rng,
                       AttackRecord* rec) {
  cfg.validate();
  if (cfg.targets.empty()) throw std::invalid_argument("no attack targets");
  const auto wnames = cfg.weight_targets();
  for (const std::string& name : wnames) model.params().at(name);  // existence check

  AdvResult result;
  CleanPass clean = clean_pass(model, batch, cfg);
  result.clean_loss = clean.loss;
  result.clean_grad = clean.param_grad;
  result.fb_count = 2;

  // masks: input target at p_x first, then weight targets at p_theta
  AttackMask mask;
  if (cfg.has_input_target()) {
    std::map<std::string, Shape> s{{"input", model.input_overlay_shape(batch)}};
    mask = sample_mask(s, cfg.p_x, rng);
  }
  {
    std::map<std::string, Shape> s;
    for (const std::string& name : wnames) s[name] = model.params().at(name).shape;
    AttackMask wm = sample_mask(s, cfg.p_theta, rng);
    for (auto& kv : wm.masks) mask.masks.emplace(kv.first, std::move(kv.second));
  }

  // ascent state
  Tensor g_input = clean.g_input;
  std::map<std::string, Tensor> g_weights = clean.g_weights;
  const double inv_k = 1.0 / static_cast<double>(cfg.K);

  GradMap accum;
  for (int64_t t = 1; t <= cfg.K; ++t) {
    Tensor input_pert;
    if (cfg.has_input_target()) {
      input_pert = masked(mask.masks.at("input"), fgm(g_input, cfg.eps_x));
      input_pert.requires_grad = true;
    }
    std::map<std::string, Tensor> weight_perts;
    for (const std::string& name : wnames) {
      Tensor p = masked(mask.masks.at(name), fgm(g_weights.at(name), cfg.eps_theta));
      p.requires_grad = true;
      weight_perts.emplace(name, std::move(p));
    }
    if (rec) rec->masks_per_step.push_back(mask);

    const bool want_branches = rec != nullptr && cfg.K == 1;
    DualPass pass =
        dual_adversarial_pass(model, batch, cfg, input_pert, weight_perts, want_branches);
    result.fb_count += 2;
    axpy(accum, pass.param_grad, inv_k);
    if (want_branches) {
      rec->input_branch_grad = pass.input_branch_grad;
      rec->weight_branch_grad = pass.weight_branch_grad;
    }

    if (t < cfg.K) {
      if (cfg.has_input_target())
        for (size_t i = 0; i < g_input.data.size(); ++i)
          g_input.data[i] += inv_k * pass.g_input.data[i];
      for (const std::string& name : wnames) {
        Tensor& g = g_weights.at(name);
        const Tensor& dg = pass.g_weights.at(name);
        for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += inv_k * dg.data[i];
      }
    }
  }
  result.adv_grad = std::move(accum);
  return result;
}

AdvResult input_attack_step(Model& model, const Batch& batch, const AttackConfig& cfg) {
  cfg.validate();
  if (cfg.method != "fgsm" && cfg.method != "fgm")
    throw std::invalid_argument("input_attack_step expects fgsm or fgm");
  AttackConfig icfg = cfg;
  icfg.targets = {"input"};

  AdvResult result;
  CleanPass clean = clean_pass(model, batch, icfg);
  result.clean_loss = clean.loss;
  result.clean_grad = clean.param_grad;
  result.fb_count = 2;

  Tensor pert = cfg.method == "fgsm" ? fgsm(clean.g_input, cfg.eps_x)
                                     : fgm(clean.g_input, cfg.eps_x);
  model.params().zero_grads();
  Tape tape;
  Overlays ov;
  ov.input = &pert;
  ValId loss = model.loss(tape, batch, &ov);
  tape.backward(loss);
  result.fb_count += 2;
  result.adv_grad = model.params().grads();
  return result;
}

AdvResult pgd_attack(Model& model, const Batch& batch, const AttackConfig& cfg) {
  cfg.validate();
  if (cfg.method != "pgd") throw std::invalid_argument("pgd_attack expects method pgd");
  AttackConfig icfg = cfg;
  icfg.targets = {"input"};

  AdvResult result;
  CleanPass clean = clean_pass(model, batch, icfg);
  result.clean_loss = clean.loss;
  result.clean_grad = clean.param_grad;
  result.fb_count = 2;

  const Tensor origin(model.input_overlay_shape(batch));
  Tensor offset = origin;
  Tensor g_cur = clean.g_input;
  for (int64_t t = 1; t <= cfg.K; ++t) {
    offset = pgd_step(offset, g_cur, cfg.pgd_step_size, origin, cfg.pgd_radius);
    offset.requires_grad = true;
    model.params().zero_grads();
    Tape tape;
    Overlays ov;
    ov.input = &offset;
    ValId loss = model.loss(tape, batch, &ov);
    tape.backward(loss);
    result.fb_count += 2;
    result.adv_grad = model.params().grads();
    g_cur = Tensor(offset.shape, offset.grad);
    offset.requires_grad = false;
    offset.grad.clear();
  }
  return result;
}

}  // namespace dalab
