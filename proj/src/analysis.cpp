#include "dalab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "dalab/train.hpp"

namespace dalab {

namespace {

constexpr double kDegenerateNorm = 1e-12;

double masked_norm(const Tensor& mask, const Tensor& g) {
  double s = 0.0;
  for (size_t i = 0; i < g.data.size(); ++i) {
    const double v = mask.data[i] * g.data[i];
    s += v * v;
  }
  return std::sqrt(s);
}

// eps * (M.g)/||M.g||, zero when the masked gradient is degenerate.
Tensor masked_direction(const Tensor& mask, const Tensor& g, double eps) {
  Tensor out(g.shape);
  const double norm = masked_norm(mask, g);
  if (norm <= kDegenerateNorm) return out;
  const double s = eps / norm;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = s * mask.data[i] * g.data[i];
  return out;
}

}  // namespace

EquivalenceReport verify_first_order(Model& model, const Batch& batch, const AttackConfig& cfg,
                                     const std::vector<double>& eps_grid, Rng& rng) {
  cfg.validate();
  if (cfg.targets.empty()) throw std::invalid_argument("no attack targets");
  if (eps_grid.empty()) throw std::invalid_argument("empty epsilon grid");
  for (double e : eps_grid)
    if (!(e > 0.0)) throw std::invalid_argument("epsilon grid entries must be > 0");
  const auto wnames = cfg.weight_targets();
  for (const std::string& name : wnames) model.params().at(name);  // existence check

  // clean pass with zero overlays for every target
  Tensor in_overlay;
  std::map<std::string, Tensor> w_overlays;
  Overlays ov;
  if (cfg.has_input_target()) {
    in_overlay = Tensor(model.input_overlay_shape(batch));
    in_overlay.requires_grad = true;
    ov.input = &in_overlay;
  }
  for (const std::string& name : wnames) {
    Tensor z(model.params().at(name).shape);
    z.requires_grad = true;
    w_overlays.emplace(name, std::move(z));
  }
  for (auto& kv : w_overlays) ov.weights[kv.first] = &kv.second;

  model.params().zero_grads();
  double clean_loss = 0.0;
  Tensor g_input;
  std::map<std::string, Tensor> g_weights;
  {
    Tape tape;
    ValId loss = model.loss(tape, batch, &ov);
    tape.backward(loss);
    clean_loss = tape.scalar_value(loss);
    if (cfg.has_input_target()) g_input = Tensor(in_overlay.shape, in_overlay.grad);
    for (auto& kv : w_overlays) g_weights.emplace(kv.first, Tensor(kv.second.shape, kv.second.grad));
  }

  double total_grad_norm2 = 0.0;
  if (cfg.has_input_target())
    for (double v : g_input.data) total_grad_norm2 += v * v;
  for (const auto& kv : g_weights)
    for (double v : kv.second.data) total_grad_norm2 += v * v;
  if (std::sqrt(total_grad_norm2) <= kDegenerateNorm)
    throw std::invalid_argument("degenerate evaluation point: zero gradient on every target");

  // one mask draw shared across the whole grid (input at p_x, then weight
  // targets at p_theta, matching the attack's sampling order)
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

  EquivalenceReport report;
  report.eps_grid = eps_grid;
  for (double eps : eps_grid) {
    Tensor in_pert;
    Overlays a;
    if (cfg.has_input_target()) {
      in_pert = masked_direction(mask.masks.at("input"), g_input, eps);
      a.input = &in_pert;
    }
    std::map<std::string, Tensor> w_perts;
    for (const std::string& name : wnames)
      w_perts.emplace(name, masked_direction(mask.masks.at(name), g_weights.at(name), eps));
    Overlays b;
    for (auto& kv : w_perts) b.weights[kv.first] = &kv.second;

    double adv;
    {
      Tape tape;
      ValId la = model.loss(tape, batch, &a);
      ValId lb = model.loss(tape, batch, &b);
      adv = tape.scalar_value(la) + tape.scalar_value(lb);
    }

    double surrogate = 2.0 * clean_loss;
    if (cfg.has_input_target()) surrogate += eps * masked_norm(mask.masks.at("input"), g_input);
    for (const std::string& name : wnames)
      surrogate += eps * masked_norm(mask.masks.at(name), g_weights.at(name));

    report.adversarial.push_back(adv);
    report.surrogate.push_back(surrogate);
    report.gap.push_back(std::fabs(adv - surrogate));
  }

  // log-log least squares over the strictly positive gaps
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int64_t n = 0;
  for (size_t i = 0; i < report.gap.size(); ++i) {
    if (report.gap[i] <= 0.0) continue;
    const double x = std::log(report.eps_grid[i]);
    const double y = std::log(report.gap[i]);
    sx += x; sy += y; sxx += x * x; sxy += x * y;
    ++n;
  }
  if (n >= 2) {
    const double denom = n * sxx - sx * sx;
    if (std::fabs(denom) > 0.0) report.slope = (n * sxy - sx * sy) / denom;
  }
  return report;
}

LandscapeGrid scan_landscape(const Model& model, const Dataset& eval_set,
                             const LandscapeGridSpec& spec, uint64_t seed,
                             bool swap_directions) {
  if (spec.delta_res < 1 || spec.eta_res < 1 || spec.delta_res % 2 == 0 || spec.eta_res % 2 == 0)
    throw std::invalid_argument("landscape resolutions must be odd and >= 1");
  if (spec.delta_res > 1 && !(spec.delta_min < spec.delta_max))
    throw std::invalid_argument("delta range must be increasing");
  if (spec.eta_res > 1 && !(spec.eta_min < spec.eta_max))
    throw std::invalid_argument("eta range must be increasing");
  if (spec.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (eval_set.size() == 0) throw std::invalid_argument("empty evaluation set");

  LandscapeGrid grid;
  grid.spec = spec;
  grid.direction_seed = seed;

  const ParameterSet& params = model.params();
  const auto base = params.values();

  // two Gaussian directions, each tensor rescaled to the matching parameter
  // norm so all layers move proportionally
  Rng rng(seed);
  std::map<std::string, std::vector<double>> alpha, beta;
  for (int pass = 0; pass < 2; ++pass) {
    auto& dir = pass == 0 ? alpha : beta;
    for (const std::string& name : params.order) {
      const Tensor& p = params.at(name);
      std::vector<double> d(p.data.size());
      for (double& v : d) v = rng.normal();
      double dn = 0.0;
      for (double v : d) dn += v * v;
      dn = std::sqrt(dn);
      const double pn = p.l2_norm();
      if (dn > 0.0) {
        const double s = pn / dn;
        for (double& v : d) v *= s;
      }
      dir.emplace(name, std::move(d));
    }
  }
  if (swap_directions) std::swap(alpha, beta);

  auto coords = [](double lo, double hi, int64_t res) {
    std::vector<double> out;
    if (res == 1) {
      out.push_back((lo + hi) / 2.0);
      return out;
    }
    for (int64_t i = 0; i < res; ++i)
      out.push_back(lo + static_cast<double>(i) * (hi - lo) / static_cast<double>(res - 1));
    return out;
  };
  grid.delta_coords = coords(spec.delta_min, spec.delta_max, spec.delta_res);
  grid.eta_coords = coords(spec.eta_min, spec.eta_max, spec.eta_res);

  const int64_t cells = spec.delta_res * spec.eta_res;
  grid.loss.assign(static_cast<size_t>(cells), std::numeric_limits<double>::quiet_NaN());
  grid.flagged.assign(static_cast<size_t>(cells), 0);

#pragma omp parallel
  {
    auto clone = build_model(model.spec());
    auto vals = base;
#pragma omp for schedule(dynamic)
    for (int64_t c = 0; c < cells; ++c) {
      const int64_t di = c / spec.eta_res;
      const int64_t ei = c % spec.eta_res;
      const double d = grid.delta_coords[static_cast<size_t>(di)];
      const double e = grid.eta_coords[static_cast<size_t>(ei)];
      for (const std::string& name : params.order) {
        const auto& b0 = base.at(name);
        const auto& a = alpha.at(name);
        const auto& b = beta.at(name);
        auto& v = vals.at(name);
        for (size_t i = 0; i < v.size(); ++i) v[i] = b0[i] + d * a[i] + e * b[i];
      }
      clone->params().set_values(vals);
      try {
        const double l = evaluate(*clone, eval_set, spec.batch_size).loss;
        if (std::isfinite(l)) {
          grid.loss[static_cast<size_t>(c)] = l;
        } else {
          grid.flagged[static_cast<size_t>(c)] = 1;
        }
      } catch (const NonFiniteError&) {
        grid.flagged[static_cast<size_t>(c)] = 1;
      }
    }
  }

  {
    auto clone = build_model(model.spec());
    clone->params().set_values(base);
    grid.center_loss = evaluate(*clone, eval_set, spec.batch_size).loss;
  }
  return grid;
}

double sharpness(const LandscapeGrid& grid, int64_t* excluded_cells) {
  const int64_t di = (grid.spec.delta_res - 1) / 2;
  const int64_t ei = (grid.spec.eta_res - 1) / 2;
  const size_t center = static_cast<size_t>(di * grid.spec.eta_res + ei);
  if (grid.flagged[center]) throw std::runtime_error("landscape center cell is non-finite");
  const double l0 = grid.loss[center];

  double sum = 0.0;
  int64_t kept = 0, excluded = 0;
  for (size_t c = 0; c < grid.loss.size(); ++c) {
    if (grid.flagged[c]) {
      ++excluded;
      continue;
    }
    sum += std::max(grid.loss[c] - l0, 0.0);
    ++kept;
  }
  if (excluded_cells) *excluded_cells = excluded;
  return kept > 0 ? sum / static_cast<double>(kept) : 0.0;
}

double central_window_mean(const LandscapeGrid& grid, int64_t window) {
  if (window < 1 || window % 2 == 0) throw std::invalid_argument("window must be odd and >= 1");
  if (window > grid.spec.delta_res || window > grid.spec.eta_res)
    throw std::invalid_argument("window exceeds grid resolution");
  const int64_t dc = (grid.spec.delta_res - 1) / 2;
  const int64_t ec = (grid.spec.eta_res - 1) / 2;
  const int64_t h = (window - 1) / 2;
  double sum = 0.0;
  int64_t kept = 0;
  for (int64_t di = dc - h; di <= dc + h; ++di)
    for (int64_t ei = ec - h; ei <= ec + h; ++ei) {
      const size_t c = static_cast<size_t>(di * grid.spec.eta_res + ei);
      if (grid.flagged[c]) continue;
      sum += grid.loss[c];
      ++kept;
    }
  if (kept == 0) throw std::runtime_error("central window is entirely non-finite");
  return sum / static_cast<double>(kept);
}

void write_landscape_csv(const LandscapeGrid& grid, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "delta,eta,loss\n";
  for (int64_t di = 0; di < grid.spec.delta_res; ++di)
    for (int64_t ei = 0; ei < grid.spec.eta_res; ++ei) {
      const size_t c = static_cast<size_t>(di * grid.spec.eta_res + ei);
      out << format_double(grid.delta_coords[static_cast<size_t>(di)]) << ','
          << format_double(grid.eta_coords[static_cast<size_t>(ei)]) << ','
          << (grid.flagged[c] ? "nan" : format_double(grid.loss[c])) << '\n';
    }
}

void write_landscape_meta(const LandscapeGrid& grid, const std::string& checkpoint_id,
                          const std::string& split_tag, const std::string& path) {
  nlohmann::json j;
  j["schema"] = "dalab.landscape.v1";
  j["checkpoint"] = checkpoint_id;
  j["split"] = split_tag;
  j["direction_seed"] = grid.direction_seed;
  j["normalization"] = "per-tensor parameter norm";
  j["delta"] = {{"min", grid.spec.delta_min}, {"max", grid.spec.delta_max},
                {"res", grid.spec.delta_res}};
  j["eta"] = {{"min", grid.spec.eta_min}, {"max", grid.spec.eta_max}, {"res", grid.spec.eta_res}};
  j["batch_size"] = grid.spec.batch_size;
  j["center_loss"] = grid.center_loss;
  auto flagged = nlohmann::json::array();
  for (int64_t di = 0; di < grid.spec.delta_res; ++di)
    for (int64_t ei = 0; ei < grid.spec.eta_res; ++ei)
      if (grid.flagged[static_cast<size_t>(di * grid.spec.eta_res + ei)])
        flagged.push_back({{"delta_index", di}, {"eta_index", ei}});
  j["flagged_cells"] = flagged;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << j.dump(2) << '\n';
}

void write_equivalence_csv(const EquivalenceReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "epsilon,gap,surrogate,adversarial\n";
  for (size_t i = 0; i < report.eps_grid.size(); ++i)
    out << format_double(report.eps_grid[i]) << ',' << format_double(report.gap[i]) << ','
        << format_double(report.surrogate[i]) << ',' << format_double(report.adversarial[i])
        << '\n';
}

}  // namespace dalab
