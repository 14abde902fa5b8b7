#ifndef DALAB_ANALYSIS_HPP
#define DALAB_ANALYSIS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "dalab/data.hpp"
#include "dalab/model.hpp"
#include "dalab/perturb.hpp"

namespace dalab {

// Measured agreement between the dual adversarial objective and its
// first-order gradient-penalty surrogate 2L + eps*||M.g|| per target,
// across an epsilon grid. gap should shrink quadratically in epsilon.
struct EquivalenceReport {
  std::vector<double> eps_grid;
  std::vector<double> adversarial;  // dual adversarial objective value
  std::vector<double> surrogate;    // 2L + sum of masked gradient-norm penalties
  std::vector<double> gap;          // |adversarial - surrogate|
  double slope = 0.0;               // log-log fit of gap vs epsilon
};

// Masks are sampled once (input target at p_x, then weight targets at
// p_theta) and shared by every grid point and by both sides of the
// comparison. The inner maximization is realized in closed form along the
// masked gradient direction, eps * (M.g)/||M.g||.
EquivalenceReport verify_first_order(Model& model, const Batch& batch, const AttackConfig& cfg,
                                     const std::vector<double>& eps_grid, Rng& rng);

struct LandscapeGridSpec {
  double delta_min = -1.0, delta_max = 1.0;
  int64_t delta_res = 101;
  double eta_min = -1.0, eta_max = 1.0;
  int64_t eta_res = 101;
  int64_t batch_size = 128;
};

struct LandscapeGrid {
  LandscapeGridSpec spec;
  uint64_t direction_seed = 0;
  std::vector<double> delta_coords, eta_coords;
  std::vector<double> loss;      // row-major: [delta_index][eta_index]
  std::vector<uint8_t> flagged;  // non-finite cells
  double center_loss = 0.0;      // loss evaluated directly at the checkpoint

  double at(int64_t di, int64_t ei) const {
    return loss[static_cast<size_t>(di * spec.eta_res + ei)];
  }
};

// Full-dataset loss over a (delta, eta) grid around the model's current
// parameters, along two Gaussian directions rescaled per tensor to the
// matching parameter norm. Never mutates the model. Cells evaluate in
// parallel; assembly is by index so the result is scheduling-independent.
// swap_directions exchanges the two direction draws (grid transpose).
LandscapeGrid scan_landscape(const Model& model, const Dataset& eval_set,
                             const LandscapeGridSpec& spec, uint64_t seed,
                             bool swap_directions = false);

// Mean non-negative excess loss over the center cell; flagged cells are
// excluded and counted.
double sharpness(const LandscapeGrid& grid, int64_t* excluded_cells = nullptr);

// Mean loss over the centered window of the given odd side length.
double central_window_mean(const LandscapeGrid& grid, int64_t window);

void write_landscape_csv(const LandscapeGrid& grid, const std::string& path);
void write_landscape_meta(const LandscapeGrid& grid, const std::string& checkpoint_id,
                          const std::string& split_tag, const std::string& path);
void write_equivalence_csv(const EquivalenceReport& report, const std::string& path);

}  // namespace dalab

#endif
