#ifndef DALAB_TRAIN_HPP
#define DALAB_TRAIN_HPP

#include <map>
#include <string>
#include <vector>

#include "dalab/data.hpp"
#include "dalab/model.hpp"
#include "dalab/perturb.hpp"

namespace dalab {

struct TrainConfig {
  int64_t epochs = 10;
  int64_t batch_size = 32;
  double lr = 0.001;
  std::string optimizer = "adam";  // sgd | adam
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::string regularizer = "none";  // none | l1 | l2 | dropout | attack
  double lambda = 0.0;
  double dropout_rate = 0.0;
  AttackConfig attack;
  int64_t eval_every = 1;
  uint64_t seed = 0;
  int64_t patience = 0;  // 0 disables early stopping

  void validate() const;
};

struct MetricsRecord {
  int64_t epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
  double seconds = 0.0;  // wall time, not covered by the byte-identity contract
  int64_t fb_count = 0;  // cumulative training forward/backward tape executions
};

struct TrainResult {
  std::map<std::string, std::vector<double>> best_params;
  int64_t best_epoch = 0;
  double best_val_acc = 0.0;
  std::vector<MetricsRecord> metrics;
  double test_loss = 0.0;
  double test_acc = 0.0;
  int64_t fb_count = 0;
};

struct EvalResult {
  double loss = 0.0;
  double acc = 0.0;
};

EvalResult evaluate(Model& model, const Dataset& ds, int64_t batch_size);

// SGD or Adam (bias-corrected) over a named gradient map.
class Optimizer {
 public:
  Optimizer(const TrainConfig& cfg, const ParameterSet& params);
  void step(ParameterSet& params, const GradMap& direction);

 private:
  TrainConfig cfg_;
  int64_t t_ = 0;
  std::map<std::string, std::vector<double>> m_, v_;
};

// L1/L2 penalty over non-bias weights, built on the tape so gradients flow.
ValId penalty_term(Tape& tape, ParameterSet& params, const std::string& kind, double lambda);

// Per batch: clean pass (plus the configured adversarial gradient), one
// optimizer step. Deterministic per-epoch shuffling from cfg.seed. Leaves
// the model holding the best-validation-epoch parameters.
TrainResult train(Model& model, const Dataset& train_set, const Dataset& val_set,
                  const Dataset& test_set, const TrainConfig& cfg);

void write_metrics_csv(const std::vector<MetricsRecord>& metrics, const std::string& path);

struct SweepRow {
  double epsilon = 0.0;
  double p = 0.0;
  int64_t K = 1;
  int64_t seed_count = 0;
  double mean_test_acc = 0.0;
  double std_test_acc = 0.0;
};

std::vector<SweepRow> sweep(const ModelSpec& spec, const Dataset& train_set,
                            const Dataset& val_set, const Dataset& test_set,
                            const TrainConfig& base, const std::vector<double>& epsilons,
                            const std::vector<double>& ps, const std::vector<int64_t>& ks,
                            const std::vector<uint64_t>& seeds);

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path);

struct ScalingRow {
  int64_t size = 0;
  double standard_acc = 0.0;
  double dropattack_acc = 0.0;
  double improvement = 0.0;
};

// Paired standard-vs-attack runs on nested training subsets.
std::vector<ScalingRow> scaling_study(const ModelSpec& spec, const Dataset& train_pool,
                                      const Dataset& val_set, const Dataset& test_set,
                                      const TrainConfig& base, const std::vector<int64_t>& sizes,
                                      const std::vector<uint64_t>& seeds);

void write_scaling_csv(const std::vector<ScalingRow>& rows, const std::string& path);

std::string format_double(double v);

}  // namespace dalab

#endif
