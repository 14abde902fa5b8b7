#include "dalab/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace dalab {

namespace {

bool is_bias(const std::string& name) {
  return name.size() >= 2 && name.compare(name.size() - 2, 2, ".b") == 0;
}

void add_into(GradMap& acc, const GradMap& g) {
  for (const auto& kv : g) {
    auto& dst = acc[kv.first];
    if (dst.empty()) dst.assign(kv.second.size(), 0.0);
    for (size_t i = 0; i < kv.second.size(); ++i) dst[i] += kv.second[i];
  }
}

std::string layer_norms(const ParameterSet& params) {
  std::ostringstream os;
  for (const std::string& name : params.order) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", params.at(name).l2_norm());
    os << " " << name << "=" << buf;
  }
  return os.str();
}

}  // namespace

Optimizer::Optimizer(const TrainConfig& cfg, const ParameterSet& params) : cfg_(cfg) {
  if (cfg.optimizer == "adam") {
    for (const auto& kv : params.entries) {
      m_[kv.first].assign(kv.second.data.size(), 0.0);
      v_[kv.first].assign(kv.second.data.size(), 0.0);
    }
  }
}

void Optimizer::step(ParameterSet& params, const GradMap& direction) {
  if (cfg_.optimizer == "sgd") {
    for (const std::string& name : params.order) {
      Tensor& t = params.at(name);
      const auto& d = direction.at(name);
      for (size_t i = 0; i < t.data.size(); ++i) t.data[i] -= cfg_.lr * d[i];
    }
    return;
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (const std::string& name : params.order) {
    Tensor& t = params.at(name);
    const auto& d = direction.at(name);
    auto& m = m_[name];
    auto& v = v_[name];
    for (size_t i = 0; i < t.data.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * d[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * d[i] * d[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      t.data[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.adam_eps);
    }
  }
}

void TrainConfig::validate() const {
  if (lr <= 0.0) throw std::invalid_argument("learning rate must be positive");
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (lambda < 0.0) throw std::invalid_argument("lambda must be >= 0");
  if (eval_every < 1) throw std::invalid_argument("eval cadence must be >= 1");
  if (optimizer != "sgd" && optimizer != "adam")
    throw std::invalid_argument("unknown optimizer: " + optimizer);
  if (regularizer != "none" && regularizer != "l1" && regularizer != "l2" &&
      regularizer != "dropout" && regularizer != "attack")
    throw std::invalid_argument("unknown regularizer: " + regularizer);
  if (regularizer == "dropout" && (dropout_rate < 0.0 || dropout_rate >= 1.0))
    throw std::invalid_argument("dropout rate must be in [0,1)");
  if (regularizer == "attack") attack.validate();
}

EvalResult evaluate(Model& model, const Dataset& ds, int64_t batch_size) {
  EvalResult out;
  if (ds.size() == 0) return out;
  int64_t correct = 0;
  double loss_sum = 0.0;
  for (int64_t start = 0; start < ds.size(); start += batch_size) {
    const int64_t stop = std::min(ds.size(), start + batch_size);
    std::vector<int64_t> idx(static_cast<size_t>(stop - start));
    std::iota(idx.begin(), idx.end(), start);
    Batch batch = ds.batch(idx);
    Tape tape;
    ValId logits = model.logits(tape, batch);
    ValId loss = tape.softmax_cross_entropy(logits, batch.labels);
    loss_sum += tape.scalar_value(loss) * static_cast<double>(batch.size());
    const Tensor& lt = tape.val(logits);
    const int64_t C = lt.shape[1];
    for (int64_t i = 0; i < batch.size(); ++i) {
      const double* row = lt.data.data() + i * C;
      int64_t arg = 0;
      for (int64_t j = 1; j < C; ++j)
        if (row[j] > row[arg]) arg = j;
      if (arg == batch.labels[static_cast<size_t>(i)]) ++correct;
    }
  }
  out.loss = loss_sum / static_cast<double>(ds.size());
  out.acc = static_cast<double>(correct) / static_cast<double>(ds.size());
  return out;
}

ValId penalty_term(Tape& tape, ParameterSet& params, const std::string& kind, double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("penalty lambda must be >= 0");
  ValId total = tape.constant(Tensor::scalar(0.0));
  for (const std::string& name : params.order) {
    if (is_bias(name)) continue;
    ValId w = tape.leaf(params.at(name));
    ValId term = kind == "l1" ? tape.sum(tape.abs_(w)) : tape.sum(tape.mul(w, w));
    total = tape.add(total, term);
  }
  return tape.scale(total, lambda);
}

TrainResult train(Model& model, const Dataset& train_set, const Dataset& val_set,
                  const Dataset& test_set, const TrainConfig& cfg) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  Optimizer opt(cfg, model.params());
  Rng master(cfg.seed);
  Rng attack_rng = master.fork(1);
  Rng dropout_rng = master.fork(2);

  TrainResult result;
  result.best_params = model.params().values();
  result.best_epoch = 0;
  result.best_val_acc = -1.0;
  int64_t evals_since_best = 0;

  const bool is_attack = cfg.regularizer == "attack";
  std::vector<int64_t> order(static_cast<size_t>(train_set.size()));
  std::iota(order.begin(), order.end(), 0);

  for (int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng shuffle_rng = master.fork(1000 + static_cast<uint64_t>(epoch));
    std::iota(order.begin(), order.end(), 0);
    shuffle_rng.shuffle(order);

    for (int64_t start = 0; start < train_set.size(); start += cfg.batch_size) {
      const int64_t stop = std::min(train_set.size(), start + cfg.batch_size);
      Batch batch = train_set.batch(
          {order.begin() + start, order.begin() + stop});
      const int64_t batch_idx = start / cfg.batch_size;
      try {
        GradMap direction;
        if (is_attack) {
          AdvResult adv;
          const std::string& m = cfg.attack.method;
          if (m == "dropattack") {
            adv = dropattack_step(model, batch, cfg.attack, attack_rng);
          } else if (m == "dropattack_k") {
            adv = dropattack_k(model, batch, cfg.attack, attack_rng);
          } else if (m == "pgd") {
            adv = pgd_attack(model, batch, cfg.attack);
          } else {
            adv = input_attack_step(model, batch, cfg.attack);
          }
          direction = adv.clean_grad;
          add_into(direction, adv.adv_grad);
          result.fb_count += adv.fb_count;
        } else {
          model.params().zero_grads();
          Tape tape;
          ForwardOpts opts;
          if (cfg.regularizer == "dropout") {
            opts.dropout_rate = cfg.dropout_rate;
            opts.training = true;
            opts.rng = &dropout_rng;
          }
          ValId loss = model.loss(tape, batch, nullptr, opts);
          if (cfg.regularizer == "l1" || cfg.regularizer == "l2")
            loss = tape.add(loss, penalty_term(tape, model.params(), cfg.regularizer, cfg.lambda));
          tape.backward(loss);
          direction = model.params().grads();
          result.fb_count += 2;
        }
        opt.step(model.params(), direction);
      } catch (const NonFiniteError& e) {
        throw NonFiniteError(std::string(e.what()) + " (epoch " + std::to_string(epoch) +
                             ", batch " + std::to_string(batch_idx) + ", layer norms:" +
                             layer_norms(model.params()) + ")");
      }
    }

    if (epoch % cfg.eval_every == 0 || epoch == cfg.epochs) {
      EvalResult tr = evaluate(model, train_set, cfg.batch_size);
      EvalResult va = evaluate(model, val_set, cfg.batch_size);
      MetricsRecord rec;
      rec.epoch = epoch;
      rec.train_loss = tr.loss;
      rec.train_acc = tr.acc;
      rec.val_loss = va.loss;
      rec.val_acc = va.acc;
      rec.seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      rec.fb_count = result.fb_count;
      result.metrics.push_back(rec);

      if (va.acc > result.best_val_acc) {
        result.best_val_acc = va.acc;
        result.best_epoch = epoch;
        result.best_params = model.params().values();
        evals_since_best = 0;
      } else {
        ++evals_since_best;
        if (cfg.patience > 0 && evals_since_best >= cfg.patience) break;
      }
    }
  }

  model.params().set_values(result.best_params);
  EvalResult te = evaluate(model, test_set, cfg.batch_size);
  result.test_loss = te.loss;
  result.test_acc = te.acc;
  return result;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_metrics_csv(const std::vector<MetricsRecord>& metrics, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write metrics CSV " + path);
  out << "epoch,train_loss,train_acc,val_loss,val_acc,seconds,fb_count\n";
  for (const MetricsRecord& r : metrics) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.3f", r.seconds);
    out << r.epoch << "," << format_double(r.train_loss) << "," << format_double(r.train_acc)
        << "," << format_double(r.val_loss) << "," << format_double(r.val_acc) << "," << buf
        << "," << r.fb_count << "\n";
  }
}

std::vector<SweepRow> sweep(const ModelSpec& spec, const Dataset& train_set,
                            const Dataset& val_set, const Dataset& test_set,
                            const TrainConfig& base, const std::vector<double>& epsilons,
                            const std::vector<double>& ps, const std::vector<int64_t>& ks,
                            const std::vector<uint64_t>& seeds) {
  if (epsilons.empty() || ps.empty() || ks.empty())
    throw std::invalid_argument("sweep grid must be non-empty");
  if (seeds.empty()) throw std::invalid_argument("sweep needs at least one replicate seed");

  std::vector<SweepRow> rows;
  for (double eps : epsilons) {
    for (double p : ps) {
      for (int64_t k : ks) {
        std::vector<double> accs;
        for (uint64_t seed : seeds) {
          ModelSpec ms = spec;
          ms.init_seed = seed;
          auto model = build_model(ms);
          TrainConfig cfg = base;
          cfg.seed = seed;
          cfg.regularizer = "attack";
          cfg.attack.method = k > 1 ? "dropattack_k" : "dropattack";
          cfg.attack.eps_x = eps;
          cfg.attack.eps_theta = eps;
          cfg.attack.p_x = p;
          cfg.attack.p_theta = p;
          cfg.attack.K = k;
          if (cfg.attack.targets.empty())
            throw std::invalid_argument("sweep base config must name attack targets");
          TrainResult res = train(*model, train_set, val_set, test_set, cfg);
          accs.push_back(res.test_acc);
        }
        const double n = static_cast<double>(accs.size());
        const double mean = std::accumulate(accs.begin(), accs.end(), 0.0) / n;
        double var = 0.0;
        for (double a : accs) var += (a - mean) * (a - mean);
        SweepRow row;
        row.epsilon = eps;
        row.p = p;
        row.K = k;
        row.seed_count = static_cast<int64_t>(accs.size());
        row.mean_test_acc = mean;
        row.std_test_acc = std::sqrt(var / n);
        rows.push_back(row);
      }
    }
  }
  return rows;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write sweep CSV " + path);
  out << "epsilon,p,K,seed_count,mean_test_acc,std_test_acc\n";
  for (const SweepRow& r : rows)
    out << format_double(r.epsilon) << "," << format_double(r.p) << "," << r.K << ","
        << r.seed_count << "," << format_double(r.mean_test_acc) << ","
        << format_double(r.std_test_acc) << "\n";
}

std::vector<ScalingRow> scaling_study(const ModelSpec& spec, const Dataset& train_pool,
                                      const Dataset& val_set, const Dataset& test_set,
                                      const TrainConfig& base, const std::vector<int64_t>& sizes,
                                      const std::vector<uint64_t>& seeds) {
  if (base.attack.targets.empty())
    throw std::invalid_argument("scaling study base config must name attack targets");
  std::vector<ScalingRow> rows;
  for (int64_t size : sizes) {
    if (size > train_pool.size())
      throw std::invalid_argument("scaling size " + std::to_string(size) +
                                  " exceeds training pool " + std::to_string(train_pool.size()));
    double std_sum = 0.0, atk_sum = 0.0;
    for (uint64_t seed : seeds) {
      Dataset subset = subsample(train_pool, size, seed);
      ModelSpec ms = spec;
      ms.init_seed = seed;

      auto m1 = build_model(ms);
      TrainConfig plain = base;
      plain.seed = seed;
      plain.regularizer = "none";
      std_sum += train(*m1, subset, val_set, test_set, plain).test_acc;

      auto m2 = build_model(ms);
      TrainConfig atk = base;
      atk.seed = seed;
      atk.regularizer = "attack";
      atk_sum += train(*m2, subset, val_set, test_set, atk).test_acc;
    }
    const double n = static_cast<double>(seeds.size());
    ScalingRow row;
    row.size = size;
    row.standard_acc = std_sum / n;
    row.dropattack_acc = atk_sum / n;
    row.improvement = row.dropattack_acc - row.standard_acc;
    rows.push_back(row);
  }
  return rows;
}

void write_scaling_csv(const std::vector<ScalingRow>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write scaling CSV " + path);
  out << "size,standard_acc,dropattack_acc,improvement\n";
  for (const ScalingRow& r : rows)
    out << r.size << "," << format_double(r.standard_acc) << ","
        << format_double(r.dropattack_acc) << "," << format_double(r.improvement) << "\n";
}

}  // namespace dalab
