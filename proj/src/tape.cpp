#include "dalab/tape.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

#include "dalab/kernels.hpp"

namespace dalab {

ValId Tape::push(Tensor value, bool needs_grad, std::function<void()> back) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  n.back = needs_grad ? std::move(back) : std::function<void()>();
  nodes_.push_back(std::move(n));
  return static_cast<ValId>(nodes_.size() - 1);
}

ValId Tape::leaf(Tensor& t) {
  Tensor copy(t.shape, t.data);
  ValId id = push(std::move(copy), t.requires_grad, {});
  node(id).external = &t;
  return id;
}

ValId Tape::constant(Tensor t) {
  check_finite(t.data, "constant");
  return push(std::move(t), false, {});
}

double Tape::scalar_value(ValId id) const {
  const Tensor& t = val(id);
  if (t.numel() != 1) throw ShapeError("expected scalar, got shape " + shape_str(t.shape));
  return t.data[0];
}

ValId Tape::matmul(ValId a, ValId b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (ta.shape.size() != 2 || tb.shape.size() != 2 || ta.shape[1] != tb.shape[0])
    throw ShapeError("matmul shape mismatch: " + shape_str(ta.shape) + " x " +
                     shape_str(tb.shape));
  const int64_t m = ta.shape[0], k = ta.shape[1], n = tb.shape[1];
  Tensor out({m, n});
  kernels::matmul(ta.data.data(), tb.data.data(), out.data.data(), m, k, n);
  check_finite(out.data, "matmul");
  ValId id = push(std::move(out), tracked(a) || tracked(b), {});
  node(id).back = [this, id, a, b, m, k, n]() {
    const std::vector<double>& g = node(id).value.grad;
    if (tracked(a))
      kernels::matmul_grad_a(g.data(), node(b).value.data.data(), node(a).value.grad.data(), m, k, n);
    if (tracked(b))
      kernels::matmul_grad_b(node(a).value.data.data(), g.data(), node(b).value.grad.data(), m, k, n);
  };
  return id;
}

ValId Tape::add(ValId a, ValId b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  enum { SAME, ROWS, CHANNELS } mode;
  if (ta.shape == tb.shape) {
    mode = SAME;
  } else if (ta.shape.size() == 2 && tb.shape.size() == 1 && tb.shape[0] == ta.shape[1]) {
    mode = ROWS;
  } else if (ta.shape.size() == 4 && tb.shape.size() == 1 && tb.shape[0] == ta.shape[1]) {
    mode = CHANNELS;
  } else {
    throw ShapeError("add shape mismatch: " + shape_str(ta.shape) + " + " + shape_str(tb.shape));
  }
  Tensor out(ta.shape);
  const size_t n = ta.data.size();
  if (mode == SAME) {
    for (size_t i = 0; i < n; ++i) out.data[i] = ta.data[i] + tb.data[i];
  } else if (mode == ROWS) {
    const size_t cols = static_cast<size_t>(ta.shape[1]);
    for (size_t i = 0; i < n; ++i) out.data[i] = ta.data[i] + tb.data[i % cols];
  } else {
    const size_t hw = static_cast<size_t>(ta.shape[2] * ta.shape[3]);
    const size_t C = static_cast<size_t>(ta.shape[1]);
    for (size_t i = 0; i < n; ++i) out.data[i] = ta.data[i] + tb.data[(i / hw) % C];
  }
  check_finite(out.data, "add");
  ValId id = push(std::move(out), tracked(a) || tracked(b), {});
  node(id).back = [this, id, a, b, mode, n]() {
    const std::vector<double>& g = node(id).value.grad;
    if (tracked(a)) {
      std::vector<double>& ga = node(a).value.grad;
      for (size_t i = 0; i < n; ++i) ga[i] += g[i];
    }
    if (tracked(b)) {
      std::vector<double>& gb = node(b).value.grad;
      if (mode == SAME) {
        for (size_t i = 0; i < n; ++i) gb[i] += g[i];
      } else if (mode == ROWS) {
        const size_t cols = gb.size();
        for (size_t i = 0; i < n; ++i) gb[i % cols] += g[i];
      } else {
        const Tensor& ta2 = node(a).value;
        const size_t hw = static_cast<size_t>(ta2.shape[2] * ta2.shape[3]);
        const size_t C = static_cast<size_t>(ta2.shape[1]);
        for (size_t i = 0; i < n; ++i) gb[(i / hw) % C] += g[i];
      }
    }
  };
  return id;
}

ValId Tape::mul(ValId a, ValId b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (ta.shape != tb.shape)
    throw ShapeError("mul shape mismatch: " + shape_str(ta.shape) + " * " + shape_str(tb.shape));
  Tensor out(ta.shape);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = ta.data[i] * tb.data[i];
  check_finite(out.data, "mul");
  ValId id = push(std::move(out), tracked(a) || tracked(b), {});
  node(id).back = [this, id, a, b]() {
    const std::vector<double>& g = node(id).value.grad;
    if (tracked(a)) {
      std::vector<double>& ga = node(a).value.grad;
      const std::vector<double>& vb = node(b).value.data;
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
    }
    if (tracked(b)) {
      std::vector<double>& gb = node(b).value.grad;
      const std::vector<double>& va = node(a).value.data;
      for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
    }
  };
  return id;
}

ValId Tape::scale(ValId a, double c) {
  const Tensor& ta = val(a);
  Tensor out(ta.shape);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = ta.data[i] * c;
  check_finite(out.data, "scale");
  ValId id = push(std::move(out), tracked(a), {});
  node(id).back = [this, id, a, c]() {
    const std::vector<double>& g = node(id).value.grad;
    std::vector<double>& ga = node(a).value.grad;
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
  };
  return id;
}

ValId Tape::relu(ValId a) {
  const Tensor& ta = val(a);
  Tensor out(ta.shape);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = ta.data[i] > 0.0 ? ta.data[i] : 0.0;
  ValId id = push(std::move(out), tracked(a), {});
  node(id).back = [this, id, a]() {
    const std::vector<double>& g = node(id).value.grad;
    const std::vector<double>& x = node(a).value.data;
    std::vector<double>& ga = node(a).value.grad;
    for (size_t i = 0; i < g.size(); ++i)
      if (x[i] > 0.0) ga[i] += g[i];
  };
  return id;
}

ValId Tape::tanh_(ValId a) {
  const Tensor& ta = val(a);
  Tensor out(ta.shape);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = std::tanh(ta.data[i]);
  ValId id = push(std::move(out), tracked(a), {});
  node(id).back = [this, id, a]() {
    const std::vector<double>& g = node(id).value.grad;
    const std::vector<double>& y = node(id).value.data;
    std::vector<double>& ga = node(a).value.grad;
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
  };
  return id;
}

ValId Tape::sigmoid(ValId a) {
  const Tensor& ta = val(a);
  Tensor out(ta.shape);
  for (size_t i = 0; i < out.data.size(); ++i) {
    const double x = ta.data[i];
    out.data[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  }
  ValId id = push(std::move(out), tracked(a), {});
  node(id).back = [this, id, a]() {
    const std::vector<double>& g = node(id).value.grad;
    const std::vector<double>& y = node(id).value.data;
    std::vector<double>& ga = node(a).value.grad;
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
  };
  return id;
}

ValId Tape::abs_(ValId a) {
  const Tensor& ta = val(a);
  Tensor out(ta.shape);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = std::fabs(ta.data[i]);
  ValId id = push(std::move(out), tracked(a), {});
  node(id).back = [this, id, a]() {
    const std::vector<double>& g = node(id).value.grad;
    const std::vector<double>& x = node(a).value.data;
    std::vector<double>& ga = node(a).value.grad;
    for (size_t i = 0; i < g.size(); ++i)
      ga[i] += g[i] * (x[i] > 0.0 ? 1.0 : (x[i] < 0.0 ? -1.0 : 0.0));
  };
  return id;
}

ValId Tape::sum(ValId a) {
  const Tensor& ta = val(a);
  double s = 0.0;
  for (double v : ta.data) s += v;
  Tensor out({1}, {s});
  ValId id = push(std::move(out), tracked(a), {});
  node(id).back = [this, id, a]() {
    const double g = node(id).value.grad[0];
    std::vector<double>& ga = node(a).value.grad;
    for (size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  };
  return id;
}

ValId Tape::flatten(ValId a) {
  const Tensor& ta = val(a);
  if (ta.shape.empty()) throw ShapeError("flatten of rank-0 tensor");
  Tensor out({ta.shape[0], ta.numel() / ta.shape[0]}, ta.data);
  ValId id = push(std::move(out), tracked(a), {});
  node(id).back = [this, id, a]() {
    const std::vector<double>& g = node(id).value.grad;
    std::vector<double>& ga = node(a).value.grad;
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  };
  return id;
}

ValId Tape::row_block(ValId a, int64_t row0, int64_t rows) {
  const Tensor& ta = val(a);
  if (ta.shape.size() != 2 || row0 < 0 || row0 + rows > ta.shape[0])
    throw ShapeError("row_block [" + std::to_string(row0) + "," + std::to_string(row0 + rows) +
                     ") out of range for " + shape_str(ta.shape));
  const int64_t cols = ta.shape[1];
  Tensor out({rows, cols});
  std::copy(ta.data.begin() + row0 * cols, ta.data.begin() + (row0 + rows) * cols,
            out.data.begin());
  ValId id = push(std::move(out), tracked(a), {});
  node(id).back = [this, id, a, row0, cols]() {
    const std::vector<double>& g = node(id).value.grad;
    std::vector<double>& ga = node(a).value.grad;
    const size_t off = static_cast<size_t>(row0 * cols);
    for (size_t i = 0; i < g.size(); ++i) ga[off + i] += g[i];
  };
  return id;
}

ValId Tape::conv2d(ValId x, ValId kernel, int64_t stride) {
  const Tensor& tx = val(x);
  const Tensor& tw = val(kernel);
  if (tx.shape.size() != 4 || tw.shape.size() != 4 || tx.shape[1] != tw.shape[1] ||
      tw.shape[2] != tw.shape[3] || stride < 1)
    throw ShapeError("conv2d shape mismatch: x " + shape_str(tx.shape) + " kernel " +
                     shape_str(tw.shape));
  const int64_t B = tx.shape[0], C = tx.shape[1], H = tx.shape[2], W = tx.shape[3];
  const int64_t O = tw.shape[0], K = tw.shape[2];
  if (K > H || K > W)
    throw ShapeError("conv2d kernel " + shape_str(tw.shape) + " larger than input " +
                     shape_str(tx.shape));
  const int64_t OH = (H - K) / stride + 1, OW = (W - K) / stride + 1;
  Tensor out({B, O, OH, OW});
  kernels::conv2d(tx.data.data(), tw.data.data(), out.data.data(), B, C, H, W, O, K, stride);
  check_finite(out.data, "conv2d");
  ValId id = push(std::move(out), tracked(x) || tracked(kernel), {});
  node(id).back = [this, id, x, kernel, B, C, H, W, O, K, stride]() {
    const std::vector<double>& g = node(id).value.grad;
    if (tracked(x))
      kernels::conv2d_grad_x(g.data(), node(kernel).value.data.data(), node(x).value.grad.data(),
                             B, C, H, W, O, K, stride);
    if (tracked(kernel))
      kernels::conv2d_grad_w(node(x).value.data.data(), g.data(), node(kernel).value.grad.data(),
                             B, C, H, W, O, K, stride);
  };
  return id;
}

ValId Tape::maxpool2d(ValId x, int64_t window) {
  const Tensor& tx = val(x);
  if (tx.shape.size() != 4 || window < 1 || tx.shape[2] % window != 0 ||
      tx.shape[3] % window != 0)
    throw ShapeError("maxpool2d window " + std::to_string(window) + " does not tile " +
                     shape_str(tx.shape));
  const int64_t B = tx.shape[0], C = tx.shape[1], H = tx.shape[2], W = tx.shape[3];
  const int64_t OH = H / window, OW = W / window;
  Tensor out({B, C, OH, OW});
  auto argmax = std::make_shared<std::vector<int64_t>>(out.data.size());
  kernels::maxpool2d(tx.data.data(), out.data.data(), argmax->data(), B, C, H, W, window);
  ValId id = push(std::move(out), tracked(x), {});
  node(id).back = [this, id, x, argmax]() {
    const std::vector<double>& g = node(id).value.grad;
    kernels::maxpool2d_grad(g.data(), argmax->data(), node(x).value.grad.data(),
                            static_cast<int64_t>(g.size()));
  };
  return id;
}

ValId Tape::embed_lookup(ValId table, const std::vector<int>& indices) {
  const Tensor& tt = val(table);
  if (tt.shape.size() != 2) throw ShapeError("embed_lookup table must be rank 2");
  const int64_t V = tt.shape[0], E = tt.shape[1];
  for (int idx : indices)
    if (idx < 0 || idx >= V)
      throw ShapeError("embed_lookup index " + std::to_string(idx) + " out of vocab " +
                       std::to_string(V));
  const int64_t n = static_cast<int64_t>(indices.size());
  Tensor out({n, E});
  for (int64_t i = 0; i < n; ++i)
    std::copy(tt.data.begin() + indices[static_cast<size_t>(i)] * E,
              tt.data.begin() + (indices[static_cast<size_t>(i)] + 1) * E,
              out.data.begin() + i * E);
  ValId id = push(std::move(out), tracked(table), {});
  node(id).back = [this, id, table, indices, E]() {
    const std::vector<double>& g = node(id).value.grad;
    std::vector<double>& gt = node(table).value.grad;
    for (size_t i = 0; i < indices.size(); ++i) {
      const size_t off = static_cast<size_t>(indices[i]) * static_cast<size_t>(E);
      for (int64_t j = 0; j < E; ++j) gt[off + static_cast<size_t>(j)] += g[i * static_cast<size_t>(E) + static_cast<size_t>(j)];
    }
  };
  return id;
}

ValId Tape::dropout(ValId a, double rate, Rng& rng, bool training) {
  if (rate < 0.0 || rate >= 1.0)
    throw std::invalid_argument("dropout rate must be in [0,1), got " + std::to_string(rate));
  const Tensor& ta = val(a);
  if (!training || rate == 0.0) {
    Tensor out(ta.shape, ta.data);
    ValId id = push(std::move(out), tracked(a), {});
    node(id).back = [this, id, a]() {
      const std::vector<double>& g = node(id).value.grad;
      std::vector<double>& ga = node(a).value.grad;
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    };
    return id;
  }
  const double keep_scale = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<std::vector<double>>(ta.data.size());
  Tensor out(ta.shape);
  for (size_t i = 0; i < ta.data.size(); ++i) {
    const double m = rng.bernoulli(rate) ? 0.0 : keep_scale;
    (*mask)[i] = m;
    out.data[i] = ta.data[i] * m;
  }
  ValId id = push(std::move(out), tracked(a), {});
  node(id).back = [this, id, a, mask]() {
    const std::vector<double>& g = node(id).value.grad;
    std::vector<double>& ga = node(a).value.grad;
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (*mask)[i];
  };
  return id;
}

ValId Tape::softmax_cross_entropy(ValId logits, const std::vector<int>& labels) {
  const Tensor& tl = val(logits);
  if (tl.shape.size() != 2 || tl.shape[0] != static_cast<int64_t>(labels.size()))
    throw ShapeError("softmax_cross_entropy logits " + shape_str(tl.shape) + " vs " +
                     std::to_string(labels.size()) + " labels");
  const int64_t B = tl.shape[0], C = tl.shape[1];
  for (int y : labels)
    if (y < 0 || y >= C)
      throw ShapeError("label " + std::to_string(y) + " out of range for " +
                       std::to_string(C) + " classes");
  auto probs = std::make_shared<std::vector<double>>(tl.data.size());
  double total = 0.0;
  for (int64_t i = 0; i < B; ++i) {
    const double* row = tl.data.data() + i * C;
    double m = row[0];
    for (int64_t j = 1; j < C; ++j) m = std::max(m, row[j]);
    double z = 0.0;
    for (int64_t j = 0; j < C; ++j) z += std::exp(row[j] - m);
    for (int64_t j = 0; j < C; ++j)
      (*probs)[static_cast<size_t>(i * C + j)] = std::exp(row[j] - m) / z;
    total += std::log(z) - (row[labels[static_cast<size_t>(i)]] - m);
  }
  Tensor out({1}, {total / static_cast<double>(B)});
  check_finite(out.data, "softmax_cross_entropy");
  ValId id = push(std::move(out), tracked(logits), {});
  node(id).back = [this, id, logits, labels, probs, B, C]() {
    const double g = node(id).value.grad[0] / static_cast<double>(B);
    std::vector<double>& gl = node(logits).value.grad;
    for (int64_t i = 0; i < B; ++i) {
      for (int64_t j = 0; j < C; ++j) {
        const size_t k = static_cast<size_t>(i * C + j);
        double d = (*probs)[k];
        if (j == labels[static_cast<size_t>(i)]) d -= 1.0;
        gl[k] += g * d;
      }
    }
  };
  return id;
}

void Tape::backward(ValId loss) {
  if (nodes_.empty()) throw std::runtime_error("backward on empty tape");
  const Tensor& lt = val(loss);
  if (lt.numel() != 1)
    throw ShapeError("backward requires a scalar loss, got shape " + shape_str(lt.shape));
  if (!tracked(loss))
    throw std::runtime_error("backward on detached loss: no differentiable input reaches it");

  for (Node& n : nodes_) n.value.zero_grad();
  node(loss).value.grad[0] = 1.0;
  for (size_t i = static_cast<size_t>(loss) + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.needs_grad && n.back) n.back();
  }
  for (Node& n : nodes_) {
    if (n.external && n.external->requires_grad) {
      n.external->ensure_grad();
      for (size_t i = 0; i < n.value.grad.size(); ++i) n.external->grad[i] += n.value.grad[i];
    }
  }
}

}  // namespace dalab
