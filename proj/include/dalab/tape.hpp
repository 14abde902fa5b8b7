#ifndef DALAB_TAPE_HPP
#define DALAB_TAPE_HPP

#include <functional>
#include <vector>

#include "dalab/rng.hpp"
#include "dalab/tensor.hpp"

namespace dalab {

using ValId = int;

// Define-by-run reverse-mode tape. A tape is built fresh for every forward
// pass; backward() walks the node list in reverse and accumulates gradients
// into every requires_grad leaf tensor reachable from the loss. Leaf grads
// accumulate additively across backward calls until the caller zeroes them.
//
// Single-threaded by contract: one tape per worker. The heavy ops dispatch
// into dalab::kernels which may parallelize internally.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf referencing an external tensor; backward writes into t.grad.
  ValId leaf(Tensor& t);
  // Owned input with no gradient tracking.
  ValId constant(Tensor t);

  ValId matmul(ValId a, ValId b);
  // Same-shape elementwise add, or bias broadcast: (B,N)+(N) over rows,
  // (B,C,H,W)+(C) over channels.
  ValId add(ValId a, ValId b);
  ValId mul(ValId a, ValId b);
  ValId scale(ValId a, double c);
  ValId relu(ValId a);   // relu'(0) = 0
  ValId tanh_(ValId a);
  ValId sigmoid(ValId a);
  ValId abs_(ValId a);
  ValId sum(ValId a);  // scalar
  ValId flatten(ValId a);  // (B, rest)
  ValId row_block(ValId a, int64_t row0, int64_t rows);  // contiguous 2-D row slice
  ValId conv2d(ValId x, ValId kernel, int64_t stride);
  ValId maxpool2d(ValId x, int64_t window);
  ValId embed_lookup(ValId table, const std::vector<int>& indices);
  ValId dropout(ValId a, double rate, Rng& rng, bool training);
  // logits (B,C), one label index per row; returns the mean loss as a scalar.
  ValId softmax_cross_entropy(ValId logits, const std::vector<int>& labels);

  const Tensor& val(ValId id) const { return nodes_[static_cast<size_t>(id)].value; }
  double scalar_value(ValId id) const;
  // Gradient buffer of a tape value (valid after backward).
  const std::vector<double>& grad(ValId id) const {
    return nodes_[static_cast<size_t>(id)].value.grad;
  }

  void backward(ValId loss);
  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    bool needs_grad = false;
    Tensor* external = nullptr;
    std::function<void()> back;  // empty for leaves/constants
  };

  ValId push(Tensor value, bool needs_grad, std::function<void()> back);
  Node& node(ValId id) { return nodes_[static_cast<size_t>(id)]; }
  bool tracked(ValId id) const { return nodes_[static_cast<size_t>(id)].needs_grad; }

  std::vector<Node> nodes_;
};

}  // namespace dalab

#endif
