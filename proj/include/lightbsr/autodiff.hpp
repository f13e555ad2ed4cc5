#pragma once

// Reverse-mode automatic differentiation over dense double tensors.
// A forward pass builds a DAG of nodes; backward() runs the adjoints in
// reverse topological order and accumulates gradients into Params.

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "lightbsr/tensor.hpp"

namespace lightbsr {

// Trainable parameter with optimizer state.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor adam_m;
  Tensor adam_v;

  explicit Param(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {
    grad = Tensor(value.shape);
    adam_m = Tensor(value.shape);
    adam_v = Tensor(value.shape);
  }
  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

namespace ad {

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  Param* param = nullptr;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backprop;

  Tensor& ensure_grad() {
    if (grad.shape != value.shape) grad = Tensor(value.shape);
    return grad;
  }
};

class Var {
 public:
  Var() = default;
  explicit Var(NodePtr n) : node_(std::move(n)) {}
  const Tensor& value() const { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  NodePtr node() const { return node_; }
  bool defined() const { return node_ != nullptr; }
  bool requires_grad() const { return node_->requires_grad; }

 private:
  NodePtr node_;
};

Var constant(Tensor t);
Var leaf(Param& p);  // shares nothing; copies the value, routes grads back

// Runs adjoints from `root` (grad seeded with ones) and accumulates into
// every reachable Param's grad.
void backward(const Var& root);

// ---- ops ----
// Convolution with reflect padding (pad = k/2), arbitrary stride and groups.
// x: [N, Ci, H, W], w: [Co, Ci/groups, kh, kw], b: [Co] (may be undefined Var).
Var conv2d(const Var& x, const Var& w, const Var& b, int stride = 1,
           int groups = 1);

Var linear(const Var& x, const Var& w, const Var& b);  // x:[N,F] w:[O,F] b:[O]

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);

Var gelu(const Var& x);
Var leaky_relu(const Var& x, double slope);
Var sigmoid(const Var& x);
Var abs(const Var& x);
Var square(const Var& x);

// x: [N, C, H, W] ops
Var scale_channels(const Var& x, const Var& g);  // g: [N, C]
Var concat_channels(const Var& a, const Var& b);
Var slice_channels(const Var& x, int c0, int c1);
Var pixel_shuffle(const Var& x, int r);
Var crop_hw(const Var& x, std::int64_t h, std::int64_t w);  // keep top-left
Var global_avg_pool(const Var& x);  // -> [N, C]
Var layer_norm_channels(const Var& x, const Var& gamma, const Var& beta,
                        double eps = 1e-6);

// Row-matrix ops, x: [N, F]
Var l2_normalize_rows(const Var& x, double eps = 1e-12);
Var matmul_nt(const Var& a, const Var& b);  // a:[N,F] b:[M,F] -> [N,M]
Var rowwise_dot(const Var& a, const Var& b);  // -> [N]
Var concat_cols(const Var& a, const Var& b);
Var logsumexp_rows(const Var& x);      // [N,M] -> [N]
Var log_softmax_rows(const Var& x);    // [N,C] -> [N,C]

Var sum_all(const Var& x);   // -> [1]
Var mean_all(const Var& x);  // -> [1]

Var reshape(const Var& x, std::vector<std::int64_t> shape);

}  // namespace ad
}  // namespace lightbsr
