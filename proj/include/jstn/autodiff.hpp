#pragma once

#include "jstn/common.hpp"

#include <functional>
#include <memory>
#include <unordered_map>
#include <vector>

namespace jstn::ad {

using jstn::Matrix;

class Node;
using NodePtr = std::shared_ptr<Node>;

// Per-backward-pass gradient flow, keyed by node identity. Kept separate from
// the persistent Node::grad accumulator so that repeated backward() calls on
// the same graph accumulate instead of compounding stale flow.
using GradFlow = std::unordered_map<const Node*, Matrix>;

// One value in the define-by-run computation graph: a dense 2-D real matrix,
// its gradient accumulator, and the operation record that produced it.
class Node {
 public:
  Matrix values;
  Matrix grad;  // same shape as values once touched; empty before that
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<NodePtr> parents;
  std::function<void(const Matrix& out_grad, GradFlow& flow)> backprop;

  Node(Matrix v, bool rg, const char* opname)
      : values(std::move(v)), requires_grad(rg), op(opname) {}

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
  bool is_leaf() const { return parents.empty(); }

  void accumulate_grad(const Matrix& g);
  void zero_grad();
};

NodePtr constant(Matrix v);   // leaf, requires_grad = false
NodePtr parameter(Matrix v);  // leaf, requires_grad = true

// --- ops -------------------------------------------------------------------

NodePtr matmul(const NodePtr& a, const NodePtr& b);
// Elementwise sum; b may also be a 1 x a.cols bias row broadcast over rows.
NodePtr add(const NodePtr& a, const NodePtr& b);
NodePtr sub(const NodePtr& a, const NodePtr& b);
NodePtr mul(const NodePtr& a, const NodePtr& b);  // Hadamard
NodePtr scale(const NodePtr& a, double c);
NodePtr add_scalar(const NodePtr& a, double c);
NodePtr leaky_relu(const NodePtr& a, double slope);
NodePtr sigmoid(const NodePtr& a);
NodePtr log(const NodePtr& a);  // strictly positive inputs required
// Pass-through gradient inside [lo, hi], zero outside.
NodePtr clamp(const NodePtr& a, double lo, double hi);
// Row-wise softmax of logits / temperature, stabilised by row-max subtraction.
NodePtr softmax_rows_t(const NodePtr& logits, double temperature);
// Identity forward; backward multiplies the upstream gradient by -lambda_rev.
NodePtr grad_reverse(const NodePtr& a, double lambda_rev);
NodePtr mean(const NodePtr& a);  // full reduction to 1x1
NodePtr sum(const NodePtr& a);   // full reduction to 1x1
// Per-row squared L2 distance ||a_i - b_i||^2, result n x 1.
NodePtr sq_l2_rowdiff(const NodePtr& a, const NodePtr& b);
// Row gather; backward scatter-adds into the gathered rows.
NodePtr rows(const NodePtr& a, std::vector<int> indices);
NodePtr mean_rows(const NodePtr& a);  // column-wise mean, 1 x cols
NodePtr concat_rows(const NodePtr& a, const NodePtr& b);

// Backpropagate from a scalar (1x1) root. Each reachable node is visited
// exactly once in reverse topological order; contributions from shared
// subexpressions sum. Gradients accumulate across calls until zeroed.
void backward(const NodePtr& root);

// --- Adam ------------------------------------------------------------------

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long step_count = 0;
  std::vector<Matrix> m;
  std::vector<Matrix> v;
};

AdamState make_adam(const std::vector<NodePtr>& params, double lr = 1e-3,
                    double beta1 = 0.9, double beta2 = 0.999,
                    double epsilon = 1e-8);

// Bias-corrected Adam update over all params; gradients are zeroed after.
void adam_step(const std::vector<NodePtr>& params, AdamState& state);

void zero_grads(const std::vector<NodePtr>& params);

namespace testing {
// When non-empty, the backward of the named op is deliberately perturbed.
// Exists solely so the gradcheck negative control can prove it catches a
// wrong adjoint; never set outside tests.
extern const char* corrupt_op;
}  // namespace testing

}  // namespace jstn::ad
