#include "jstn/autodiff.hpp"

#include <cmath>
#include <cstring>
#include <unordered_set>

namespace jstn::ad {

namespace testing {
const char* corrupt_op = "";
}

namespace {

// Corruption factor for the gradcheck negative control: 1.0 normally.
double corruption(const char* opname) {
  if (testing::corrupt_op[0] != '\0' &&
      std::strcmp(testing::corrupt_op, opname) == 0) {
    return 1.01;
  }
  return 1.0;
}

void add_flow(GradFlow& flow, const NodePtr& target, const Matrix& g) {
  if (!target->requires_grad) return;
  auto it = flow.find(target.get());
  if (it == flow.end()) {
    flow.emplace(target.get(), g);
  } else {
    it->second += g;
  }
}

NodePtr make_op(Matrix v, const char* opname, std::vector<NodePtr> parents) {
  bool rg = false;
  for (const auto& p : parents) rg = rg || p->requires_grad;
  auto n = std::make_shared<Node>(std::move(v), rg, opname);
  n->parents = std::move(parents);
  return n;
}

void check_same_shape(const NodePtr& a, const NodePtr& b, const char* opname) {
  if (a->rows() != b->rows() || a->cols() != b->cols()) {
    throw DimensionError(std::string(opname) + ": shape mismatch " +
                         shape_str(a->values) + " vs " + shape_str(b->values));
  }
}

}  // namespace

void Node::accumulate_grad(const Matrix& g) {
  if (!requires_grad) return;
  if (grad.size() == 0) grad = Matrix::Zero(values.rows(), values.cols());
  grad += g;
}

void Node::zero_grad() {
  if (grad.size() != 0) grad.setZero();
}

NodePtr constant(Matrix v) {
  return std::make_shared<Node>(std::move(v), false, "leaf");
}

NodePtr parameter(Matrix v) {
  return std::make_shared<Node>(std::move(v), true, "parameter");
}

NodePtr matmul(const NodePtr& a, const NodePtr& b) {
  if (a->cols() != b->rows()) {
    throw DimensionError("matmul: inner dimensions differ, " +
                         shape_str(a->values) + " * " + shape_str(b->values));
  }
  auto n = make_op(a->values * b->values, "matmul", {a, b});
  if (n->requires_grad) {
    NodePtr pa = a, pb = b;
    n->backprop = [pa, pb](const Matrix& g, GradFlow& flow) {
      const double c = corruption("matmul");
      add_flow(flow, pa, c * (g * pb->values.transpose()));
      add_flow(flow, pb, c * (pa->values.transpose() * g));
    };
  }
  return n;
}

NodePtr add(const NodePtr& a, const NodePtr& b) {
  const bool bias_row =
      b->rows() == 1 && a->rows() > 1 && b->cols() == a->cols();
  if (!bias_row) check_same_shape(a, b, "add");
  Matrix out = bias_row
                   ? Matrix(a->values.rowwise() + b->values.row(0))
                   : Matrix(a->values + b->values);
  auto n = make_op(std::move(out), "add", {a, b});
  if (n->requires_grad) {
    NodePtr pa = a, pb = b;
    n->backprop = [pa, pb, bias_row](const Matrix& g, GradFlow& flow) {
      const double c = corruption("add");
      add_flow(flow, pa, c * g);
      if (bias_row) {
        add_flow(flow, pb, Matrix(c * g.colwise().sum()));
      } else {
        add_flow(flow, pb, c * g);
      }
    };
  }
  return n;
}

NodePtr sub(const NodePtr& a, const NodePtr& b) {
  check_same_shape(a, b, "sub");
  auto n = make_op(a->values - b->values, "sub", {a, b});
  if (n->requires_grad) {
    NodePtr pa = a, pb = b;
    n->backprop = [pa, pb](const Matrix& g, GradFlow& flow) {
      add_flow(flow, pa, g);
      add_flow(flow, pb, Matrix(-g));
    };
  }
  return n;
}

NodePtr mul(const NodePtr& a, const NodePtr& b) {
  check_same_shape(a, b, "mul");
  auto n = make_op(a->values.cwiseProduct(b->values), "mul", {a, b});
  if (n->requires_grad) {
    NodePtr pa = a, pb = b;
    n->backprop = [pa, pb](const Matrix& g, GradFlow& flow) {
      const double c = corruption("mul");
      add_flow(flow, pa, Matrix(c * g.cwiseProduct(pb->values)));
      add_flow(flow, pb, Matrix(c * g.cwiseProduct(pa->values)));
    };
  }
  return n;
}

NodePtr scale(const NodePtr& a, double c) {
  auto n = make_op(c * a->values, "scale", {a});
  if (n->requires_grad) {
    NodePtr pa = a;
    n->backprop = [pa, c](const Matrix& g, GradFlow& flow) {
      add_flow(flow, pa, Matrix(c * g));
    };
  }
  return n;
}

NodePtr add_scalar(const NodePtr& a, double c) {
  auto n = make_op(a->values.array() + c, "add_scalar", {a});
  if (n->requires_grad) {
    NodePtr pa = a;
    n->backprop = [pa](const Matrix& g, GradFlow& flow) {
      add_flow(flow, pa, g);
    };
  }
  return n;
}

NodePtr leaky_relu(const NodePtr& a, double slope) {
  if (!(slope > 0.0 && slope < 1.0)) {
    throw ParameterError("leaky_relu: slope must be in (0,1), got " +
                         double_to_str(slope));
  }
  Matrix out = a->values.unaryExpr(
      [slope](double x) { return x >= 0.0 ? x : slope * x; });
  auto n = make_op(std::move(out), "leaky_relu", {a});
  if (n->requires_grad) {
    NodePtr pa = a;
    n->backprop = [pa, slope](const Matrix& g, GradFlow& flow) {
      const double c = corruption("leaky_relu");
      Matrix d = pa->values.unaryExpr(
          [slope](double x) { return x >= 0.0 ? 1.0 : slope; });
      add_flow(flow, pa, Matrix(c * g.cwiseProduct(d)));
    };
  }
  return n;
}

NodePtr sigmoid(const NodePtr& a) {
  Matrix out = a->values.unaryExpr([](double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  auto n = make_op(std::move(out), "sigmoid", {a});
  if (n->requires_grad) {
    NodePtr pa = a;
    Matrix s = n->values;
    n->backprop = [pa, s](const Matrix& g, GradFlow& flow) {
      const double c = corruption("sigmoid");
      Matrix d = s.cwiseProduct(Matrix(Matrix::Ones(s.rows(), s.cols()) - s));
      add_flow(flow, pa, Matrix(c * g.cwiseProduct(d)));
    };
  }
  return n;
}

NodePtr log(const NodePtr& a) {
  if ((a->values.array() <= 0.0).any()) {
    throw UsageError("log: non-positive input; clamp probabilities first");
  }
  auto n = make_op(a->values.array().log(), "log", {a});
  if (n->requires_grad) {
    NodePtr pa = a;
    n->backprop = [pa](const Matrix& g, GradFlow& flow) {
      const double c = corruption("log");
      add_flow(flow, pa, Matrix(c * g.cwiseQuotient(pa->values)));
    };
  }
  return n;
}

NodePtr clamp(const NodePtr& a, double lo, double hi) {
  if (!(lo <= hi)) throw ParameterError("clamp: lo > hi");
  Matrix out = a->values.unaryExpr(
      [lo, hi](double x) { return x < lo ? lo : (x > hi ? hi : x); });
  auto n = make_op(std::move(out), "clamp", {a});
  if (n->requires_grad) {
    NodePtr pa = a;
    n->backprop = [pa, lo, hi](const Matrix& g, GradFlow& flow) {
      Matrix d = pa->values.unaryExpr(
          [lo, hi](double x) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
      add_flow(flow, pa, Matrix(g.cwiseProduct(d)));
    };
  }
  return n;
}

NodePtr softmax_rows_t(const NodePtr& logits, double temperature) {
  if (!(temperature > 0.0)) {
    throw ParameterError("softmax: temperature must be positive, got " +
                         double_to_str(temperature));
  }
  Matrix z = logits->values / temperature;
  Matrix out(z.rows(), z.cols());
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const double m = z.row(r).maxCoeff();
    Eigen::ArrayXd e = (z.row(r).array() - m).exp();
    out.row(r) = (e / e.sum()).matrix();
  }
  auto n = make_op(std::move(out), "softmax", {logits});
  if (n->requires_grad) {
    NodePtr pa = logits;
    Matrix s = n->values;
    n->backprop = [pa, s, temperature](const Matrix& g, GradFlow& flow) {
      const double c = corruption("softmax");
      Matrix d(s.rows(), s.cols());
      for (Eigen::Index r = 0; r < s.rows(); ++r) {
        const double dot = g.row(r).dot(s.row(r));
        d.row(r) =
            s.row(r).cwiseProduct(g.row(r).array().matrix() -
                                  Matrix::Constant(1, s.cols(), dot)) /
            temperature;
      }
      add_flow(flow, pa, Matrix(c * d));
    };
  }
  return n;
}

NodePtr grad_reverse(const NodePtr& a, double lambda_rev) {
  auto n = make_op(a->values, "grad_reverse", {a});
  if (n->requires_grad) {
    NodePtr pa = a;
    n->backprop = [pa, lambda_rev](const Matrix& g, GradFlow& flow) {
      add_flow(flow, pa, Matrix(-lambda_rev * g));
    };
  }
  return n;
}

NodePtr mean(const NodePtr& a) {
  const double inv = 1.0 / static_cast<double>(a->values.size());
  Matrix out(1, 1);
  out(0, 0) = a->values.sum() * inv;
  auto n = make_op(std::move(out), "mean", {a});
  if (n->requires_grad) {
    NodePtr pa = a;
    n->backprop = [pa, inv](const Matrix& g, GradFlow& flow) {
      const double c = corruption("mean");
      add_flow(flow, pa,
               Matrix(Matrix::Constant(pa->rows(), pa->cols(),
                                       c * g(0, 0) * inv)));
    };
  }
  return n;
}

NodePtr sum(const NodePtr& a) {
  Matrix out(1, 1);
  out(0, 0) = a->values.sum();
  auto n = make_op(std::move(out), "sum", {a});
  if (n->requires_grad) {
    NodePtr pa = a;
    n->backprop = [pa](const Matrix& g, GradFlow& flow) {
      const double c = corruption("sum");
      add_flow(flow, pa,
               Matrix(Matrix::Constant(pa->rows(), pa->cols(), c * g(0, 0))));
    };
  }
  return n;
}

NodePtr sq_l2_rowdiff(const NodePtr& a, const NodePtr& b) {
  check_same_shape(a, b, "sq_l2_rowdiff");
  Matrix out = (a->values - b->values).rowwise().squaredNorm();
  auto n = make_op(std::move(out), "sq_l2_rowdiff", {a, b});
  if (n->requires_grad) {
    NodePtr pa = a, pb = b;
    n->backprop = [pa, pb](const Matrix& g, GradFlow& flow) {
      const double c = corruption("sq_l2_rowdiff");
      Matrix diff = pa->values - pb->values;
      Matrix da(diff.rows(), diff.cols());
      for (Eigen::Index r = 0; r < diff.rows(); ++r) {
        da.row(r) = c * 2.0 * g(r, 0) * diff.row(r);
      }
      add_flow(flow, pa, da);
      add_flow(flow, pb, Matrix(-da));
    };
  }
  return n;
}

NodePtr rows(const NodePtr& a, std::vector<int> indices) {
  Matrix out(static_cast<Eigen::Index>(indices.size()), a->cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int r = indices[i];
    if (r < 0 || r >= a->rows()) {
      throw UsageError("rows: index " + std::to_string(r) + " out of range");
    }
    out.row(static_cast<Eigen::Index>(i)) = a->values.row(r);
  }
  auto n = make_op(std::move(out), "rows", {a});
  if (n->requires_grad) {
    NodePtr pa = a;
    auto idx = std::move(indices);
    n->backprop = [pa, idx](const Matrix& g, GradFlow& flow) {
      Matrix da = Matrix::Zero(pa->rows(), pa->cols());
      for (std::size_t i = 0; i < idx.size(); ++i) {
        da.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
      }
      add_flow(flow, pa, da);
    };
  }
  return n;
}

NodePtr mean_rows(const NodePtr& a) {
  if (a->rows() == 0) throw UsageError("mean_rows: empty input");
  Matrix out = a->values.colwise().mean();
  auto n = make_op(std::move(out), "mean_rows", {a});
  if (n->requires_grad) {
    NodePtr pa = a;
    n->backprop = [pa](const Matrix& g, GradFlow& flow) {
      const double c = corruption("mean_rows");
      const double inv = 1.0 / static_cast<double>(pa->rows());
      Matrix da = (c * inv * g).replicate(pa->rows(), 1);
      add_flow(flow, pa, da);
    };
  }
  return n;
}

NodePtr concat_rows(const NodePtr& a, const NodePtr& b) {
  if (a->cols() != b->cols()) {
    throw DimensionError("concat_rows: column counts differ, " +
                         shape_str(a->values) + " vs " + shape_str(b->values));
  }
  Matrix out(a->rows() + b->rows(), a->cols());
  out.topRows(a->rows()) = a->values;
  out.bottomRows(b->rows()) = b->values;
  auto n = make_op(std::move(out), "concat_rows", {a, b});
  if (n->requires_grad) {
    NodePtr pa = a, pb = b;
    n->backprop = [pa, pb](const Matrix& g, GradFlow& flow) {
      add_flow(flow, pa, Matrix(g.topRows(pa->rows())));
      add_flow(flow, pb, Matrix(g.bottomRows(pb->rows())));
    };
  }
  return n;
}

void backward(const NodePtr& root) {
  if (root->rows() != 1 || root->cols() != 1) {
    throw UsageError("backward: root must be scalar (1x1), got " +
                     shape_str(root->values));
  }
  if (!root->requires_grad) return;

  // Post-order DFS over the requires_grad subgraph: every parent precedes
  // its users, so the reversed order is a reverse topological order.
  std::vector<Node*> order;
  std::unordered_set<const Node*> visited;
  struct Frame {
    Node* n;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({root.get(), 0});
  visited.insert(root.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    bool descended = false;
    while (f.next_parent < f.n->parents.size()) {
      Node* p = f.n->parents[f.next_parent++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
        descended = true;
        break;
      }
    }
    if (!descended && f.next_parent >= f.n->parents.size()) {
      order.push_back(f.n);
      stack.pop_back();
    }
  }

  GradFlow flow;
  flow.emplace(root.get(), Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    auto fit = flow.find(n);
    if (fit == flow.end()) continue;  // unreachable through grad paths
    n->accumulate_grad(fit->second);
    if (n->backprop) n->backprop(fit->second, flow);
  }
}

AdamState make_adam(const std::vector<NodePtr>& params, double lr,
                    double beta1, double beta2, double epsilon) {
  AdamState st;
  st.lr = lr;
  st.beta1 = beta1;
  st.beta2 = beta2;
  st.epsilon = epsilon;
  st.m.reserve(params.size());
  st.v.reserve(params.size());
  for (const auto& p : params) {
    st.m.push_back(Matrix::Zero(p->rows(), p->cols()));
    st.v.push_back(Matrix::Zero(p->rows(), p->cols()));
  }
  return st;
}

void adam_step(const std::vector<NodePtr>& params, AdamState& st) {
  if (params.size() != st.m.size()) {
    throw UsageError("adam_step: state was built for a different param list");
  }
  st.step_count += 1;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step_count));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step_count));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Node& p = *params[i];
    Matrix g = p.grad.size() != 0
                   ? p.grad
                   : Matrix::Zero(p.rows(), p.cols());
    st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * g;
    st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * g.cwiseProduct(g);
    Matrix m_hat = st.m[i] / bc1;
    Matrix v_hat = st.v[i] / bc2;
    p.values.array() -=
        st.lr * m_hat.array() / (v_hat.array().sqrt() + st.epsilon);
    p.zero_grad();
  }
}

void zero_grads(const std::vector<NodePtr>& params) {
  for (const auto& p : params) p->zero_grad();
}

}  // namespace jstn::ad
