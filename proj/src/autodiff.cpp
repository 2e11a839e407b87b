#include "mcvit/autodiff.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <unordered_set>

namespace mcvit::ad {

namespace {

thread_local bool g_grad_enabled = true;

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
}

template <typename Expr>
void accumulate(Node& target, const Expr& g) {
  if (!target.requires_grad) return;
  if (target.grad.size() == 0)
    target.grad = g;
  else
    target.grad += g;
}

Var make(Matrix value, std::vector<std::shared_ptr<Node>> parents,
         std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  bool needs = false;
  if (g_grad_enabled)
    for (const auto& p : parents) needs = needs || p->requires_grad;
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward = std::move(backward_fn);
  }
  return Var(std::move(node));
}

}  // namespace

Var Var::leaf(Matrix value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return Var(std::move(node));
}

double Var::item() const {
  if (rows() != 1 || cols() != 1) throw ShapeError("item() on a non-scalar");
  return value()(0, 0);
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

void backward(const Var& loss) {
  if (loss.rows() != 1 || loss.cols() != 1)
    throw ShapeError("backward requires a scalar (1x1) root");
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  accumulate(*loss.node(), Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && node->grad.size() != 0) node->backward(*node);
  }
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: inner dimensions differ (" + std::to_string(a.cols()) + " vs " +
                     std::to_string(b.rows()) + ")");
  return make(a.value() * b.value(), {a.node(), b.node()}, [](Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) accumulate(pa, self.grad * pb.value.transpose());
    if (pb.requires_grad) accumulate(pb, pa.value.transpose() * self.grad);
  });
}

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  return make(a.value() + b.value(), {a.node(), b.node()}, [](Node& self) {
    accumulate(*self.parents[0], self.grad);
    accumulate(*self.parents[1], self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  return make(a.value() - b.value(), {a.node(), b.node()}, [](Node& self) {
    accumulate(*self.parents[0], self.grad);
    accumulate(*self.parents[1], -self.grad);
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  return make(a.value().cwiseProduct(b.value()), {a.node(), b.node()}, [](Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    accumulate(pa, self.grad.cwiseProduct(pb.value));
    accumulate(pb, self.grad.cwiseProduct(pa.value));
  });
}

Var scale(const Var& a, double s) {
  return make(a.value() * s, {a.node()},
              [s](Node& self) { accumulate(*self.parents[0], self.grad * s); });
}

Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw ShapeError("add_row: bias must be 1 x cols");
  Matrix out = a.value().rowwise() + row.value().row(0);
  return make(std::move(out), {a.node(), row.node()}, [](Node& self) {
    accumulate(*self.parents[0], self.grad);
    accumulate(*self.parents[1], self.grad.colwise().sum());
  });
}

Var transpose(const Var& a) {
  return make(a.value().transpose(), {a.node()},
              [](Node& self) { accumulate(*self.parents[0], self.grad.transpose()); });
}

Var sum(const Var& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return make(std::move(out), {a.node()}, [](Node& self) {
    auto& p = *self.parents[0];
    accumulate(p, Matrix::Constant(p.value.rows(), p.value.cols(), self.grad(0, 0)));
  });
}

Var row_sums(const Var& a) {
  return make(a.value().rowwise().sum(), {a.node()}, [](Node& self) {
    auto& p = *self.parents[0];
    accumulate(p, self.grad.replicate(1, p.value.cols()));
  });
}

Var mean_rows(const Var& a) {
  if (a.rows() == 0) throw ShapeError("mean_rows of an empty matrix");
  return make(a.value().colwise().mean(), {a.node()}, [](Node& self) {
    auto& p = *self.parents[0];
    const double inv = 1.0 / static_cast<double>(p.value.rows());
    accumulate(p, (self.grad * inv).replicate(p.value.rows(), 1));
  });
}

Var softmax_rows(const Var& a) {
  return make(mcvit::softmax_rows(a.value()), {a.node()}, [](Node& self) {
    const Matrix& y = self.value;
    const Eigen::VectorXd dot = y.cwiseProduct(self.grad).rowwise().sum();
    Matrix g = self.grad;
    g.colwise() -= dot;
    accumulate(*self.parents[0], y.cwiseProduct(g));
  });
}

Var log_softmax_rows(const Var& a) {
  return make(mcvit::log_softmax_rows(a.value()), {a.node()}, [](Node& self) {
    const Matrix p = self.value.array().exp().matrix();
    const Eigen::VectorXd total = self.grad.rowwise().sum();
    Matrix g = self.grad;
    for (Index i = 0; i < g.rows(); ++i) g.row(i) -= total(i) * p.row(i);
    accumulate(*self.parents[0], g);
  });
}

Var layer_norm(const Var& x, const Var& scale_row, const Var& bias_row, double eps) {
  const Index d = x.cols();
  if (scale_row.rows() != 1 || scale_row.cols() != d || bias_row.rows() != 1 || bias_row.cols() != d)
    throw ShapeError("layer_norm: scale/bias must be 1 x d");
  Matrix xhat(x.rows(), d);
  Eigen::VectorXd inv_std(x.rows());
  for (Index i = 0; i < x.rows(); ++i) {
    const double mean = x.value().row(i).mean();
    const auto centered = (x.value().row(i).array() - mean).eval();
    inv_std(i) = 1.0 / std::sqrt(centered.square().mean() + eps);
    xhat.row(i) = (centered * inv_std(i)).matrix();
  }
  Matrix out = (xhat.array().rowwise() * scale_row.value().row(0).array()).matrix();
  out.rowwise() += bias_row.value().row(0);
  return make(std::move(out), {x.node(), scale_row.node(), bias_row.node()},
              [xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                auto& px = *self.parents[0];
                auto& ps = *self.parents[1];
                auto& pb = *self.parents[2];
                accumulate(ps, self.grad.cwiseProduct(xhat).colwise().sum());
                accumulate(pb, self.grad.colwise().sum());
                if (!px.requires_grad) return;
                const Matrix dxhat = (self.grad.array().rowwise() * ps.value.row(0).array()).matrix();
                const double n = static_cast<double>(xhat.cols());
                Matrix dx(xhat.rows(), xhat.cols());
                for (Index i = 0; i < xhat.rows(); ++i) {
                  const double mean_g = dxhat.row(i).sum() / n;
                  const double mean_gx = dxhat.row(i).dot(xhat.row(i)) / n;
                  dx.row(i) = inv_std(i) *
                              (dxhat.row(i).array() - mean_g - xhat.row(i).array() * mean_gx).matrix();
                }
                accumulate(px, dx);
              });
}

Var gelu(const Var& a) {
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  Matrix out = a.value().unaryExpr(
      [](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); });
  return make(std::move(out), {a.node()}, [](Node& self) {
    auto& p = *self.parents[0];
    const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
    const Matrix d = p.value.unaryExpr([inv_sqrt_2pi](double x) {
      return 0.5 * (1.0 + std::erf(x * inv_sqrt2)) + x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
    });
    accumulate(p, self.grad.cwiseProduct(d));
  });
}

Var l2_normalize_rows(const Var& a, double eps) {
  Eigen::VectorXd norms = a.value().rowwise().norm().cwiseMax(eps);
  Matrix out = a.value();
  for (Index i = 0; i < out.rows(); ++i) out.row(i) /= norms(i);
  return make(std::move(out), {a.node()}, [norms = std::move(norms)](Node& self) {
    const Matrix& y = self.value;
    Matrix g = self.grad;
    for (Index i = 0; i < g.rows(); ++i) {
      const double proj = y.row(i).dot(g.row(i));
      g.row(i) = (g.row(i) - proj * y.row(i)) / norms(i);
    }
    accumulate(*self.parents[0], g);
  });
}

Var slice_rows(const Var& a, Index begin, Index count) {
  if (begin < 0 || count < 0 || begin + count > a.rows()) throw ShapeError("slice_rows out of range");
  return make(a.value().middleRows(begin, count), {a.node()}, [begin, count](Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
    g.middleRows(begin, count) = self.grad;
    accumulate(p, g);
  });
}

Var slice_cols(const Var& a, Index begin, Index count) {
  if (begin < 0 || count < 0 || begin + count > a.cols()) throw ShapeError("slice_cols out of range");
  return make(a.value().middleCols(begin, count), {a.node()}, [begin, count](Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
    g.middleCols(begin, count) = self.grad;
    accumulate(p, g);
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows of nothing");
  Index rows = 0;
  const Index cols = parts.front().cols();
  for (const auto& p : parts) {
    if (p.cols() != cols) throw ShapeError("concat_rows: column counts differ");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<std::shared_ptr<Node>> parents;
  Index offset = 0;
  for (const auto& p : parts) {
    out.middleRows(offset, p.rows()) = p.value();
    offset += p.rows();
    parents.push_back(p.node());
  }
  return make(std::move(out), std::move(parents), [](Node& self) {
    Index off = 0;
    for (auto& p : self.parents) {
      const Index r = p->value.rows();
      accumulate(*p, self.grad.middleRows(off, r));
      off += r;
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols of nothing");
  Index cols = 0;
  const Index rows = parts.front().rows();
  for (const auto& p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_cols: row counts differ");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<std::shared_ptr<Node>> parents;
  Index offset = 0;
  for (const auto& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
    parents.push_back(p.node());
  }
  return make(std::move(out), std::move(parents), [](Node& self) {
    Index off = 0;
    for (auto& p : self.parents) {
      const Index c = p->value.cols();
      accumulate(*p, self.grad.middleCols(off, c));
      off += c;
    }
  });
}

Var gather_rows(const Var& a, std::span<const Index> rows) {
  Matrix out(static_cast<Index>(rows.size()), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= a.rows()) throw ShapeError("gather_rows index out of range");
    out.row(static_cast<Index>(i)) = a.value().row(rows[i]);
  }
  return make(std::move(out), {a.node()},
              [idx = std::vector<Index>(rows.begin(), rows.end())](Node& self) {
                auto& p = *self.parents[0];
                if (!p.requires_grad) return;
                Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
                for (std::size_t i = 0; i < idx.size(); ++i) g.row(idx[i]) += self.grad.row(static_cast<Index>(i));
                accumulate(p, g);
              });
}

Var mix_rows(const Matrix& weights, const Var& a, Matrix value) {
  if (weights.cols() != a.rows() || value.rows() != weights.rows() || value.cols() != a.cols())
    throw ShapeError("mix_rows: shape mismatch");
  return make(std::move(value), {a.node()}, [weights](Node& self) {
    accumulate(*self.parents[0], weights.transpose() * self.grad);
  });
}

Var detach(const Var& a) { return Var::constant(a.value()); }

}  // namespace mcvit::ad
