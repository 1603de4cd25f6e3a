#include "ded/nn/autograd.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_set>

namespace ded::nn {

namespace {

thread_local bool g_grad_enabled = true;

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(std::string("autograd: ") + what);
}

template <class Backward>
Var make_op(Matrix value, std::initializer_list<Var> inputs, Backward&& bw) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (g_grad_enabled) {
    for (const auto& in : inputs) {
      if (in.requires_grad()) {
        node->requires_grad = true;
        break;
      }
    }
  }
  if (node->requires_grad) {
    node->inputs.reserve(inputs.size());
    for (const auto& in : inputs) node->inputs.push_back(in.node());
    node->backward_fn = std::forward<Backward>(bw);
  }
  return Var(std::move(node));
}

Var make_op_n(Matrix value, std::span<const Var> inputs, std::function<void(Node&)> bw) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (g_grad_enabled) {
    for (const auto& in : inputs) {
      if (in.requires_grad()) {
        node->requires_grad = true;
        break;
      }
    }
  }
  if (node->requires_grad) {
    for (const auto& in : inputs) node->inputs.push_back(in.node());
    node->backward_fn = std::move(bw);
  }
  return Var(std::move(node));
}

inline void push(Node& input, const Matrix& g) {
  if (input.requires_grad) input.accumulate(g);
}

template <class F, class DF>
Var unary(const Var& a, F f, DF df) {
  Matrix out = a.value().unaryExpr(f);
  return make_op(std::move(out), {a}, [df](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    Matrix g = self.grad.cwiseProduct(
        Matrix(in.value.binaryExpr(self.value, df)));
    in.accumulate(g);
  });
}

double stable_softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}
double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

void Node::accumulate(const Matrix& g) {
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Var constant(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var leaf(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Var(std::move(node));
}

void backward(const Var& root) {
  require(root.rows() == 1 && root.cols() == 1, "backward root must be 1x1");
  if (!root.requires_grad()) return;

  // Iterative post-order DFS.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward_fn && node->grad.size() != 0) node->backward_fn(*node);
  }
  // Interior gradients are not needed once propagated.
  for (Node* node : order) {
    if (node->backward_fn) node->grad.resize(0, 0);
  }
}

Var add(const Var& a, const Var& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add shape mismatch");
  return make_op(a.value() + b.value(), {a, b}, [](Node& self) {
    push(*self.inputs[0], self.grad);
    push(*self.inputs[1], self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "sub shape mismatch");
  return make_op(a.value() - b.value(), {a, b}, [](Node& self) {
    push(*self.inputs[0], self.grad);
    if (self.inputs[1]->requires_grad) self.inputs[1]->accumulate(-self.grad);
  });
}

Var mul(const Var& a, const Var& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "mul shape mismatch");
  return make_op(a.value().cwiseProduct(b.value()), {a, b}, [](Node& self) {
    Node& x = *self.inputs[0];
    Node& y = *self.inputs[1];
    if (x.requires_grad) x.accumulate(self.grad.cwiseProduct(y.value));
    if (y.requires_grad) y.accumulate(self.grad.cwiseProduct(x.value));
  });
}

Var div(const Var& a, const Var& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "div shape mismatch");
  return make_op(a.value().cwiseQuotient(b.value()), {a, b}, [](Node& self) {
    Node& x = *self.inputs[0];
    Node& y = *self.inputs[1];
    if (x.requires_grad) x.accumulate(self.grad.cwiseQuotient(y.value));
    if (y.requires_grad) {
      y.accumulate(-self.grad.cwiseProduct(self.value).cwiseQuotient(y.value));
    }
  });
}

Var matmul(const Var& a, const Var& b) {
  require(a.cols() == b.rows(), "matmul inner dimension mismatch");
  Matrix out = a.value() * b.value();
  return make_op(std::move(out), {a, b}, [](Node& self) {
    Node& x = *self.inputs[0];
    Node& y = *self.inputs[1];
    if (x.requires_grad) x.accumulate(self.grad * y.value.transpose());
    if (y.requires_grad) y.accumulate(x.value.transpose() * self.grad);
  });
}

Var add_row(const Var& a, const Var& row) {
  require(row.rows() == 1 && row.cols() == a.cols(), "add_row expects 1 x cols");
  Matrix out = a.value().rowwise() + row.value().row(0);
  return make_op(std::move(out), {a, row}, [](Node& self) {
    push(*self.inputs[0], self.grad);
    if (self.inputs[1]->requires_grad) {
      self.inputs[1]->accumulate(self.grad.colwise().sum());
    }
  });
}

Var mul_col(const Var& a, const Var& col) {
  require(col.cols() == 1 && col.rows() == a.rows(), "mul_col expects rows x 1");
  Matrix out = a.value().array().colwise() * col.value().col(0).array();
  return make_op(std::move(out), {a, col}, [](Node& self) {
    Node& x = *self.inputs[0];
    Node& c = *self.inputs[1];
    if (x.requires_grad) {
      x.accumulate(Matrix(self.grad.array().colwise() * c.value.col(0).array()));
    }
    if (c.requires_grad) {
      c.accumulate(Matrix(self.grad.cwiseProduct(x.value).rowwise().sum()));
    }
  });
}

Var scale(const Var& a, double s) {
  return make_op(a.value() * s, {a}, [s](Node& self) {
    if (self.inputs[0]->requires_grad) self.inputs[0]->accumulate(self.grad * s);
  });
}

Var add_scalar(const Var& a, double s) {
  Matrix out = a.value().array() + s;
  return make_op(std::move(out), {a}, [](Node& self) { push(*self.inputs[0], self.grad); });
}

Var sigmoid(const Var& a) {
  return unary(
      a, [](double x) { return stable_sigmoid(x); },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(const Var& a) {
  return unary(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var silu(const Var& a) {
  return unary(
      a, [](double x) { return x * stable_sigmoid(x); },
      [](double x, double) {
        const double s = stable_sigmoid(x);
        return s * (1.0 + x * (1.0 - s));
      });
}

Var softplus(const Var& a) {
  return unary(
      a, [](double x) { return stable_softplus(x); },
      [](double x, double) { return stable_sigmoid(x); });
}

Var exp(const Var& a) {
  return unary(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(const Var& a) {
  return unary(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var square(const Var& a) {
  return unary(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var log_sigmoid(const Var& a) {
  return unary(
      a, [](double x) { return -stable_softplus(-x); },
      [](double x, double) { return stable_sigmoid(-x); });
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols of nothing");
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    require(p.rows() == rows, "concat_cols row mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return make_op_n(std::move(out), parts, [](Node& self) {
    Eigen::Index at = 0;
    for (auto& in : self.inputs) {
      const Eigen::Index c = in->value.cols();
      if (in->requires_grad) in->accumulate(self.grad.middleCols(at, c));
      at += c;
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  require(!parts.empty(), "concat_rows of nothing");
  const Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    require(p.cols() == cols, "concat_rows column mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return make_op_n(std::move(out), parts, [](Node& self) {
    Eigen::Index at = 0;
    for (auto& in : self.inputs) {
      const Eigen::Index r = in->value.rows();
      if (in->requires_grad) in->accumulate(self.grad.middleRows(at, r));
      at += r;
    }
  });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.cols(), "slice_cols out of range");
  return make_op(a.value().middleCols(start, count), {a}, [start, count](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    Matrix g = Matrix::Zero(in.value.rows(), in.value.cols());
    g.middleCols(start, count) = self.grad;
    in.accumulate(g);
  });
}

Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.rows(), "slice_rows out of range");
  return make_op(a.value().middleRows(start, count), {a}, [start, count](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    if (in.grad.size() == 0) in.grad = Matrix::Zero(in.value.rows(), in.value.cols());
    in.grad.middleRows(start, count) += self.grad;
  });
}

Var gather_rows(const Var& a, std::span<const Eigen::Index> index) {
  Matrix out(static_cast<Eigen::Index>(index.size()), a.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    require(index[i] >= 0 && index[i] < a.rows(), "gather_rows index out of range");
    out.row(static_cast<Eigen::Index>(i)) = a.value().row(index[i]);
  }
  std::vector<Eigen::Index> idx(index.begin(), index.end());
  return make_op(std::move(out), {a}, [idx = std::move(idx)](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    if (in.grad.size() == 0) in.grad = Matrix::Zero(in.value.rows(), in.value.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      in.grad.row(idx[i]) += self.grad.row(static_cast<Eigen::Index>(i));
    }
  });
}

Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols) {
  require(rows * cols == a.rows() * a.cols(), "reshape size mismatch");
  Matrix out = Eigen::Map<const Matrix>(a.value().data(), rows, cols);
  return make_op(std::move(out), {a}, [](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    in.accumulate(Eigen::Map<const Matrix>(self.grad.data(), in.value.rows(), in.value.cols()));
  });
}

Var tile_rows(const Var& a, Eigen::Index times) {
  require(times >= 1, "tile_rows needs times >= 1");
  const Eigen::Index r = a.rows();
  Matrix out(r * times, a.cols());
  for (Eigen::Index t = 0; t < times; ++t) out.middleRows(t * r, r) = a.value();
  return make_op(std::move(out), {a}, [r, times](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    Matrix g = self.grad.middleRows(0, r);
    for (Eigen::Index t = 1; t < times; ++t) g += self.grad.middleRows(t * r, r);
    in.accumulate(g);
  });
}

Var tile_cols(const Var& a, Eigen::Index times) {
  require(times >= 1, "tile_cols needs times >= 1");
  const Eigen::Index c = a.cols();
  Matrix out(a.rows(), c * times);
  for (Eigen::Index t = 0; t < times; ++t) out.middleCols(t * c, c) = a.value();
  return make_op(std::move(out), {a}, [c, times](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    Matrix g = self.grad.middleCols(0, c);
    for (Eigen::Index t = 1; t < times; ++t) g += self.grad.middleCols(t * c, c);
    in.accumulate(g);
  });
}

Var sum(const Var& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return make_op(std::move(out), {a}, [](Node& self) {
    Node& in = *self.inputs[0];
    if (in.requires_grad) {
      in.accumulate(Matrix::Constant(in.value.rows(), in.value.cols(), self.grad(0, 0)));
    }
  });
}

Var mean(const Var& a) {
  const double n = static_cast<double>(a.value().size());
  require(n > 0, "mean of empty matrix");
  return scale(sum(a), 1.0 / n);
}

Var row_sum(const Var& a) {
  Matrix out = a.value().rowwise().sum();
  return make_op(std::move(out), {a}, [](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    Matrix g(in.value.rows(), in.value.cols());
    g.colwise() = self.grad.col(0);
    in.accumulate(g);
  });
}

Var block_mean_rows(const Var& a, Eigen::Index block) {
  require(block >= 1 && a.rows() % block == 0, "block_mean_rows: rows not divisible");
  const Eigen::Index groups = a.rows() / block;
  Matrix out(groups, a.cols());
  for (Eigen::Index g = 0; g < groups; ++g) {
    out.row(g) = a.value().middleRows(g * block, block).colwise().sum() / static_cast<double>(block);
  }
  return make_op(std::move(out), {a}, [block, groups](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    Matrix g(in.value.rows(), in.value.cols());
    for (Eigen::Index i = 0; i < groups; ++i) {
      g.middleRows(i * block, block).rowwise() = self.grad.row(i) / static_cast<double>(block);
    }
    in.accumulate(g);
  });
}

Var layer_norm(const Var& a, const Var& gain, const Var& bias, double eps) {
  const Eigen::Index n = a.cols();
  require(gain.rows() == 1 && gain.cols() == n && bias.rows() == 1 && bias.cols() == n,
          "layer_norm parameter shape");
  Matrix xhat(a.rows(), n);
  Eigen::VectorXd inv_sd(a.rows());
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    const double mu = a.value().row(r).mean();
    const double var = (a.value().row(r).array() - mu).square().mean();
    inv_sd(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (a.value().row(r).array() - mu) * inv_sd(r);
  }
  Matrix out = (xhat.array().rowwise() * gain.value().row(0).array()).rowwise() +
               bias.value().row(0).array();
  return make_op(std::move(out), {a, gain, bias},
                 [xhat = std::move(xhat), inv_sd = std::move(inv_sd)](Node& self) {
                   Node& x = *self.inputs[0];
                   Node& g = *self.inputs[1];
                   Node& b = *self.inputs[2];
                   if (g.requires_grad) g.accumulate(self.grad.cwiseProduct(xhat).colwise().sum());
                   if (b.requires_grad) b.accumulate(self.grad.colwise().sum());
                   if (!x.requires_grad) return;
                   Matrix dxhat = self.grad.array().rowwise() * g.value.row(0).array();
                   Matrix dx(dxhat.rows(), dxhat.cols());
                   for (Eigen::Index r = 0; r < dxhat.rows(); ++r) {
                     const double m1 = dxhat.row(r).mean();
                     const double m2 = dxhat.row(r).cwiseProduct(xhat.row(r)).mean();
                     dx.row(r) = (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2) * inv_sd(r);
                   }
                   x.accumulate(dx);
                 });
}

Var segmented_attention(const Var& q, const Var& k, const Var& v,
                        std::span<const Segment> q_segments,
                        std::span<const Segment> kv_segments, int heads) {
  require(heads >= 1, "attention needs at least one head");
  require(q_segments.size() == kv_segments.size(), "attention segment count mismatch");
  require(q.cols() == k.cols(), "attention query/key width mismatch");
  require(k.rows() == v.rows(), "attention key/value row mismatch");
  require(q.cols() % heads == 0 && v.cols() % heads == 0, "attention width not divisible by heads");
  const Eigen::Index dk = q.cols() / heads;
  const Eigen::Index dv = v.cols() / heads;
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));

  Matrix out = Matrix::Zero(q.rows(), v.cols());
  std::vector<Matrix> probs;
  probs.reserve(q_segments.size() * static_cast<std::size_t>(heads));
  for (std::size_t s = 0; s < q_segments.size(); ++s) {
    const Segment qs = q_segments[s];
    const Segment ks = kv_segments[s];
    require(qs.start >= 0 && qs.start + qs.length <= q.rows(), "query segment out of range");
    require(ks.start >= 0 && ks.start + ks.length <= k.rows() && ks.length >= 1,
            "key segment out of range");
    for (int h = 0; h < heads; ++h) {
      const auto qh = q.value().block(qs.start, h * dk, qs.length, dk);
      const auto kh = k.value().block(ks.start, h * dk, ks.length, dk);
      const auto vh = v.value().block(ks.start, h * dv, ks.length, dv);
      Matrix p = (qh * kh.transpose()) * inv_sqrt_dk;
      for (Eigen::Index r = 0; r < p.rows(); ++r) {
        const double m = p.row(r).maxCoeff();
        p.row(r) = (p.row(r).array() - m).exp();
        p.row(r) /= p.row(r).sum();
      }
      out.block(qs.start, h * dv, qs.length, dv).noalias() = p * vh;
      probs.push_back(std::move(p));
    }
  }

  std::vector<Segment> qseg(q_segments.begin(), q_segments.end());
  std::vector<Segment> kseg(kv_segments.begin(), kv_segments.end());
  return make_op(std::move(out), {q, k, v},
                 [probs = std::move(probs), qseg = std::move(qseg), kseg = std::move(kseg), heads,
                  dk, dv, inv_sqrt_dk](Node& self) {
                   Node& qn = *self.inputs[0];
                   Node& kn = *self.inputs[1];
                   Node& vn = *self.inputs[2];
                   Matrix dq = Matrix::Zero(qn.value.rows(), qn.value.cols());
                   Matrix dkm = Matrix::Zero(kn.value.rows(), kn.value.cols());
                   Matrix dvm = Matrix::Zero(vn.value.rows(), vn.value.cols());
                   std::size_t idx = 0;
                   for (std::size_t s = 0; s < qseg.size(); ++s) {
                     const Segment qs = qseg[s];
                     const Segment ks = kseg[s];
                     for (int h = 0; h < heads; ++h, ++idx) {
                       const Matrix& p = probs[idx];
                       const auto go = self.grad.block(qs.start, h * dv, qs.length, dv);
                       const auto qh = qn.value.block(qs.start, h * dk, qs.length, dk);
                       const auto kh = kn.value.block(ks.start, h * dk, ks.length, dk);
                       const auto vh = vn.value.block(ks.start, h * dv, ks.length, dv);
                       dvm.block(ks.start, h * dv, ks.length, dv).noalias() += p.transpose() * go;
                       Matrix dp = go * vh.transpose();
                       Eigen::VectorXd rowdot = dp.cwiseProduct(p).rowwise().sum();
                       Matrix ds = p.cwiseProduct(Matrix(dp.colwise() - rowdot)) * inv_sqrt_dk;
                       dq.block(qs.start, h * dk, qs.length, dk).noalias() += ds * kh;
                       dkm.block(ks.start, h * dk, ks.length, dk).noalias() += ds.transpose() * qh;
                     }
                   }
                   if (qn.requires_grad) qn.accumulate(dq);
                   if (kn.requires_grad) kn.accumulate(dkm);
                   if (vn.requires_grad) vn.accumulate(dvm);
                 });
}

Var neighbor_mean(const Var& a, const std::vector<std::vector<Eigen::Index>>& neighbors) {
  require(static_cast<Eigen::Index>(neighbors.size()) == a.rows(), "neighbor list size mismatch");
  Matrix out = Matrix::Zero(a.rows(), a.cols());
  std::vector<double> addends;
  for (Eigen::Index n = 0; n < a.rows(); ++n) {
    const auto& nb = neighbors[static_cast<std::size_t>(n)];
    if (nb.empty()) continue;
    for (Eigen::Index m : nb) require(m >= 0 && m < a.rows() && m != n, "bad neighbor index");
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
      addends.clear();
      for (Eigen::Index m : nb) addends.push_back(a.value()(m, c));
      std::sort(addends.begin(), addends.end());
      double acc = 0.0;
      for (double x : addends) acc += x;
      out(n, c) = acc / static_cast<double>(nb.size());
    }
  }
  return make_op(std::move(out), {a}, [neighbors](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    Matrix g = Matrix::Zero(in.value.rows(), in.value.cols());
    for (std::size_t n = 0; n < neighbors.size(); ++n) {
      const auto& nb = neighbors[n];
      if (nb.empty()) continue;
      const double w = 1.0 / static_cast<double>(nb.size());
      for (Eigen::Index m : nb) g.row(m) += self.grad.row(static_cast<Eigen::Index>(n)) * w;
    }
    in.accumulate(g);
  });
}

}  // namespace ded::nn
