#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rewire/dense.hpp"

namespace rewire::ad {

/// Handle into a Tape. Cheap to copy; valid only for the tape it came from.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Reverse-mode tape over dense Eigen matrices. Nodes are created in forward
/// order; backward() replays them in reverse. Column vectors are 1-column
/// matrices, scalars are 1x1.
///
/// The op set is intentionally small: linear algebra plus the gather/scatter
/// primitives message passing needs. Every op validates shapes and throws
/// std::invalid_argument on mismatch.
template <typename Scalar>
class Tape {
 public:
  using Mat = DenseMatrix<Scalar>;

  /// Owned leaf. Gradients accumulate only when requires_grad is set.
  Var leaf(Mat value, bool requires_grad) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    return push(std::move(n));
  }

  /// Borrowed leaf: the tape stores only a pointer, so large constant inputs
  /// (feature matrices) are never copied. Caller keeps the matrix alive.
  Var leaf_ref(const Mat* value) {
    Node n;
    n.borrowed = value;
    n.requires_grad = false;
    return push(std::move(n));
  }

  Var constant(Mat value) { return leaf(std::move(value), false); }

  const Mat& value(Var v) const {
    const Node& n = node(v);
    return n.borrowed != nullptr ? *n.borrowed : n.value;
  }

  const Mat& grad(Var v) const {
    const Node& n = node(v);
    if (!n.requires_grad) throw std::logic_error("ad: grad of non-grad node");
    return n.grad;
  }

  /// Seeds d(root)/d(root) = 1 and accumulates gradients into every
  /// requires_grad node reachable from it. root must be 1x1.
  void backward(Var root) {
    Node& r = node(root);
    if (value(root).rows() != 1 || value(root).cols() != 1) {
      throw std::invalid_argument("ad::backward: root must be a 1x1 scalar");
    }
    if (!r.requires_grad) {
      throw std::logic_error("ad::backward: root does not require gradients");
    }
    r.grad(0, 0) = Scalar(1);
    for (int i = root.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.requires_grad && n.backprop) n.backprop(*this);
    }
  }

  std::size_t size() const { return nodes_.size(); }

  // --- ops -----------------------------------------------------------------

  Var matmul(Var a, Var b) {
    const Mat& av = value(a);
    const Mat& bv = value(b);
    if (av.cols() != bv.rows()) {
      fail("matmul", av, bv);
    }
    Node n;
    n.value.noalias() = av * bv;
    return unary_or_binary(std::move(n), a, b, [a, b](Tape& t, const Mat& g) {
      if (t.node(a).requires_grad) t.node(a).grad.noalias() += g * t.value(b).transpose();
      if (t.node(b).requires_grad) t.node(b).grad.noalias() += t.value(a).transpose() * g;
    });
  }

  Var add(Var a, Var b) {
    check_same_shape("add", a, b);
    Node n;
    n.value = value(a) + value(b);
    return unary_or_binary(std::move(n), a, b, [a, b](Tape& t, const Mat& g) {
      if (t.node(a).requires_grad) t.node(a).grad += g;
      if (t.node(b).requires_grad) t.node(b).grad += g;
    });
  }

  Var sub(Var a, Var b) {
    check_same_shape("sub", a, b);
    Node n;
    n.value = value(a) - value(b);
    return unary_or_binary(std::move(n), a, b, [a, b](Tape& t, const Mat& g) {
      if (t.node(a).requires_grad) t.node(a).grad += g;
      if (t.node(b).requires_grad) t.node(b).grad -= g;
    });
  }

  /// Elementwise product.
  Var cmul(Var a, Var b) {
    check_same_shape("cmul", a, b);
    Node n;
    n.value = value(a).cwiseProduct(value(b));
    return unary_or_binary(std::move(n), a, b, [a, b](Tape& t, const Mat& g) {
      if (t.node(a).requires_grad) t.node(a).grad += g.cwiseProduct(t.value(b));
      if (t.node(b).requires_grad) t.node(b).grad += g.cwiseProduct(t.value(a));
    });
  }

  Var scale(Var a, Scalar alpha) {
    Node n;
    n.value = value(a) * alpha;
    return unary(std::move(n), a, [a, alpha](Tape& t, const Mat& g) {
      t.node(a).grad += g * alpha;
    });
  }

  Var add_scalar(Var a, Scalar alpha) {
    Node n;
    n.value = (value(a).array() + alpha).matrix();
    return unary(std::move(n), a, [a](Tape& t, const Mat& g) { t.node(a).grad += g; });
  }

  /// Adds a 1-row matrix to every row of m.
  Var add_row_broadcast(Var m, Var row) {
    const Mat& mv = value(m);
    const Mat& rv = value(row);
    if (rv.rows() != 1 || rv.cols() != mv.cols()) fail("add_row_broadcast", mv, rv);
    Node n;
    n.value = mv.rowwise() + rv.row(0);
    return unary_or_binary(std::move(n), m, row, [m, row](Tape& t, const Mat& g) {
      if (t.node(m).requires_grad) t.node(m).grad += g;
      if (t.node(row).requires_grad) t.node(row).grad.row(0) += g.colwise().sum();
    });
  }

  /// Multiplies row i of m by v(i). v must be a column vector with
  /// m.rows() entries.
  Var scale_rows(Var m, Var v) {
    const Mat& mv = value(m);
    const Mat& vv = value(v);
    if (vv.cols() != 1 || vv.rows() != mv.rows()) fail("scale_rows", mv, vv);
    Node n;
    n.value = vv.col(0).asDiagonal() * mv;
    return unary_or_binary(std::move(n), m, v, [m, v](Tape& t, const Mat& g) {
      if (t.node(m).requires_grad) {
        t.node(m).grad += t.value(v).col(0).asDiagonal() * g;
      }
      if (t.node(v).requires_grad) {
        t.node(v).grad.col(0) += g.cwiseProduct(t.value(m)).rowwise().sum();
      }
    });
  }

  /// out.row(k) = m.row(index[k]).
  Var gather_rows(Var m, std::vector<int> index) {
    const Mat& mv = value(m);
    for (int i : index) check_row(mv, i, "gather_rows");
    Node n;
    n.value.resize(static_cast<Eigen::Index>(index.size()), mv.cols());
    for (std::size_t k = 0; k < index.size(); ++k) {
      n.value.row(static_cast<Eigen::Index>(k)) = mv.row(index[k]);
    }
    auto idx = std::make_shared<std::vector<int>>(std::move(index));
    return unary(std::move(n), m, [m, idx](Tape& t, const Mat& g) {
      Mat& dm = t.node(m).grad;
      for (std::size_t k = 0; k < idx->size(); ++k) {
        dm.row((*idx)[k]) += g.row(static_cast<Eigen::Index>(k));
      }
    });
  }

  /// out has num_rows rows; out.row(index[k]) += m.row(k).
  Var scatter_add_rows(Var m, std::vector<int> index, int num_rows) {
    const Mat& mv = value(m);
    if (static_cast<Eigen::Index>(index.size()) != mv.rows()) {
      throw std::invalid_argument("ad::scatter_add_rows: index size != rows");
    }
    Node n;
    n.value = Mat::Zero(num_rows, mv.cols());
    for (std::size_t k = 0; k < index.size(); ++k) {
      check_row(n.value, index[k], "scatter_add_rows");
      n.value.row(index[k]) += mv.row(static_cast<Eigen::Index>(k));
    }
    auto idx = std::make_shared<std::vector<int>>(std::move(index));
    return unary(std::move(n), m, [m, idx](Tape& t, const Mat& g) {
      Mat& dm = t.node(m).grad;
      for (std::size_t k = 0; k < idx->size(); ++k) {
        dm.row(static_cast<Eigen::Index>(k)) += g.row((*idx)[k]);
      }
    });
  }

  Var relu(Var a) {
    Node n;
    n.value = value(a).cwiseMax(Scalar(0));
    return unary(std::move(n), a, [a, out = next_id()](Tape& t, const Mat& g) {
      const Mat& y = t.value(Var{out});
      t.node(a).grad += g.cwiseProduct((y.array() > Scalar(0)).template cast<Scalar>().matrix());
    });
  }

  Var leaky_relu(Var a, Scalar slope) {
    Node n;
    const Mat& av = value(a);
    n.value = av.unaryExpr([slope](Scalar x) { return rewire::leaky_relu(x, slope); });
    return unary(std::move(n), a, [a, slope](Tape& t, const Mat& g) {
      const Mat& x = t.value(a);
      t.node(a).grad += g.cwiseProduct(
          x.unaryExpr([slope](Scalar v) { return v > Scalar(0) ? Scalar(1) : slope; }));
    });
  }

  Var elu(Var a) {
    Node n;
    n.value = value(a).unaryExpr([](Scalar x) { return rewire::elu(x); });
    return unary(std::move(n), a, [a, out = next_id()](Tape& t, const Mat& g) {
      const Mat& y = t.value(Var{out});
      t.node(a).grad += g.cwiseProduct(y.unaryExpr(
          [](Scalar v) { return v > Scalar(0) ? Scalar(1) : v + Scalar(1); }));
    });
  }

  Var sigmoid(Var a) {
    Node n;
    n.value = value(a).unaryExpr([](Scalar x) { return rewire::sigmoid(x); });
    return unary(std::move(n), a, [a, out = next_id()](Tape& t, const Mat& g) {
      const Mat& s = t.value(Var{out});
      t.node(a).grad += g.cwiseProduct(
          s.cwiseProduct((Mat::Ones(s.rows(), s.cols()) - s)));
    });
  }

  Var exp(Var a) {
    Node n;
    n.value = value(a).array().exp().matrix();
    return unary(std::move(n), a, [a, out = next_id()](Tape& t, const Mat& g) {
      t.node(a).grad += g.cwiseProduct(t.value(Var{out}));
    });
  }

  /// x^(-1/2); inputs must be positive.
  Var rsqrt(Var a) {
    Node n;
    n.value = value(a).array().rsqrt().matrix();
    return unary(std::move(n), a, [a, out = next_id()](Tape& t, const Mat& g) {
      const Mat& y = t.value(Var{out});
      t.node(a).grad -= Scalar(0.5) * g.cwiseProduct(y.array().cube().matrix());
    });
  }

  /// 1/x where x > 0, exactly 0 elsewhere. Keeps aggregation well-defined for
  /// nodes whose incident weights have all been zeroed (or deleted).
  Var reciprocal_or_zero(Var a) {
    Node n;
    n.value = value(a).unaryExpr(
        [](Scalar x) { return x > Scalar(0) ? Scalar(1) / x : Scalar(0); });
    return unary(std::move(n), a, [a, out = next_id()](Tape& t, const Mat& g) {
      const Mat& y = t.value(Var{out});
      t.node(a).grad -= g.cwiseProduct(y.array().square().matrix());
    });
  }

  /// Sum of all entries as a 1x1 scalar.
  Var sum(Var a) {
    Node n;
    n.value = Mat::Constant(1, 1, value(a).sum());
    return unary(std::move(n), a, [a](Tape& t, const Mat& g) {
      t.node(a).grad.array() += g(0, 0);
    });
  }

  /// Sum of elementwise Bernoulli entropies -p ln p - (1-p) ln(1-p).
  /// Inputs are clamped away from {0,1} before the logs.
  Var bernoulli_entropy_sum(Var a) {
    static constexpr Scalar kEps = Scalar(1e-12);
    const Mat& p = value(a);
    Scalar total = 0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      const Scalar q = std::min(std::max(p(i), kEps), Scalar(1) - kEps);
      total += -q * std::log(q) - (Scalar(1) - q) * std::log(Scalar(1) - q);
    }
    Node n;
    n.value = Mat::Constant(1, 1, total);
    return unary(std::move(n), a, [a](Tape& t, const Mat& g) {
      const Mat& p2 = t.value(a);
      Mat d(p2.rows(), p2.cols());
      for (Eigen::Index i = 0; i < p2.size(); ++i) {
        const Scalar q = std::min(std::max(p2(i), kEps), Scalar(1) - kEps);
        d(i) = std::log((Scalar(1) - q) / q);
      }
      t.node(a).grad += g(0, 0) * d;
    });
  }

  /// Mean cross-entropy of logits against integer labels over the given rows.
  /// Row-wise log-sum-exp is max-shifted for stability.
  Var masked_cross_entropy(Var logits, std::vector<int> labels, std::vector<int> rows) {
    if (rows.empty()) {
      throw std::invalid_argument("ad::masked_cross_entropy: empty row selection");
    }
    const Mat& z = value(logits);
    Scalar total = 0;
    for (int r : rows) {
      check_row(z, r, "masked_cross_entropy");
      const int y = labels[static_cast<std::size_t>(r)];
      if (y < 0 || y >= z.cols()) {
        throw std::invalid_argument("ad::masked_cross_entropy: label out of range");
      }
      const Scalar m = z.row(r).maxCoeff();
      const Scalar lse = m + std::log((z.row(r).array() - m).exp().sum());
      total += lse - z(r, y);
    }
    Node n;
    n.value = Mat::Constant(1, 1, total / static_cast<Scalar>(rows.size()));
    auto lab = std::make_shared<std::vector<int>>(std::move(labels));
    auto sel = std::make_shared<std::vector<int>>(std::move(rows));
    return unary(std::move(n), logits, [logits, lab, sel](Tape& t, const Mat& g) {
      const Mat& z2 = t.value(logits);
      Mat& dz = t.node(logits).grad;
      const Scalar w = g(0, 0) / static_cast<Scalar>(sel->size());
      for (int r : *sel) {
        const Scalar m = z2.row(r).maxCoeff();
        DenseVector<Scalar> p = (z2.row(r).array() - m).exp().transpose();
        p /= p.sum();
        dz.row(r) += w * p.transpose();
        dz(r, (*lab)[static_cast<std::size_t>(r)]) -= w;
      }
    });
  }

 private:
  struct Node {
    Mat value;
    const Mat* borrowed = nullptr;
    Mat grad;
    bool requires_grad = false;
    std::function<void(Tape&)> backprop;
  };

  int next_id() const { return static_cast<int>(nodes_.size()); }

  Var push(Node n) {
    if (n.requires_grad) {
      const Mat& v = n.borrowed != nullptr ? *n.borrowed : n.value;
      n.grad = Mat::Zero(v.rows(), v.cols());
    }
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  Node& node(Var v) {
    if (!v.valid() || v.id >= static_cast<int>(nodes_.size())) {
      throw std::logic_error("ad: invalid Var handle");
    }
    return nodes_[static_cast<std::size_t>(v.id)];
  }
  const Node& node(Var v) const {
    return const_cast<Tape*>(this)->node(v);
  }

  template <typename Fn>
  Var unary(Node n, Var a, Fn&& fn) {
    n.requires_grad = node(a).requires_grad;
    if (n.requires_grad) {
      n.backprop = [a, out = next_id(), f = std::forward<Fn>(fn)](Tape& t) {
        f(t, t.node(Var{out}).grad);
      };
    }
    return push(std::move(n));
  }

  template <typename Fn>
  Var unary_or_binary(Node n, Var a, Var b, Fn&& fn) {
    n.requires_grad = node(a).requires_grad || node(b).requires_grad;
    if (n.requires_grad) {
      n.backprop = [out = next_id(), f = std::forward<Fn>(fn)](Tape& t) {
        f(t, t.node(Var{out}).grad);
      };
    }
    return push(std::move(n));
  }

  static void check_row(const Mat& m, int r, const char* op) {
    if (r < 0 || r >= m.rows()) {
      throw std::invalid_argument(std::string("ad::") + op + ": row index out of range");
    }
  }

  void check_same_shape(const char* op, Var a, Var b) const {
    const Mat& av = value(a);
    const Mat& bv = value(b);
    if (av.rows() != bv.rows() || av.cols() != bv.cols()) fail(op, av, bv);
  }

  [[noreturn]] static void fail(const char* op, const Mat& a, const Mat& b) {
    std::ostringstream os;
    os << "ad::" << op << ": shape mismatch " << a.rows() << "x" << a.cols()
       << " vs " << b.rows() << "x" << b.cols();
    throw std::invalid_argument(os.str());
  }

  std::vector<Node> nodes_;
};

using Taped = Tape<double>;

}  // namespace rewire::ad
