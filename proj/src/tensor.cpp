#include "lmot/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace lmot {

namespace {

std::atomic<std::int64_t> g_next_node_id{1};
thread_local bool g_grad_enabled = true;

std::string dims(const Eigen::MatrixXd& m) {
  std::ostringstream os;
  os << "(" << m.rows() << "," << m.cols() << ")";
  return os.str();
}

[[noreturn]] void throw_shape(const std::string& op, const Eigen::MatrixXd& a,
                              const Eigen::MatrixXd& b) {
  throw ShapeMismatch(op + ": " + dims(a) + " vs " + dims(b));
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

void detail::Node::accumulate(const Eigen::MatrixXd& g) {
  if (grad.size() == 0) grad = Eigen::MatrixXd::Zero(value.rows(), value.cols());
  grad += g;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Tensor Tensor::leaf(Eigen::MatrixXd v, int rank, bool requires_grad) {
  if (rank < 0 || rank > 2) throw ShapeMismatch("leaf rank must be 0, 1 or 2");
  if (rank == 0 && v.size() != 1) throw ShapeMismatch("rank-0 leaf must hold one element");
  if (rank == 1 && v.rows() != 1) throw ShapeMismatch("rank-1 leaf must be a single row");
  auto n = std::make_shared<detail::Node>();
  n->id = g_next_node_id.fetch_add(1, std::memory_order_relaxed);
  n->rank = rank;
  n->value = std::move(v);
  n->requires_grad = requires_grad;
  n->needs_grad = requires_grad;
  Tensor t;
  t.node_ = std::move(n);
  return t;
}

Tensor Tensor::matrix(Eigen::MatrixXd v, bool requires_grad) {
  return leaf(std::move(v), 2, requires_grad);
}

Tensor Tensor::row(Eigen::RowVectorXd v, bool requires_grad) {
  return leaf(Eigen::MatrixXd(v), 1, requires_grad);
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  Eigen::MatrixXd m(1, 1);
  m(0, 0) = v;
  return leaf(std::move(m), 0, requires_grad);
}

const Eigen::MatrixXd& Tensor::value() const { return node_->value; }

Eigen::MatrixXd& Tensor::mutable_value() {
  if (!node_->inputs.empty())
    throw std::logic_error("mutable_value is only valid on leaf tensors");
  return node_->value;
}

bool Tensor::has_grad() const { return node_ && node_->grad.size() != 0; }

const Eigen::MatrixXd& Tensor::grad() const {
  if (!has_grad()) throw std::logic_error("tensor has no accumulated gradient");
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) node_->grad.resize(0, 0);
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }
int Tensor::rank() const { return node_->rank; }

Shape Tensor::shape() const {
  switch (node_->rank) {
    case 0:
      return {};
    case 1:
      return {node_->value.cols()};
    default:
      return {node_->value.rows(), node_->value.cols()};
  }
}

Eigen::Index Tensor::rows() const { return node_->value.rows(); }
Eigen::Index Tensor::cols() const { return node_->value.cols(); }
Eigen::Index Tensor::size() const { return node_->value.size(); }
std::int64_t Tensor::node_id() const { return node_->id; }

std::vector<double> Tensor::flat() const {
  const Eigen::MatrixXd& v = node_->value;
  std::vector<double> out(static_cast<size_t>(v.size()));
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < v.rows(); ++i)
    for (Eigen::Index j = 0; j < v.cols(); ++j) out[static_cast<size_t>(k++)] = v(i, j);
  return out;
}

namespace {

// Builds an op node. `backward_fn` receives the finished node and must add
// into each input's grad via Node::accumulate.
Tensor op(int rank, Eigen::MatrixXd value, const std::vector<Tensor>& inputs,
          std::function<void(detail::Node&)> backward_fn) {
  Tensor out = Tensor::leaf(std::move(value), rank, false);
  auto n = out.node();
  if (g_grad_enabled) {
    for (const auto& t : inputs) {
      if (t.node() && t.node()->needs_grad) {
        n->needs_grad = true;
        break;
      }
    }
    if (n->needs_grad) {
      for (const auto& t : inputs) n->inputs.push_back(t.node());
      n->backward_fn = std::move(backward_fn);
    }
  }
  return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) throw_shape("matmul", a.value(), b.value());
  const int rank = (a.rank() == 1 && b.rank() == 2) ? 1 : 2;
  Eigen::MatrixXd v = a.value() * b.value();
  return op(rank, std::move(v), {a, b}, [](detail::Node& n) {
    auto& A = *n.inputs[0];
    auto& B = *n.inputs[1];
    if (A.needs_grad) A.accumulate(n.grad * B.value.transpose());
    if (B.needs_grad) B.accumulate(A.value.transpose() * n.grad);
  });
}

namespace {

enum class Bcast { kNone, kARow, kBRow, kAScalar, kBScalar };

Bcast broadcast_kind(const Tensor& a, const Tensor& b, const char* opname) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Bcast::kNone;
  if (a.size() == 1) return Bcast::kAScalar;
  if (b.size() == 1) return Bcast::kBScalar;
  if (b.rows() == 1 && a.cols() == b.cols()) return Bcast::kBRow;
  if (a.rows() == 1 && b.cols() == a.cols()) return Bcast::kARow;
  throw_shape(opname, a.value(), b.value());
}

Eigen::MatrixXd reduce_like(const Eigen::MatrixXd& g, Eigen::Index rows, Eigen::Index cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  if (rows == 1 && cols == 1) {
    Eigen::MatrixXd s(1, 1);
    s(0, 0) = g.sum();
    return s;
  }
  // Row-vector broadcast: sum over rows.
  return g.colwise().sum();
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  const Bcast k = broadcast_kind(a, b, "add");
  Eigen::MatrixXd v;
  switch (k) {
    case Bcast::kNone:
      v = a.value() + b.value();
      break;
    case Bcast::kAScalar:
      v = b.value().array() + a.value()(0, 0);
      break;
    case Bcast::kBScalar:
      v = a.value().array() + b.value()(0, 0);
      break;
    case Bcast::kBRow:
      v = a.value().rowwise() + Eigen::RowVectorXd(b.value().row(0));
      break;
    case Bcast::kARow:
      v = b.value().rowwise() + Eigen::RowVectorXd(a.value().row(0));
      break;
  }
  const int rank = std::max(a.rank(), b.rank());
  return op(rank, std::move(v), {a, b}, [](detail::Node& n) {
    auto& A = *n.inputs[0];
    auto& B = *n.inputs[1];
    if (A.needs_grad) A.accumulate(reduce_like(n.grad, A.value.rows(), A.value.cols()));
    if (B.needs_grad) B.accumulate(reduce_like(n.grad, B.value.rows(), B.value.cols()));
  });
}

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(b, -1.0)); }

Tensor mul(const Tensor& a, const Tensor& b) {
  const Bcast k = broadcast_kind(a, b, "mul");
  Eigen::MatrixXd v;
  switch (k) {
    case Bcast::kNone:
      v = a.value().cwiseProduct(b.value());
      break;
    case Bcast::kAScalar:
      v = b.value() * a.value()(0, 0);
      break;
    case Bcast::kBScalar:
      v = a.value() * b.value()(0, 0);
      break;
    case Bcast::kBRow:
      v = a.value().array().rowwise() * b.value().row(0).array();
      break;
    case Bcast::kARow:
      v = b.value().array().rowwise() * a.value().row(0).array();
      break;
  }
  const int rank = std::max(a.rank(), b.rank());
  return op(rank, std::move(v), {a, b}, [](detail::Node& n) {
    auto& A = *n.inputs[0];
    auto& B = *n.inputs[1];
    auto expand = [](const Eigen::MatrixXd& m, Eigen::Index rows,
                     Eigen::Index cols) -> Eigen::MatrixXd {
      if (m.rows() == rows && m.cols() == cols) return m;
      if (m.size() == 1) return Eigen::MatrixXd::Constant(rows, cols, m(0, 0));
      return m.replicate(rows, 1);
    };
    const Eigen::Index r = n.value.rows(), c = n.value.cols();
    if (A.needs_grad)
      A.accumulate(
          reduce_like(n.grad.cwiseProduct(expand(B.value, r, c)), A.value.rows(), A.value.cols()));
    if (B.needs_grad)
      B.accumulate(
          reduce_like(n.grad.cwiseProduct(expand(A.value, r, c)), B.value.rows(), B.value.cols()));
  });
}

Tensor scale(const Tensor& a, double c) {
  return op(a.rank(), a.value() * c, {a}, [c](detail::Node& n) {
    if (n.inputs[0]->needs_grad) n.inputs[0]->accumulate(n.grad * c);
  });
}

Tensor concat(const Tensor& a, const Tensor& b, int axis) {
  if (axis != 0 && axis != 1) throw ShapeMismatch("concat axis must be 0 or 1");
  Eigen::MatrixXd v;
  if (axis == 0) {
    if (a.cols() != b.cols()) throw_shape("concat(axis=0)", a.value(), b.value());
    v.resize(a.rows() + b.rows(), a.cols());
    v.topRows(a.rows()) = a.value();
    v.bottomRows(b.rows()) = b.value();
  } else {
    if (a.rows() != b.rows()) throw_shape("concat(axis=1)", a.value(), b.value());
    v.resize(a.rows(), a.cols() + b.cols());
    v.leftCols(a.cols()) = a.value();
    v.rightCols(b.cols()) = b.value();
  }
  const Eigen::Index ar = a.rows(), ac = a.cols();
  return op(2, std::move(v), {a, b}, [axis, ar, ac](detail::Node& n) {
    auto& A = *n.inputs[0];
    auto& B = *n.inputs[1];
    if (axis == 0) {
      if (A.needs_grad) A.accumulate(n.grad.topRows(ar));
      if (B.needs_grad) B.accumulate(n.grad.bottomRows(n.grad.rows() - ar));
    } else {
      if (A.needs_grad) A.accumulate(n.grad.leftCols(ac));
      if (B.needs_grad) B.accumulate(n.grad.rightCols(n.grad.cols() - ac));
    }
  });
}

Tensor slice(const Tensor& a, int axis, Eigen::Index begin, Eigen::Index len) {
  if (axis != 0 && axis != 1) throw ShapeMismatch("slice axis must be 0 or 1");
  const Eigen::Index extent = axis == 0 ? a.rows() : a.cols();
  if (begin < 0 || len < 0 || begin + len > extent) {
    std::ostringstream os;
    os << "slice [" << begin << "," << begin + len << ") out of range for axis extent " << extent;
    throw ShapeMismatch(os.str());
  }
  Eigen::MatrixXd v =
      axis == 0 ? a.value().middleRows(begin, len) : a.value().middleCols(begin, len);
  return op(a.rank(), std::move(v), {a}, [axis, begin, len](detail::Node& n) {
    auto& A = *n.inputs[0];
    if (!A.needs_grad) return;
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(A.value.rows(), A.value.cols());
    if (axis == 0)
      g.middleRows(begin, len) = n.grad;
    else
      g.middleCols(begin, len) = n.grad;
    A.accumulate(g);
  });
}

Tensor transpose(const Tensor& a) {
  return op(2, a.value().transpose(), {a}, [](detail::Node& n) {
    if (n.inputs[0]->needs_grad) n.inputs[0]->accumulate(n.grad.transpose());
  });
}

Tensor softmax(const Tensor& a) {
  Eigen::MatrixXd v = a.value();
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    const double m = v.row(i).maxCoeff();
    v.row(i) = (v.row(i).array() - m).exp();
    v.row(i) /= v.row(i).sum();
  }
  return op(a.rank(), std::move(v), {a}, [](detail::Node& n) {
    auto& A = *n.inputs[0];
    if (!A.needs_grad) return;
    Eigen::MatrixXd g(n.value.rows(), n.value.cols());
    for (Eigen::Index i = 0; i < n.value.rows(); ++i) {
      const double dot = n.grad.row(i).dot(n.value.row(i));
      g.row(i) = n.value.row(i).cwiseProduct((n.grad.row(i).array() - dot).matrix());
    }
    A.accumulate(g);
  });
}

Tensor relu(const Tensor& a) {
  return op(a.rank(), a.value().cwiseMax(0.0), {a}, [](detail::Node& n) {
    auto& A = *n.inputs[0];
    if (!A.needs_grad) return;
    A.accumulate(n.grad.cwiseProduct((A.value.array() > 0.0).cast<double>().matrix()));
  });
}

Tensor sigmoid(const Tensor& a) {
  Eigen::MatrixXd v = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  return op(a.rank(), std::move(v), {a}, [](detail::Node& n) {
    auto& A = *n.inputs[0];
    if (!A.needs_grad) return;
    A.accumulate(
        n.grad.cwiseProduct((n.value.array() * (1.0 - n.value.array())).matrix()));
  });
}

Tensor softplus(const Tensor& a) {
  const auto x = a.value().array();
  Eigen::MatrixXd v = (x.max(0.0) + (-x.abs()).exp().log1p()).matrix();
  return op(a.rank(), std::move(v), {a}, [](detail::Node& n) {
    auto& A = *n.inputs[0];
    if (!A.needs_grad) return;
    A.accumulate(n.grad.cwiseProduct((1.0 / (1.0 + (-A.value.array()).exp())).matrix()));
  });
}

Tensor log(const Tensor& a) {
  return op(a.rank(), a.value().array().log().matrix(), {a}, [](detail::Node& n) {
    auto& A = *n.inputs[0];
    if (!A.needs_grad) return;
    A.accumulate((n.grad.array() / A.value.array()).matrix());
  });
}

Tensor exp(const Tensor& a) {
  return op(a.rank(), a.value().array().exp().matrix(), {a}, [](detail::Node& n) {
    auto& A = *n.inputs[0];
    if (!A.needs_grad) return;
    A.accumulate(n.grad.cwiseProduct(n.value));
  });
}

Tensor abs(const Tensor& a) {
  return op(a.rank(), a.value().cwiseAbs(), {a}, [](detail::Node& n) {
    auto& A = *n.inputs[0];
    if (!A.needs_grad) return;
    A.accumulate(n.grad.cwiseProduct(A.value.array().sign().matrix()));
  });
}

Tensor layer_norm(const Tensor& a, double eps) {
  const Eigen::Index rows = a.rows(), cols = a.cols();
  Eigen::MatrixXd v(rows, cols);
  Eigen::VectorXd inv_std(rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const double mu = a.value().row(i).mean();
    const Eigen::RowVectorXd centered = a.value().row(i).array() - mu;
    const double var = centered.squaredNorm() / static_cast<double>(cols);
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    v.row(i) = centered * inv_std(i);
  }
  return op(a.rank(), std::move(v), {a}, [inv_std](detail::Node& n) {
    auto& A = *n.inputs[0];
    if (!A.needs_grad) return;
    const Eigen::Index cols = n.value.cols();
    Eigen::MatrixXd g(n.value.rows(), cols);
    for (Eigen::Index i = 0; i < n.value.rows(); ++i) {
      const double gm = n.grad.row(i).mean();
      const double gxm = n.grad.row(i).cwiseProduct(n.value.row(i)).mean();
      g.row(i) =
          inv_std(i) * (n.grad.row(i).array() - gm - n.value.row(i).array() * gxm).matrix();
    }
    A.accumulate(g);
  });
}

Tensor sum(const Tensor& a) {
  Eigen::MatrixXd v(1, 1);
  v(0, 0) = a.value().sum();
  return op(0, std::move(v), {a}, [](detail::Node& n) {
    auto& A = *n.inputs[0];
    if (!A.needs_grad) return;
    A.accumulate(Eigen::MatrixXd::Constant(A.value.rows(), A.value.cols(), n.grad(0, 0)));
  });
}

Tensor mean(const Tensor& a) {
  Eigen::MatrixXd v(1, 1);
  v(0, 0) = a.value().mean();
  const double inv_n = 1.0 / static_cast<double>(a.size());
  return op(0, std::move(v), {a}, [inv_n](detail::Node& n) {
    auto& A = *n.inputs[0];
    if (!A.needs_grad) return;
    A.accumulate(
        Eigen::MatrixXd::Constant(A.value.rows(), A.value.cols(), n.grad(0, 0) * inv_n));
  });
}

Tensor gather_rows(const Tensor& a, const std::vector<Eigen::Index>& rows) {
  Eigen::MatrixXd v(static_cast<Eigen::Index>(rows.size()), a.cols());
  for (size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] < 0 || rows[k] >= a.rows()) {
      std::ostringstream os;
      os << "gather_rows index " << rows[k] << " out of range [0," << a.rows() << ")";
      throw ShapeMismatch(os.str());
    }
    v.row(static_cast<Eigen::Index>(k)) = a.value().row(rows[k]);
  }
  return op(2, std::move(v), {a}, [rows](detail::Node& n) {
    auto& A = *n.inputs[0];
    if (!A.needs_grad) return;
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(A.value.rows(), A.value.cols());
    for (size_t k = 0; k < rows.size(); ++k)
      g.row(rows[k]) += n.grad.row(static_cast<Eigen::Index>(k));
    A.accumulate(g);
  });
}

namespace {

Eigen::MatrixXd reshape_rowmajor(const Eigen::MatrixXd& m, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd out(rows, cols);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      out(k / cols, k % cols) = m(i, j);
      ++k;
    }
  return out;
}

}  // namespace

Tensor reshape(const Tensor& a, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != a.size()) {
    std::ostringstream os;
    os << "reshape to (" << rows << "," << cols << ") from " << a.size() << " elements";
    throw ShapeMismatch(os.str());
  }
  return op(2, reshape_rowmajor(a.value(), rows, cols), {a}, [](detail::Node& n) {
    auto& A = *n.inputs[0];
    if (!A.needs_grad) return;
    A.accumulate(reshape_rowmajor(n.grad, A.value.rows(), A.value.cols()));
  });
}

Tensor tile_rows(const Tensor& a, Eigen::Index n_rows) {
  if (a.rows() != 1) throw ShapeMismatch("tile_rows expects a (1,d) input, got " + dims(a.value()));
  return op(2, a.value().replicate(n_rows, 1), {a}, [](detail::Node& n) {
    auto& A = *n.inputs[0];
    if (!A.needs_grad) return;
    A.accumulate(n.grad.colwise().sum());
  });
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw NonScalarLoss("loss tensor is undefined");
  if (loss.size() != 1) throw NonScalarLoss("loss has " + std::to_string(loss.size()) +
                                            " elements; backward requires a scalar");
  auto root = loss.node();
  if (!root->needs_grad) return;  // nothing reachable requires grad

  // Collect the reachable needs-grad subgraph and replay it in reverse
  // creation order (a reverse topological order, since inputs predate outputs).
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<detail::Node*> stack{root.get()};
  seen.insert(root.get());
  while (!stack.empty()) {
    detail::Node* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const auto& in : n->inputs) {
      if (in->needs_grad && seen.insert(in.get()).second) stack.push_back(in.get());
    }
  }
  std::sort(order.begin(), order.end(),
            [](const detail::Node* a, const detail::Node* b) { return a->id > b->id; });

  root->accumulate(Eigen::MatrixXd::Ones(1, 1));
  for (detail::Node* n : order) {
    if (n->backward_fn && n->grad.size() != 0) n->backward_fn(*n);
  }
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps) {
  Tensor probe = Tensor::leaf(x.value(), x.rank(), true);
  Tensor y = f(probe);
  Tensor loss = y.size() == 1 ? y : sum(y);
  backward(loss);
  Eigen::MatrixXd ad = probe.has_grad()
                           ? probe.grad()
                           : Eigen::MatrixXd::Zero(x.value().rows(), x.value().cols());

  NoGradGuard ng;
  double max_rel = 0.0;
  Eigen::MatrixXd base = x.value();
  for (Eigen::Index i = 0; i < base.rows(); ++i) {
    for (Eigen::Index j = 0; j < base.cols(); ++j) {
      auto eval = [&](double v) {
        Eigen::MatrixXd pert = base;
        pert(i, j) = v;
        Tensor t = Tensor::leaf(std::move(pert), x.rank(), false);
        Tensor out = f(t);
        return out.size() == 1 ? out.value()(0, 0) : out.value().sum();
      };
      const double fd = (eval(base(i, j) + eps) - eval(base(i, j) - eps)) / (2.0 * eps);
      const double rel = std::abs(ad(i, j) - fd) / std::max(std::abs(fd), 1e-8);
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace lmot
