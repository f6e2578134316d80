#pragma once

// Reverse-mode automatic differentiation on dense 2-D tensors of doubles.
//
// Tensors are rank-2 (rows x cols, row-major); vectors are 1 x n rows and
// scalars are 1 x 1. Ops record themselves on the active Graph (a tape) when
// any input requires gradients; Graph::backward replays the tape in reverse.
// Tensors are immutable once created, except for gradient accumulation.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "cass/core.hpp"

namespace cass {

class Graph;

namespace detail {

struct TensorNode {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient reaches this node
  bool requires_grad = false;
  Graph* graph = nullptr;  // tape that produced this node; null for leaves
};

inline void ensure_finite(const std::vector<double>& v, const char* where) {
  for (double x : v)
    if (!std::isfinite(x))
      throw numeric_error(std::string("non-finite value in ") + where);
}

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(int rows, int cols, bool requires_grad = false) {
    return Tensor(rows, cols, std::vector<double>(std::size_t(rows) * cols, 0.0),
                  requires_grad);
  }

  static Tensor from_data(int rows, int cols, std::vector<double> data,
                          bool requires_grad = false) {
    return Tensor(rows, cols, std::move(data), requires_grad);
  }

  static Tensor row(std::vector<double> data, bool requires_grad = false) {
    const int n = static_cast<int>(data.size());
    return Tensor(1, n, std::move(data), requires_grad);
  }

  static Tensor scalar(double v, bool requires_grad = false) {
    return Tensor(1, 1, {v}, requires_grad);
  }

  static Tensor full(int rows, int cols, double v) {
    return Tensor(rows, cols, std::vector<double>(std::size_t(rows) * cols, v),
                  false);
  }

  bool defined() const { return node_ != nullptr; }
  int rows() const { return node_->rows; }
  int cols() const { return node_->cols; }
  std::size_t size() const { return node_->data.size(); }
  std::vector<int> shape() const { return {node_->rows, node_->cols}; }

  const std::vector<double>& data() const { return node_->data; }
  double value(int r, int c) const { return node_->data[std::size_t(r) * cols() + c]; }
  double item() const {
    check(size() == 1, "item() requires a scalar tensor");
    return node_->data[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  const std::vector<double>& grad() const {
    check(has_grad(), "tensor has no gradient");
    return node_->grad;
  }
  Graph* graph() const { return node_->graph; }

  // Mutable access for optimizers and initializers. Only leaves should be
  // mutated, and never while a tape referencing them is alive.
  std::vector<double>& mutable_data() const { return node_->data; }

  void zero_grad() const { node_->grad.clear(); }

  void accumulate_grad(const std::vector<double>& g) const {
    check(g.size() == size(), "gradient shape mismatch");
    auto& grad = node_->grad;
    if (grad.empty()) grad.assign(size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
  }

  // Identity of the underlying storage; used to test parameter sharing.
  const void* storage_id() const { return node_.get(); }

 private:
  friend class Graph;
  friend Tensor detach(const Tensor&);
  friend std::vector<double>& grad_buffer(const Tensor&);
  friend Tensor make_op_output(int rows, int cols, std::vector<double> data,
                               const std::vector<Tensor>& inputs,
                               const char* name);

  Tensor(int rows, int cols, std::vector<double> data, bool requires_grad)
      : node_(std::make_shared<detail::TensorNode>()) {
    check_arg(rows > 0 && cols > 0, "tensor extents must be positive");
    check(data.size() == std::size_t(rows) * cols,
          "data length must equal product of shape extents");
    detail::ensure_finite(data, "tensor construction");
    node_->rows = rows;
    node_->cols = cols;
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
  }

  std::shared_ptr<detail::TensorNode> node_;
};

// Allocates (if needed) and returns the gradient buffer of a tensor.
inline std::vector<double>& grad_buffer(const Tensor& t) {
  auto& g = t.node_->grad;
  if (g.empty()) g.assign(t.size(), 0.0);
  return g;
}

// The tape. Op records are appended in construction order, which is a
// topological order by construction; backward walks it once in reverse.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // RAII scope making this graph the active recording target on this thread.
  class Scope {
   public:
    explicit Scope(Graph& g) : prev_(active_ref()) { active_ref() = &g; }
    ~Scope() { active_ref() = prev_; }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Graph* prev_;
  };

  // RAII scope disabling recording (frozen forward passes, inference).
  class NoGrad {
   public:
    NoGrad() : prev_(active_ref()) { active_ref() = nullptr; }
    ~NoGrad() { active_ref() = prev_; }
    NoGrad(const NoGrad&) = delete;
    NoGrad& operator=(const NoGrad&) = delete;

   private:
    Graph* prev_;
  };

  static Graph* active() { return active_ref(); }

  std::size_t num_ops() const { return ops_.size(); }

  void record(const Tensor& out, std::function<void()> backward) {
    ops_.push_back({out, std::move(backward)});
  }

  // Seeds dLoss/dLoss = 1 and propagates to every leaf that requires grad.
  // Leaf gradients accumulate across calls; the tape is cleared afterwards
  // so intermediate activations can be freed.
  void backward(const Tensor& loss) {
    check(loss.size() == 1, "backward requires a scalar loss");
    if (loss.graph() != this)
      throw error("backward on a tensor not produced by this graph");
    grad_buffer(loss)[0] += 1.0;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
      if (it->out.has_grad()) it->backward();
    }
    clear();
  }

  void clear() { ops_.clear(); }

 private:
  struct OpRecord {
    Tensor out;
    std::function<void()> backward;
  };

  static Graph*& active_ref() {
    thread_local Graph* active = nullptr;
    return active;
  }

  std::vector<OpRecord> ops_;
};

// Constant copy of a tensor, cut off from any graph.
inline Tensor detach(const Tensor& t) {
  return Tensor(t.rows(), t.cols(), t.data(), false);
}

// ---------------------------------------------------------------------------
// Op helpers

inline Tensor make_op_output(int rows, int cols, std::vector<double> data,
                             const std::vector<Tensor>& inputs,
                             const char* name) {
  detail::ensure_finite(data, name);
  bool track = false;
  if (Graph* g = Graph::active()) {
    for (const auto& in : inputs)
      if (in.requires_grad()) {
        track = true;
        break;
      }
    Tensor out(rows, cols, std::move(data), track);
    if (track) out.node_->graph = g;
    return out;
  }
  return Tensor(rows, cols, std::move(data), false);
}

namespace detail {

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  check(a.rows() == b.rows() && a.cols() == b.cols(),
        std::string(op) + ": shape mismatch");
}

// c[m,n] = a[m,k] * b[k,n]
inline void mm(const double* a, const double* b, double* c, int m, int k, int n) {
  std::fill(c, c + std::size_t(m) * n, 0.0);
  for (int i = 0; i < m; ++i) {
    const double* arow = a + std::size_t(i) * k;
    double* crow = c + std::size_t(i) * n;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + std::size_t(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[m,n] += a[m,k] * b[k,n]
inline void mm_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + std::size_t(i) * k;
    double* crow = c + std::size_t(i) * n;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + std::size_t(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[m,k] += a[m,n] * b[k,n]^T   (i.e. a * transpose(b))
inline void mm_bt_acc(const double* a, const double* b, double* c, int m, int n, int k) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + std::size_t(i) * n;
    double* crow = c + std::size_t(i) * k;
    for (int p = 0; p < k; ++p) {
      const double* brow = b + std::size_t(p) * n;
      double acc = 0.0;
      for (int j = 0; j < n; ++j) acc += arow[j] * brow[j];
      crow[p] += acc;
    }
  }
}

// c[k,n] += a[m,k]^T * b[m,n]
inline void mm_at_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + std::size_t(i) * k;
    const double* brow = b + std::size_t(i) * n;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      double* crow = c + std::size_t(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and broadcast ops

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  Tensor y = make_op_output(a.rows(), a.cols(), std::move(out), {a, b}, "add");
  if (y.requires_grad())
    y.graph()->record(y, [a, b, y] {
      const auto& g = y.grad();
      if (a.requires_grad()) a.accumulate_grad(g);
      if (b.requires_grad()) b.accumulate_grad(g);
    });
  return y;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  Tensor y = make_op_output(a.rows(), a.cols(), std::move(out), {a, b}, "sub");
  if (y.requires_grad())
    y.graph()->record(y, [a, b, y] {
      const auto& g = y.grad();
      if (a.requires_grad()) a.accumulate_grad(g);
      if (b.requires_grad()) {
        auto& gb = grad_buffer(b);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    });
  return y;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  Tensor y = make_op_output(a.rows(), a.cols(), std::move(out), {a, b}, "mul");
  if (y.requires_grad())
    y.graph()->record(y, [a, b, y] {
      const auto& g = y.grad();
      if (a.requires_grad()) {
        auto& ga = grad_buffer(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b.data()[i];
      }
      if (b.requires_grad()) {
        auto& gb = grad_buffer(b);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a.data()[i];
      }
    });
  return y;
}

inline Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * s;
  Tensor y = make_op_output(a.rows(), a.cols(), std::move(out), {a}, "scale");
  if (y.requires_grad())
    y.graph()->record(y, [a, y, s] {
      const auto& g = y.grad();
      auto& ga = grad_buffer(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
    });
  return y;
}

inline Tensor add_scalar(const Tensor& a, double s) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + s;
  Tensor y = make_op_output(a.rows(), a.cols(), std::move(out), {a}, "add_scalar");
  if (y.requires_grad())
    y.graph()->record(y, [a, y] {
      if (a.requires_grad()) a.accumulate_grad(y.grad());
    });
  return y;
}

// X[m,c] + v[1,c], broadcast down the rows.
inline Tensor add_rowvec(const Tensor& x, const Tensor& v) {
  check(v.rows() == 1 && v.cols() == x.cols(), "add_rowvec: shape mismatch");
  std::vector<double> out(x.size());
  const int m = x.rows(), c = x.cols();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < c; ++j)
      out[std::size_t(i) * c + j] = x.data()[std::size_t(i) * c + j] + v.data()[j];
  Tensor y = make_op_output(m, c, std::move(out), {x, v}, "add_rowvec");
  if (y.requires_grad())
    y.graph()->record(y, [x, v, y] {
      const auto& g = y.grad();
      const int m = x.rows(), c = x.cols();
      if (x.requires_grad()) x.accumulate_grad(g);
      if (v.requires_grad()) {
        auto& gv = grad_buffer(v);
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < c; ++j) gv[j] += g[std::size_t(i) * c + j];
      }
    });
  return y;
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  check(a.cols() == b.rows(), "matmul: inner dimensions must agree");
  const int m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(std::size_t(m) * n);
  detail::mm(a.data().data(), b.data().data(), out.data(), m, k, n);
  Tensor y = make_op_output(m, n, std::move(out), {a, b}, "matmul");
  if (y.requires_grad())
    y.graph()->record(y, [a, b, y, m, k, n] {
      const auto& g = y.grad();
      if (a.requires_grad())
        detail::mm_bt_acc(g.data(), b.data().data(), grad_buffer(a).data(), m, n, k);
      if (b.requires_grad())
        detail::mm_at_acc(a.data().data(), g.data(), grad_buffer(b).data(), m, k, n);
    });
  return y;
}

inline Tensor relu(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.data()[i] > 0.0 ? a.data()[i] : 0.0;
  Tensor y = make_op_output(a.rows(), a.cols(), std::move(out), {a}, "relu");
  if (y.requires_grad())
    y.graph()->record(y, [a, y] {
      const auto& g = y.grad();
      auto& ga = grad_buffer(a);
      for (std::size_t i = 0; i < g.size(); ++i)
        if (a.data()[i] > 0.0) ga[i] += g[i];
    });
  return y;
}

inline Tensor exp(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a.data()[i]);
  Tensor y = make_op_output(a.rows(), a.cols(), std::move(out), {a}, "exp");
  if (y.requires_grad())
    y.graph()->record(y, [a, y] {
      const auto& g = y.grad();
      auto& ga = grad_buffer(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y.data()[i];
    });
  return y;
}

inline Tensor log(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    check(a.data()[i] > 0.0, "log: input must be positive");
    out[i] = std::log(a.data()[i]);
  }
  Tensor y = make_op_output(a.rows(), a.cols(), std::move(out), {a}, "log");
  if (y.requires_grad())
    y.graph()->record(y, [a, y] {
      const auto& g = y.grad();
      auto& ga = grad_buffer(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / a.data()[i];
    });
  return y;
}

inline Tensor square(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * a.data()[i];
  Tensor y = make_op_output(a.rows(), a.cols(), std::move(out), {a}, "square");
  if (y.requires_grad())
    y.graph()->record(y, [a, y] {
      const auto& g = y.grad();
      auto& ga = grad_buffer(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += 2.0 * a.data()[i] * g[i];
    });
  return y;
}

// Subgradient 0 where x == 0, so exactly coincident points do not produce
// NaN in distance losses.
inline Tensor sqrt(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    check(a.data()[i] >= 0.0, "sqrt: input must be non-negative");
    out[i] = std::sqrt(a.data()[i]);
  }
  Tensor y = make_op_output(a.rows(), a.cols(), std::move(out), {a}, "sqrt");
  if (y.requires_grad())
    y.graph()->record(y, [a, y] {
      const auto& g = y.grad();
      auto& ga = grad_buffer(a);
      for (std::size_t i = 0; i < g.size(); ++i)
        if (a.data()[i] > 0.0) ga[i] += g[i] * 0.5 / std::sqrt(a.data()[i]);
    });
  return y;
}

// ---------------------------------------------------------------------------
// Shape ops

inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
  check(a.rows() == b.rows(), "concat_cols: row counts must agree");
  const int m = a.rows(), ca = a.cols(), cb = b.cols();
  std::vector<double> out(std::size_t(m) * (ca + cb));
  for (int i = 0; i < m; ++i) {
    std::copy_n(a.data().begin() + std::size_t(i) * ca, ca,
                out.begin() + std::size_t(i) * (ca + cb));
    std::copy_n(b.data().begin() + std::size_t(i) * cb, cb,
                out.begin() + std::size_t(i) * (ca + cb) + ca);
  }
  Tensor y = make_op_output(m, ca + cb, std::move(out), {a, b}, "concat_cols");
  if (y.requires_grad())
    y.graph()->record(y, [a, b, y, m, ca, cb] {
      const auto& g = y.grad();
      if (a.requires_grad()) {
        auto& ga = grad_buffer(a);
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < ca; ++j)
            ga[std::size_t(i) * ca + j] += g[std::size_t(i) * (ca + cb) + j];
      }
      if (b.requires_grad()) {
        auto& gb = grad_buffer(b);
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < cb; ++j)
            gb[std::size_t(i) * cb + j] += g[std::size_t(i) * (ca + cb) + ca + j];
      }
    });
  return y;
}

inline Tensor slice_cols(const Tensor& a, int start, int len) {
  check_arg(start >= 0 && len > 0 && start + len <= a.cols(),
            "slice_cols: range out of bounds");
  const int m = a.rows(), c = a.cols();
  std::vector<double> out(std::size_t(m) * len);
  for (int i = 0; i < m; ++i)
    std::copy_n(a.data().begin() + std::size_t(i) * c + start, len,
                out.begin() + std::size_t(i) * len);
  Tensor y = make_op_output(m, len, std::move(out), {a}, "slice_cols");
  if (y.requires_grad())
    y.graph()->record(y, [a, y, start, len, m, c] {
      const auto& g = y.grad();
      auto& ga = grad_buffer(a);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < len; ++j)
          ga[std::size_t(i) * c + start + j] += g[std::size_t(i) * len + j];
    });
  return y;
}

// v[1,c] tiled to [m,c].
inline Tensor repeat_rows(const Tensor& v, int m) {
  check(v.rows() == 1, "repeat_rows: input must be a row vector");
  check_arg(m > 0, "repeat_rows: row count must be positive");
  const int c = v.cols();
  std::vector<double> out(std::size_t(m) * c);
  for (int i = 0; i < m; ++i)
    std::copy_n(v.data().begin(), c, out.begin() + std::size_t(i) * c);
  Tensor y = make_op_output(m, c, std::move(out), {v}, "repeat_rows");
  if (y.requires_grad())
    y.graph()->record(y, [v, y, m, c] {
      const auto& g = y.grad();
      auto& gv = grad_buffer(v);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < c; ++j) gv[j] += g[std::size_t(i) * c + j];
    });
  return y;
}

// ---------------------------------------------------------------------------
// Reductions

// Max over the row (point) axis: [m,c] -> [1,c]. Saves argmax indices; ties
// resolve to the lowest row so the backward rule is deterministic.
inline Tensor colwise_max(const Tensor& x) {
  const int m = x.rows(), c = x.cols();
  std::vector<double> out(c);
  auto argmax = std::make_shared<std::vector<int>>(c, 0);
  for (int j = 0; j < c; ++j) {
    double best = x.data()[j];
    int besti = 0;
    for (int i = 1; i < m; ++i) {
      const double v = x.data()[std::size_t(i) * c + j];
      if (v > best) {
        best = v;
        besti = i;
      }
    }
    out[j] = best;
    (*argmax)[j] = besti;
  }
  Tensor y = make_op_output(1, c, std::move(out), {x}, "colwise_max");
  if (y.requires_grad())
    y.graph()->record(y, [x, y, argmax, c] {
      const auto& g = y.grad();
      auto& gx = grad_buffer(x);
      for (int j = 0; j < c; ++j) gx[std::size_t((*argmax)[j]) * c + j] += g[j];
    });
  return y;
}

inline Tensor colwise_mean(const Tensor& x) {
  const int m = x.rows(), c = x.cols();
  std::vector<double> out(c, 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < c; ++j) out[j] += x.data()[std::size_t(i) * c + j];
  for (int j = 0; j < c; ++j) out[j] /= m;
  Tensor y = make_op_output(1, c, std::move(out), {x}, "colwise_mean");
  if (y.requires_grad())
    y.graph()->record(y, [x, y, m, c] {
      const auto& g = y.grad();
      auto& gx = grad_buffer(x);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < c; ++j) gx[std::size_t(i) * c + j] += g[j] / m;
    });
  return y;
}

// [m,c] -> [m,1]
inline Tensor rowwise_sum(const Tensor& x) {
  const int m = x.rows(), c = x.cols();
  std::vector<double> out(m, 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < c; ++j) out[i] += x.data()[std::size_t(i) * c + j];
  Tensor y = make_op_output(m, 1, std::move(out), {x}, "rowwise_sum");
  if (y.requires_grad())
    y.graph()->record(y, [x, y, m, c] {
      const auto& g = y.grad();
      auto& gx = grad_buffer(x);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < c; ++j) gx[std::size_t(i) * c + j] += g[i];
    });
  return y;
}

inline Tensor sum_all(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  Tensor y = make_op_output(1, 1, {s}, {x}, "sum_all");
  if (y.requires_grad())
    y.graph()->record(y, [x, y] {
      const double g = y.grad()[0];
      auto& gx = grad_buffer(x);
      for (auto& v : gx) v += g;
    });
  return y;
}

inline Tensor mean_all(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  const double inv = 1.0 / static_cast<double>(x.size());
  Tensor y = make_op_output(1, 1, {s * inv}, {x}, "mean_all");
  if (y.requires_grad())
    y.graph()->record(y, [x, y, inv] {
      const double g = y.grad()[0] * inv;
      auto& gx = grad_buffer(x);
      for (auto& v : gx) v += g;
    });
  return y;
}

// ---------------------------------------------------------------------------
// Nearest-neighbor machinery

// D[i,j] = squared Euclidean distance between row i of a and row j of b.
inline Tensor pairwise_sqdist(const Tensor& a, const Tensor& b) {
  check(a.cols() == b.cols(), "pairwise_sqdist: column counts must agree");
  const int m = a.rows(), n = b.rows(), c = a.cols();
  std::vector<double> out(std::size_t(m) * n);
  for (int i = 0; i < m; ++i) {
    const double* pa = a.data().data() + std::size_t(i) * c;
    for (int j = 0; j < n; ++j) {
      const double* pb = b.data().data() + std::size_t(j) * c;
      double s = 0.0;
      for (int k = 0; k < c; ++k) {
        const double d = pa[k] - pb[k];
        s += d * d;
      }
      out[std::size_t(i) * n + j] = s;
    }
  }
  Tensor y = make_op_output(m, n, std::move(out), {a, b}, "pairwise_sqdist");
  if (y.requires_grad())
    y.graph()->record(y, [a, b, y, m, n, c] {
      const auto& g = y.grad();
      double* ga = a.requires_grad() ? grad_buffer(a).data() : nullptr;
      double* gb = b.requires_grad() ? grad_buffer(b).data() : nullptr;
      for (int i = 0; i < m; ++i) {
        const double* pa = a.data().data() + std::size_t(i) * c;
        for (int j = 0; j < n; ++j) {
          const double gij = g[std::size_t(i) * n + j];
          if (gij == 0.0) continue;
          const double* pb = b.data().data() + std::size_t(j) * c;
          for (int k = 0; k < c; ++k) {
            const double d = 2.0 * gij * (pa[k] - pb[k]);
            if (ga) ga[std::size_t(i) * c + k] += d;
            if (gb) gb[std::size_t(j) * c + k] -= d;
          }
        }
      }
    });
  return y;
}

// Min over each row with saved argmin: [m,n] -> [m,1]. Ties resolve to the
// lowest column index.
inline Tensor rowwise_min(const Tensor& x) {
  const int m = x.rows(), n = x.cols();
  std::vector<double> out(m);
  auto argmin = std::make_shared<std::vector<int>>(m, 0);
  for (int i = 0; i < m; ++i) {
    const double* row = x.data().data() + std::size_t(i) * n;
    double best = row[0];
    int bestj = 0;
    for (int j = 1; j < n; ++j)
      if (row[j] < best) {
        best = row[j];
        bestj = j;
      }
    out[i] = best;
    (*argmin)[i] = bestj;
  }
  Tensor y = make_op_output(m, 1, std::move(out), {x}, "rowwise_min");
  if (y.requires_grad())
    y.graph()->record(y, [x, y, argmin, n] {
      const auto& g = y.grad();
      auto& gx = grad_buffer(x);
      for (int i = 0; i < static_cast<int>(g.size()); ++i)
        gx[std::size_t(i) * n + (*argmin)[i]] += g[i];
    });
  return y;
}

// ---------------------------------------------------------------------------
// Fused network ops

// Row-wise standardization: each feature vector is shifted to zero mean and
// scaled to unit variance within the layer. Stands in for batch norm, which
// misbehaves on small mixed-modality batches.
inline Tensor feature_norm(const Tensor& x, double eps = 1e-5) {
  const int m = x.rows(), c = x.cols();
  check(c > 1, "feature_norm: needs at least two features per row");
  std::vector<double> out(x.size());
  auto inv_sigma = std::make_shared<std::vector<double>>(m);
  for (int i = 0; i < m; ++i) {
    const double* row = x.data().data() + std::size_t(i) * c;
    double mu = 0.0;
    for (int j = 0; j < c; ++j) mu += row[j];
    mu /= c;
    double var = 0.0;
    for (int j = 0; j < c; ++j) {
      const double d = row[j] - mu;
      var += d * d;
    }
    var /= c;
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_sigma)[i] = is;
    for (int j = 0; j < c; ++j) out[std::size_t(i) * c + j] = (row[j] - mu) * is;
  }
  Tensor y = make_op_output(m, c, std::move(out), {x}, "feature_norm");
  if (y.requires_grad())
    y.graph()->record(y, [x, y, inv_sigma, m, c] {
      const auto& g = y.grad();
      auto& gx = grad_buffer(x);
      for (int i = 0; i < m; ++i) {
        const double* grow = g.data() + std::size_t(i) * c;
        const double* yrow = y.data().data() + std::size_t(i) * c;
        double gmean = 0.0, gymean = 0.0;
        for (int j = 0; j < c; ++j) {
          gmean += grow[j];
          gymean += grow[j] * yrow[j];
        }
        gmean /= c;
        gymean /= c;
        const double is = (*inv_sigma)[i];
        for (int j = 0; j < c; ++j)
          gx[std::size_t(i) * c + j] += is * (grow[j] - gmean - yrow[j] * gymean);
      }
    });
  return y;
}

// Raw 4-vector to unit quaternion with w >= 0. The norm is clamped from
// below at eps; the sign flip is constant in a neighborhood, so the chain
// rule just carries the sign.
inline Tensor quat_normalize(const Tensor& v, double eps = 1e-8) {
  check(v.rows() == 1 && v.cols() == 4, "quat_normalize: expects a 1x4 tensor");
  double n2 = 0.0;
  for (int k = 0; k < 4; ++k) n2 += v.data()[k] * v.data()[k];
  const double n = std::max(std::sqrt(n2), eps);
  double s = v.data()[0] / n >= 0.0 ? 1.0 : -1.0;
  std::vector<double> out(4);
  for (int k = 0; k < 4; ++k) out[k] = s * v.data()[k] / n;
  Tensor y = make_op_output(1, 4, std::move(out), {v}, "quat_normalize");
  if (y.requires_grad())
    y.graph()->record(y, [v, y, n, s, eps] {
      const auto& g = y.grad();
      auto& gv = grad_buffer(v);
      double n2 = 0.0;
      for (int k = 0; k < 4; ++k) n2 += v.data()[k] * v.data()[k];
      if (std::sqrt(n2) < eps) {
        // Below the guard the map is linear: y = s * v / eps.
        for (int k = 0; k < 4; ++k) gv[k] += s * g[k] / eps;
        return;
      }
      // d(v/n)/dv = (I - uu^T)/n with u = v/n.
      double dot = 0.0;
      for (int k = 0; k < 4; ++k) dot += g[k] * v.data()[k] / n;
      for (int k = 0; k < 4; ++k)
        gv[k] += s * (g[k] - dot * v.data()[k] / n) / n;
    });
  return y;
}

namespace detail {

// Rotation matrix of a unit quaternion (w,x,y,z), row-major.
inline void quat_to_mat(const double* q, double* r) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  r[0] = 1 - 2 * (y * y + z * z);
  r[1] = 2 * (x * y - w * z);
  r[2] = 2 * (x * z + w * y);
  r[3] = 2 * (x * y + w * z);
  r[4] = 1 - 2 * (x * x + z * z);
  r[5] = 2 * (y * z - w * x);
  r[6] = 2 * (x * z - w * y);
  r[7] = 2 * (y * z + w * x);
  r[8] = 1 - 2 * (x * x + y * y);
}

// dR/dq_k for the quadratic form above, k in {w,x,y,z}.
inline void quat_mat_jacobian(const double* q, double dr[4][9]) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  const double dw[9] = {0, -2 * z, 2 * y, 2 * z, 0, -2 * x, -2 * y, 2 * x, 0};
  const double dx[9] = {0, 2 * y, 2 * z, 2 * y, -4 * x, -2 * w, 2 * z, 2 * w, -4 * x};
  const double dy[9] = {-4 * y, 2 * x, 2 * w, 2 * x, 0, 2 * z, -2 * w, 2 * z, -4 * y};
  const double dz[9] = {-4 * z, -2 * w, 2 * x, 2 * w, -4 * z, 2 * y, 2 * x, 2 * y, 0};
  std::copy_n(dw, 9, dr[0]);
  std::copy_n(dx, 9, dr[1]);
  std::copy_n(dy, 9, dr[2]);
  std::copy_n(dz, 9, dr[3]);
}

}  // namespace detail

// Rotates every row of X[m,3] by the quaternion q[1,4] (assumed unit).
inline Tensor quat_rotate(const Tensor& q, const Tensor& x) {
  check(q.rows() == 1 && q.cols() == 4, "quat_rotate: q must be 1x4");
  check(x.cols() == 3, "quat_rotate: points must be m x 3");
  const int m = x.rows();
  double r[9];
  detail::quat_to_mat(q.data().data(), r);
  std::vector<double> out(std::size_t(m) * 3);
  for (int i = 0; i < m; ++i) {
    const double* p = x.data().data() + std::size_t(i) * 3;
    double* o = out.data() + std::size_t(i) * 3;
    for (int a = 0; a < 3; ++a)
      o[a] = r[a * 3] * p[0] + r[a * 3 + 1] * p[1] + r[a * 3 + 2] * p[2];
  }
  Tensor y = make_op_output(m, 3, std::move(out), {q, x}, "quat_rotate");
  if (y.requires_grad())
    y.graph()->record(y, [q, x, y, m] {
      const auto& g = y.grad();
      double r[9];
      detail::quat_to_mat(q.data().data(), r);
      if (x.requires_grad()) {
        auto& gx = grad_buffer(x);
        for (int i = 0; i < m; ++i) {
          const double* gi = g.data() + std::size_t(i) * 3;
          double* go = gx.data() + std::size_t(i) * 3;
          for (int a = 0; a < 3; ++a)
            go[a] += r[a] * gi[0] + r[3 + a] * gi[1] + r[6 + a] * gi[2];
        }
      }
      if (q.requires_grad()) {
        double dr[4][9];
        detail::quat_mat_jacobian(q.data().data(), dr);
        auto& gq = grad_buffer(q);
        for (int i = 0; i < m; ++i) {
          const double* p = x.data().data() + std::size_t(i) * 3;
          const double* gi = g.data() + std::size_t(i) * 3;
          for (int k = 0; k < 4; ++k) {
            const double* d = dr[k];
            double acc = 0.0;
            for (int a = 0; a < 3; ++a)
              acc += gi[a] * (d[a * 3] * p[0] + d[a * 3 + 1] * p[1] + d[a * 3 + 2] * p[2]);
            gq[k] += acc;
          }
        }
      }
    });
  return y;
}

// ---------------------------------------------------------------------------
// Composite expressions

// mu + exp(0.5 * logvar) * noise. Noise is caller-supplied: standard normal
// draws during training, zeros at inference.
inline Tensor reparameterize(const Tensor& mu, const Tensor& logvar,
                             const Tensor& noise) {
  detail::check_same_shape(mu, logvar, "reparameterize");
  detail::check_same_shape(mu, noise, "reparameterize");
  return add(mu, mul(exp(scale(logvar, 0.5)), noise));
}

// Symmetric Chamfer distance, sum of means over unsquared nearest-neighbor
// distances. Differentiable through either argument.
inline Tensor chamfer_loss(const Tensor& a, const Tensor& b) {
  check(a.rows() >= 1 && b.rows() >= 1, "chamfer_loss: empty cloud");
  Tensor ab = mean_all(sqrt(rowwise_min(pairwise_sqdist(a, b))));
  Tensor ba = mean_all(sqrt(rowwise_min(pairwise_sqdist(b, a))));
  return add(ab, ba);
}

// KL(q(z) || N(0, I)) = -0.5 * sum(1 + logvar - mu^2 - exp(logvar)).
inline Tensor kl_standard_normal(const Tensor& mu, const Tensor& logvar) {
  detail::check_same_shape(mu, logvar, "kl_standard_normal");
  Tensor one = Tensor::full(mu.rows(), mu.cols(), 1.0);
  Tensor inner = sub(sub(add(one, logvar), square(mu)), exp(logvar));
  return scale(sum_all(inner), -0.5);
}

inline void zero_grads(std::vector<Tensor>& params) {
  for (auto& p : params) p.zero_grad();
}

}  // namespace cass
