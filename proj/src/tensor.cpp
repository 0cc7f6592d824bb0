#include "letr/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_set>

namespace letr {

namespace detail {

struct Node {
  Shape shape;
  std::vector<Scalar> data;
  std::vector<Scalar> grad;
  bool requires_grad = false;
  bool consumed = false;
  std::uint64_t id = 0;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  std::vector<Scalar>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

namespace {

using detail::Node;
using RowMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

thread_local std::uint64_t g_next_id = 1;
thread_local bool g_grad_enabled = true;

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

std::shared_ptr<Node> new_node(Shape shape, std::vector<Scalar> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("tensor shape " + shape_str(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  node->id = g_next_id++;
  return node;
}

// Builds an op result; history is recorded only when some input needs it.
Tensor make_result(const char* op, Shape shape, std::vector<Scalar> data,
                   std::vector<std::shared_ptr<Node>> inputs,
                   std::function<void(Node&)> backward_fn) {
  for (Scalar v : data) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + " produced a non-finite value");
  }
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& in : inputs) needs = needs || in->requires_grad;
  }
  auto node = new_node(std::move(shape), std::move(data), needs);
  if (needs) {
    node->parents = std::move(inputs);
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor(node);
}

struct Mat2 {
  std::size_t rows;
  std::size_t cols;
};

Mat2 as_matrix(const Tensor& t) {
  if (t.ndim() == 1) return {1, t.dim(0)};
  if (t.ndim() == 2) return {t.dim(0), t.dim(1)};
  throw DimensionError("expected a 1-D or 2-D tensor, got " + shape_str(t.shape()));
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor() = default;

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, Scalar value, bool requires_grad) {
  std::vector<Scalar> values(shape_numel(shape), value);
  return Tensor(new_node(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<Scalar> values, bool requires_grad) {
  return Tensor(new_node(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(Scalar value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t i) const {
  if (i >= shape().size()) throw DimensionError("dimension index out of range");
  return shape()[i];
}

std::size_t Tensor::numel() const { return node_->data.size(); }
std::size_t Tensor::rows() const { return as_matrix(*this).rows; }
std::size_t Tensor::cols() const { return as_matrix(*this).cols; }

std::span<const Scalar> Tensor::data() const { return node_->data; }
std::span<Scalar> Tensor::mutable_data() { return node_->data; }

Scalar Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on a tensor with " + std::to_string(numel()) + " values");
  return node_->data[0];
}

Scalar Tensor::at(std::size_t r, std::size_t c) const {
  auto m = as_matrix(*this);
  if (r >= m.rows || c >= m.cols) throw std::out_of_range("Tensor::at out of range");
  return node_->data[r * m.cols + c];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool flag) {
  node_->requires_grad = flag;
  return *this;
}

bool Tensor::has_grad() const { return !node_->grad.empty(); }

std::span<const Scalar> Tensor::grad() const {
  return node_->ensure_grad();
}

std::span<Scalar> Tensor::mutable_grad() { return node_->ensure_grad(); }

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

void Tensor::backward() const {
  if (numel() != 1) {
    throw std::logic_error("backward() requires a scalar loss, got shape " + shape_str(shape()));
  }
  if (node_->consumed) {
    throw std::logic_error("backward() called twice on the same graph");
  }
  if (!node_->requires_grad) return;

  // Shared handles keep every node alive until the cleanup pass below has
  // detached them from each other.
  std::vector<std::shared_ptr<Node>> order;
  std::unordered_set<Node*> seen;
  std::vector<std::shared_ptr<Node>> stack{node_};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto n = std::move(stack.back());
    stack.pop_back();
    if (n->consumed) throw std::logic_error("backward() reached a graph that was already consumed");
    for (const auto& p : n->parents) {
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p);
    }
    order.push_back(std::move(n));
  }
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) { return a->id > b->id; });

  node_->ensure_grad()[0] += 1.0;
  for (const auto& n : order) {
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
  for (const auto& n : order) {
    if (!n->backward_fn) continue;
    n->backward_fn = nullptr;
    n->parents.clear();
    n->grad.clear();
    n->grad.shrink_to_fit();
    n->consumed = true;
  }
}

Tensor Tensor::detach() const {
  return Tensor(new_node(shape(), node_->data, false));
}

Tensor Tensor::clone() const {
  return Tensor(new_node(shape(), node_->data, node_->requires_grad && !node_->backward_fn));
}

std::uint64_t Tensor::id() const { return node_->id; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_mode_enabled() { return g_grad_enabled; }

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  const auto ma = as_matrix(a);
  const auto mb = as_matrix(b);
  if (ma.cols != mb.rows) {
    throw DimensionError("matmul: inner dimensions disagree " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  std::vector<Scalar> out(ma.rows * mb.cols);
  MapMat(out.data(), ma.rows, mb.cols).noalias() =
      ConstMapMat(a.data().data(), ma.rows, ma.cols) * ConstMapMat(b.data().data(), mb.rows, mb.cols);
  return make_result("matmul", {ma.rows, mb.cols}, std::move(out), {a.node(), b.node()},
                     [ma, mb](Node& self) {
                       ConstMapMat g(self.grad.data(), ma.rows, mb.cols);
                       Node& na = *self.parents[0];
                       Node& nb = *self.parents[1];
                       if (na.requires_grad) {
                         MapMat(na.ensure_grad().data(), ma.rows, ma.cols).noalias() +=
                             g * ConstMapMat(nb.data.data(), mb.rows, mb.cols).transpose();
                       }
                       if (nb.requires_grad) {
                         MapMat(nb.ensure_grad().data(), mb.rows, mb.cols).noalias() +=
                             ConstMapMat(na.data.data(), ma.rows, ma.cols).transpose() * g;
                       }
                     });
}

Tensor transpose(const Tensor& a) {
  const auto m = as_matrix(a);
  std::vector<Scalar> out(m.rows * m.cols);
  MapMat(out.data(), m.cols, m.rows) = ConstMapMat(a.data().data(), m.rows, m.cols).transpose();
  return make_result("transpose", {m.cols, m.rows}, std::move(out), {a.node()}, [m](Node& self) {
    Node& in = *self.parents[0];
    MapMat(in.ensure_grad().data(), m.rows, m.cols) +=
        ConstMapMat(self.grad.data(), m.cols, m.rows).transpose();
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  std::vector<Scalar> out(a.data().begin(), a.data().end());
  return make_result("reshape", std::move(shape), std::move(out), {a.node()}, [](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<Scalar> out(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return make_result("add", a.shape(), std::move(out), {a.node(), b.node()}, [](Node& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      auto& g = p->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<Scalar> out(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return make_result("sub", a.shape(), std::move(out), {a.node(), b.node()}, [](Node& self) {
    if (self.parents[0]->requires_grad) {
      auto& g = self.parents[0]->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (self.parents[1]->requires_grad) {
      auto& g = self.parents[1]->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<Scalar> out(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return make_result("mul", a.shape(), std::move(out), {a.node(), b.node()}, [](Node& self) {
    Node& na = *self.parents[0];
    Node& nb = *self.parents[1];
    if (na.requires_grad) {
      auto& g = na.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * nb.data[i];
    }
    if (nb.requires_grad) {
      auto& g = nb.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * na.data[i];
    }
  });
}

Tensor scale(const Tensor& a, Scalar factor) {
  std::vector<Scalar> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= factor;
  return make_result("scale", a.shape(), std::move(out), {a.node()}, [factor](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
  });
}

Tensor add_row(const Tensor& a, const Tensor& bias) {
  const auto m = as_matrix(a);
  if (bias.numel() != m.cols) {
    throw DimensionError("add_row: bias of " + std::to_string(bias.numel()) + " for " +
                         std::to_string(m.cols) + " columns");
  }
  std::vector<Scalar> out(a.data().begin(), a.data().end());
  auto bv = bias.data();
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c) out[r * m.cols + c] += bv[c];
  return make_result("add_row", a.shape(), std::move(out), {a.node(), bias.node()}, [m](Node& self) {
    if (self.parents[0]->requires_grad) {
      auto& g = self.parents[0]->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (self.parents[1]->requires_grad) {
      auto& g = self.parents[1]->ensure_grad();
      for (std::size_t r = 0; r < m.rows; ++r)
        for (std::size_t c = 0; c < m.cols; ++c) g[c] += self.grad[r * m.cols + c];
    }
  });
}

Tensor relu(const Tensor& a) {
  std::vector<Scalar> out(a.data().begin(), a.data().end());
  for (auto& v : out) v = v > 0.0 ? v : 0.0;
  return make_result("relu", a.shape(), std::move(out), {a.node()}, [](Node& self) {
    Node& in = *self.parents[0];
    auto& g = in.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (in.data[i] > 0.0) g[i] += self.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Normalization

Tensor log_softmax(const Tensor& x, int axis) {
  auto m = as_matrix(x);
  if (x.ndim() == 1) axis = 1;
  if (axis != 0 && axis != 1) throw DimensionError("log_softmax: axis must be 0 or 1");
  // Slices are visited through (count, length, stride) so one loop serves both axes.
  const std::size_t count = axis == 1 ? m.rows : m.cols;
  const std::size_t length = axis == 1 ? m.cols : m.rows;
  const std::size_t stride = axis == 1 ? 1 : m.cols;
  const std::size_t step = axis == 1 ? m.cols : 1;
  auto in = x.data();
  std::vector<Scalar> out(in.size());
  for (std::size_t s = 0; s < count; ++s) {
    const std::size_t base = s * step;
    Scalar mx = -std::numeric_limits<Scalar>::infinity();
    for (std::size_t i = 0; i < length; ++i) mx = std::max(mx, in[base + i * stride]);
    Scalar total = 0.0;
    for (std::size_t i = 0; i < length; ++i) total += std::exp(in[base + i * stride] - mx);
    const Scalar lse = mx + std::log(total);
    for (std::size_t i = 0; i < length; ++i) out[base + i * stride] = in[base + i * stride] - lse;
  }
  return make_result("log_softmax", x.shape(), std::move(out), {x.node()},
                     [count, length, stride, step](Node& self) {
                       auto& g = self.parents[0]->ensure_grad();
                       for (std::size_t s = 0; s < count; ++s) {
                         const std::size_t base = s * step;
                         Scalar gsum = 0.0;
                         for (std::size_t i = 0; i < length; ++i) gsum += self.grad[base + i * stride];
                         for (std::size_t i = 0; i < length; ++i) {
                           const std::size_t k = base + i * stride;
                           g[k] += self.grad[k] - std::exp(self.data[k]) * gsum;
                         }
                       }
                     });
}

Tensor masked_softmax(const Tensor& x, const std::vector<std::uint8_t>& keep) {
  const auto m = as_matrix(x);
  if (keep.size() != x.numel()) throw DimensionError("masked_softmax: mask size mismatch");
  auto in = x.data();
  std::vector<Scalar> out(in.size(), 0.0);
  for (std::size_t r = 0; r < m.rows; ++r) {
    const std::size_t base = r * m.cols;
    Scalar mx = -std::numeric_limits<Scalar>::infinity();
    for (std::size_t c = 0; c < m.cols; ++c)
      if (keep[base + c]) mx = std::max(mx, in[base + c]);
    if (!std::isfinite(mx)) continue;
    Scalar total = 0.0;
    for (std::size_t c = 0; c < m.cols; ++c) {
      if (!keep[base + c]) continue;
      out[base + c] = std::exp(in[base + c] - mx);
      total += out[base + c];
    }
    for (std::size_t c = 0; c < m.cols; ++c) out[base + c] /= total;
  }
  return make_result("masked_softmax", x.shape(), std::move(out), {x.node()}, [m](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t r = 0; r < m.rows; ++r) {
      const std::size_t base = r * m.cols;
      Scalar dot = 0.0;
      for (std::size_t c = 0; c < m.cols; ++c) dot += self.data[base + c] * self.grad[base + c];
      for (std::size_t c = 0; c < m.cols; ++c)
        g[base + c] += self.data[base + c] * (self.grad[base + c] - dot);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Scalar epsilon) {
  const auto m = as_matrix(x);
  if (gamma.numel() != m.cols || beta.numel() != m.cols) {
    throw DimensionError("layer_norm: gamma/beta must have " + std::to_string(m.cols) + " entries");
  }
  auto in = x.data();
  auto gm = gamma.data();
  auto bt = beta.data();
  std::vector<Scalar> out(in.size());
  std::vector<Scalar> xhat(in.size());
  std::vector<Scalar> inv_std(m.rows);
  const Scalar n = static_cast<Scalar>(m.cols);
  for (std::size_t r = 0; r < m.rows; ++r) {
    const std::size_t base = r * m.cols;
    Scalar mean = 0.0;
    for (std::size_t c = 0; c < m.cols; ++c) mean += in[base + c];
    mean /= n;
    Scalar var = 0.0;
    for (std::size_t c = 0; c < m.cols; ++c) var += (in[base + c] - mean) * (in[base + c] - mean);
    var /= n;
    inv_std[r] = 1.0 / std::sqrt(var + epsilon);
    for (std::size_t c = 0; c < m.cols; ++c) {
      xhat[base + c] = (in[base + c] - mean) * inv_std[r];
      out[base + c] = xhat[base + c] * gm[c] + bt[c];
    }
  }
  return make_result(
      "layer_norm", x.shape(), std::move(out), {x.node(), gamma.node(), beta.node()},
      [m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        Node& nx = *self.parents[0];
        Node& ng = *self.parents[1];
        Node& nb = *self.parents[2];
        if (ng.requires_grad) {
          auto& g = ng.ensure_grad();
          for (std::size_t r = 0; r < m.rows; ++r)
            for (std::size_t c = 0; c < m.cols; ++c)
              g[c] += self.grad[r * m.cols + c] * xhat[r * m.cols + c];
        }
        if (nb.requires_grad) {
          auto& g = nb.ensure_grad();
          for (std::size_t r = 0; r < m.rows; ++r)
            for (std::size_t c = 0; c < m.cols; ++c) g[c] += self.grad[r * m.cols + c];
        }
        if (nx.requires_grad) {
          auto& g = nx.ensure_grad();
          std::vector<Scalar> dxhat(m.cols);
          for (std::size_t r = 0; r < m.rows; ++r) {
            const std::size_t base = r * m.cols;
            Scalar sum_d = 0.0, sum_dx = 0.0;
            for (std::size_t c = 0; c < m.cols; ++c) {
              dxhat[c] = self.grad[base + c] * ng.data[c];
              sum_d += dxhat[c];
              sum_dx += dxhat[c] * xhat[base + c];
            }
            for (std::size_t c = 0; c < m.cols; ++c) {
              g[base + c] += inv_std[r] / n * (n * dxhat[c] - sum_d - xhat[base + c] * sum_dx);
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Indexing and layout

Tensor embedding(const Tensor& table, std::span<const int> ids) {
  const auto m = as_matrix(table);
  std::vector<int> rows(ids.begin(), ids.end());
  std::vector<Scalar> out(rows.size() * m.cols);
  auto tv = table.data();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || static_cast<std::size_t>(rows[i]) >= m.rows) {
      throw std::out_of_range("embedding: id " + std::to_string(rows[i]) + " outside [0, " +
                              std::to_string(m.rows) + ")");
    }
    std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>(rows[i] * m.cols), m.cols,
                out.begin() + static_cast<std::ptrdiff_t>(i * m.cols));
  }
  const Shape shape{rows.size(), m.cols};
  return make_result("embedding", shape, std::move(out), {table.node()},
                     [m, rows = std::move(rows)](Node& self) {
                       auto& g = self.parents[0]->ensure_grad();
                       for (std::size_t i = 0; i < rows.size(); ++i)
                         for (std::size_t c = 0; c < m.cols; ++c)
                           g[static_cast<std::size_t>(rows[i]) * m.cols + c] += self.grad[i * m.cols + c];
                     });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t rows = as_matrix(parts[0]).rows;
  std::vector<std::size_t> widths;
  std::vector<std::shared_ptr<Node>> inputs;
  std::size_t total = 0;
  for (const auto& p : parts) {
    const auto m = as_matrix(p);
    if (m.rows != rows) throw DimensionError("concat_cols: row counts differ");
    widths.push_back(m.cols);
    inputs.push_back(p.node());
    total += m.cols;
  }
  std::vector<Scalar> out(rows * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto pv = parts[k].data();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(r * widths[k]), widths[k],
                  out.begin() + static_cast<std::ptrdiff_t>(r * total + offset));
    offset += widths[k];
  }
  return make_result("concat_cols", {rows, total}, std::move(out), std::move(inputs),
                     [rows, total, widths = std::move(widths)](Node& self) {
                       std::size_t off = 0;
                       for (std::size_t k = 0; k < widths.size(); ++k) {
                         Node& p = *self.parents[k];
                         if (p.requires_grad) {
                           auto& g = p.ensure_grad();
                           for (std::size_t r = 0; r < rows; ++r)
                             for (std::size_t c = 0; c < widths[k]; ++c)
                               g[r * widths[k] + c] += self.grad[r * total + off + c];
                         }
                         off += widths[k];
                       }
                     });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count) {
  const auto m = as_matrix(x);
  if (begin + count > m.cols) throw DimensionError("slice_cols: range exceeds columns");
  std::vector<Scalar> out(m.rows * count);
  auto xv = x.data();
  for (std::size_t r = 0; r < m.rows; ++r)
    std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(r * m.cols + begin), count,
                out.begin() + static_cast<std::ptrdiff_t>(r * count));
  return make_result("slice_cols", {m.rows, count}, std::move(out), {x.node()},
                     [m, begin, count](Node& self) {
                       auto& g = self.parents[0]->ensure_grad();
                       for (std::size_t r = 0; r < m.rows; ++r)
                         for (std::size_t c = 0; c < count; ++c)
                           g[r * m.cols + begin + c] += self.grad[r * count + c];
                     });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count) {
  const auto m = as_matrix(x);
  if (begin + count > m.rows) throw DimensionError("slice_rows: range exceeds rows");
  auto xv = x.data();
  std::vector<Scalar> out(xv.begin() + static_cast<std::ptrdiff_t>(begin * m.cols),
                          xv.begin() + static_cast<std::ptrdiff_t>((begin + count) * m.cols));
  return make_result("slice_rows", {count, m.cols}, std::move(out), {x.node()}, [m, begin](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * m.cols + i] += self.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& x) {
  Scalar total = 0.0;
  for (Scalar v : x.data()) total += v;
  return make_result("sum", {1}, {total}, {x.node()}, [](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (auto& v : g) v += self.grad[0];
  });
}

Tensor weighted_sum(const Tensor& x, std::span<const Scalar> weights) {
  if (weights.size() != x.numel()) throw DimensionError("weighted_sum: weight count mismatch");
  Scalar total = 0.0;
  auto xv = x.data();
  for (std::size_t i = 0; i < weights.size(); ++i) total += xv[i] * weights[i];
  std::vector<Scalar> w(weights.begin(), weights.end());
  return make_result("weighted_sum", {1}, {total}, {x.node()}, [w = std::move(w)](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * w[i];
  });
}

Tensor dropout(const Tensor& x, Scalar rate, std::uint64_t seed) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) throw std::invalid_argument("dropout: rate must be < 1");
  std::mt19937_64 gen(seed);
  const auto threshold = static_cast<std::uint64_t>(rate * 18446744073709551616.0);
  const Scalar keep_scale = 1.0 / (1.0 - rate);
  std::vector<Scalar> mask(x.numel());
  for (auto& v : mask) v = gen() >= threshold ? keep_scale : 0.0;
  std::vector<Scalar> out(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return make_result("dropout", x.shape(), std::move(out), {x.node()}, [mask = std::move(mask)](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * mask[i];
  });
}

// ---------------------------------------------------------------------------
// Convolution front-end

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride,
              std::size_t pad) {
  if (x.ndim() != 3 || w.ndim() != 4) throw DimensionError("conv2d: expects x[C,H,W] and w[O,C,k,k]");
  const std::size_t cin = x.dim(0), height = x.dim(1), width = x.dim(2);
  const std::size_t cout = w.dim(0), k = w.dim(2);
  if (w.dim(1) != cin || w.dim(3) != k) throw DimensionError("conv2d: weight shape mismatch");
  if (bias.numel() != cout) throw DimensionError("conv2d: bias size mismatch");
  if (stride == 0 || height + 2 * pad < k || width + 2 * pad < k) {
    throw DimensionError("conv2d: input " + shape_str(x.shape()) + " too small for kernel");
  }
  const std::size_t out_h = (height + 2 * pad - k) / stride + 1;
  const std::size_t out_w = (width + 2 * pad - k) / stride + 1;
  const std::size_t patch = cin * k * k;
  const std::size_t positions = out_h * out_w;

  // im2col: column p holds the receptive field of output position p.
  std::vector<Scalar> cols(patch * positions, 0.0);
  auto xv = x.data();
  for (std::size_t c = 0; c < cin; ++c)
    for (std::size_t ki = 0; ki < k; ++ki)
      for (std::size_t kj = 0; kj < k; ++kj) {
        const std::size_t row = (c * k + ki) * k + kj;
        for (std::size_t oh = 0; oh < out_h; ++oh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * stride + ki) - static_cast<std::ptrdiff_t>(pad);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(height)) continue;
          for (std::size_t ow = 0; ow < out_w; ++ow) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * stride + kj) - static_cast<std::ptrdiff_t>(pad);
            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(width)) continue;
            cols[row * positions + oh * out_w + ow] =
                xv[(c * height + static_cast<std::size_t>(ih)) * width + static_cast<std::size_t>(iw)];
          }
        }
      }

  std::vector<Scalar> out(cout * positions);
  MapMat om(out.data(), cout, positions);
  om.noalias() = ConstMapMat(w.data().data(), cout, patch) * ConstMapMat(cols.data(), patch, positions);
  auto bv = bias.data();
  for (std::size_t o = 0; o < cout; ++o) om.row(o).array() += bv[o];

  return make_result(
      "conv2d", {cout, out_h, out_w}, std::move(out), {x.node(), w.node(), bias.node()},
      [=, cols = std::move(cols)](Node& self) {
        ConstMapMat g(self.grad.data(), cout, positions);
        Node& nx = *self.parents[0];
        Node& nw = *self.parents[1];
        Node& nb = *self.parents[2];
        if (nw.requires_grad) {
          MapMat(nw.ensure_grad().data(), cout, patch).noalias() +=
              g * ConstMapMat(cols.data(), patch, positions).transpose();
        }
        if (nb.requires_grad) {
          auto& gb = nb.ensure_grad();
          for (std::size_t o = 0; o < cout; ++o) gb[o] += g.row(o).sum();
        }
        if (nx.requires_grad) {
          RowMat gcols = ConstMapMat(nw.data.data(), cout, patch).transpose() * g;
          auto& gx = nx.ensure_grad();
          for (std::size_t c = 0; c < cin; ++c)
            for (std::size_t ki = 0; ki < k; ++ki)
              for (std::size_t kj = 0; kj < k; ++kj) {
                const std::size_t row = (c * k + ki) * k + kj;
                for (std::size_t oh = 0; oh < out_h; ++oh) {
                  const auto ih = static_cast<std::ptrdiff_t>(oh * stride + ki) - static_cast<std::ptrdiff_t>(pad);
                  if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(height)) continue;
                  for (std::size_t ow = 0; ow < out_w; ++ow) {
                    const auto iw = static_cast<std::ptrdiff_t>(ow * stride + kj) - static_cast<std::ptrdiff_t>(pad);
                    if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(width)) continue;
                    gx[(c * height + static_cast<std::size_t>(ih)) * width + static_cast<std::size_t>(iw)] +=
                        gcols(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(oh * out_w + ow));
                  }
                }
              }
        }
      });
}

Tensor flatten_time_major(const Tensor& x) {
  if (x.ndim() != 3) throw DimensionError("flatten_time_major: expects [C,H,W]");
  const std::size_t channels = x.dim(0), height = x.dim(1), width = x.dim(2);
  std::vector<Scalar> out(x.numel());
  auto xv = x.data();
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t h = 0; h < height; ++h)
      for (std::size_t w = 0; w < width; ++w)
        out[h * channels * width + c * width + w] = xv[(c * height + h) * width + w];
  return make_result("flatten_time_major", {height, channels * width}, std::move(out), {x.node()},
                     [channels, height, width](Node& self) {
                       auto& g = self.parents[0]->ensure_grad();
                       for (std::size_t c = 0; c < channels; ++c)
                         for (std::size_t h = 0; h < height; ++h)
                           for (std::size_t w = 0; w < width; ++w)
                             g[(c * height + h) * width + w] += self.grad[h * channels * width + c * width + w];
                     });
}

Tensor scalar_with_gradient(Scalar value, const Tensor& input, std::vector<Scalar> d_input) {
  if (d_input.size() != input.numel()) throw DimensionError("scalar_with_gradient: gradient size mismatch");
  return make_result("scalar_with_gradient", {1}, {value}, {input.node()},
                     [d = std::move(d_input)](Node& self) {
                       auto& g = self.parents[0]->ensure_grad();
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * d[i];
                     });
}

// ---------------------------------------------------------------------------
// Gradient checking

bool GradCheckReport::passed() const {
  return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.passed; });
}

std::vector<std::string> GradCheckReport::failures() const {
  std::vector<std::string> out;
  for (const auto& e : entries)
    if (!e.passed) out.push_back(e.name);
  return out;
}

GradCheckReport grad_check(const std::function<Tensor()>& loss_fn,
                           const std::vector<NamedTensor>& params,
                           const GradCheckOptions& options) {
  std::vector<Tensor> ps;
  for (const auto& p : params) ps.push_back(p.tensor);
  for (auto& p : ps) p.zero_grad();
  loss_fn().backward();
  std::vector<std::vector<Scalar>> analytic;
  for (auto& p : ps) {
    auto g = p.grad();
    analytic.emplace_back(g.begin(), g.end());
    p.zero_grad();
  }

  GradCheckReport report;
  NoGradGuard no_grad;
  for (std::size_t k = 0; k < ps.size(); ++k) {
    GradCheckEntry entry;
    entry.name = params[k].name;
    auto values = ps[k].mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const Scalar saved = values[i];
      values[i] = saved + options.step;
      const Scalar up = loss_fn().item();
      values[i] = saved - options.step;
      const Scalar down = loss_fn().item();
      values[i] = saved;
      const Scalar numeric = (up - down) / (2.0 * options.step);
      const Scalar a = analytic[k][i];
      const Scalar denom = std::max({std::abs(a), std::abs(numeric), options.floor});
      entry.max_deviation = std::max(entry.max_deviation, std::abs(a - numeric) / denom);
      entry.max_abs_analytic = std::max(entry.max_abs_analytic, std::abs(a));
      entry.max_abs_numeric = std::max(entry.max_abs_numeric, std::abs(numeric));
    }
    entry.passed = entry.max_deviation <= options.tolerance;
    report.entries.push_back(entry);
  }
  return report;
}

}  // namespace letr
