// Dense tensors with tape-based reverse-mode automatic differentiation.
//
// A Tensor is a cheap handle to a shared node. Operations on tensors that
// require gradients record their inputs and a backward closure; calling
// backward() on a scalar result walks the recorded nodes in exact reverse
// creation order. Leaf gradients accumulate additively across uses and
// across calls; the optimizer owns zeroing.
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace letr {

using Scalar = double;
using Shape = std::vector<std::size_t>;

/// Thrown for shape or dimension disagreements between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when a non-finite value is produced from finite inputs.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {
struct Node;
}

class Tensor {
 public:
  Tensor();

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, Scalar value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<Scalar> values, bool requires_grad = false);
  static Tensor scalar(Scalar value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t ndim() const { return shape().size(); }
  std::size_t dim(std::size_t i) const;
  std::size_t numel() const;
  // 2-D accessors; a 1-D tensor is treated as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const Scalar> data() const;
  /// Direct write access. Intended for parameter updates and finite
  /// differences; writing into a recorded intermediate invalidates its graph.
  std::span<Scalar> mutable_data();
  Scalar item() const;
  Scalar at(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool flag);
  bool has_grad() const;
  /// Gradient buffer; all zeros when nothing has been accumulated yet.
  std::span<const Scalar> grad() const;
  std::span<Scalar> mutable_grad();
  void zero_grad();

  /// Reverse-mode sweep from this scalar. Throws std::logic_error if the
  /// graph behind this tensor was already consumed by an earlier call.
  void backward() const;

  /// Same values, no history, no gradient requirement.
  Tensor detach() const;
  Tensor clone() const;

  /// Creation index of the underlying node (graph execution order).
  std::uint64_t id() const;

  // Used by op implementations.
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_mode_enabled();

// ---------------------------------------------------------------------------
// Operations. Unless stated otherwise, 2-D operands are [rows x cols] and a
// 1-D operand of length n behaves like a [1 x n] row.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, Scalar factor);
/// [m x n] + bias[n], broadcast over rows.
Tensor add_row(const Tensor& a, const Tensor& bias);
Tensor relu(const Tensor& a);

/// Log-softmax of a 2-D tensor along axis 0 (columns) or 1 (rows).
Tensor log_softmax(const Tensor& x, int axis = 1);
/// Row softmax where only entries with keep[i] != 0 participate. Rows with
/// nothing kept produce zeros.
Tensor masked_softmax(const Tensor& x, const std::vector<std::uint8_t>& keep);

/// Normalizes each row to zero mean / unit variance, then applies gamma, beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  Scalar epsilon = 1e-5);

/// Rows of `table` [V x d] selected by ids; backward scatters into the rows.
Tensor embedding(const Tensor& table, std::span<const int> ids);

Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count);

Tensor sum(const Tensor& x);
/// sum_i x_i * weights_i with constant weights.
Tensor weighted_sum(const Tensor& x, std::span<const Scalar> weights);

/// Inverted dropout with a mask drawn from `seed`. Identity when rate == 0.
Tensor dropout(const Tensor& x, Scalar rate, std::uint64_t seed);

/// 2-D convolution of x [C_in x H x W] with w [C_out x C_in x k x k] and
/// bias [C_out]; zero padding `pad`, stride `stride`.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride,
              std::size_t pad);
/// [C x H x W] -> [H x (C*W)], channel-major within each row.
Tensor flatten_time_major(const Tensor& x);

/// Scalar node whose value and derivative w.r.t. `input` were computed
/// externally (e.g. by a dynamic-programming loss).
Tensor scalar_with_gradient(Scalar value, const Tensor& input, std::vector<Scalar> d_input);

// ---------------------------------------------------------------------------
// Finite-difference gradient checking.

struct GradCheckOptions {
  Scalar step = 1e-6;
  Scalar tolerance = 1e-5;
  // Denominator floor for the relative deviation so that gradients close to
  // zero are compared on an absolute scale.
  Scalar floor = 1e-3;
};

struct GradCheckEntry {
  std::string name;
  Scalar max_deviation = 0.0;
  Scalar max_abs_analytic = 0.0;
  Scalar max_abs_numeric = 0.0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  bool passed() const;
  std::vector<std::string> failures() const;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Compares analytic gradients of `loss_fn` against central differences for
/// every element of every listed parameter. `loss_fn` must be deterministic.
GradCheckReport grad_check(const std::function<Tensor()>& loss_fn,
                           const std::vector<NamedTensor>& params,
                           const GradCheckOptions& options = {});

}  // namespace letr
