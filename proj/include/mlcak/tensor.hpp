#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mlcak {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

class Tape;

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  // Empty until a backward pass reaches this tensor.
  std::vector<double> grad;
  bool requires_grad = false;
  // Set for tensors produced by a recorded op.
  const Tape* tape = nullptr;
  std::size_t node = 0;
};

}  // namespace detail

/// Dense row-major array of doubles with optional gradient.
///
/// A Tensor is a shared handle: copies alias the same storage, the way
/// parameters are shared between a model, the tape, and the optimizer.
/// Use clone() for a deep copy and detach() for a constant view of the values.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  // Mutating values of a tensor that is already on a tape invalidates the
  // recorded backward pass; only leaves (parameters, inputs) should be mutated.
  std::span<double> mutable_data();
  double item() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool value);
  bool is_leaf() const;

  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  /// New tensor holding a copy of the values, outside any tape.
  Tensor detach() const;
  /// Deep copy keeping requires_grad (but not gradient or tape linkage).
  Tensor clone() const;

  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

// Receives the gradient and the values of the op's output.
using BackwardFn = std::function<void(std::span<const double> grad_out, std::span<const double> out)>;

/// Define-by-run gradient tape.
///
/// Constructing a Tape makes it the active tape of the calling thread until it
/// is destroyed; ops whose inputs require gradients record themselves on the
/// active tape. Without an active tape ops compute values only.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  std::size_t size() const { return nodes_.size(); }

  /// Reverse traversal from `loss`; leaf gradients accumulate additively.
  void backward(const Tensor& loss);

  void record(std::string_view op, std::vector<Tensor> inputs, Tensor& output, BackwardFn fn);

 private:
  struct Node {
    std::string_view op;
    std::vector<std::shared_ptr<detail::TensorImpl>> inputs;
    std::shared_ptr<detail::TensorImpl> output;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  Tape* previous_;
  bool consumed_ = false;
};

/// Suspends recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  Tape* saved_;
};

/// Runs backward on the active tape.
void backward(const Tensor& loss);

/// Builds the result of a custom op. When a tape is active and any input
/// requires a gradient, the result is recorded with `fn`, which must add the
/// input gradients through grad_accumulator().
Tensor make_op_result(std::string_view op, Shape shape, std::vector<double> values,
                      std::vector<Tensor> inputs, BackwardFn fn);

/// Gradient buffer of `t` for accumulation inside a BackwardFn; empty when `t`
/// does not take gradients.
std::span<double> grad_accumulator(const Tensor& t);

}  // namespace mlcak
