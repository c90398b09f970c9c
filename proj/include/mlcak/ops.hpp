#pragma once

#include <cstddef>
#include <vector>

#include "mlcak/tensor.hpp"

namespace mlcak {

// Differentiable kernels. Axis arguments accept negative values counted from
// the last axis. All ops throw ShapeError on incompatible shapes.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);

/// x + y where y's shape equals the trailing dimensions of x (biases,
/// positional embeddings).
Tensor add_broadcast(const Tensor& x, const Tensor& y);

/// Matrix product over the last two axes.
/// a: [..., m, k]; b: [k, n] (shared across the leading axes of a) or
/// [..., k, n] with the same leading axes as a.
Tensor matmul(const Tensor& a, const Tensor& b);

/// a · bᵀ over the last two axes: a [..., m, k], b [..., n, k] -> [..., m, n].
Tensor matmul_transposed(const Tensor& a, const Tensor& b);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes);

/// Drops `axis`, keeping slice `index`.
Tensor select(const Tensor& x, int axis, std::size_t index);
Tensor concat(const std::vector<Tensor>& parts, int axis);

/// Repeats x along a new leading axis of size n.
Tensor expand_leading(const Tensor& x, std::size_t n);

/// Max-shifted softmax; every slice along `axis` sums to 1.
Tensor softmax(const Tensor& x, int axis);
Tensor log_softmax(const Tensor& x, int axis);

/// Normalizes each row of the last axis with its population variance, then
/// applies gamma/beta. Throws ParameterError when eps <= 0.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-6);

/// x·Φ(x) with the exact erf form.
Tensor gelu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

}  // namespace mlcak
