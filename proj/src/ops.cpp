#include "mlcak/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "mlcak/error.hpp"

namespace mlcak {

namespace {

std::size_t normalize_axis(int axis, std::size_t rank, const char* op) {
  const auto r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " invalid for rank " + std::to_string(rank));
  }
  return static_cast<std::size_t>(a);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

// C[m x n] += A[m x k] · B[k x n]. Four rows of A per pass so each row of B
// is loaded once per block; the j loops are contiguous and vectorize.
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    double* c0 = c + i * n;
    double* c1 = c0 + n;
    double* c2 = c1 + n;
    double* c3 = c2 + n;
    const double* a0 = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double v0 = a0[p], v1 = a0[k + p], v2 = a0[2 * k + p], v3 = a0[3 * k + p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) {
        const double bv = brow[j];
        c0[j] += v0 * bv;
        c1[j] += v1 * bv;
        c2[j] += v2 * bv;
        c3[j] += v3 * bv;
      }
    }
  }
  for (; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m x n] += A[m x k] · B[n x k]ᵀ
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c) {
  thread_local std::vector<double> bt;
  bt.resize(k * n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
  gemm_nn(m, k, n, a, bt.data(), c);
}

// C[m x n] += A[k x m]ᵀ · B[k x n], four rows of the reduction per pass.
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c) {
  std::size_t p = 0;
  for (; p + 4 <= k; p += 4) {
    const double* a0 = a + p * m;
    const double* b0 = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double v0 = a0[i], v1 = a0[m + i], v2 = a0[2 * m + i], v3 = a0[3 * m + i];
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) {
        crow[j] += v0 * b0[j] + v1 * b0[n + j] + v2 * b0[2 * n + j] + v3 * b0[3 * n + j];
      }
    }
  }
  for (; p < k; ++p) {
    const double* arow = a + p * m;
    const double* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = arow[i];
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

std::size_t leading_numel(const Shape& s, std::size_t keep) {
  std::size_t n = 1;
  for (std::size_t i = 0; i + keep < s.size(); ++i) n *= s[i];
  return n;
}

// Splits a shape around `axis` into [outer, len, inner].
struct AxisView {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisView axis_view(const Shape& s, std::size_t axis) {
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= s[i];
  v.len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) v.inner *= s[i];
  return v;
}

std::vector<std::size_t> strides_of(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i];
  return make_op_result("add", a.shape(), std::move(out), {a, b}, [a, b](auto g, auto) {
    for (const auto& t : {a, b}) {
      auto acc = grad_accumulator(t);
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] - bd[i];
  return make_op_result("sub", a.shape(), std::move(out), {a, b}, [a, b](auto g, auto) {
    auto ga = grad_accumulator(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
    auto gb = grad_accumulator(b);
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
  return make_op_result("mul", a.shape(), std::move(out), {a, b}, [a, b](auto g, auto) {
    auto ad = a.data(), bd = b.data();
    auto ga = grad_accumulator(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * bd[i];
    auto gb = grad_accumulator(b);
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * ad[i];
  });
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= factor;
  return make_op_result("scale", x.shape(), std::move(out), {x}, [x, factor](auto g, auto) {
    auto gx = grad_accumulator(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * factor;
  });
}

Tensor add_broadcast(const Tensor& x, const Tensor& y) {
  const auto& xs = x.shape();
  const auto& ys = y.shape();
  if (ys.size() > xs.size() || !std::equal(ys.begin(), ys.end(), xs.end() - static_cast<std::ptrdiff_t>(ys.size()))) {
    throw ShapeError("add_broadcast: " + shape_string(ys) + " is not a trailing shape of " + shape_string(xs));
  }
  const std::size_t inner = y.numel();
  const std::size_t outer = x.numel() / inner;
  std::vector<double> out(x.data().begin(), x.data().end());
  auto yd = y.data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += yd[i];
  return make_op_result("add_broadcast", xs, std::move(out), {x, y}, [x, y, outer, inner](auto g, auto) {
    auto gx = grad_accumulator(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
    auto gy = grad_accumulator(y);
    if (!gy.empty()) {
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < inner; ++i) gy[i] += g[o * inner + i];
    }
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  auto mismatch = [&] {
    return ShapeError("matmul: incompatible shapes " + shape_string(as) + " and " + shape_string(bs));
  };
  if (as.size() < 2 || bs.size() < 2) throw mismatch();
  const std::size_t m = as[as.size() - 2], k = as.back();
  if (bs[bs.size() - 2] != k) throw mismatch();
  const std::size_t n = bs.back();

  Shape out_shape(as.begin(), as.end() - 1);
  out_shape.push_back(n);

  if (bs.size() == 2) {
    // Shared right operand: fold every leading axis of a into the row count.
    const std::size_t rows = leading_numel(as, 1);
    std::vector<double> out(rows * n, 0.0);
    gemm_nn(rows, k, n, a.data().data(), b.data().data(), out.data());
    return make_op_result("matmul", std::move(out_shape), std::move(out), {a, b}, [a, b, rows, k, n](auto g, auto) {
      auto ga = grad_accumulator(a);
      if (!ga.empty()) gemm_nt(rows, n, k, g.data(), b.data().data(), ga.data());
      auto gb = grad_accumulator(b);
      if (!gb.empty()) gemm_tn(k, rows, n, a.data().data(), g.data(), gb.data());
    });
  }

  if (as.size() != bs.size() || !std::equal(as.begin(), as.end() - 2, bs.begin())) throw mismatch();
  const std::size_t batch = leading_numel(as, 2);
  std::vector<double> out(batch * m * n, 0.0);
  for (std::size_t i = 0; i < batch; ++i) {
    gemm_nn(m, k, n, a.data().data() + i * m * k, b.data().data() + i * k * n, out.data() + i * m * n);
  }
  return make_op_result("bmm", std::move(out_shape), std::move(out), {a, b}, [a, b, batch, m, k, n](auto g, auto) {
    auto ga = grad_accumulator(a);
    auto gb = grad_accumulator(b);
    for (std::size_t i = 0; i < batch; ++i) {
      const double* gi = g.data() + i * m * n;
      if (!ga.empty()) gemm_nt(m, n, k, gi, b.data().data() + i * k * n, ga.data() + i * m * k);
      if (!gb.empty()) gemm_tn(k, m, n, a.data().data() + i * m * k, gi, gb.data() + i * k * n);
    }
  });
}

Tensor matmul_transposed(const Tensor& a, const Tensor& b) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  if (as.size() < 2 || as.size() != bs.size() || as.back() != bs.back() ||
      !std::equal(as.begin(), as.end() - 2, bs.begin())) {
    throw ShapeError("matmul_transposed: incompatible shapes " + shape_string(as) + " and " + shape_string(bs));
  }
  const std::size_t m = as[as.size() - 2], k = as.back(), n = bs[bs.size() - 2];
  const std::size_t batch = leading_numel(as, 2);
  Shape out_shape(as.begin(), as.end() - 1);
  out_shape.push_back(n);
  std::vector<double> out(batch * m * n, 0.0);
  for (std::size_t i = 0; i < batch; ++i) {
    gemm_nt(m, k, n, a.data().data() + i * m * k, b.data().data() + i * n * k, out.data() + i * m * n);
  }
  return make_op_result("bmm_nt", std::move(out_shape), std::move(out), {a, b}, [a, b, batch, m, k, n](auto g, auto) {
    auto ga = grad_accumulator(a);
    auto gb = grad_accumulator(b);
    for (std::size_t i = 0; i < batch; ++i) {
      const double* gi = g.data() + i * m * n;
      if (!ga.empty()) gemm_nn(m, n, k, gi, b.data().data() + i * n * k, ga.data() + i * m * k);
      if (!gb.empty()) gemm_tn(n, m, k, gi, a.data().data() + i * m * k, gb.data() + i * n * k);
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_string(x.shape()) + " as " + shape_string(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_op_result("reshape", std::move(shape), std::move(out), {x}, [x](auto g, auto) {
    auto gx = grad_accumulator(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
  });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes) {
  const auto& xs = x.shape();
  const std::size_t r = xs.size();
  std::vector<bool> seen(r, false);
  if (axes.size() != r) throw ShapeError("permute: axis list does not match rank of " + shape_string(xs));
  for (auto a : axes) {
    if (a >= r || seen[a]) throw ShapeError("permute: invalid axis list for " + shape_string(xs));
    seen[a] = true;
  }
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = xs[axes[i]];
  const auto in_strides = strides_of(xs);
  // Source stride for each output axis.
  std::vector<std::size_t> src_strides(r);
  for (std::size_t i = 0; i < r; ++i) src_strides[i] = in_strides[axes[i]];

  const std::size_t total = x.numel();
  std::vector<std::size_t> gather(total);
  std::vector<std::size_t> idx(r, 0);
  std::size_t src = 0;
  for (std::size_t o = 0; o < total; ++o) {
    gather[o] = src;
    for (std::size_t d = r; d-- > 0;) {
      ++idx[d];
      src += src_strides[d];
      if (idx[d] < out_shape[d]) break;
      src -= src_strides[d] * idx[d];
      idx[d] = 0;
    }
  }
  std::vector<double> out(total);
  auto xd = x.data();
  for (std::size_t o = 0; o < total; ++o) out[o] = xd[gather[o]];
  return make_op_result("permute", std::move(out_shape), std::move(out), {x},
                        [x, gather = std::move(gather)](auto g, auto) {
                          auto gx = grad_accumulator(x);
                          for (std::size_t o = 0; o < gather.size(); ++o) gx[gather[o]] += g[o];
                        });
}

Tensor select(const Tensor& x, int axis, std::size_t index) {
  const auto ax = normalize_axis(axis, x.rank(), "select");
  const auto v = axis_view(x.shape(), ax);
  if (index >= v.len) {
    throw ShapeError("select: index " + std::to_string(index) + " out of range for axis of size " + std::to_string(v.len));
  }
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(ax));
  if (out_shape.empty()) out_shape.push_back(1);
  std::vector<double> out(v.outer * v.inner);
  auto xd = x.data();
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t i = 0; i < v.inner; ++i) out[o * v.inner + i] = xd[(o * v.len + index) * v.inner + i];
  return make_op_result("select", std::move(out_shape), std::move(out), {x}, [x, v, index](auto g, auto) {
    auto gx = grad_accumulator(x);
    for (std::size_t o = 0; o < v.outer; ++o)
      for (std::size_t i = 0; i < v.inner; ++i) gx[(o * v.len + index) * v.inner + i] += g[o * v.inner + i];
  });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no tensors given");
  const auto& first = parts.front().shape();
  const auto ax = normalize_axis(axis, first.size(), "concat");
  Shape out_shape = first;
  out_shape[ax] = 0;
  for (const auto& p : parts) {
    const auto& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == ax || s[d] == first[d];
    if (!ok) throw ShapeError("concat: " + shape_string(s) + " incompatible with " + shape_string(first));
    out_shape[ax] += s[ax];
  }
  const auto ov = axis_view(out_shape, ax);
  std::vector<double> out(shape_numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const auto pv = axis_view(p.shape(), ax);
    auto pd = p.data();
    for (std::size_t o = 0; o < pv.outer; ++o)
      std::copy_n(pd.begin() + static_cast<std::ptrdiff_t>(o * pv.len * pv.inner), pv.len * pv.inner,
                  out.begin() + static_cast<std::ptrdiff_t>((o * ov.len + offset) * ov.inner));
    offset += pv.len;
  }
  return make_op_result("concat", std::move(out_shape), std::move(out), parts, [parts, offsets, ov, ax](auto g, auto) {
    for (std::size_t k = 0; k < parts.size(); ++k) {
      auto gp = grad_accumulator(parts[k]);
      if (gp.empty()) continue;
      const auto pv = axis_view(parts[k].shape(), ax);
      for (std::size_t o = 0; o < pv.outer; ++o)
        for (std::size_t i = 0; i < pv.len * pv.inner; ++i)
          gp[o * pv.len * pv.inner + i] += g[(o * ov.len + offsets[k]) * ov.inner + i];
    }
  });
}

Tensor expand_leading(const Tensor& x, std::size_t n) {
  if (n == 0) throw ShapeError("expand_leading: size must be positive");
  Shape out_shape{n};
  out_shape.insert(out_shape.end(), x.shape().begin(), x.shape().end());
  const std::size_t inner = x.numel();
  std::vector<double> out(n * inner);
  for (std::size_t r = 0; r < n; ++r) std::copy(x.data().begin(), x.data().end(), out.begin() + static_cast<std::ptrdiff_t>(r * inner));
  return make_op_result("expand_leading", std::move(out_shape), std::move(out), {x}, [x, n, inner](auto g, auto) {
    auto gx = grad_accumulator(x);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t i = 0; i < inner; ++i) gx[i] += g[r * inner + i];
  });
}

Tensor softmax(const Tensor& x, int axis) {
  const auto ax = normalize_axis(axis, x.rank(), "softmax");
  const auto v = axis_view(x.shape(), ax);
  std::vector<double> out(x.numel());
  auto xd = x.data();
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t i = 0; i < v.inner; ++i) {
      const std::size_t base = o * v.len * v.inner + i;
      double mx = xd[base];
      for (std::size_t l = 1; l < v.len; ++l) mx = std::max(mx, xd[base + l * v.inner]);
      double z = 0.0;
      for (std::size_t l = 0; l < v.len; ++l) {
        const double e = std::exp(xd[base + l * v.inner] - mx);
        out[base + l * v.inner] = e;
        z += e;
      }
      for (std::size_t l = 0; l < v.len; ++l) out[base + l * v.inner] /= z;
    }
  }
  return make_op_result("softmax", x.shape(), std::move(out), {x}, [x, v](auto g, auto y) {
    auto gx = grad_accumulator(x);
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t i = 0; i < v.inner; ++i) {
        const std::size_t base = o * v.len * v.inner + i;
        double dot = 0.0;
        for (std::size_t l = 0; l < v.len; ++l) dot += g[base + l * v.inner] * y[base + l * v.inner];
        for (std::size_t l = 0; l < v.len; ++l) {
          const auto j = base + l * v.inner;
          gx[j] += y[j] * (g[j] - dot);
        }
      }
    }
  });
}

Tensor log_softmax(const Tensor& x, int axis) {
  const auto ax = normalize_axis(axis, x.rank(), "log_softmax");
  const auto v = axis_view(x.shape(), ax);
  std::vector<double> out(x.numel());
  auto xd = x.data();
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t i = 0; i < v.inner; ++i) {
      const std::size_t base = o * v.len * v.inner + i;
      double mx = xd[base];
      for (std::size_t l = 1; l < v.len; ++l) mx = std::max(mx, xd[base + l * v.inner]);
      double z = 0.0;
      for (std::size_t l = 0; l < v.len; ++l) z += std::exp(xd[base + l * v.inner] - mx);
      const double lse = mx + std::log(z);
      for (std::size_t l = 0; l < v.len; ++l) out[base + l * v.inner] = xd[base + l * v.inner] - lse;
    }
  }
  return make_op_result("log_softmax", x.shape(), std::move(out), {x}, [x, v](auto g, auto y) {
    auto gx = grad_accumulator(x);
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t i = 0; i < v.inner; ++i) {
        const std::size_t base = o * v.len * v.inner + i;
        double gsum = 0.0;
        for (std::size_t l = 0; l < v.len; ++l) gsum += g[base + l * v.inner];
        for (std::size_t l = 0; l < v.len; ++l) {
          const auto j = base + l * v.inner;
          gx[j] += g[j] - std::exp(y[j]) * gsum;
        }
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (!(eps > 0.0)) throw ParameterError("layer_norm: eps must be positive, got " + std::to_string(eps));
  const std::size_t n = x.shape().back();
  if (gamma.numel() != n || beta.numel() != n) {
    throw ShapeError("layer_norm: gamma " + shape_string(gamma.shape()) + " / beta " + shape_string(beta.shape()) +
                     " must match last axis of " + shape_string(x.shape()));
  }
  const std::size_t rows = x.numel() / n;
  std::vector<double> out(x.numel());
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(rows);
  auto xd = x.data();
  auto gd = gamma.data();
  auto bd = beta.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xd.data() + r * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (row[j] - mu) * is;
      xhat[r * n + j] = h;
      out[r * n + j] = gd[j] * h + bd[j];
    }
  }
  return make_op_result(
      "layer_norm", x.shape(), std::move(out), {x, gamma, beta},
      [x, gamma, beta, rows, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](auto g, auto) {
        auto gx = grad_accumulator(x);
        auto gg = grad_accumulator(gamma);
        auto gb = grad_accumulator(beta);
        auto gd = gamma.data();
        std::vector<double> dxhat(n);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* gr = g.data() + r * n;
          const double* hr = xhat.data() + r * n;
          if (!gg.empty())
            for (std::size_t j = 0; j < n; ++j) gg[j] += gr[j] * hr[j];
          if (!gb.empty())
            for (std::size_t j = 0; j < n; ++j) gb[j] += gr[j];
          if (gx.empty()) continue;
          double mean_d = 0.0, mean_dh = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            dxhat[j] = gr[j] * gd[j];
            mean_d += dxhat[j];
            mean_dh += dxhat[j] * hr[j];
          }
          mean_d /= static_cast<double>(n);
          mean_dh /= static_cast<double>(n);
          for (std::size_t j = 0; j < n; ++j) gx[r * n + j] += inv_std[r] * (dxhat[j] - mean_d - hr[j] * mean_dh);
        }
      });
}

Tensor gelu(const Tensor& x) {
  std::vector<double> out(x.numel());
  auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 0.5 * xd[i] * (1.0 + std::erf(xd[i] * std::numbers::sqrt2 / 2.0));
  return make_op_result("gelu", x.shape(), std::move(out), {x}, [x](auto g, auto) {
    auto gx = grad_accumulator(x);
    auto xd = x.data();
    const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const double v = xd[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      gx[i] += g[i] * (cdf + v * pdf);
    }
  });
}

Tensor sigmoid(const Tensor& x) {
  std::vector<double> out(x.numel());
  auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = xd[i];
    if (v >= 0) {
      out[i] = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      out[i] = e / (1.0 + e);
    }
  }
  return make_op_result("sigmoid", x.shape(), std::move(out), {x}, [x](auto g, auto y) {
    auto gx = grad_accumulator(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return make_op_result("sum", {1}, {s}, {x}, [x](auto g, auto) {
    auto gx = grad_accumulator(x);
    for (auto& v : gx) v += g[0];
  });
}

Tensor mean(const Tensor& x) {
  const double n = static_cast<double>(x.numel());
  double s = 0.0;
  for (double v : x.data()) s += v;
  return make_op_result("mean", {1}, {s / n}, {x}, [x, n](auto g, auto) {
    auto gx = grad_accumulator(x);
    for (auto& v : gx) v += g[0] / n;
  });
}

}  // namespace mlcak
