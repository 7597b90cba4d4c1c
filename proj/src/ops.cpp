#include "causecast/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "causecast/error.hpp"

namespace causecast::ops {
namespace {

// Number of times `b` repeats over `a` under suffix broadcasting.
std::size_t broadcast_repeats(const Shape& a, const Shape& b, const char* op) {
  if (b.size() > a.size() || !std::equal(b.rbegin(), b.rend(), a.rbegin())) {
    fail(ErrorCategory::dimension,
         std::string(op) + ": cannot broadcast " + shape_str(b) + " onto " + shape_str(a));
  }
  const std::size_t nb = shape_numel(b);
  return nb == 0 ? 0 : shape_numel(a) / nb;
}

void require_rank(const Tensor& x, std::size_t min_rank, const char* op) {
  if (x.rank() < min_rank) {
    fail(ErrorCategory::dimension, std::string(op) + ": rank " + std::to_string(x.rank()) + " below " +
                                       std::to_string(min_rank));
  }
}

// C[m x n] (+)= op(A) * op(B) with row-major storage.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double* c) {
  if (!trans_a && !trans_b) {
    for (std::size_t i = 0; i < m; ++i) {
      double* ci = c + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = a[i * k + p];
        if (av == 0.0) continue;
        const double* bp = b + p * n;
        for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
      }
    }
  } else if (!trans_a && trans_b) {  // B stored n x k
    for (std::size_t i = 0; i < m; ++i) {
      const double* ai = a + i * k;
      for (std::size_t j = 0; j < n; ++j) {
        const double* bj = b + j * k;
        double acc = 0.0;
        for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
        c[i * n + j] += acc;
      }
    }
  } else if (trans_a && !trans_b) {  // A stored k x m
    for (std::size_t p = 0; p < k; ++p) {
      const double* ap = a + p * m;
      const double* bp = b + p * n;
      for (std::size_t i = 0; i < m; ++i) {
        const double av = ap[i];
        if (av == 0.0) continue;
        double* ci = c + i * n;
        for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
      }
    }
  } else {
    fail(ErrorCategory::dimension, "gemm: double transpose unsupported");
  }
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& x, Fwd fwd, Deriv deriv) {
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  return Tensor::from_op(x.shape(), std::move(out), {x}, [deriv](TensorNode& self) {
    auto& px = *self.parents[0];
    if (!px.requires_grad) return;
    auto& g = px.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * deriv(px.data[i], self.data[i]);
  });
}

std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
  return strides;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  const std::size_t reps = broadcast_repeats(a.shape(), b.shape(), "add");
  const std::size_t nb = b.numel();
  auto av = a.values();
  auto bv = b.values();
  std::vector<double> out(av.begin(), av.end());
  for (std::size_t r = 0; r < reps; ++r)
    for (std::size_t j = 0; j < nb; ++j) out[r * nb + j] += bv[j];
  return Tensor::from_op(a.shape(), std::move(out), {a, b}, [reps, nb](TensorNode& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.ensure_grad();
      for (std::size_t r = 0; r < reps; ++r)
        for (std::size_t j = 0; j < nb; ++j) g[j] += self.grad[r * nb + j];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(b, -1.0)); }

Tensor mul(const Tensor& a, const Tensor& b) {
  const std::size_t reps = broadcast_repeats(a.shape(), b.shape(), "mul");
  const std::size_t nb = b.numel();
  auto av = a.values();
  auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t r = 0; r < reps; ++r)
    for (std::size_t j = 0; j < nb; ++j) out[r * nb + j] = av[r * nb + j] * bv[j];
  return Tensor::from_op(a.shape(), std::move(out), {a, b}, [reps, nb](TensorNode& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.ensure_grad();
      for (std::size_t r = 0; r < reps; ++r)
        for (std::size_t j = 0; j < nb; ++j) g[r * nb + j] += self.grad[r * nb + j] * pb.data[j];
    }
    if (pb.requires_grad) {
      auto& g = pb.ensure_grad();
      for (std::size_t r = 0; r < reps; ++r)
        for (std::size_t j = 0; j < nb; ++j) g[j] += self.grad[r * nb + j] * pa.data[r * nb + j];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * factor;
  return Tensor::from_op(a.shape(), std::move(out), {a}, [factor](TensorNode& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  const std::size_t m = as[as.size() - 2];
  const std::size_t k = as.back();
  const std::size_t n = bs.back();
  if (bs[bs.size() - 2] != k) {
    fail(ErrorCategory::dimension, "matmul: inner extents differ " + shape_str(as) + " x " + shape_str(bs));
  }
  Shape out_shape(as.begin(), as.end() - 1);
  out_shape.push_back(n);

  if (b.rank() == 2) {
    // Fold all leading axes of `a` into the row dimension.
    const std::size_t rows = a.numel() / k;
    std::vector<double> out(rows * n, 0.0);
    gemm(false, false, rows, n, k, a.values().data(), b.values().data(), out.data());
    return Tensor::from_op(std::move(out_shape), std::move(out), {a, b}, [rows, n, k](TensorNode& self) {
      auto& pa = *self.parents[0];
      auto& pb = *self.parents[1];
      if (pa.requires_grad) gemm(false, true, rows, k, n, self.grad.data(), pb.data.data(), pa.ensure_grad().data());
      if (pb.requires_grad) gemm(true, false, k, n, rows, pa.data.data(), self.grad.data(), pb.ensure_grad().data());
    });
  }

  if (a.rank() != b.rank() || !std::equal(as.begin(), as.end() - 2, bs.begin())) {
    fail(ErrorCategory::dimension, "matmul: batch axes differ " + shape_str(as) + " x " + shape_str(bs));
  }
  const std::size_t batch = a.numel() / (m * k);
  std::vector<double> out(batch * m * n, 0.0);
  for (std::size_t i = 0; i < batch; ++i) {
    gemm(false, false, m, n, k, a.values().data() + i * m * k, b.values().data() + i * k * n,
         out.data() + i * m * n);
  }
  return Tensor::from_op(std::move(out_shape), std::move(out), {a, b}, [batch, m, n, k](TensorNode& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    for (std::size_t i = 0; i < batch; ++i) {
      const double* g = self.grad.data() + i * m * n;
      if (pa.requires_grad)
        gemm(false, true, m, k, n, g, pb.data.data() + i * k * n, pa.ensure_grad().data() + i * m * k);
      if (pb.requires_grad)
        gemm(true, false, k, n, m, pa.data.data() + i * m * k, g, pb.ensure_grad().data() + i * k * n);
    }
  });
}

Tensor transpose_last2(const Tensor& a) {
  require_rank(a, 2, "transpose");
  std::vector<std::size_t> axes(a.rank());
  for (std::size_t i = 0; i < axes.size(); ++i) axes[i] = i;
  std::swap(axes[axes.size() - 1], axes[axes.size() - 2]);
  return permute(a, axes);
}

Tensor permute(const Tensor& a, const std::vector<std::size_t>& axes) {
  const std::size_t r = a.rank();
  if (axes.size() != r) fail(ErrorCategory::dimension, "permute: axis count mismatch");
  std::vector<bool> used(r, false);
  for (std::size_t ax : axes) {
    if (ax >= r || used[ax]) fail(ErrorCategory::dimension, "permute: invalid axes");
    used[ax] = true;
  }
  const Shape& in_shape = a.shape();
  const auto in_strides = strides_of(in_shape);
  Shape out_shape(r);
  std::vector<std::size_t> src_stride(r);
  for (std::size_t i = 0; i < r; ++i) {
    out_shape[i] = in_shape[axes[i]];
    src_stride[i] = in_strides[axes[i]];
  }
  const std::size_t n = a.numel();
  // map[out_offset] = in_offset
  std::vector<std::size_t> map(n);
  std::vector<std::size_t> idx(r, 0);
  std::size_t src = 0;
  for (std::size_t o = 0; o < n; ++o) {
    map[o] = src;
    for (std::size_t d = r; d-- > 0;) {
      if (++idx[d] < out_shape[d]) {
        src += src_stride[d];
        break;
      }
      src -= src_stride[d] * (out_shape[d] - 1);
      idx[d] = 0;
    }
  }
  auto av = a.values();
  std::vector<double> out(n);
  for (std::size_t o = 0; o < n; ++o) out[o] = av[map[o]];
  return Tensor::from_op(std::move(out_shape), std::move(out), {a}, [map = std::move(map)](TensorNode& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t o = 0; o < map.size(); ++o) g[map[o]] += self.grad[o];
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    fail(ErrorCategory::dimension, "reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  auto av = a.values();
  return Tensor::from_op(std::move(shape), std::vector<double>(av.begin(), av.end()), {a}, [](TensorNode& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor softmax_lastdim(const Tensor& x) { return masked_softmax_lastdim(x, {}); }

Tensor masked_softmax_lastdim(const Tensor& x, const AttentionMask& mask) {
  require_rank(x, 1, "softmax");
  const std::size_t s = x.shape().back();
  if (s == 0) fail(ErrorCategory::dimension, "softmax: empty last dimension");
  const std::size_t t = x.rank() >= 2 ? x.shape()[x.rank() - 2] : 1;
  const std::size_t rows = x.numel() / s;
  const std::size_t per_lead = x.rank() >= 1 && !mask.key_lengths.empty() ? x.numel() / x.shape()[0] / s : rows;
  if (!mask.key_lengths.empty() && mask.key_lengths.size() != x.shape()[0]) {
    fail(ErrorCategory::dimension, "softmax: key_lengths size does not match leading axis");
  }
  if (mask.causal && t > s) fail(ErrorCategory::dimension, "softmax: causal mask needs keys >= queries");

  auto xv = x.values();
  std::vector<double> out(x.numel(), 0.0);
  for (std::size_t row = 0; row < rows; ++row) {
    std::size_t limit = s;
    if (!mask.key_lengths.empty()) limit = std::min(limit, mask.key_lengths[row / per_lead]);
    if (mask.causal) limit = std::min(limit, (row % t) + (s - t) + 1);
    const double* in = xv.data() + row * s;
    double* o = out.data() + row * s;
    if (limit == 0) continue;
    double mx = in[0];
    for (std::size_t j = 1; j < limit; ++j) mx = std::max(mx, in[j]);
    double total = 0.0;
    for (std::size_t j = 0; j < limit; ++j) {
      o[j] = std::exp(in[j] - mx);
      total += o[j];
    }
    for (std::size_t j = 0; j < limit; ++j) o[j] /= total;
  }
  return Tensor::from_op(x.shape(), std::move(out), {x}, [s, rows](TensorNode& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t row = 0; row < rows; ++row) {
      const double* y = self.data.data() + row * s;
      const double* gy = self.grad.data() + row * s;
      double dot = 0.0;
      for (std::size_t j = 0; j < s; ++j) dot += gy[j] * y[j];
      double* gx = g.data() + row * s;
      for (std::size_t j = 0; j < s; ++j) gx[j] += y[j] * (gy[j] - dot);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require_rank(x, 1, "layer_norm");
  const std::size_t d = x.shape().back();
  if (gamma.numel() != d || beta.numel() != d) fail(ErrorCategory::dimension, "layer_norm: affine size mismatch");
  const std::size_t rows = x.numel() / d;
  auto xv = x.values();
  auto gv = gamma.values();
  auto bv = beta.values();
  std::vector<double> out(x.numel());
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += in[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (in[j] - mean) * (in[j] - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[r] = inv;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (in[j] - mean) * inv;
      xhat[r * d + j] = h;
      out[r * d + j] = h * gv[j] + bv[j];
    }
  }
  return Tensor::from_op(
      x.shape(), std::move(out), {x, gamma, beta},
      [d, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)](TensorNode& self) {
        auto& px = *self.parents[0];
        auto& pg = *self.parents[1];
        auto& pb = *self.parents[2];
        if (pg.requires_grad) {
          auto& g = pg.ensure_grad();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) g[j] += self.grad[r * d + j] * xhat[r * d + j];
        }
        if (pb.requires_grad) {
          auto& g = pb.ensure_grad();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) g[j] += self.grad[r * d + j];
        }
        if (px.requires_grad) {
          auto& g = px.ensure_grad();
          const double inv_d = 1.0 / static_cast<double>(d);
          for (std::size_t r = 0; r < rows; ++r) {
            double mean_dh = 0.0;
            double mean_dh_h = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double dh = self.grad[r * d + j] * pg.data[j];
              mean_dh += dh;
              mean_dh_h += dh * xhat[r * d + j];
            }
            mean_dh *= inv_d;
            mean_dh_h *= inv_d;
            for (std::size_t j = 0; j < d; ++j) {
              const double dh = self.grad[r * d + j] * pg.data[j];
              g[r * d + j] += inv_std[r] * (dh - mean_dh - xhat[r * d + j] * mean_dh_h);
            }
          }
        }
      });
}

Tensor relu(const Tensor& x) {
  return unary(x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& x) {
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  constexpr double inv_sqrt2pi = 0.3989422804014326779;
  return unary(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); },
      [](double v, double) { return 0.5 * (1.0 + std::erf(v * inv_sqrt2)) + v * inv_sqrt2pi * std::exp(-0.5 * v * v); });
}

Tensor tanh(const Tensor& x) {
  return unary(x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor sum_all(const Tensor& x) {
  double total = 0.0;
  for (double v : x.values()) total += v;
  return Tensor::from_op({}, {total}, {x}, [](TensorNode& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (double& gi : g) gi += self.grad[0];
  });
}

Tensor mean_all(const Tensor& x) {
  if (x.numel() == 0) fail(ErrorCategory::dimension, "mean of empty tensor");
  return scale(sum_all(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor mean_axis(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) fail(ErrorCategory::dimension, "mean_axis: axis out of range");
  const Shape& s = x.shape();
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  const std::size_t len = s[axis];
  if (len == 0) fail(ErrorCategory::dimension, "mean_axis: empty axis");
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  Shape out_shape;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (i != axis) out_shape.push_back(s[i]);
  auto xv = x.values();
  std::vector<double> out(outer * inner, 0.0);
  const double inv = 1.0 / static_cast<double>(len);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t l = 0; l < len; ++l)
      for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += xv[(o * len + l) * inner + i];
  for (double& v : out) v *= inv;
  return Tensor::from_op(std::move(out_shape), std::move(out), {x}, [outer, len, inner, inv](TensorNode& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t l = 0; l < len; ++l)
        for (std::size_t i = 0; i < inner; ++i) g[(o * len + l) * inner + i] += self.grad[o * inner + i] * inv;
  });
}

Tensor mse_reduce(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) fail(ErrorCategory::dimension, "mse_reduce: shape mismatch");
  if (a.numel() == 0) fail(ErrorCategory::dimension, "mse_reduce: empty input");
  Tensor ones = Tensor::filled(a.shape(), 1.0);
  return scale(masked_squared_error(a, b, ones), 1.0 / static_cast<double>(a.numel()));
}

Tensor masked_squared_error(const Tensor& pred, const Tensor& target, const Tensor& mask) {
  if (pred.shape() != target.shape() || pred.shape() != mask.shape()) {
    fail(ErrorCategory::dimension, "masked_squared_error: shape mismatch " + shape_str(pred.shape()) + " / " +
                                       shape_str(target.shape()) + " / " + shape_str(mask.shape()));
  }
  auto pv = pred.values();
  auto tv = target.values();
  auto mv = mask.values();
  double total = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double e = (pv[i] - tv[i]) * mv[i];
    total += e * e;
  }
  std::vector<double> m(mv.begin(), mv.end());
  return Tensor::from_op({}, {total}, {pred, target}, [m = std::move(m)](TensorNode& self) {
    auto& pp = *self.parents[0];
    auto& pt = *self.parents[1];
    const double g = self.grad[0];
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (m[i] == 0.0) continue;
      const double d = 2.0 * (pp.data[i] - pt.data[i]) * m[i] * m[i] * g;
      if (pp.requires_grad) pp.ensure_grad()[i] += d;
      if (pt.requires_grad) pt.ensure_grad()[i] -= d;
    }
  });
}

Tensor embedding_lookup(const Tensor& table, std::span<const std::size_t> indices, Shape prefix) {
  if (table.rank() != 2) fail(ErrorCategory::dimension, "embedding_lookup: table must be rank 2");
  if (shape_numel(prefix) != indices.size()) fail(ErrorCategory::dimension, "embedding_lookup: prefix mismatch");
  const std::size_t vocab = table.dim(0);
  const std::size_t m = table.dim(1);
  auto tv = table.values();
  std::vector<double> out(indices.size() * m);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= vocab) fail(ErrorCategory::dimension, "embedding_lookup: index out of range");
    std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>(indices[i] * m), m, out.begin() + static_cast<std::ptrdiff_t>(i * m));
  }
  prefix.push_back(m);
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return Tensor::from_op(std::move(prefix), std::move(out), {table}, [idx = std::move(idx), m](TensorNode& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < m; ++j) g[idx[i] * m + j] += self.grad[i * m + j];
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) fail(ErrorCategory::dimension, "concat: no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) fail(ErrorCategory::dimension, "concat: axis out of range");
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
  std::vector<std::size_t> lens;
  std::size_t total_len = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == axis) || s[i] == first[i];
    if (!ok) fail(ErrorCategory::dimension, "concat: incompatible shapes " + shape_str(first) + " / " + shape_str(s));
    lens.push_back(s[axis]);
    total_len += s[axis];
  }
  Shape out_shape = first;
  out_shape[axis] = total_len;
  std::vector<double> out(outer * total_len * inner);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto pv = parts[k].values();
    const std::size_t chunk = lens[k] * inner;
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(o * chunk), chunk,
                  out.begin() + static_cast<std::ptrdiff_t>(o * total_len * inner + offset));
    offset += chunk;
  }
  return Tensor::from_op(std::move(out_shape), std::move(out), parts,
                         [outer, inner, total_len, lens = std::move(lens)](TensorNode& self) {
                           std::size_t off = 0;
                           for (std::size_t k = 0; k < lens.size(); ++k) {
                             const std::size_t chunk = lens[k] * inner;
                             auto& p = *self.parents[k];
                             if (p.requires_grad) {
                               auto& g = p.ensure_grad();
                               for (std::size_t o = 0; o < outer; ++o)
                                 for (std::size_t j = 0; j < chunk; ++j)
                                   g[o * chunk + j] += self.grad[o * total_len * inner + off + j];
                             }
                             off += chunk;
                           }
                         });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const Shape& s = x.shape();
  if (axis >= s.size() || begin > end || end > s[axis]) {
    fail(ErrorCategory::dimension, "slice: invalid range on " + shape_str(s));
  }
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  const std::size_t out_len = end - begin;
  Shape out_shape = s;
  out_shape[axis] = out_len;
  auto xv = x.values();
  std::vector<double> out(outer * out_len * inner);
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>((o * len + begin) * inner), out_len * inner,
                out.begin() + static_cast<std::ptrdiff_t>(o * out_len * inner));
  return Tensor::from_op(std::move(out_shape), std::move(out), {x}, [outer, inner, len, begin, out_len](TensorNode& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t j = 0; j < out_len * inner; ++j) g[(o * len + begin) * inner + j] += self.grad[o * out_len * inner + j];
  });
}

Tensor expand_leading(const Tensor& x, std::size_t count) {
  Shape out_shape;
  out_shape.push_back(count);
  out_shape.insert(out_shape.end(), x.shape().begin(), x.shape().end());
  const std::size_t n = x.numel();
  auto xv = x.values();
  std::vector<double> out(count * n);
  for (std::size_t c = 0; c < count; ++c) std::copy(xv.begin(), xv.end(), out.begin() + static_cast<std::ptrdiff_t>(c * n));
  return Tensor::from_op(std::move(out_shape), std::move(out), {x}, [count, n](TensorNode& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t c = 0; c < count; ++c)
      for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[c * n + j];
  });
}

Tensor dropout(const Tensor& x, double p, Rng& rng) {
  if (p <= 0.0) return x;
  if (p >= 1.0) fail(ErrorCategory::config, "dropout probability must be < 1");
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> keep(x.numel());
  for (double& k : keep) k = rng.uniform() < p ? 0.0 : keep_scale;
  return mul(x, Tensor(x.shape(), std::move(keep)));
}

}  // namespace causecast::ops
