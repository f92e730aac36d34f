#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "kgbilm/numcore/kernels.hpp"
#include "kgbilm/numcore/tape.hpp"

namespace kgbilm {

namespace detail {

template <class T>
void require_matrix(const char* op, const BasicTensor<T>& t) {
  if (t.rank() < 1 || t.rank() > 2) {
    throw ShapeError(std::string(op) + ": expected a rank-1 or rank-2 tensor, got " +
                     shape_str(t.shape()));
  }
}

template <class T>
void accumulate(BasicTensor<T>& dst, std::span<const T> src) {
  auto d = dst.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += src[i];
}

}  // namespace detail

/// Entries at or below this value in an additive mask are forbidden pairs.
template <class T>
constexpr T masked_value() {
  return std::numeric_limits<T>::lowest();
}

template <class T>
constexpr bool is_masked(T v) {
  return v <= std::numeric_limits<T>::lowest() / 2;
}

template <class T>
Var<T> detach(Var<T> x) {
  return x.tape->constant(x.value());
}

/// a[n x k] * b[k x m]
template <class T>
Var<T> matmul(Var<T> a, Var<T> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  detail::require_matrix("matmul", av);
  detail::require_matrix("matmul", bv);
  const std::size_t n = av.rows(), k = av.cols(), m = bv.cols();
  if (bv.rows() != k) throw_shape("matmul", av.shape(), bv.shape());
  auto out = BasicTensor<T>::matrix(n, m);
  kernels::gemm_nn<T>(av.data(), bv.data(), out.data(), n, k, m);
  return a.tape->record(std::move(out), {a, b}, [ai = a.index, bi = b.index, n, k, m](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_ref(self);
    if (t.requires_grad_at(ai)) kernels::gemm_nt<T>(g.data(), t.value_at(bi).data(), t.grad_ref(ai).data(), n, m, k);
    if (t.requires_grad_at(bi)) kernels::gemm_tn<T>(t.value_at(ai).data(), g.data(), t.grad_ref(bi).data(), n, k, m);
  });
}

/// a[n x k] * b[m x k]^T
template <class T>
Var<T> matmul_nt(Var<T> a, Var<T> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  detail::require_matrix("matmul_nt", av);
  detail::require_matrix("matmul_nt", bv);
  const std::size_t n = av.rows(), k = av.cols(), m = bv.rows();
  if (bv.cols() != k) throw_shape("matmul_nt", av.shape(), bv.shape());
  auto out = BasicTensor<T>::matrix(n, m);
  kernels::gemm_nt<T>(av.data(), bv.data(), out.data(), n, k, m);
  return a.tape->record(std::move(out), {a, b}, [ai = a.index, bi = b.index, n, k, m](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_ref(self);
    if (t.requires_grad_at(ai)) kernels::gemm_nn<T>(g.data(), t.value_at(bi).data(), t.grad_ref(ai).data(), n, m, k);
    if (t.requires_grad_at(bi)) kernels::gemm_tn<T>(g.data(), t.value_at(ai).data(), t.grad_ref(bi).data(), n, m, k);
  });
}

template <class T>
Var<T> transpose(Var<T> a) {
  const auto& av = a.value();
  detail::require_matrix("transpose", av);
  const std::size_t n = av.rows(), m = av.cols();
  auto out = BasicTensor<T>::matrix(m, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out(j, i) = av(i, j);
  return a.tape->record(std::move(out), {a}, [ai = a.index, n, m](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_ref(self);
    auto& ga = t.grad_ref(ai);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) ga[i * m + j] += g[j * n + i];
  });
}

/// Elementwise sum. `b` may also be a single row broadcast over the rows of `a`.
template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  const bool same = av.size() == bv.size() && (av.shape() == bv.shape() || bv.size() == 1);
  const bool row_broadcast = !same && bv.rows() == 1 && bv.cols() == av.cols() && av.rank() == 2;
  if (!same && !row_broadcast) throw_shape("add", av.shape(), bv.shape());
  BasicTensor<T> out = av;
  const std::size_t cols = av.cols();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += same ? bv[i] : bv[i % cols];
  return a.tape->record(std::move(out), {a, b}, [ai = a.index, bi = b.index, same, cols](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_ref(self);
    if (t.requires_grad_at(ai)) detail::accumulate(t.grad_ref(ai), g.data());
    if (t.requires_grad_at(bi)) {
      auto& gb = t.grad_ref(bi);
      for (std::size_t i = 0; i < g.size(); ++i) gb[same ? i : i % cols] += g[i];
    }
  });
}

/// Elementwise product of equally shaped tensors.
template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.shape() != bv.shape()) throw_shape("mul", av.shape(), bv.shape());
  BasicTensor<T> out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return a.tape->record(std::move(out), {a, b}, [ai = a.index, bi = b.index](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_ref(self);
    const auto& av = t.value_at(ai);
    const auto& bv = t.value_at(bi);
    if (t.requires_grad_at(ai)) {
      auto& ga = t.grad_ref(ai);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.requires_grad_at(bi)) {
      auto& gb = t.grad_ref(bi);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

template <class T>
Var<T> scale(Var<T> a, T s) {
  BasicTensor<T> out = a.value();
  for (auto& v : out.data()) v *= s;
  return a.tape->record(std::move(out), {a}, [ai = a.index, s](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_ref(self);
    auto& ga = t.grad_ref(ai);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  });
}

template <class T>
Var<T> sum(Var<T> a) {
  T acc{0};
  for (T v : a.value().data()) acc += v;
  return a.tape->record(BasicTensor<T>::scalar(acc), {a}, [ai = a.index](Tape<T>& t, std::size_t self) {
    const T g = t.grad_ref(self)[0];
    for (auto& v : t.grad_ref(ai).data()) v += g;
  });
}

template <class T>
Var<T> mean(Var<T> a) {
  return scale(sum(a), T{1} / static_cast<T>(a.value().size()));
}

/// Concatenation along the last dimension (all inputs share the row count).
template <class T>
Var<T> concat_cols(std::span<const Var<T>> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t rows = parts[0].value().rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    detail::require_matrix("concat_cols", p.value());
    if (p.value().rows() != rows) throw_shape("concat_cols", parts[0].shape(), p.shape());
    widths.push_back(p.value().cols());
    total += widths.back();
  }
  auto out = BasicTensor<T>::matrix(rows, total);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& pv = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(pv.row(r).begin(), pv.row(r).end(), out.row(r).begin() + off);
    off += widths[k];
  }
  std::vector<std::size_t> idx;
  for (const auto& p : parts) idx.push_back(p.index);
  return parts[0].tape->record(std::move(out), parts, [idx, widths, rows, total](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_ref(self);
    std::size_t off = 0;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      if (t.requires_grad_at(idx[k])) {
        auto& gp = t.grad_ref(idx[k]);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < widths[k]; ++c) gp[r * widths[k] + c] += g[r * total + off + c];
      }
      off += widths[k];
    }
  });
}

/// Stacks row blocks vertically (all inputs share the column count).
template <class T>
Var<T> concat_rows(std::span<const Var<T>> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t cols = parts[0].value().cols();
  std::size_t rows = 0;
  std::vector<std::size_t> sizes;
  for (const auto& p : parts) {
    if (p.value().cols() != cols) throw_shape("concat_rows", parts[0].shape(), p.shape());
    rows += p.value().rows();
    sizes.push_back(p.value().size());
  }
  auto out = BasicTensor<T>::matrix(rows, cols);
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.value().data().begin(), p.value().data().end(), out.data().begin() + off);
    off += p.value().size();
  }
  std::vector<std::size_t> idx;
  for (const auto& p : parts) idx.push_back(p.index);
  return parts[0].tape->record(std::move(out), parts, [idx, sizes](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_ref(self);
    std::size_t off = 0;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      if (t.requires_grad_at(idx[k])) detail::accumulate(t.grad_ref(idx[k]), g.data().subspan(off, sizes[k]));
      off += sizes[k];
    }
  });
}

template <class T>
Var<T> slice_cols(Var<T> a, std::size_t begin, std::size_t count) {
  const auto& av = a.value();
  detail::require_matrix("slice_cols", av);
  if (begin + count > av.cols()) {
    throw ShapeError("slice_cols: columns [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") out of range for " + shape_str(av.shape()));
  }
  const std::size_t rows = av.rows(), cols = av.cols();
  auto out = BasicTensor<T>::matrix(rows, count);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < count; ++c) out(r, c) = av(r, begin + c);
  return a.tape->record(std::move(out), {a}, [ai = a.index, begin, count, rows, cols](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_ref(self);
    auto& ga = t.grad_ref(ai);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < count; ++c) ga[r * cols + begin + c] += g[r * count + c];
  });
}

/// Splits the columns of `x` into `heads` equal blocks.
template <class T>
std::vector<Var<T>> split_heads(Var<T> x, std::size_t heads) {
  const std::size_t cols = x.value().cols();
  if (heads == 0 || cols % heads != 0) {
    throw ShapeError("split_heads: " + std::to_string(cols) + " columns do not divide into " +
                     std::to_string(heads) + " heads");
  }
  const std::size_t width = cols / heads;
  std::vector<Var<T>> out;
  out.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) out.push_back(slice_cols(x, h * width, width));
  return out;
}

template <class T>
Var<T> merge_heads(std::span<const Var<T>> heads) {
  return concat_cols(heads);
}

/// Rows of `table` selected by `ids` (embedding lookup / row gather).
template <class T>
Var<T> gather_rows(Var<T> table, std::span<const std::size_t> ids) {
  const auto& tv = table.value();
  const std::size_t cols = tv.cols();
  auto out = BasicTensor<T>::matrix(ids.size(), cols);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= tv.rows()) {
      throw ShapeError("gather_rows: row " + std::to_string(ids[r]) + " out of range for " +
                       shape_str(tv.shape()));
    }
    std::copy(tv.row(ids[r]).begin(), tv.row(ids[r]).end(), out.row(r).begin());
  }
  std::vector<std::size_t> rows(ids.begin(), ids.end());
  return table.tape->record(std::move(out), {table}, [ti = table.index, rows = std::move(rows), cols](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_ref(self);
    auto& gt = t.grad_ref(ti);
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t c = 0; c < cols; ++c) gt[rows[r] * cols + c] += g[r * cols + c];
  });
}

/// tanh approximation of GELU.
template <class T>
Var<T> gelu(Var<T> x) {
  constexpr T k = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
  constexpr T c = static_cast<T>(0.044715);
  BasicTensor<T> out = x.value();
  std::vector<T> th(out.size());
  for (std::size_t i = 0; i < th.size(); ++i) {
    const T v = out[i];
    th[i] = std::tanh(k * (v + c * v * v * v));
    out[i] = T{0.5} * v * (T{1} + th[i]);
  }
  return x.tape->record(std::move(out), {x}, [xi = x.index, th = std::move(th)](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_ref(self);
    const auto& xv = t.value_at(xi);
    auto& gx = t.grad_ref(xi);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T v = xv[i];
      const T d = T{0.5} * (T{1} + th[i]) + T{0.5} * v * (T{1} - th[i] * th[i]) * k * (T{1} + T{3} * c * v * v);
      gx[i] += g[i] * d;
    }
  });
}

/// Row-wise softmax of `scores + mask`. Forbidden entries (see is_masked) get
/// exactly zero weight; a row without any allowed entry is an error.
template <class T>
Var<T> masked_softmax(Var<T> scores, const BasicTensor<T>& mask) {
  const auto& sv = scores.value();
  detail::require_matrix("masked_softmax", sv);
  if (mask.size() != sv.size()) throw_shape("masked_softmax", sv.shape(), mask.shape());
  const std::size_t rows = sv.rows(), cols = sv.cols();
  BasicTensor<T> out(sv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    T mx = std::numeric_limits<T>::lowest();
    bool any = false;
    for (std::size_t c = 0; c < cols; ++c) {
      if (is_masked(mask(r, c))) continue;
      any = true;
      mx = std::max(mx, sv(r, c) + mask(r, c));
    }
    if (!any) {
      throw NumericalError("masked_softmax: row " + std::to_string(r) + " is fully masked");
    }
    T z{0};
    for (std::size_t c = 0; c < cols; ++c) {
      if (is_masked(mask(r, c))) continue;
      const T e = std::exp(sv(r, c) + mask(r, c) - mx);
      out(r, c) = e;
      z += e;
    }
    for (std::size_t c = 0; c < cols; ++c) out(r, c) /= z;
  }
  return scores.tape->record(std::move(out), {scores}, [si = scores.index, rows, cols](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_ref(self);
    const auto& y = t.value_at(self);
    auto& gs = t.grad_ref(si);
    for (std::size_t r = 0; r < rows; ++r) {
      T dot{0};
      for (std::size_t c = 0; c < cols; ++c) dot += y[r * cols + c] * g[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) gs[r * cols + c] += y[r * cols + c] * (g[r * cols + c] - dot);
    }
  });
}

template <class T>
Var<T> softmax_rows(Var<T> scores) {
  return masked_softmax(scores, BasicTensor<T>(scores.value().shape()));
}

/// Per-row layer normalization with learned gain and bias (both of length cols).
template <class T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, T eps = static_cast<T>(1e-5)) {
  const auto& xv = x.value();
  detail::require_matrix("layer_norm", xv);
  const std::size_t rows = xv.rows(), cols = xv.cols();
  if (gain.value().size() != cols) throw_shape("layer_norm gain", xv.shape(), gain.shape());
  if (bias.value().size() != cols) throw_shape("layer_norm bias", xv.shape(), bias.shape());
  const auto& gv = gain.value();
  const auto& bv = bias.value();
  BasicTensor<T> out(xv.shape());
  std::vector<T> xhat(xv.size());
  std::vector<T> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    T mu{0};
    for (std::size_t c = 0; c < cols; ++c) mu += xv(r, c);
    mu /= static_cast<T>(cols);
    T var{0};
    for (std::size_t c = 0; c < cols; ++c) var += (xv(r, c) - mu) * (xv(r, c) - mu);
    var /= static_cast<T>(cols);
    inv_std[r] = T{1} / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) {
      xhat[r * cols + c] = (xv(r, c) - mu) * inv_std[r];
      out(r, c) = xhat[r * cols + c] * gv[c] + bv[c];
    }
  }
  const std::size_t xi = x.index, gi = gain.index, bi = bias.index;
  std::vector<Var<T>> ins{x, gain, bias};
  return x.tape->record(std::move(out), ins, [xi, gi, bi, rows, cols, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_ref(self);
    const auto& gv = t.value_at(gi);
    if (t.requires_grad_at(gi)) {
      auto& gg = t.grad_ref(gi);
      for (std::size_t i = 0; i < g.size(); ++i) gg[i % cols] += g[i] * xhat[i];
    }
    if (t.requires_grad_at(bi)) {
      auto& gb = t.grad_ref(bi);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % cols] += g[i];
    }
    if (t.requires_grad_at(xi)) {
      auto& gx = t.grad_ref(xi);
      const T n = static_cast<T>(cols);
      for (std::size_t r = 0; r < rows; ++r) {
        T m1{0}, m2{0};
        for (std::size_t c = 0; c < cols; ++c) {
          const T dxh = g[r * cols + c] * gv[c];
          m1 += dxh;
          m2 += dxh * xhat[r * cols + c];
        }
        m1 /= n;
        m2 /= n;
        for (std::size_t c = 0; c < cols; ++c) {
          const T dxh = g[r * cols + c] * gv[c];
          gx[r * cols + c] += inv_std[r] * (dxh - m1 - xhat[r * cols + c] * m2);
        }
      }
    }
  });
}

/// Inverted dropout: zeroes each entry with probability p and rescales the
/// survivors by 1/(1-p). p == 0 returns `x` unchanged.
template <class T, class Rng>
Var<T> dropout(Var<T> x, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw ConfigError("dropout: probability must be in [0, 1)");
  if (p == 0.0) return x;
  std::bernoulli_distribution keep(1.0 - p);
  const T s = static_cast<T>(1.0 / (1.0 - p));
  std::vector<T> m(x.value().size());
  for (auto& v : m) v = keep(rng) ? s : T{0};
  BasicTensor<T> out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= m[i];
  return x.tape->record(std::move(out), {x}, [xi = x.index, m = std::move(m)](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_ref(self);
    auto& gx = t.grad_ref(xi);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * m[i];
  });
}

/// Column-wise mean over rows: [n x d] -> [1 x d].
template <class T>
Var<T> mean_rows(Var<T> x) {
  const auto& xv = x.value();
  detail::require_matrix("mean_rows", xv);
  const std::size_t rows = xv.rows(), cols = xv.cols();
  if (rows == 0) throw ShapeError("mean_rows: no rows");
  auto out = BasicTensor<T>::matrix(1, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c] += xv(r, c);
  for (auto& v : out.data()) v /= static_cast<T>(rows);
  return x.tape->record(std::move(out), {x}, [xi = x.index, rows, cols](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_ref(self);
    auto& gx = t.grad_ref(xi);
    const T inv = T{1} / static_cast<T>(rows);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += g[c] * inv;
  });
}

/// Scales every row to unit L2 norm; a zero row is an error.
template <class T>
Var<T> l2_normalize_rows(Var<T> x) {
  const auto& xv = x.value();
  detail::require_matrix("l2_normalize", xv);
  const std::size_t rows = xv.rows(), cols = xv.cols();
  BasicTensor<T> out = xv;
  std::vector<T> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    T ss{0};
    for (T v : xv.row(r)) ss += v * v;
    norms[r] = std::sqrt(ss);
    if (!(norms[r] > T{0}) || !std::isfinite(norms[r])) {
      throw NumericalError("l2_normalize: row " + std::to_string(r) + " has zero or non-finite norm");
    }
    for (auto& v : out.row(r)) v /= norms[r];
  }
  return x.tape->record(std::move(out), {x}, [xi = x.index, rows, cols, norms = std::move(norms)](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_ref(self);
    const auto& y = t.value_at(self);
    auto& gx = t.grad_ref(xi);
    for (std::size_t r = 0; r < rows; ++r) {
      T dot{0};
      for (std::size_t c = 0; c < cols; ++c) dot += y[r * cols + c] * g[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c)
        gx[r * cols + c] += (g[r * cols + c] - y[r * cols + c] * dot) / norms[r];
    }
  });
}

/// Mean over rows of -log softmax(logits[r])[targets[r]].
template <class T>
Var<T> cross_entropy(Var<T> logits, std::span<const std::size_t> targets) {
  const auto& lv = logits.value();
  detail::require_matrix("cross_entropy", lv);
  const std::size_t rows = lv.rows(), cols = lv.cols();
  if (targets.size() != rows || rows == 0) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                     shape_str(lv.shape()));
  }
  std::vector<T> probs(lv.size());
  T loss{0};
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] >= cols) throw ShapeError("cross_entropy: target out of range");
    T mx = lv(r, 0);
    for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, lv(r, c));
    T z{0};
    for (std::size_t c = 0; c < cols; ++c) {
      probs[r * cols + c] = std::exp(lv(r, c) - mx);
      z += probs[r * cols + c];
    }
    for (std::size_t c = 0; c < cols; ++c) probs[r * cols + c] /= z;
    loss += -(lv(r, targets[r]) - mx - std::log(z));
  }
  loss /= static_cast<T>(rows);
  std::vector<std::size_t> tg(targets.begin(), targets.end());
  return logits.tape->record(BasicTensor<T>::scalar(loss), {logits}, [li = logits.index, rows, cols, probs = std::move(probs), tg = std::move(tg)](Tape<T>& t, std::size_t self) {
    const T g = t.grad_ref(self)[0] / static_cast<T>(rows);
    auto& gl = t.grad_ref(li);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) gl[r * cols + c] += g * probs[r * cols + c];
      gl[r * cols + tg[r]] -= g;
    }
  });
}

}  // namespace kgbilm
