// Copyright 2026 The stepsep Authors
// SPDX-License-Identifier: Apache-2.0

#include "autograd/ops.h"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "common/error.h"

namespace stepsep::ag {

namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapR = Eigen::Map<MatR<T>>;
template <typename T>
using CMapR = Eigen::Map<const MatR<T>>;
template <typename T>
using SMapR = Eigen::Map<MatR<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using CSMapR = Eigen::Map<const MatR<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using VecMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;
template <typename T>
using CVecMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;
template <typename T>
using RowVecMap = Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>;
template <typename T>
using CRowVecMap = Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>;

int NormalizeAxis(int axis, int rank) {
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) throw ShapeError("axis out of range");
  return axis;
}

void RequireSameShape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw ShapeError(std::string(op) + ": shape mismatch " + ShapeString(a) +
                     " vs " + ShapeString(b));
  }
}

// Splits a shape around `axis` into (outer, dim, inner) extents.
struct AxisSplit {
  int64_t outer = 1;
  int64_t dim = 1;
  int64_t inner = 1;
};

AxisSplit SplitAt(const Shape& s, int axis) {
  AxisSplit r;
  for (int i = 0; i < axis; ++i) r.outer *= s[i];
  r.dim = s[axis];
  for (size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

template <typename T>
void AddInto(Buffer<T>& dst, const Buffer<T>& src) {
  VecMap<T>(dst.data(), dst.size()) += CVecMap<T>(src.data(), src.size());
}

// Copies (or accumulates) `src` laid out with in_shape into `dst` laid out
// with in_shape permuted by perm.
template <typename T>
void PermuteRaw(const T* src, const Shape& in_shape, const std::vector<int>& perm,
                T* dst, bool accumulate) {
  const int r = static_cast<int>(in_shape.size());
  std::vector<int64_t> in_stride(r, 1);
  for (int i = r - 2; i >= 0; --i) in_stride[i] = in_stride[i + 1] * in_shape[i + 1];
  Shape out_shape(r);
  for (int i = 0; i < r; ++i) out_shape[i] = in_shape[perm[i]];

  int64_t block = 1;
  int outer_rank = r;
  if (r > 0 && perm[r - 1] == r - 1) {
    block = in_shape[r - 1];
    outer_rank = r - 1;
  }
  int64_t total_outer = 1;
  for (int i = 0; i < outer_rank; ++i) total_outer *= out_shape[i];
  if (total_outer == 0 || block == 0) return;

  std::vector<int64_t> idx(outer_rank, 0);
  int64_t src_off = 0;
  for (int64_t o = 0; o < total_outer; ++o) {
    T* d = dst + o * block;
    const T* s = src + src_off;
    if (accumulate) {
      for (int64_t k = 0; k < block; ++k) d[k] += s[k];
    } else {
      std::copy(s, s + block, d);
    }
    for (int i = outer_rank - 1; i >= 0; --i) {
      ++idx[i];
      src_off += in_stride[perm[i]];
      if (idx[i] < out_shape[i]) break;
      src_off -= in_stride[perm[i]] * out_shape[i];
      idx[i] = 0;
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise

template <typename T>
Var<T> Add(const Var<T>& a, const Var<T>& b) {
  RequireSameShape(a.shape(), b.shape(), "Add");
  Buffer<T> out(a.value().begin(), a.value().end());
  VecMap<T>(out.data(), out.size()) += CVecMap<T>(b.value().data(), b.numel());
  return MakeResult<T>(a.shape(), std::move(out), {a, b}, [](Node<T>& n) {
    for (auto& p : n.parents) {
      if (p->requires_grad) AddInto(p->EnsureGrad(), n.grad);
    }
  });
}

template <typename T>
Var<T> Sub(const Var<T>& a, const Var<T>& b) {
  RequireSameShape(a.shape(), b.shape(), "Sub");
  Buffer<T> out(a.value().begin(), a.value().end());
  VecMap<T>(out.data(), out.size()) -= CVecMap<T>(b.value().data(), b.numel());
  return MakeResult<T>(a.shape(), std::move(out), {a, b}, [](Node<T>& n) {
    if (n.parents[0]->requires_grad) AddInto(n.parents[0]->EnsureGrad(), n.grad);
    if (n.parents[1]->requires_grad) {
      auto& g = n.parents[1]->EnsureGrad();
      VecMap<T>(g.data(), g.size()) -= CVecMap<T>(n.grad.data(), n.grad.size());
    }
  });
}

template <typename T>
Var<T> Mul(const Var<T>& a, const Var<T>& b) {
  RequireSameShape(a.shape(), b.shape(), "Mul");
  const auto n = a.numel();
  Buffer<T> out(n);
  VecMap<T>(out.data(), n) =
      CVecMap<T>(a.value().data(), n).cwiseProduct(CVecMap<T>(b.value().data(), n));
  return MakeResult<T>(a.shape(), std::move(out), {a, b}, [n](Node<T>& node) {
    auto& pa = node.parents[0];
    auto& pb = node.parents[1];
    CVecMap<T> g(node.grad.data(), n);
    if (pa->requires_grad) {
      VecMap<T>(pa->EnsureGrad().data(), n) += g.cwiseProduct(CVecMap<T>(pb->value.data(), n));
    }
    if (pb->requires_grad) {
      VecMap<T>(pb->EnsureGrad().data(), n) += g.cwiseProduct(CVecMap<T>(pa->value.data(), n));
    }
  });
}

template <typename T>
Var<T> Scale(const Var<T>& a, T s) {
  Buffer<T> out(a.value().begin(), a.value().end());
  for (auto& v : out) v *= s;
  return MakeResult<T>(a.shape(), std::move(out), {a}, [s](Node<T>& n) {
    auto& g = n.parents[0]->EnsureGrad();
    VecMap<T>(g.data(), g.size()) += s * CVecMap<T>(n.grad.data(), n.grad.size());
  });
}

template <typename T>
Var<T> Relu(const Var<T>& x) {
  Buffer<T> out(x.value().begin(), x.value().end());
  for (auto& v : out) v = v > T(0) ? v : T(0);
  return MakeResult<T>(x.shape(), std::move(out), {x}, [](Node<T>& n) {
    auto& g = n.parents[0]->EnsureGrad();
    for (size_t i = 0; i < g.size(); ++i) {
      if (n.value[i] > T(0)) g[i] += n.grad[i];
    }
  });
}

template <typename T>
Var<T> PRelu(const Var<T>& x, const Var<T>& slope) {
  if (slope.numel() != 1) throw ShapeError("PRelu: slope must have one element");
  const T a = slope.value()[0];
  Buffer<T> out(x.value().begin(), x.value().end());
  for (auto& v : out) v = v > T(0) ? v : a * v;
  return MakeResult<T>(x.shape(), std::move(out), {x, slope}, [a](Node<T>& n) {
    const auto& xin = n.parents[0]->value;
    if (n.parents[0]->requires_grad) {
      auto& g = n.parents[0]->EnsureGrad();
      for (size_t i = 0; i < g.size(); ++i) g[i] += xin[i] > T(0) ? n.grad[i] : a * n.grad[i];
    }
    if (n.parents[1]->requires_grad) {
      T acc = 0;
      for (size_t i = 0; i < xin.size(); ++i) {
        if (xin[i] <= T(0)) acc += xin[i] * n.grad[i];
      }
      n.parents[1]->EnsureGrad()[0] += acc;
    }
  });
}

template <typename T>
Var<T> Sum(const Var<T>& x) {
  T s = CVecMap<T>(x.value().data(), x.numel()).sum();
  return MakeResult<T>({1}, {s}, {x}, [](Node<T>& n) {
    auto& g = n.parents[0]->EnsureGrad();
    const T v = n.grad[0];
    for (auto& e : g) e += v;
  });
}

// ---------------------------------------------------------------------------
// Dense

template <typename T>
Var<T> Linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  if (w.rank() != 2) throw ShapeError("Linear: weight must be 2-D");
  const int64_t in = w.dim(1);
  const int64_t out_dim = w.dim(0);
  if (x.rank() < 1 || x.dim(-1) != in) {
    throw ShapeError("Linear: input " + ShapeString(x.shape()) + " vs weight " +
                     ShapeString(w.shape()));
  }
  if (b.defined() && b.numel() != out_dim) throw ShapeError("Linear: bias size");
  const int64_t rows = x.numel() / in;
  Shape out_shape = x.shape();
  out_shape.back() = out_dim;
  Buffer<T> out(rows * out_dim);
  MapR<T> y(out.data(), rows, out_dim);
  CMapR<T> xm(x.value().data(), rows, in);
  CMapR<T> wm(w.value().data(), out_dim, in);
  y.noalias() = xm * wm.transpose();
  if (b.defined()) y.rowwise() += CRowVecMap<T>(b.value().data(), out_dim);

  std::vector<Var<T>> parents{x, w};
  if (b.defined()) parents.push_back(b);
  return MakeResult<T>(std::move(out_shape), std::move(out), parents,
                       [rows, in, out_dim](Node<T>& n) {
    CMapR<T> gy(n.grad.data(), rows, out_dim);
    auto& px = n.parents[0];
    auto& pw = n.parents[1];
    if (px->requires_grad) {
      MapR<T>(px->EnsureGrad().data(), rows, in).noalias() +=
          gy * CMapR<T>(pw->value.data(), out_dim, in);
    }
    if (pw->requires_grad) {
      MapR<T>(pw->EnsureGrad().data(), out_dim, in).noalias() +=
          gy.transpose() * CMapR<T>(px->value.data(), rows, in);
    }
    if (n.parents.size() > 2 && n.parents[2]->requires_grad) {
      RowVecMap<T>(n.parents[2]->EnsureGrad().data(), out_dim) += gy.colwise().sum();
    }
  });
}

template <typename T>
Var<T> LayerNorm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps) {
  const int64_t c = x.dim(-1);
  if (gamma.numel() != c || beta.numel() != c) throw ShapeError("LayerNorm: gain/shift size");
  const int64_t rows = x.numel() / c;
  Buffer<T> out(x.numel());
  Buffer<T> xhat(x.numel());
  Buffer<T> inv_std(rows);
  CMapR<T> xm(x.value().data(), rows, c);
  MapR<T> xh(xhat.data(), rows, c);
  for (int64_t r = 0; r < rows; ++r) {
    const T mean = xm.row(r).mean();
    const T var = (xm.row(r).array() - mean).square().mean();
    const T is = T(1) / std::sqrt(var + eps);
    inv_std[r] = is;
    xh.row(r) = (xm.row(r).array() - mean) * is;
  }
  CRowVecMap<T> g(gamma.value().data(), c);
  CRowVecMap<T> bt(beta.value().data(), c);
  MapR<T> y(out.data(), rows, c);
  y = (xh.array().rowwise() * g.array()).rowwise() + bt.array();

  return MakeResult<T>(x.shape(), std::move(out), {x, gamma, beta},
                       [rows, c, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<T>& n) {
    CMapR<T> gy(n.grad.data(), rows, c);
    CMapR<T> xh(xhat.data(), rows, c);
    auto& px = n.parents[0];
    auto& pg = n.parents[1];
    auto& pb = n.parents[2];
    if (pg->requires_grad) {
      RowVecMap<T>(pg->EnsureGrad().data(), c) += gy.cwiseProduct(xh).colwise().sum();
    }
    if (pb->requires_grad) {
      RowVecMap<T>(pb->EnsureGrad().data(), c) += gy.colwise().sum();
    }
    if (px->requires_grad) {
      CRowVecMap<T> g(pg->value.data(), c);
      MapR<T> gx(px->EnsureGrad().data(), rows, c);
      Eigen::Matrix<T, 1, Eigen::Dynamic> dxh(c);
      for (int64_t r = 0; r < rows; ++r) {
        dxh = gy.row(r).cwiseProduct(g);
        const T m1 = dxh.mean();
        const T m2 = dxh.cwiseProduct(xh.row(r)).mean();
        gx.row(r).array() += inv_std[r] * (dxh.array() - m1 - xh.row(r).array() * m2);
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Shape manipulation

template <typename T>
Var<T> Reshape(const Var<T>& x, Shape shape) {
  int infer = -1;
  int64_t known = 1;
  for (size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == -1) {
      if (infer >= 0) throw ShapeError("Reshape: more than one inferred axis");
      infer = static_cast<int>(i);
    } else {
      known *= shape[i];
    }
  }
  if (infer >= 0) shape[infer] = known ? x.numel() / known : 0;
  if (NumElements(shape) != x.numel()) {
    throw ShapeError("Reshape: " + ShapeString(x.shape()) + " -> " + ShapeString(shape));
  }
  Buffer<T> out(x.value().begin(), x.value().end());
  return MakeResult<T>(std::move(shape), std::move(out), {x}, [](Node<T>& n) {
    auto& p = *n.parents[0];
    if (p.grad.empty()) {
      p.grad = std::move(n.grad);
    } else {
      AddInto(p.grad, n.grad);
    }
  });
}

template <typename T>
Var<T> Permute(const Var<T>& x, const std::vector<int>& perm) {
  const int r = x.rank();
  if (static_cast<int>(perm.size()) != r) throw ShapeError("Permute: rank mismatch");
  std::vector<int> inv(r, -1);
  for (int i = 0; i < r; ++i) {
    if (perm[i] < 0 || perm[i] >= r || inv[perm[i]] != -1) {
      throw ShapeError("Permute: invalid permutation");
    }
    inv[perm[i]] = i;
  }
  Shape out_shape(r);
  for (int i = 0; i < r; ++i) out_shape[i] = x.shape()[perm[i]];
  Buffer<T> out(x.numel());
  PermuteRaw(x.value().data(), x.shape(), perm, out.data(), false);
  Shape os = out_shape;
  return MakeResult<T>(std::move(out_shape), std::move(out), {x},
                       [os, inv](Node<T>& n) {
    PermuteRaw(n.grad.data(), os, inv, n.parents[0]->EnsureGrad().data(), true);
  });
}

template <typename T>
Var<T> Slice(const Var<T>& x, int axis, int64_t begin, int64_t end) {
  axis = NormalizeAxis(axis, x.rank());
  const AxisSplit s = SplitAt(x.shape(), axis);
  if (begin < 0 || end > s.dim || begin > end) throw ShapeError("Slice: bad range");
  const int64_t len = end - begin;
  Shape out_shape = x.shape();
  out_shape[axis] = len;
  Buffer<T> out(s.outer * len * s.inner);
  const T* src = x.value().data();
  for (int64_t o = 0; o < s.outer; ++o) {
    std::copy(src + (o * s.dim + begin) * s.inner, src + (o * s.dim + end) * s.inner,
              out.data() + o * len * s.inner);
  }
  return MakeResult<T>(std::move(out_shape), std::move(out), {x},
                       [s, begin, len](Node<T>& n) {
    auto& g = n.parents[0]->EnsureGrad();
    for (int64_t o = 0; o < s.outer; ++o) {
      T* d = g.data() + (o * s.dim + begin) * s.inner;
      const T* gs = n.grad.data() + o * len * s.inner;
      for (int64_t k = 0; k < len * s.inner; ++k) d[k] += gs[k];
    }
  });
}

template <typename T>
Var<T> Concat(const std::vector<Var<T>>& xs, int axis) {
  if (xs.empty()) throw ShapeError("Concat: no inputs");
  axis = NormalizeAxis(axis, xs[0].rank());
  Shape out_shape = xs[0].shape();
  std::vector<int64_t> dims;
  int64_t total = 0;
  for (const auto& v : xs) {
    Shape a = v.shape();
    Shape b = out_shape;
    if (a.size() != b.size()) throw ShapeError("Concat: rank mismatch");
    a[axis] = b[axis] = 0;
    if (a != b) throw ShapeError("Concat: shape mismatch " + ShapeString(v.shape()));
    dims.push_back(v.dim(axis));
    total += v.dim(axis);
  }
  out_shape[axis] = total;
  const AxisSplit s = SplitAt(out_shape, axis);
  Buffer<T> out(NumElements(out_shape));
  int64_t offset = 0;
  for (size_t k = 0; k < xs.size(); ++k) {
    const int64_t d = dims[k];
    const T* src = xs[k].value().data();
    for (int64_t o = 0; o < s.outer; ++o) {
      std::copy(src + o * d * s.inner, src + (o + 1) * d * s.inner,
                out.data() + (o * s.dim + offset) * s.inner);
    }
    offset += d;
  }
  return MakeResult<T>(std::move(out_shape), std::move(out), xs, [s, dims](Node<T>& n) {
    int64_t offset = 0;
    for (size_t k = 0; k < dims.size(); ++k) {
      const int64_t d = dims[k];
      auto& p = n.parents[k];
      if (p->requires_grad) {
        auto& g = p->EnsureGrad();
        for (int64_t o = 0; o < s.outer; ++o) {
          const T* src = n.grad.data() + (o * s.dim + offset) * s.inner;
          T* dst = g.data() + o * d * s.inner;
          for (int64_t e = 0; e < d * s.inner; ++e) dst[e] += src[e];
        }
      }
      offset += d;
    }
  });
}

template <typename T>
Var<T> SumAxis(const Var<T>& x, int axis) {
  axis = NormalizeAxis(axis, x.rank());
  const AxisSplit s = SplitAt(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + axis);
  Buffer<T> out(s.outer * s.inner, T(0));
  const T* src = x.value().data();
  for (int64_t o = 0; o < s.outer; ++o) {
    VecMap<T> dst(out.data() + o * s.inner, s.inner);
    for (int64_t d = 0; d < s.dim; ++d) {
      dst += CVecMap<T>(src + (o * s.dim + d) * s.inner, s.inner);
    }
  }
  return MakeResult<T>(std::move(out_shape), std::move(out), {x}, [s](Node<T>& n) {
    auto& g = n.parents[0]->EnsureGrad();
    for (int64_t o = 0; o < s.outer; ++o) {
      CVecMap<T> src(n.grad.data() + o * s.inner, s.inner);
      for (int64_t d = 0; d < s.dim; ++d) {
        VecMap<T>(g.data() + (o * s.dim + d) * s.inner, s.inner) += src;
      }
    }
  });
}

template <typename T>
Var<T> PadAxis(const Var<T>& x, int axis, int64_t before, int64_t after) {
  axis = NormalizeAxis(axis, x.rank());
  if (before < 0 || after < 0) throw ShapeError("PadAxis: negative padding");
  const AxisSplit s = SplitAt(x.shape(), axis);
  const int64_t nd = s.dim + before + after;
  Shape out_shape = x.shape();
  out_shape[axis] = nd;
  Buffer<T> out(s.outer * nd * s.inner, T(0));
  const T* src = x.value().data();
  for (int64_t o = 0; o < s.outer; ++o) {
    std::copy(src + o * s.dim * s.inner, src + (o + 1) * s.dim * s.inner,
              out.data() + (o * nd + before) * s.inner);
  }
  return MakeResult<T>(std::move(out_shape), std::move(out), {x},
                       [s, nd, before](Node<T>& n) {
    auto& g = n.parents[0]->EnsureGrad();
    for (int64_t o = 0; o < s.outer; ++o) {
      const T* src = n.grad.data() + (o * nd + before) * s.inner;
      T* dst = g.data() + o * s.dim * s.inner;
      for (int64_t e = 0; e < s.dim * s.inner; ++e) dst[e] += src[e];
    }
  });
}

// ---------------------------------------------------------------------------
// Convolutions over the frame axis (channels-last)

template <typename T>
Var<T> Conv1d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int kernel, int stride) {
  if (x.rank() != 3) throw ShapeError("Conv1d: input must be [N, T, C]");
  if (kernel < 1 || stride < 1) throw ShapeError("Conv1d: bad kernel/stride");
  const int64_t n_batch = x.dim(0);
  const int64_t t_in = x.dim(1);
  const int64_t c_in = x.dim(2);
  const int64_t c_out = w.dim(0);
  if (w.rank() != 2 || w.dim(1) != kernel * c_in) {
    throw ShapeError("Conv1d: weight " + ShapeString(w.shape()) + " for input " +
                     ShapeString(x.shape()));
  }
  if (t_in < kernel) throw ShapeError("Conv1d: sequence shorter than kernel");
  if ((t_in - kernel) % stride != 0) throw ShapeError("Conv1d: misaligned input length");
  if (b.defined() && b.numel() != c_out) throw ShapeError("Conv1d: bias size");
  const int64_t t_out = (t_in - kernel) / stride + 1;
  const int64_t kc = kernel * c_in;

  Buffer<T> out(n_batch * t_out * c_out);
  CMapR<T> wm(w.value().data(), c_out, kc);
  for (int64_t n = 0; n < n_batch; ++n) {
    CSMapR<T> col(x.value().data() + n * t_in * c_in, t_out, kc,
                  Eigen::OuterStride<>(stride * c_in));
    MapR<T> y(out.data() + n * t_out * c_out, t_out, c_out);
    y.noalias() = col * wm.transpose();
    if (b.defined()) y.rowwise() += CRowVecMap<T>(b.value().data(), c_out);
  }
  std::vector<Var<T>> parents{x, w};
  if (b.defined()) parents.push_back(b);
  return MakeResult<T>({n_batch, t_out, c_out}, std::move(out), parents,
                       [=](Node<T>& node) {
    auto& px = node.parents[0];
    auto& pw = node.parents[1];
    CMapR<T> wm(pw->value.data(), c_out, kc);
    MatR<T> dcol;
    for (int64_t n = 0; n < n_batch; ++n) {
      CMapR<T> gy(node.grad.data() + n * t_out * c_out, t_out, c_out);
      if (pw->requires_grad) {
        CSMapR<T> col(px->value.data() + n * t_in * c_in, t_out, kc,
                      Eigen::OuterStride<>(stride * c_in));
        MapR<T>(pw->EnsureGrad().data(), c_out, kc).noalias() += gy.transpose() * col;
      }
      if (px->requires_grad) {
        dcol.noalias() = gy * wm;
        T* gx = px->EnsureGrad().data() + n * t_in * c_in;
        for (int64_t t = 0; t < t_out; ++t) {
          VecMap<T>(gx + t * stride * c_in, kc) += dcol.row(t).transpose();
        }
      }
      if (node.parents.size() > 2 && node.parents[2]->requires_grad) {
        RowVecMap<T>(node.parents[2]->EnsureGrad().data(), c_out) += gy.colwise().sum();
      }
    }
  });
}

template <typename T>
Var<T> ConvTranspose1d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int kernel,
                       int stride) {
  if (x.rank() != 3) throw ShapeError("ConvTranspose1d: input must be [N, T, C]");
  if (kernel < 1 || stride < 1) throw ShapeError("ConvTranspose1d: bad kernel/stride");
  const int64_t n_batch = x.dim(0);
  const int64_t t_in = x.dim(1);
  const int64_t c_in = x.dim(2);
  if (w.rank() != 2 || w.dim(0) != c_in || w.dim(1) % kernel != 0) {
    throw ShapeError("ConvTranspose1d: weight " + ShapeString(w.shape()) +
                     " for input " + ShapeString(x.shape()));
  }
  if (t_in < 1) throw ShapeError("ConvTranspose1d: empty input");
  const int64_t c_out = w.dim(1) / kernel;
  if (b.defined() && b.numel() != c_out) throw ShapeError("ConvTranspose1d: bias size");
  const int64_t t_out = (t_in - 1) * stride + kernel;
  const int64_t kc = kernel * c_out;

  Buffer<T> out(n_batch * t_out * c_out, T(0));
  CMapR<T> wm(w.value().data(), c_in, kc);
  MatR<T> col;
  for (int64_t n = 0; n < n_batch; ++n) {
    CMapR<T> xm(x.value().data() + n * t_in * c_in, t_in, c_in);
    col.noalias() = xm * wm;
    T* y = out.data() + n * t_out * c_out;
    for (int64_t t = 0; t < t_in; ++t) {
      VecMap<T>(y + t * stride * c_out, kc) += col.row(t).transpose();
    }
    if (b.defined()) {
      MapR<T>(y, t_out, c_out).rowwise() += CRowVecMap<T>(b.value().data(), c_out);
    }
  }
  std::vector<Var<T>> parents{x, w};
  if (b.defined()) parents.push_back(b);
  return MakeResult<T>({n_batch, t_out, c_out}, std::move(out), parents,
                       [=](Node<T>& node) {
    auto& px = node.parents[0];
    auto& pw = node.parents[1];
    CMapR<T> wm(pw->value.data(), c_in, kc);
    for (int64_t n = 0; n < n_batch; ++n) {
      const T* gy = node.grad.data() + n * t_out * c_out;
      CSMapR<T> dcol(gy, t_in, kc, Eigen::OuterStride<>(stride * c_out));
      if (px->requires_grad) {
        MapR<T>(px->EnsureGrad().data() + n * t_in * c_in, t_in, c_in).noalias() +=
            dcol * wm.transpose();
      }
      if (pw->requires_grad) {
        CMapR<T> xm(px->value.data() + n * t_in * c_in, t_in, c_in);
        MapR<T>(pw->EnsureGrad().data(), c_in, kc).noalias() += xm.transpose() * dcol;
      }
      if (node.parents.size() > 2 && node.parents[2]->requires_grad) {
        RowVecMap<T>(node.parents[2]->EnsureGrad().data(), c_out) +=
            CMapR<T>(gy, t_out, c_out).colwise().sum();
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Chunking

ChunkLayout ComputeChunkLayout(int64_t frames, int chunk_len) {
  if (chunk_len < 2 || chunk_len % 2 != 0) {
    throw ShapeError("chunk length must be a positive even number");
  }
  if (frames < 1) throw ShapeError("empty input");
  ChunkLayout c;
  c.frames = frames;
  c.chunk_len = chunk_len;
  const int64_t hop = chunk_len / 2;
  if (frames <= chunk_len) {
    c.padded = chunk_len;
  } else {
    const int64_t steps = (frames - chunk_len + hop - 1) / hop;
    c.padded = steps * hop + chunk_len;
  }
  c.pad_frames = c.padded - frames;
  c.n_chunks = (c.padded - chunk_len) / hop + 1;
  return c;
}

template <typename T>
Var<T> SegmentChunks(const Var<T>& x, int chunk_len) {
  if (x.rank() != 3) throw ShapeError("SegmentChunks: input must be [N, T, C]");
  const int64_t n_batch = x.dim(0);
  const int64_t frames = x.dim(1);
  const int64_t c = x.dim(2);
  const ChunkLayout lay = ComputeChunkLayout(frames, chunk_len);
  const int64_t L = chunk_len;
  const int64_t hop = lay.hop();
  const int64_t S = lay.n_chunks;
  Buffer<T> out(n_batch * S * L * c, T(0));
  const T* src = x.value().data();
  for (int64_t n = 0; n < n_batch; ++n) {
    for (int64_t s = 0; s < S; ++s) {
      const int64_t start = s * hop;
      const int64_t valid = std::clamp<int64_t>(frames - start, 0, L);
      std::copy(src + (n * frames + start) * c, src + (n * frames + start + valid) * c,
                out.data() + ((n * S + s) * L) * c);
    }
  }
  return MakeResult<T>({n_batch, S, L, c}, std::move(out), {x},
                       [=](Node<T>& node) {
    auto& g = node.parents[0]->EnsureGrad();
    for (int64_t n = 0; n < n_batch; ++n) {
      for (int64_t s = 0; s < S; ++s) {
        const int64_t start = s * hop;
        const int64_t valid = std::clamp<int64_t>(frames - start, 0, L);
        const T* gs = node.grad.data() + ((n * S + s) * L) * c;
        T* gd = g.data() + (n * frames + start) * c;
        for (int64_t e = 0; e < valid * c; ++e) gd[e] += gs[e];
      }
    }
  });
}

template <typename T>
Var<T> OverlapAdd(const Var<T>& x, int64_t frames) {
  if (x.rank() != 4) throw ShapeError("OverlapAdd: input must be [N, S, L, C]");
  const int64_t n_batch = x.dim(0);
  const int64_t S = x.dim(1);
  const int64_t L = x.dim(2);
  const int64_t c = x.dim(3);
  const ChunkLayout lay = ComputeChunkLayout(frames, static_cast<int>(L));
  if (lay.n_chunks != S) throw ShapeError("OverlapAdd: chunk count does not match frames");
  const int64_t hop = lay.hop();
  // Per-frame overlap count over the padded sequence.
  Buffer<T> inv_count(lay.padded, T(0));
  for (int64_t s = 0; s < S; ++s) {
    for (int64_t l = 0; l < L; ++l) inv_count[s * hop + l] += T(1);
  }
  for (auto& v : inv_count) v = T(1) / v;

  Buffer<T> out(n_batch * frames * c, T(0));
  const T* src = x.value().data();
  for (int64_t n = 0; n < n_batch; ++n) {
    for (int64_t s = 0; s < S; ++s) {
      for (int64_t l = 0; l < L; ++l) {
        const int64_t f = s * hop + l;
        if (f >= frames) break;
        const T w = inv_count[f];
        const T* a = src + (((n * S + s) * L) + l) * c;
        T* d = out.data() + (n * frames + f) * c;
        for (int64_t e = 0; e < c; ++e) d[e] += w * a[e];
      }
    }
  }
  return MakeResult<T>({n_batch, frames, c}, std::move(out), {x},
                       [=, inv_count = std::move(inv_count)](Node<T>& node) {
    auto& g = node.parents[0]->EnsureGrad();
    for (int64_t n = 0; n < n_batch; ++n) {
      for (int64_t s = 0; s < S; ++s) {
        for (int64_t l = 0; l < L; ++l) {
          const int64_t f = s * hop + l;
          if (f >= frames) break;
          const T w = inv_count[f];
          const T* gs = node.grad.data() + (n * frames + f) * c;
          T* gd = g.data() + (((n * S + s) * L) + l) * c;
          for (int64_t e = 0; e < c; ++e) gd[e] += w * gs[e];
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Recurrent

template <typename T>
Var<T> Lstm(const Var<T>& x, const LstmWeights<T>& w, bool reverse) {
  if (x.rank() != 3) throw ShapeError("Lstm: input must be [N, S, C]");
  const int64_t N = x.dim(0);
  const int64_t S = x.dim(1);
  const int64_t C = x.dim(2);
  const int64_t H = w.w_hh.dim(1);
  const int64_t G = 4 * H;
  if (w.w_ih.dim(0) != G || w.w_ih.dim(1) != C || w.w_hh.dim(0) != G ||
      w.bias.numel() != G) {
    throw ShapeError("Lstm: weight shapes do not match input " + ShapeString(x.shape()));
  }

  // Time-major working copies: xt [S, N, C], gates [S, N, 4H] (activated),
  // cells and hidden states [S, N, H].
  Buffer<T> xt(S * N * C);
  PermuteRaw(x.value().data(), x.shape(), {1, 0, 2}, xt.data(), false);
  Buffer<T> gates(S * N * G);
  Buffer<T> cells(S * N * H);
  Buffer<T> hidden(S * N * H);

  CMapR<T> wih(w.w_ih.value().data(), G, C);
  CMapR<T> whh(w.w_hh.value().data(), G, H);
  {
    MapR<T> xp(gates.data(), S * N, G);
    xp.noalias() = CMapR<T>(xt.data(), S * N, C) * wih.transpose();
    xp.rowwise() += CRowVecMap<T>(w.bias.value().data(), G);
  }
  for (int64_t k = 0; k < S; ++k) {
    const int64_t s = reverse ? S - 1 - k : k;
    const int64_t sp = reverse ? s + 1 : s - 1;
    MapR<T> gs(gates.data() + s * N * G, N, G);
    if (k > 0) gs.noalias() += CMapR<T>(hidden.data() + sp * N * H, N, H) * whh.transpose();
    MapR<T> cs(cells.data() + s * N * H, N, H);
    MapR<T> hs(hidden.data() + s * N * H, N, H);
    auto gi = gs.leftCols(H).array();
    auto gf = gs.middleCols(H, H).array();
    auto gg = gs.middleCols(2 * H, H).array();
    auto go = gs.rightCols(H).array();
    gi = (T(0.5) * (T(0.5) * gi).tanh() + T(0.5));
    gf = (T(0.5) * (T(0.5) * gf).tanh() + T(0.5));
    gg = gg.tanh();
    go = (T(0.5) * (T(0.5) * go).tanh() + T(0.5));
    if (k > 0) {
      cs.array() = gf * CMapR<T>(cells.data() + sp * N * H, N, H).array() + gi * gg;
    } else {
      cs.array() = gi * gg;
    }
    hs.array() = go * cs.array().tanh();
  }

  Buffer<T> out(N * S * H);
  PermuteRaw(hidden.data(), Shape{S, N, H}, {1, 0, 2}, out.data(), false);

  return MakeResult<T>(
      {N, S, H}, std::move(out), {x, w.w_ih, w.w_hh, w.bias},
      [=, xt = std::move(xt), gates = std::move(gates), cells = std::move(cells),
       hidden = std::move(hidden)](Node<T>& node) {
        auto& px = node.parents[0];
        auto& pwih = node.parents[1];
        auto& pwhh = node.parents[2];
        auto& pb = node.parents[3];
        CMapR<T> whh(pwhh->value.data(), G, H);

        Buffer<T> dh_out(S * N * H);
        PermuteRaw(node.grad.data(), Shape{N, S, H}, {1, 0, 2}, dh_out.data(), false);
        Buffer<T> dxp(S * N * G);
        MatR<T> dh_next = MatR<T>::Zero(N, H);
        MatR<T> dc_next = MatR<T>::Zero(N, H);
        MatR<T> dh(N, H), dc(N, H), tc(N, H);

        for (int64_t k = S - 1; k >= 0; --k) {
          const int64_t s = reverse ? S - 1 - k : k;
          const int64_t sp = reverse ? s + 1 : s - 1;
          CMapR<T> gs(gates.data() + s * N * G, N, G);
          CMapR<T> cs(cells.data() + s * N * H, N, H);
          auto gi = gs.leftCols(H).array();
          auto gf = gs.middleCols(H, H).array();
          auto gg = gs.middleCols(2 * H, H).array();
          auto go = gs.rightCols(H).array();

          dh = CMapR<T>(dh_out.data() + s * N * H, N, H) + dh_next;
          tc.array() = cs.array().tanh();
          dc.array() = dc_next.array() + dh.array() * go * (T(1) - tc.array().square());

          MapR<T> dp(dxp.data() + s * N * G, N, G);
          dp.leftCols(H).array() = dc.array() * gg * gi * (T(1) - gi);
          if (k > 0) {
            CMapR<T> cprev(cells.data() + sp * N * H, N, H);
            dp.middleCols(H, H).array() = dc.array() * cprev.array() * gf * (T(1) - gf);
          } else {
            dp.middleCols(H, H).setZero();
          }
          dp.middleCols(2 * H, H).array() = dc.array() * gi * (T(1) - gg.square());
          dp.rightCols(H).array() = dh.array() * tc.array() * go * (T(1) - go);
          dc_next.array() = dc.array() * gf;
          if (k > 0) dh_next.noalias() = dp * whh;
        }

        CMapR<T> dxpm(dxp.data(), S * N, G);
        if (pwhh->requires_grad && S > 1) {
          // Every step but the first consumes the previous hidden state; in
          // storage order that is rows [N, S*N) of dxp against rows
          // [0, (S-1)*N) of hidden (forward) or the mirror (reverse).
          const int64_t rows = (S - 1) * N;
          const T* dp0 = dxp.data() + (reverse ? 0 : N * G);
          const T* h0 = hidden.data() + (reverse ? N * H : 0);
          MapR<T>(pwhh->EnsureGrad().data(), G, H).noalias() +=
              CMapR<T>(dp0, rows, G).transpose() * CMapR<T>(h0, rows, H);
        }
        if (pwih->requires_grad) {
          MapR<T>(pwih->EnsureGrad().data(), G, C).noalias() +=
              dxpm.transpose() * CMapR<T>(xt.data(), S * N, C);
        }
        if (pb->requires_grad) {
          RowVecMap<T>(pb->EnsureGrad().data(), G) += dxpm.colwise().sum();
        }
        if (px->requires_grad) {
          Buffer<T> dxt(S * N * C);
          MapR<T>(dxt.data(), S * N, C).noalias() =
              dxpm * CMapR<T>(pwih->value.data(), G, C);
          PermuteRaw(dxt.data(), Shape{S, N, C}, {1, 0, 2}, px->EnsureGrad().data(), true);
        }
      });
}

// ---------------------------------------------------------------------------
// Attention

template <typename T>
Var<T> MultiHeadAttention(const Var<T>& qkv, int heads) {
  if (qkv.rank() != 3 || qkv.dim(2) % 3 != 0) {
    throw ShapeError("MultiHeadAttention: input must be [N, S, 3C]");
  }
  const int64_t N = qkv.dim(0);
  const int64_t S = qkv.dim(1);
  const int64_t C = qkv.dim(2) / 3;
  if (heads < 1 || C % heads != 0) throw ShapeError("MultiHeadAttention: C % heads != 0");
  const int64_t dk = C / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dk));
  const int64_t C3 = 3 * C;

  Buffer<T> out(N * S * C);
  Buffer<T> probs(N * heads * S * S);
  const T* base = qkv.value().data();
  for (int64_t n = 0; n < N; ++n) {
    for (int h = 0; h < heads; ++h) {
      const T* p0 = base + n * S * C3 + h * dk;
      CSMapR<T> q(p0, S, dk, Eigen::OuterStride<>(C3));
      CSMapR<T> k(p0 + C, S, dk, Eigen::OuterStride<>(C3));
      CSMapR<T> v(p0 + 2 * C, S, dk, Eigen::OuterStride<>(C3));
      MapR<T> p(probs.data() + (n * heads + h) * S * S, S, S);
      p.noalias() = (q * k.transpose()) * scale;
      for (int64_t r = 0; r < S; ++r) {
        const T m = p.row(r).maxCoeff();
        p.row(r).array() = (p.row(r).array() - m).exp();
        p.row(r) /= p.row(r).sum();
      }
      SMapR<T> o(out.data() + n * S * C + h * dk, S, dk, Eigen::OuterStride<>(C));
      o.noalias() = p * v;
    }
  }
  return MakeResult<T>({N, S, C}, std::move(out), {qkv},
                       [=, probs = std::move(probs)](Node<T>& node) {
    auto& px = node.parents[0];
    const T* base = px->value.data();
    T* gbase = px->EnsureGrad().data();
    MatR<T> dp(S, S);
    Eigen::Matrix<T, Eigen::Dynamic, 1> rs(S);
    for (int64_t n = 0; n < N; ++n) {
      for (int h = 0; h < heads; ++h) {
        const int64_t off = n * S * C3 + h * dk;
        CSMapR<T> q(base + off, S, dk, Eigen::OuterStride<>(C3));
        CSMapR<T> k(base + off + C, S, dk, Eigen::OuterStride<>(C3));
        CSMapR<T> v(base + off + 2 * C, S, dk, Eigen::OuterStride<>(C3));
        SMapR<T> gq(gbase + off, S, dk, Eigen::OuterStride<>(C3));
        SMapR<T> gk(gbase + off + C, S, dk, Eigen::OuterStride<>(C3));
        SMapR<T> gv(gbase + off + 2 * C, S, dk, Eigen::OuterStride<>(C3));
        CMapR<T> p(probs.data() + (n * heads + h) * S * S, S, S);
        CSMapR<T> go(node.grad.data() + n * S * C + h * dk, S, dk, Eigen::OuterStride<>(C));
        gv.noalias() += p.transpose() * go;
        dp.noalias() = go * v.transpose();
        rs = dp.cwiseProduct(p).rowwise().sum();
        dp = p.cwiseProduct(dp.colwise() - rs) * scale;
        gq.noalias() += dp * k;
        gk.noalias() += dp.transpose() * q;
      }
    }
  });
}

#define STEPSEP_INSTANTIATE(T)                                                     \
  template Var<T> Add(const Var<T>&, const Var<T>&);                               \
  template Var<T> Sub(const Var<T>&, const Var<T>&);                               \
  template Var<T> Mul(const Var<T>&, const Var<T>&);                               \
  template Var<T> Scale(const Var<T>&, T);                                         \
  template Var<T> Relu(const Var<T>&);                                             \
  template Var<T> PRelu(const Var<T>&, const Var<T>&);                             \
  template Var<T> Sum(const Var<T>&);                                              \
  template Var<T> Linear(const Var<T>&, const Var<T>&, const Var<T>&);             \
  template Var<T> LayerNorm(const Var<T>&, const Var<T>&, const Var<T>&, T);       \
  template Var<T> Reshape(const Var<T>&, Shape);                                   \
  template Var<T> Permute(const Var<T>&, const std::vector<int>&);                 \
  template Var<T> Slice(const Var<T>&, int, int64_t, int64_t);                     \
  template Var<T> Concat(const std::vector<Var<T>>&, int);                         \
  template Var<T> SumAxis(const Var<T>&, int);                                     \
  template Var<T> PadAxis(const Var<T>&, int, int64_t, int64_t);                   \
  template Var<T> Conv1d(const Var<T>&, const Var<T>&, const Var<T>&, int, int);   \
  template Var<T> ConvTranspose1d(const Var<T>&, const Var<T>&, const Var<T>&, int, \
                                  int);                                            \
  template Var<T> SegmentChunks(const Var<T>&, int);                               \
  template Var<T> OverlapAdd(const Var<T>&, int64_t);                              \
  template Var<T> Lstm(const Var<T>&, const LstmWeights<T>&, bool);                \
  template Var<T> MultiHeadAttention(const Var<T>&, int);

STEPSEP_INSTANTIATE(float)
STEPSEP_INSTANTIATE(double)
#undef STEPSEP_INSTANTIATE

}  // namespace stepsep::ag
