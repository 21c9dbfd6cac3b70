// Copyright 2026 The lfmcw Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <utility>

namespace lfm::kernels {
namespace {

struct Geometry {
  Index n, h, w, c;
  Index kh, kw;
  Index ho, wo;
  int stride, pad, dilation;
};

void require_rank(const Tensor& t, Index rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_string(t.shape()));
  }
}

Geometry geometry(const Tensor& x, Index kh, Index kw, const ConvAttrs& a, const char* what) {
  require_rank(x, 4, what);
  Geometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), kh, kw, 0, 0, a.stride, a.pad, a.dilation};
  if (a.stride < 1 || a.dilation < 1 || a.pad < 0) throw ShapeError(std::string(what) + ": bad attributes");
  const Index eff_h = a.dilation * (kh - 1) + 1;
  const Index eff_w = a.dilation * (kw - 1) + 1;
  const Index span_h = g.h + 2 * a.pad - eff_h;
  const Index span_w = g.w + 2 * a.pad - eff_w;
  if (span_h < 0 || span_w < 0) {
    throw ShapeError(std::string(what) + ": window larger than padded input " + shape_string(x.shape()));
  }
  g.ho = span_h / a.stride + 1;
  g.wo = span_w / a.stride + 1;
  return g;
}

void im2col(const Scalar* x, const Geometry& g, Scalar* cols) {
  const Index row_len = g.kh * g.kw * g.c;
  for (Index n = 0; n < g.n; ++n) {
    for (Index oh = 0; oh < g.ho; ++oh) {
      for (Index ow = 0; ow < g.wo; ++ow) {
        Scalar* row = cols + ((n * g.ho + oh) * g.wo + ow) * row_len;
        for (Index ki = 0; ki < g.kh; ++ki) {
          const Index ih = oh * g.stride - g.pad + ki * g.dilation;
          for (Index kj = 0; kj < g.kw; ++kj) {
            const Index iw = ow * g.stride - g.pad + kj * g.dilation;
            Scalar* dst = row + (ki * g.kw + kj) * g.c;
            if (ih < 0 || ih >= g.h || iw < 0 || iw >= g.w) {
              std::fill(dst, dst + g.c, Scalar(0));
            } else {
              std::memcpy(dst, x + ((n * g.h + ih) * g.w + iw) * g.c, sizeof(Scalar) * g.c);
            }
          }
        }
      }
    }
  }
}

void col2im_add(const Scalar* cols, const Geometry& g, Scalar* dx) {
  const Index row_len = g.kh * g.kw * g.c;
  for (Index n = 0; n < g.n; ++n) {
    for (Index oh = 0; oh < g.ho; ++oh) {
      for (Index ow = 0; ow < g.wo; ++ow) {
        const Scalar* row = cols + ((n * g.ho + oh) * g.wo + ow) * row_len;
        for (Index ki = 0; ki < g.kh; ++ki) {
          const Index ih = oh * g.stride - g.pad + ki * g.dilation;
          if (ih < 0 || ih >= g.h) continue;
          for (Index kj = 0; kj < g.kw; ++kj) {
            const Index iw = ow * g.stride - g.pad + kj * g.dilation;
            if (iw < 0 || iw >= g.w) continue;
            const Scalar* src = row + (ki * g.kw + kj) * g.c;
            Scalar* dst = dx + ((n * g.h + ih) * g.w + iw) * g.c;
            for (Index c = 0; c < g.c; ++c) dst[c] += src[c];
          }
        }
      }
    }
  }
}

bool is_pointwise(const Geometry& g) {
  return g.kh == 1 && g.kw == 1 && g.stride == 1 && g.pad == 0;
}

}  // namespace

Index checked_label(Scalar value, Index classes) {
  const auto label = static_cast<Index>(std::llround(value));
  if (label < 0 || label >= classes || Scalar(label) != value) {
    throw ValidationError("label " + std::to_string(value) + " outside [0, " + std::to_string(classes) + ")");
  }
  return label;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  if (a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  Tensor y({a.dim(0), b.dim(1)});
  y.matrix(a.dim(0), b.dim(1)).noalias() = a.matrix(a.dim(0), a.dim(1)) * b.matrix(b.dim(0), b.dim(1));
  return y;
}

void matmul_backward(const Tensor& a, const Tensor& b, const Tensor& dy, Tensor* da, Tensor* db) {
  const auto A = a.matrix(a.dim(0), a.dim(1));
  const auto B = b.matrix(b.dim(0), b.dim(1));
  const auto G = dy.matrix(dy.dim(0), dy.dim(1));
  if (da) da->matrix(a.dim(0), a.dim(1)).noalias() += G * B.transpose();
  if (db) db->matrix(b.dim(0), b.dim(1)).noalias() += A.transpose() * G;
}

Tensor conv2d(const Tensor& x, const Tensor& w, const ConvAttrs& attrs) {
  require_rank(w, 4, "conv2d weight");
  const Geometry g = geometry(x, w.dim(0), w.dim(1), attrs, "conv2d");
  if (w.dim(2) != g.c) {
    throw ShapeError("conv2d: input " + shape_string(x.shape()) + " vs weight " + shape_string(w.shape()));
  }
  const Index co = w.dim(3);
  const Index rows = g.n * g.ho * g.wo;
  const Index k = g.kh * g.kw * g.c;
  Tensor y({g.n, g.ho, g.wo, co});
  const auto W = w.matrix(k, co);
  if (is_pointwise(g)) {
    y.matrix(rows, co).noalias() = x.matrix(rows, k) * W;
    return y;
  }
  RowMatrixX<Scalar> cols(rows, k);
  im2col(x.data(), g, cols.data());
  y.matrix(rows, co).noalias() = cols * W;
  return y;
}

void conv2d_backward(const Tensor& x, const Tensor& w, const ConvAttrs& attrs, const Tensor& dy, Tensor* dx,
                     Tensor* dw) {
  const Geometry g = geometry(x, w.dim(0), w.dim(1), attrs, "conv2d");
  const Index co = w.dim(3);
  const Index rows = g.n * g.ho * g.wo;
  const Index k = g.kh * g.kw * g.c;
  const auto G = dy.matrix(rows, co);
  const auto W = w.matrix(k, co);
  if (is_pointwise(g)) {
    if (dw) dw->matrix(k, co).noalias() += x.matrix(rows, k).transpose() * G;
    if (dx) dx->matrix(rows, k).noalias() += G * W.transpose();
    return;
  }
  RowMatrixX<Scalar> cols(rows, k);
  if (dw) {
    im2col(x.data(), g, cols.data());
    dw->matrix(k, co).noalias() += cols.transpose() * G;
  }
  if (dx) {
    cols.noalias() = G * W.transpose();
    col2im_add(cols.data(), g, dx->data());
  }
}

// out[i] += a[i] * b[i] over n entries, in fixed blocks of eight so the
// compiler emits straight-line vector code for the usual channel counts.
inline void fma_into(Scalar* __restrict out, const Scalar* __restrict a, const Scalar* __restrict b, Index n) {
  Index i = 0;
  for (; i + 8 <= n; i += 8) {
    for (Index j = 0; j < 8; ++j) out[i + j] += a[i + j] * b[i + j];
  }
  for (; i < n; ++i) out[i] += a[i] * b[i];
}

// Range [lo, hi) of kernel taps whose input coordinate o * stride - pad +
// k * dilation falls inside [0, size).
std::pair<Index, Index> tap_range(Index o, Index size, Index taps, const Geometry& g) {
  const Index base = o * g.stride - g.pad;
  Index lo = 0;
  while (lo < taps && base + lo * g.dilation < 0) ++lo;
  Index hi = taps;
  while (hi > lo && base + (hi - 1) * g.dilation >= size) --hi;
  return {lo, hi};
}

Tensor depthwise_conv2d(const Tensor& x, const Tensor& w, const ConvAttrs& attrs) {
  require_rank(w, 3, "depthwise_conv2d weight");
  const Geometry g = geometry(x, w.dim(0), w.dim(1), attrs, "depthwise_conv2d");
  if (w.dim(2) != g.c) {
    throw ShapeError("depthwise_conv2d: input " + shape_string(x.shape()) + " vs weight " +
                     shape_string(w.shape()));
  }
  Tensor y({g.n, g.ho, g.wo, g.c});
  const Scalar* __restrict xp = x.data();
  const Scalar* __restrict wp = w.data();
  Scalar* __restrict yp = y.data();
  const Index c = g.c;
  for (Index oh = 0; oh < g.ho; ++oh) {
    const auto [ki0, ki1] = tap_range(oh, g.h, g.kh, g);
    for (Index ow = 0; ow < g.wo; ++ow) {
      const auto [kj0, kj1] = tap_range(ow, g.w, g.kw, g);
      for (Index n = 0; n < g.n; ++n) {
        Scalar* __restrict out = yp + ((n * g.ho + oh) * g.wo + ow) * c;
        for (Index ki = ki0; ki < ki1; ++ki) {
          const Index ih = oh * g.stride - g.pad + ki * g.dilation;
          for (Index kj = kj0; kj < kj1; ++kj) {
            const Index iw = ow * g.stride - g.pad + kj * g.dilation;
            const Scalar* __restrict in = xp + ((n * g.h + ih) * g.w + iw) * c;
            const Scalar* __restrict k = wp + (ki * g.kw + kj) * c;
            fma_into(out, in, k, c);
          }
        }
      }
    }
  }
  return y;
}

void depthwise_conv2d_backward(const Tensor& x, const Tensor& w, const ConvAttrs& attrs, const Tensor& dy,
                               Tensor* dx, Tensor* dw) {
  const Geometry g = geometry(x, w.dim(0), w.dim(1), attrs, "depthwise_conv2d");
  const Scalar* __restrict xp = x.data();
  const Scalar* __restrict wp = w.data();
  const Scalar* __restrict gp = dy.data();
  Scalar* __restrict dxp = dx ? dx->data() : nullptr;
  Scalar* __restrict dwp = dw ? dw->data() : nullptr;
  const Index c = g.c;
  for (Index oh = 0; oh < g.ho; ++oh) {
    const auto [ki0, ki1] = tap_range(oh, g.h, g.kh, g);
    for (Index ow = 0; ow < g.wo; ++ow) {
      const auto [kj0, kj1] = tap_range(ow, g.w, g.kw, g);
      for (Index n = 0; n < g.n; ++n) {
        const Scalar* __restrict go = gp + ((n * g.ho + oh) * g.wo + ow) * c;
        for (Index ki = ki0; ki < ki1; ++ki) {
          const Index ih = oh * g.stride - g.pad + ki * g.dilation;
          for (Index kj = kj0; kj < kj1; ++kj) {
            const Index iw = ow * g.stride - g.pad + kj * g.dilation;
            const Index in_off = ((n * g.h + ih) * g.w + iw) * c;
            const Index k_off = (ki * g.kw + kj) * c;
            if (dxp) {
              Scalar* __restrict d = dxp + in_off;
              const Scalar* __restrict k = wp + k_off;
              fma_into(d, go, k, c);
            }
            if (dwp) {
              Scalar* __restrict d = dwp + k_off;
              const Scalar* __restrict in = xp + in_off;
              fma_into(d, go, in, c);
            }
          }
        }
      }
    }
  }
}

Tensor max_pool(const Tensor& x, int window, const ConvAttrs& attrs) {
  const Geometry g = geometry(x, window, window, attrs, "max_pool");
  Tensor y({g.n, g.ho, g.wo, g.c});
  const Scalar* xp = x.data();
  Scalar* yp = y.data();
  for (Index n = 0; n < g.n; ++n) {
    for (Index oh = 0; oh < g.ho; ++oh) {
      for (Index ow = 0; ow < g.wo; ++ow) {
        Scalar* out = yp + ((n * g.ho + oh) * g.wo + ow) * g.c;
        std::fill(out, out + g.c, -std::numeric_limits<Scalar>::infinity());
        for (Index ki = 0; ki < g.kh; ++ki) {
          const Index ih = oh * g.stride - g.pad + ki;
          if (ih < 0 || ih >= g.h) continue;
          for (Index kj = 0; kj < g.kw; ++kj) {
            const Index iw = ow * g.stride - g.pad + kj;
            if (iw < 0 || iw >= g.w) continue;
            const Scalar* in = xp + ((n * g.h + ih) * g.w + iw) * g.c;
            for (Index c = 0; c < g.c; ++c) out[c] = std::max(out[c], in[c]);
          }
        }
      }
    }
  }
  return y;
}

void max_pool_backward(const Tensor& x, int window, const ConvAttrs& attrs, const Tensor& dy, Tensor* dx) {
  if (!dx) return;
  const Geometry g = geometry(x, window, window, attrs, "max_pool");
  const Scalar* xp = x.data();
  const Scalar* gp = dy.data();
  Scalar* dxp = dx->data();
  std::vector<Index> best(static_cast<std::size_t>(g.c));
  std::vector<Scalar> best_val(static_cast<std::size_t>(g.c));
  for (Index n = 0; n < g.n; ++n) {
    for (Index oh = 0; oh < g.ho; ++oh) {
      for (Index ow = 0; ow < g.wo; ++ow) {
        std::fill(best.begin(), best.end(), Index(-1));
        std::fill(best_val.begin(), best_val.end(), -std::numeric_limits<Scalar>::infinity());
        for (Index ki = 0; ki < g.kh; ++ki) {
          const Index ih = oh * g.stride - g.pad + ki;
          if (ih < 0 || ih >= g.h) continue;
          for (Index kj = 0; kj < g.kw; ++kj) {
            const Index iw = ow * g.stride - g.pad + kj;
            if (iw < 0 || iw >= g.w) continue;
            const Index off = ((n * g.h + ih) * g.w + iw) * g.c;
            for (Index c = 0; c < g.c; ++c) {
              // first maximum wins, matching the forward's strict comparison
              if (best[c] < 0 || xp[off + c] > best_val[c]) {
                best[c] = off + c;
                best_val[c] = xp[off + c];
              }
            }
          }
        }
        const Scalar* go = gp + ((n * g.ho + oh) * g.wo + ow) * g.c;
        for (Index c = 0; c < g.c; ++c) dxp[best[c]] += go[c];
      }
    }
  }
}

Tensor avg_pool(const Tensor& x, int window, const ConvAttrs& attrs) {
  const Geometry g = geometry(x, window, window, attrs, "avg_pool");
  Tensor y({g.n, g.ho, g.wo, g.c});
  const Scalar* xp = x.data();
  Scalar* yp = y.data();
  for (Index n = 0; n < g.n; ++n) {
    for (Index oh = 0; oh < g.ho; ++oh) {
      for (Index ow = 0; ow < g.wo; ++ow) {
        Scalar* out = yp + ((n * g.ho + oh) * g.wo + ow) * g.c;
        Index count = 0;
        for (Index ki = 0; ki < g.kh; ++ki) {
          const Index ih = oh * g.stride - g.pad + ki;
          if (ih < 0 || ih >= g.h) continue;
          for (Index kj = 0; kj < g.kw; ++kj) {
            const Index iw = ow * g.stride - g.pad + kj;
            if (iw < 0 || iw >= g.w) continue;
            const Scalar* in = xp + ((n * g.h + ih) * g.w + iw) * g.c;
            for (Index c = 0; c < g.c; ++c) out[c] += in[c];
            ++count;
          }
        }
        const Scalar inv = Scalar(1) / Scalar(count);
        for (Index c = 0; c < g.c; ++c) out[c] *= inv;
      }
    }
  }
  return y;
}

void avg_pool_backward(const Tensor& x, int window, const ConvAttrs& attrs, const Tensor& dy, Tensor* dx) {
  if (!dx) return;
  const Geometry g = geometry(x, window, window, attrs, "avg_pool");
  const Scalar* gp = dy.data();
  Scalar* dxp = dx->data();
  for (Index n = 0; n < g.n; ++n) {
    for (Index oh = 0; oh < g.ho; ++oh) {
      for (Index ow = 0; ow < g.wo; ++ow) {
        Index count = 0;
        for (Index ki = 0; ki < g.kh; ++ki) {
          const Index ih = oh * g.stride - g.pad + ki;
          if (ih < 0 || ih >= g.h) continue;
          for (Index kj = 0; kj < g.kw; ++kj) {
            const Index iw = ow * g.stride - g.pad + kj;
            if (iw >= 0 && iw < g.w) ++count;
          }
        }
        const Scalar inv = Scalar(1) / Scalar(count);
        const Scalar* go = gp + ((n * g.ho + oh) * g.wo + ow) * g.c;
        for (Index ki = 0; ki < g.kh; ++ki) {
          const Index ih = oh * g.stride - g.pad + ki;
          if (ih < 0 || ih >= g.h) continue;
          for (Index kj = 0; kj < g.kw; ++kj) {
            const Index iw = ow * g.stride - g.pad + kj;
            if (iw < 0 || iw >= g.w) continue;
            Scalar* d = dxp + ((n * g.h + ih) * g.w + iw) * g.c;
            for (Index c = 0; c < g.c; ++c) d[c] += go[c] * inv;
          }
        }
      }
    }
  }
}

Tensor batch_norm(const Tensor& x) {
  if (x.rank() < 2) throw ShapeError("batch_norm: rank must be >= 2, got " + shape_string(x.shape()));
  const Index c = x.shape().back();
  const Index rows = x.size() / c;
  const auto X = x.matrix(rows, c);
  const Eigen::Array<Scalar, 1, Eigen::Dynamic> mu = X.colwise().mean().array();
  const Eigen::Array<Scalar, 1, Eigen::Dynamic> var =
      (X.array().rowwise() - mu).square().colwise().sum() / Scalar(rows);
  const Eigen::Array<Scalar, 1, Eigen::Dynamic> inv_std = (var + kBatchNormEps).rsqrt();
  Tensor y(x.shape());
  y.matrix(rows, c).array() = (X.array().rowwise() - mu).rowwise() * inv_std;
  return y;
}

void batch_norm_backward(const Tensor& x, const Tensor& y, const Tensor& dy, Tensor* dx) {
  if (!dx) return;
  const Index c = x.shape().back();
  const Index rows = x.size() / c;
  const auto X = x.matrix(rows, c);
  const auto Y = y.matrix(rows, c);
  const auto G = dy.matrix(rows, c);
  const Eigen::Array<Scalar, 1, Eigen::Dynamic> mu = X.colwise().mean().array();
  const Eigen::Array<Scalar, 1, Eigen::Dynamic> var =
      (X.array().rowwise() - mu).square().colwise().sum() / Scalar(rows);
  const Eigen::Array<Scalar, 1, Eigen::Dynamic> inv_std = (var + kBatchNormEps).rsqrt();
  const Eigen::Array<Scalar, 1, Eigen::Dynamic> g_mean = G.colwise().mean().array();
  const Eigen::Array<Scalar, 1, Eigen::Dynamic> gy_mean = (G.array() * Y.array()).colwise().mean();
  dx->matrix(rows, c).array() +=
      ((G.array().rowwise() - g_mean) - Y.array().rowwise() * gy_mean).rowwise() * inv_std;
}

Tensor softmax(const Tensor& x) {
  const Index c = x.shape().back();
  const Index rows = x.size() / c;
  const auto X = x.matrix(rows, c);
  Tensor y(x.shape());
  auto Y = y.matrix(rows, c);
  Y = (X.colwise() - X.rowwise().maxCoeff()).array().exp().matrix();
  Y.array().colwise() /= Y.rowwise().sum().array();
  return y;
}

Tensor log_softmax(const Tensor& x) {
  const Index c = x.shape().back();
  const Index rows = x.size() / c;
  const auto X = x.matrix(rows, c);
  Tensor y(x.shape());
  auto Y = y.matrix(rows, c);
  Y = X.colwise() - X.rowwise().maxCoeff();
  const VectorX<Scalar> lse = Y.array().exp().rowwise().sum().log().matrix();
  Y.colwise() -= lse;
  return y;
}

void softmax_backward(const Tensor& y, const Tensor& dy, Tensor* dx) {
  if (!dx) return;
  const Index c = y.shape().back();
  const Index rows = y.size() / c;
  const auto Y = y.matrix(rows, c);
  const auto G = dy.matrix(rows, c);
  const VectorX<Scalar> inner = (Y.array() * G.array()).rowwise().sum().matrix();
  dx->matrix(rows, c).array() += Y.array() * (G.colwise() - inner).array();
}

void log_softmax_backward(const Tensor& y, const Tensor& dy, Tensor* dx) {
  if (!dx) return;
  const Index c = y.shape().back();
  const Index rows = y.size() / c;
  const auto Y = y.matrix(rows, c);
  const auto G = dy.matrix(rows, c);
  const VectorX<Scalar> gsum = G.rowwise().sum();
  dx->matrix(rows, c).array() += G.array() - Y.array().exp().colwise() * gsum.array();
}

Tensor cross_entropy_terms(const Tensor& logits, const Tensor& labels) {
  require_rank(logits, 2, "cross_entropy");
  const Index n = logits.dim(0);
  const Index c = logits.dim(1);
  if (labels.size() != n) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(n) +
                     " rows");
  }
  const Tensor logp = log_softmax(logits);
  Tensor terms({n});
  for (Index i = 0; i < n; ++i) terms[i] = -logp[i * c + checked_label(labels[i], c)];
  return terms;
}

void cross_entropy_backward(const Tensor& logits, const Tensor& labels, std::span<const Scalar> coeff,
                            Tensor* dlogits) {
  if (!dlogits) return;
  const Index n = logits.dim(0);
  const Index c = logits.dim(1);
  const Tensor p = softmax(logits);
  Scalar* d = dlogits->data();
  for (Index i = 0; i < n; ++i) {
    const Scalar k = coeff[static_cast<std::size_t>(i)];
    if (k == Scalar(0)) continue;
    const Index y = checked_label(labels[i], c);
    for (Index j = 0; j < c; ++j) d[i * c + j] += k * (p[i * c + j] - (j == y ? Scalar(1) : Scalar(0)));
  }
}

Tensor spatial_mean(const Tensor& x) {
  require_rank(x, 4, "spatial_mean");
  const Index n = x.dim(0), hw = x.dim(1) * x.dim(2), c = x.dim(3);
  Tensor y({n, c});
  for (Index i = 0; i < n; ++i) {
    y.matrix(n, c).row(i) = x.matrix(n * hw, c).middleRows(i * hw, hw).colwise().mean();
  }
  return y;
}

void spatial_mean_backward(const Tensor& x, const Tensor& dy, Tensor* dx) {
  if (!dx) return;
  const Index n = x.dim(0), hw = x.dim(1) * x.dim(2), c = x.dim(3);
  auto D = dx->matrix(n * hw, c);
  const auto G = dy.matrix(n, c);
  for (Index i = 0; i < n; ++i) {
    D.middleRows(i * hw, hw).rowwise() += G.row(i) / Scalar(hw);
  }
}

Tensor upsample2x(const Tensor& x) {
  require_rank(x, 4, "upsample2x");
  const Index n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  Tensor y({n, 2 * h, 2 * w, c});
  for (Index b = 0; b < n; ++b)
    for (Index i = 0; i < 2 * h; ++i)
      for (Index j = 0; j < 2 * w; ++j)
        std::memcpy(y.data() + ((b * 2 * h + i) * 2 * w + j) * c, x.data() + ((b * h + i / 2) * w + j / 2) * c,
                    sizeof(Scalar) * c);
  return y;
}

void upsample2x_backward(const Tensor& x, const Tensor& dy, Tensor* dx) {
  if (!dx) return;
  const Index n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  for (Index b = 0; b < n; ++b)
    for (Index i = 0; i < 2 * h; ++i)
      for (Index j = 0; j < 2 * w; ++j) {
        const Scalar* g = dy.data() + ((b * 2 * h + i) * 2 * w + j) * c;
        Scalar* d = dx->data() + ((b * h + i / 2) * w + j / 2) * c;
        for (Index k = 0; k < c; ++k) d[k] += g[k];
      }
}

Tensor concat_last(const std::vector<const Tensor*>& parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Shape lead = parts.front()->shape();
  if (lead.empty()) throw ShapeError("concat: scalar input");
  lead.pop_back();
  Index total = 0;
  for (const Tensor* p : parts) {
    Shape s = p->shape();
    if (s.empty()) throw ShapeError("concat: scalar input");
    total += s.back();
    s.pop_back();
    if (s != lead) throw ShapeError("concat: mismatched leading dims " + shape_string(p->shape()));
  }
  Shape out_shape = lead;
  out_shape.push_back(total);
  Tensor y(out_shape);
  const Index rows = num_elements(lead);
  Index offset = 0;
  for (const Tensor* p : parts) {
    const Index c = p->shape().back();
    y.matrix(rows, total).middleCols(offset, c) = p->matrix(rows, c);
    offset += c;
  }
  return y;
}

void concat_last_backward(const std::vector<const Tensor*>& parts, const Tensor& dy,
                          const std::vector<Tensor*>& dparts) {
  const Index total = dy.shape().back();
  const Index rows = dy.size() / total;
  Index offset = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Index c = parts[i]->shape().back();
    if (dparts[i]) dparts[i]->matrix(rows, c) += dy.matrix(rows, total).middleCols(offset, c);
    offset += c;
  }
}

}  // namespace lfm::kernels
