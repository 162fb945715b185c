// Copyright 2026 The dbtnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <algorithm>
#include <cmath>

#include "dbt/error.hpp"
#include "dbt/kernels.hpp"
#include "dbt/ops.hpp"

namespace dbt::ops {
namespace {

void check_same(const Var& a, const Var& b, const char* op) {
  require(a.defined() && b.defined(), ErrorCode::kInvalidArgument,
          std::string(op) + ": undefined operand");
  require(a.shape() == b.shape(), ErrorCode::kShapeMismatch,
          std::string(op) + ": " + shape_str(a.shape()) + " vs " +
              shape_str(b.shape()));
}

const Tensor& in_value(Node& out, std::size_t i) {
  return out.inputs[i]->value;
}

template <typename Fwd, typename Deriv>
Var unary(const Var& a, Fwd fwd, Deriv deriv) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  fwd(x.numel(), x.data(), y.data());
  return make_result(std::move(y), {a}, [deriv](Node& out) {
    Tensor* gx = grad_of(out, 0);
    if (!gx) return;
    const Tensor& x = in_value(out, 0);
    for (std::size_t i = 0; i < x.numel(); ++i)
      (*gx)[i] += out.grad[i] * deriv(x[i], out.value[i]);
  });
}

}  // namespace

Var add(const Var& a, const Var& b) {
  check_same(a, b, "add");
  Tensor y = a.value();
  kernels::axpy(y.numel(), 1.0, b.value().data(), y.data());
  return make_result(std::move(y), {a, b}, [](Node& out) {
    for (std::size_t k = 0; k < 2; ++k)
      if (Tensor* g = grad_of(out, k))
        kernels::axpy(g->numel(), 1.0, out.grad.data(), g->data());
  });
}

Var sub(const Var& a, const Var& b) {
  check_same(a, b, "sub");
  Tensor y = a.value();
  kernels::axpy(y.numel(), -1.0, b.value().data(), y.data());
  return make_result(std::move(y), {a, b}, [](Node& out) {
    if (Tensor* g = grad_of(out, 0))
      kernels::axpy(g->numel(), 1.0, out.grad.data(), g->data());
    if (Tensor* g = grad_of(out, 1))
      kernels::axpy(g->numel(), -1.0, out.grad.data(), g->data());
  });
}

Var mul(const Var& a, const Var& b) {
  check_same(a, b, "mul");
  const Tensor& x = a.value();
  const Tensor& z = b.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] = x[i] * z[i];
  return make_result(std::move(y), {a, b}, [](Node& out) {
    const Tensor& x = in_value(out, 0);
    const Tensor& z = in_value(out, 1);
    if (Tensor* g = grad_of(out, 0))
      for (std::size_t i = 0; i < x.numel(); ++i)
        (*g)[i] += out.grad[i] * z[i];
    if (Tensor* g = grad_of(out, 1))
      for (std::size_t i = 0; i < x.numel(); ++i)
        (*g)[i] += out.grad[i] * x[i];
  });
}

Var mul_const(const Var& a, const Tensor& c) {
  require(a.shape() == c.shape(), ErrorCode::kShapeMismatch,
          "mul_const: " + shape_str(a.shape()) + " vs " +
              shape_str(c.shape()));
  Tensor y(c.shape());
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] = a.value()[i] * c[i];
  return make_result(std::move(y), {a}, [c](Node& out) {
    if (Tensor* g = grad_of(out, 0))
      for (std::size_t i = 0; i < c.numel(); ++i)
        (*g)[i] += out.grad[i] * c[i];
  });
}

Var scale(const Var& a, double s) {
  Tensor y(a.shape(), 0.0);
  kernels::axpy(y.numel(), s, a.value().data(), y.data());
  return make_result(std::move(y), {a}, [s](Node& out) {
    if (Tensor* g = grad_of(out, 0))
      kernels::axpy(g->numel(), s, out.grad.data(), g->data());
  });
}

Var scale_by(const Var& a, const Var& s) {
  require(s.numel() == 1, ErrorCode::kShapeMismatch,
          "scale_by: scalar operand must have one element");
  const double sv = s.value()[0];
  Tensor y(a.shape(), 0.0);
  kernels::axpy(y.numel(), sv, a.value().data(), y.data());
  return make_result(std::move(y), {a, s}, [](Node& out) {
    const double sv = in_value(out, 1)[0];
    if (Tensor* g = grad_of(out, 0))
      kernels::axpy(g->numel(), sv, out.grad.data(), g->data());
    if (Tensor* g = grad_of(out, 1)) {
      const Tensor& x = in_value(out, 0);
      (*g)[0] += kernels::dot(out.grad.data(), x.data(), x.numel());
    }
  });
}

Var sigmoid(const Var& a) {
  return unary(
      a, [](std::size_t n, const double* x, double* y) { kernels::sigmoid(n, x, y); },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(const Var& a) {
  return unary(
      a, [](std::size_t n, const double* x, double* y) { kernels::tanh(n, x, y); },
      [](double, double y) { return 1.0 - y * y; });
}

Var relu(const Var& a) {
  return unary(
      a,
      [](std::size_t n, const double* x, double* y) {
        for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
      },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var prelu(const Var& x, const Var& slope) {
  const Shape& s = x.shape();
  require(s.size() >= 2 && slope.numel() == s[1], ErrorCode::kShapeMismatch,
          "prelu: slope size must match channel axis of " + shape_str(s));
  const std::size_t batch = s[0], chans = s[1];
  const std::size_t inner = x.numel() / (batch * chans);
  const Tensor& xv = x.value();
  const Tensor& a = slope.value();
  Tensor y(s);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < chans; ++c) {
      const std::size_t off = (b * chans + c) * inner;
      for (std::size_t i = 0; i < inner; ++i) {
        const double v = xv[off + i];
        y[off + i] = v > 0.0 ? v : a[c] * v;
      }
    }
  return make_result(std::move(y), {x, slope},
                     [batch, chans, inner](Node& out) {
    const Tensor& xv = in_value(out, 0);
    const Tensor& a = in_value(out, 1);
    Tensor* gx = grad_of(out, 0);
    Tensor* ga = grad_of(out, 1);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t c = 0; c < chans; ++c) {
        const std::size_t off = (b * chans + c) * inner;
        double acc = 0.0;
        for (std::size_t i = 0; i < inner; ++i) {
          const double v = xv[off + i];
          const double g = out.grad[off + i];
          if (v > 0.0) {
            if (gx) (*gx)[off + i] += g;
          } else {
            if (gx) (*gx)[off + i] += a[c] * g;
            acc += g * v;
          }
        }
        if (ga) (*ga)[c] += acc;
      }
  });
}

Var reshape(const Var& x, Shape shape) {
  Tensor y = x.value().reshaped(std::move(shape));
  return make_result(std::move(y), {x}, [](Node& out) {
    if (Tensor* g = grad_of(out, 0))
      kernels::axpy(g->numel(), 1.0, out.grad.data(), g->data());
  });
}

Var concat_channels(std::span<const Var> xs) {
  require(!xs.empty(), ErrorCode::kInvalidArgument,
          "concat_channels: empty input list");
  const Shape& s0 = xs[0].shape();
  require(s0.size() == 4, ErrorCode::kShapeMismatch,
          "concat_channels: rank-4 inputs required");
  std::size_t total = 0;
  std::vector<std::size_t> chans;
  for (const Var& v : xs) {
    const Shape& s = v.shape();
    require(s.size() == 4 && s[0] == s0[0] && s[2] == s0[2] && s[3] == s0[3],
            ErrorCode::kShapeMismatch,
            "concat_channels: " + shape_str(s) + " incompatible with " +
                shape_str(s0));
    chans.push_back(s[1]);
    total += s[1];
  }
  const std::size_t batch = s0[0], plane = s0[2] * s0[3];
  Tensor y({batch, total, s0[2], s0[3]});
  std::size_t c0 = 0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const Tensor& x = xs[k].value();
    for (std::size_t b = 0; b < batch; ++b)
      std::copy_n(x.data() + b * chans[k] * plane, chans[k] * plane,
                  y.data() + (b * total + c0) * plane);
    c0 += chans[k];
  }
  std::vector<Var> inputs(xs.begin(), xs.end());
  return make_result(std::move(y), std::move(inputs),
                     [chans, batch, total, plane](Node& out) {
    std::size_t c0 = 0;
    for (std::size_t k = 0; k < chans.size(); ++k) {
      if (Tensor* g = grad_of(out, k)) {
        for (std::size_t b = 0; b < batch; ++b)
          kernels::axpy(chans[k] * plane, 1.0,
                        out.grad.data() + (b * total + c0) * plane,
                        g->data() + b * chans[k] * plane);
      }
      c0 += chans[k];
    }
  });
}

namespace {

// Generic 4-D <-> 3-D permutation used by the fold ops. `index` maps a
// (b, c, t, f) coordinate to the flat offset in the 3-D layout.
template <typename Index>
Tensor permute_fwd(const Tensor& x, Shape out_shape, Index index) {
  const std::size_t B = x.dim(0), C = x.dim(1), T = x.dim(2), F = x.dim(3);
  Tensor y(std::move(out_shape));
  std::size_t src = 0;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t f = 0; f < F; ++f) y[index(b, c, t, f)] = x[src++];
  return y;
}

template <typename Index>
void permute_bwd(const Tensor& gy, Tensor& gx, Index index) {
  const std::size_t B = gx.dim(0), C = gx.dim(1), T = gx.dim(2),
                    F = gx.dim(3);
  std::size_t dst = 0;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t f = 0; f < F; ++f) gx[dst++] += gy[index(b, c, t, f)];
}

template <typename Index>
Tensor unpermute_fwd(const Tensor& y, Shape x_shape, Index index) {
  Tensor x(std::move(x_shape));
  const std::size_t B = x.dim(0), C = x.dim(1), T = x.dim(2), F = x.dim(3);
  std::size_t dst = 0;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t f = 0; f < F; ++f) x[dst++] = y[index(b, c, t, f)];
  return x;
}

template <typename Index>
void unpermute_bwd(const Tensor& gx_out, Tensor& gy_in, Index index) {
  const std::size_t B = gx_out.dim(0), C = gx_out.dim(1), T = gx_out.dim(2),
                    F = gx_out.dim(3);
  std::size_t src = 0;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t f = 0; f < F; ++f)
          gy_in[index(b, c, t, f)] += gx_out[src++];
}

}  // namespace

Var fold_time(const Var& x) {
  require(x.shape().size() == 4, ErrorCode::kShapeMismatch,
          "fold_time: rank-4 input required");
  const std::size_t B = x.shape()[0], C = x.shape()[1], T = x.shape()[2],
                    F = x.shape()[3];
  auto index = [=](std::size_t b, std::size_t c, std::size_t t,
                   std::size_t f) { return ((b * F + f) * T + t) * C + c; };
  Tensor y = permute_fwd(x.value(), {B * F, T, C}, index);
  return make_result(std::move(y), {x}, [index](Node& out) {
    if (Tensor* g = grad_of(out, 0)) permute_bwd(out.grad, *g, index);
  });
}

Var unfold_time(const Var& x, std::size_t batch, std::size_t freq) {
  const Shape& s = x.shape();
  require(s.size() == 3 && s[0] == batch * freq, ErrorCode::kShapeMismatch,
          "unfold_time: " + shape_str(s) + " is not (B*F) x T x C");
  const std::size_t B = batch, F = freq, T = s[1], C = s[2];
  auto index = [=](std::size_t b, std::size_t c, std::size_t t,
                   std::size_t f) { return ((b * F + f) * T + t) * C + c; };
  Tensor y = unpermute_fwd(x.value(), {B, C, T, F}, index);
  return make_result(std::move(y), {x}, [index](Node& out) {
    if (Tensor* g = grad_of(out, 0)) unpermute_bwd(out.grad, *g, index);
  });
}

Var fold_freq(const Var& x) {
  require(x.shape().size() == 4, ErrorCode::kShapeMismatch,
          "fold_freq: rank-4 input required");
  const std::size_t B = x.shape()[0], C = x.shape()[1], T = x.shape()[2],
                    F = x.shape()[3];
  auto index = [=](std::size_t b, std::size_t c, std::size_t t,
                   std::size_t f) { return ((b * T + t) * F + f) * C + c; };
  Tensor y = permute_fwd(x.value(), {B * T, F, C}, index);
  return make_result(std::move(y), {x}, [index](Node& out) {
    if (Tensor* g = grad_of(out, 0)) permute_bwd(out.grad, *g, index);
  });
}

Var unfold_freq(const Var& x, std::size_t batch, std::size_t time) {
  const Shape& s = x.shape();
  require(s.size() == 3 && s[0] == batch * time, ErrorCode::kShapeMismatch,
          "unfold_freq: " + shape_str(s) + " is not (B*T) x F x C");
  const std::size_t B = batch, T = time, F = s[1], C = s[2];
  auto index = [=](std::size_t b, std::size_t c, std::size_t t,
                   std::size_t f) { return ((b * T + t) * F + f) * C + c; };
  Tensor y = unpermute_fwd(x.value(), {B, C, T, F}, index);
  return make_result(std::move(y), {x}, [index](Node& out) {
    if (Tensor* g = grad_of(out, 0)) unpermute_bwd(out.grad, *g, index);
  });
}

Var pixel_shuffle_freq(const Var& x, std::size_t factor) {
  const Shape& s = x.shape();
  require(s.size() == 4, ErrorCode::kShapeMismatch,
          "pixel_shuffle_freq: rank-4 input required");
  require(factor >= 1 && s[1] % factor == 0, ErrorCode::kShapeMismatch,
          "pixel_shuffle_freq: " + std::to_string(s[1]) +
              " channels not divisible by factor " + std::to_string(factor));
  const std::size_t B = s[0], C = s[1] / factor, T = s[2], F = s[3];
  const std::size_t r = factor;
  const Tensor& xv = x.value();
  Tensor y({B, C, T, F * r});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t k = 0; k < r; ++k)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t t = 0; t < T; ++t) {
          const double* src = &xv.at(b, k * C + c, t, 0);
          double* dst = &y.at(b, c, t, 0);
          for (std::size_t f = 0; f < F; ++f) dst[f * r + k] = src[f];
        }
  return make_result(std::move(y), {x}, [B, C, T, F, r](Node& out) {
    Tensor* g = grad_of(out, 0);
    if (!g) return;
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t k = 0; k < r; ++k)
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t t = 0; t < T; ++t) {
            double* dst = &g->at(b, k * C + c, t, 0);
            const double* src = &out.grad.at(b, c, t, 0);
            for (std::size_t f = 0; f < F; ++f) dst[f] += src[f * r + k];
          }
  });
}

Var replicate_last_freq(const Var& x, std::size_t extra) {
  const Shape& s = x.shape();
  require(s.size() == 4 && s[3] >= 1, ErrorCode::kShapeMismatch,
          "replicate_last_freq: rank-4 input required");
  const std::size_t rows = s[0] * s[1] * s[2], F = s[3], Fo = F + extra;
  const Tensor& xv = x.value();
  Tensor y({s[0], s[1], s[2], Fo});
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(xv.data() + r * F, F, y.data() + r * Fo);
    std::fill_n(y.data() + r * Fo + F, extra, xv[r * F + F - 1]);
  }
  return make_result(std::move(y), {x}, [rows, F, Fo](Node& out) {
    Tensor* g = grad_of(out, 0);
    if (!g) return;
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t f = 0; f < F; ++f) (*g)[r * F + f] += out.grad[r * Fo + f];
      for (std::size_t f = F; f < Fo; ++f)
        (*g)[r * F + F - 1] += out.grad[r * Fo + f];
    }
  });
}

Var mean_tf(const Var& x) {
  const Shape& s = x.shape();
  require(s.size() == 4, ErrorCode::kShapeMismatch,
          "mean_tf: rank-4 input required");
  const std::size_t rows = s[0] * s[1], plane = s[2] * s[3];
  Tensor y({s[0], s[1]});
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    const double* p = x.value().data() + r * plane;
    for (std::size_t i = 0; i < plane; ++i) acc += p[i];
    y[r] = acc / static_cast<double>(plane);
  }
  return make_result(std::move(y), {x}, [rows, plane](Node& out) {
    Tensor* g = grad_of(out, 0);
    if (!g) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const double v = out.grad[r] / static_cast<double>(plane);
      double* p = g->data() + r * plane;
      for (std::size_t i = 0; i < plane; ++i) p[i] += v;
    }
  });
}

Var concat_cols(std::span<const Var> xs) {
  require(!xs.empty(), ErrorCode::kInvalidArgument,
          "concat_cols: empty input list");
  const std::size_t rows = xs[0].shape()[0];
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Var& v : xs) {
    require(v.shape().size() == 2 && v.shape()[0] == rows,
            ErrorCode::kShapeMismatch,
            "concat_cols: inputs must be rank-2 with equal rows");
    widths.push_back(v.shape()[1]);
    total += v.shape()[1];
  }
  Tensor y({rows, total});
  std::size_t c0 = 0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(xs[k].value().data() + r * widths[k], widths[k],
                  y.data() + r * total + c0);
    c0 += widths[k];
  }
  std::vector<Var> inputs(xs.begin(), xs.end());
  return make_result(std::move(y), std::move(inputs),
                     [widths, rows, total](Node& out) {
    std::size_t c0 = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      if (Tensor* g = grad_of(out, k))
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < widths[k]; ++j)
            (*g)[r * widths[k] + j] += out.grad[r * total + c0 + j];
      c0 += widths[k];
    }
  });
}

Var softmax_rows(const Var& x) {
  const Shape& s = x.shape();
  require(s.size() == 2, ErrorCode::kShapeMismatch,
          "softmax_rows: rank-2 input required");
  const std::size_t rows = s[0], cols = s[1];
  Tensor y(s);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.value().data() + r * cols;
    double* o = y.data() + r * cols;
    const double mx = *std::max_element(in, in + cols);
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) z += (o[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < cols; ++j) o[j] /= z;
  }
  return make_result(std::move(y), {x}, [rows, cols](Node& out) {
    Tensor* g = grad_of(out, 0);
    if (!g) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* p = out.value.data() + r * cols;
      const double* gy = out.grad.data() + r * cols;
      double d = 0.0;
      for (std::size_t j = 0; j < cols; ++j) d += gy[j] * p[j];
      for (std::size_t j = 0; j < cols; ++j)
        (*g)[r * cols + j] += p[j] * (gy[j] - d);
    }
  });
}

Var weighted_sum(std::span<const Var> maps, const Var& w) {
  require(!maps.empty(), ErrorCode::kInvalidArgument,
          "weighted_sum: empty map list");
  const Shape& s0 = maps[0].shape();
  const std::size_t M = maps.size(), B = s0[0];
  require(w.shape() == Shape{B, M}, ErrorCode::kShapeMismatch,
          "weighted_sum: weights must be B x M");
  for (const Var& m : maps)
    require(m.shape() == s0, ErrorCode::kShapeMismatch,
            "weighted_sum: all maps must share a shape");
  const std::size_t per = maps[0].numel() / B;
  Tensor y(s0, 0.0);
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t b = 0; b < B; ++b)
      kernels::axpy(per, w.value()[b * M + m],
                    maps[m].value().data() + b * per, y.data() + b * per);
  std::vector<Var> inputs(maps.begin(), maps.end());
  inputs.push_back(w);
  return make_result(std::move(y), std::move(inputs),
                     [M, B, per](Node& out) {
    const Tensor& wv = out.inputs[M]->value;
    Tensor* gw = grad_of(out, M);
    for (std::size_t m = 0; m < M; ++m) {
      Tensor* gm = grad_of(out, m);
      const Tensor& fm = out.inputs[m]->value;
      for (std::size_t b = 0; b < B; ++b) {
        const double* gy = out.grad.data() + b * per;
        if (gm) kernels::axpy(per, wv[b * M + m], gy, gm->data() + b * per);
        if (gw) (*gw)[b * M + m] += kernels::dot(gy, fm.data() + b * per, per);
      }
    }
  });
}

Var magnitude(const Var& r, const Var& i) {
  check_same(r, i, "magnitude");
  Tensor y(r.shape());
  for (std::size_t k = 0; k < y.numel(); ++k)
    y[k] = std::hypot(r.value()[k], i.value()[k]);
  return make_result(std::move(y), {r, i}, [](Node& out) {
    const Tensor& rv = in_value(out, 0);
    const Tensor& iv = in_value(out, 1);
    Tensor* gr = grad_of(out, 0);
    Tensor* gi = grad_of(out, 1);
    for (std::size_t k = 0; k < rv.numel(); ++k) {
      const double m = out.value[k];
      if (m == 0.0) continue;
      const double g = out.grad[k] / m;
      if (gr) (*gr)[k] += g * rv[k];
      if (gi) (*gi)[k] += g * iv[k];
    }
  });
}

namespace {

// Shared body for phase_cos / phase_sin: y = num / max(|z|, eps), where num
// is the real (use_real) or imaginary part.
Var phase_component(const Var& r, const Var& i, double eps, bool use_real) {
  check_same(r, i, "phase");
  Tensor y(r.shape());
  for (std::size_t k = 0; k < y.numel(); ++k) {
    const double m = std::max(std::hypot(r.value()[k], i.value()[k]), eps);
    y[k] = (use_real ? r.value()[k] : i.value()[k]) / m;
  }
  return make_result(std::move(y), {r, i}, [eps, use_real](Node& out) {
    const Tensor& rv = in_value(out, 0);
    const Tensor& iv = in_value(out, 1);
    Tensor* gr = grad_of(out, 0);
    Tensor* gi = grad_of(out, 1);
    for (std::size_t k = 0; k < rv.numel(); ++k) {
      const double re = rv[k], im = iv[k];
      const double mag = std::hypot(re, im);
      const double g = out.grad[k];
      if (mag <= eps) {
        // Constant denominator below the floor.
        if (use_real && gr) (*gr)[k] += g / eps;
        if (!use_real && gi) (*gi)[k] += g / eps;
        continue;
      }
      const double m3 = mag * mag * mag;
      const double num = use_real ? re : im;
      // d(num/m)/d(re) and d(num/m)/d(im)
      const double d_re = (use_real ? 1.0 / mag : 0.0) - num * re / m3;
      const double d_im = (use_real ? 0.0 : 1.0 / mag) - num * im / m3;
      if (gr) (*gr)[k] += g * d_re;
      if (gi) (*gi)[k] += g * d_im;
    }
  });
}

}  // namespace

Var phase_cos(const Var& r, const Var& i, double eps) {
  return phase_component(r, i, eps, true);
}

Var phase_sin(const Var& r, const Var& i, double eps) {
  return phase_component(r, i, eps, false);
}

Var mse(const Var& a, const Var& b) {
  check_same(a, b, "mse");
  const std::size_t n = a.numel();
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double d = a.value()[k] - b.value()[k];
    acc += d * d;
  }
  return make_result(Tensor::scalar(acc / static_cast<double>(n)), {a, b},
                     [n](Node& out) {
    const Tensor& av = in_value(out, 0);
    const Tensor& bv = in_value(out, 1);
    const double s = 2.0 * out.grad[0] / static_cast<double>(n);
    Tensor* ga = grad_of(out, 0);
    Tensor* gb = grad_of(out, 1);
    for (std::size_t k = 0; k < n; ++k) {
      const double d = s * (av[k] - bv[k]);
      if (ga) (*ga)[k] += d;
      if (gb) (*gb)[k] -= d;
    }
  });
}

Var sum_all(const Var& a) {
  double acc = 0.0;
  for (double v : a.value().values()) acc += v;
  return make_result(Tensor::scalar(acc), {a}, [](Node& out) {
    Tensor* g = grad_of(out, 0);
    if (!g) return;
    const double v = out.grad[0];
    for (double& x : g->values()) x += v;
  });
}

}  // namespace dbt::ops
