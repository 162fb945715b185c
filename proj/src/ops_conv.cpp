// Copyright 2026 The dbtnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <algorithm>
#include <cmath>

#include "dbt/error.hpp"
#include "dbt/kernels.hpp"
#include "dbt/ops.hpp"

namespace dbt::ops {

std::size_t ConvGeom::out_time(std::size_t t) const {
  const std::size_t span = dil_t * (kt - 1);
  require(t + pad_t > span, ErrorCode::kShapeMismatch,
          "conv2d: time extent too short for kernel");
  return t + pad_t - span;
}

std::size_t ConvGeom::out_freq(std::size_t f) const {
  const std::size_t padded = f + pad_f_lo + pad_f_hi;
  require(padded >= kf, ErrorCode::kShapeMismatch,
          "conv2d: frequency extent too short for kernel");
  return (padded - kf) / stride_f + 1;
}

namespace {

// Upper bound on im2col buffer entries per chunk.
constexpr std::size_t kColBudget = 1 << 18;

struct ConvDims {
  std::size_t batch, cin, t, f, cout, to, fo, k;
};

bool is_pointwise(const ConvGeom& g) {
  return g.kt == 1 && g.kf == 1 && g.stride_f == 1 && g.pad_t == 0 &&
         g.pad_f_lo == 0 && g.pad_f_hi == 0;
}

// Output bins fo in [lo, hi) read an in-range input bin for kernel tap c.
struct FreqSpan {
  std::size_t lo, hi;
};

FreqSpan valid_span(const ConvDims& d, const ConvGeom& g, std::size_t c) {
  const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(g.stride_f);
  const std::ptrdiff_t off =
      static_cast<std::ptrdiff_t>(c) - static_cast<std::ptrdiff_t>(g.pad_f_lo);
  const std::ptrdiff_t f = static_cast<std::ptrdiff_t>(d.f);
  const std::ptrdiff_t fo = static_cast<std::ptrdiff_t>(d.fo);
  // fo * s + off >= 0 and fo * s + off < f
  std::ptrdiff_t lo = off >= 0 ? 0 : (-off + s - 1) / s;
  std::ptrdiff_t hi = f - off <= 0 ? 0 : (f - off + s - 1) / s;
  lo = std::min(lo, fo);
  hi = std::clamp(hi, lo, fo);
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

// col[(ci, a, c), (r, fo)] for output rows t0 .. t0+rows.
void im2col(const double* x, const ConvDims& d, const ConvGeom& g,
            std::size_t t0, std::size_t rows, double* col) {
  const std::size_t width = rows * d.fo;
  for (std::size_t ci = 0; ci < d.cin; ++ci)
    for (std::size_t a = 0; a < g.kt; ++a)
      for (std::size_t c = 0; c < g.kf; ++c) {
        const FreqSpan span = valid_span(d, g, c);
        const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(c) -
                                   static_cast<std::ptrdiff_t>(g.pad_f_lo);
        double* dst = col + ((ci * g.kt + a) * g.kf + c) * width;
        for (std::size_t r = 0; r < rows; ++r, dst += d.fo) {
          const std::ptrdiff_t ti = static_cast<std::ptrdiff_t>(t0 + r) -
                                    static_cast<std::ptrdiff_t>(g.pad_t) +
                                    static_cast<std::ptrdiff_t>(a * g.dil_t);
          if (ti < 0 || ti >= static_cast<std::ptrdiff_t>(d.t)) {
            std::fill_n(dst, d.fo, 0.0);
            continue;
          }
          const double* src = x + (ci * d.t + ti) * d.f;
          std::fill_n(dst, span.lo, 0.0);
          if (g.stride_f == 1) {
            std::copy(src + (static_cast<std::ptrdiff_t>(span.lo) + off),
                      src + (static_cast<std::ptrdiff_t>(span.hi) + off),
                      dst + span.lo);
          } else {
            for (std::size_t fo = span.lo; fo < span.hi; ++fo)
              dst[fo] = src[static_cast<std::ptrdiff_t>(fo * g.stride_f) + off];
          }
          std::fill(dst + span.hi, dst + d.fo, 0.0);
        }
      }
}

void col2im(const double* col, const ConvDims& d, const ConvGeom& g,
            std::size_t t0, std::size_t rows, double* dx) {
  const std::size_t width = rows * d.fo;
  for (std::size_t ci = 0; ci < d.cin; ++ci)
    for (std::size_t a = 0; a < g.kt; ++a)
      for (std::size_t c = 0; c < g.kf; ++c) {
        const FreqSpan span = valid_span(d, g, c);
        const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(c) -
                                   static_cast<std::ptrdiff_t>(g.pad_f_lo);
        const double* src = col + ((ci * g.kt + a) * g.kf + c) * width;
        for (std::size_t r = 0; r < rows; ++r, src += d.fo) {
          const std::ptrdiff_t ti = static_cast<std::ptrdiff_t>(t0 + r) -
                                    static_cast<std::ptrdiff_t>(g.pad_t) +
                                    static_cast<std::ptrdiff_t>(a * g.dil_t);
          if (ti < 0 || ti >= static_cast<std::ptrdiff_t>(d.t)) continue;
          double* dst = dx + (ci * d.t + ti) * d.f;
          for (std::size_t fo = span.lo; fo < span.hi; ++fo)
            dst[static_cast<std::ptrdiff_t>(fo * g.stride_f) + off] += src[fo];
        }
      }
}

// Per-thread scratch that grows but is never re-zeroed.
double* scratch(std::vector<double>& buf, std::size_t n) {
  if (buf.size() < n) buf.resize(n);
  return buf.data();
}

std::size_t chunk_rows(const ConvDims& d) {
  return std::clamp<std::size_t>(kColBudget / std::max<std::size_t>(1, d.k * d.fo),
                                 1, d.to);
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& bias, const ConvGeom& g) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  require(xs.size() == 4, ErrorCode::kShapeMismatch,
          "conv2d: input must be B x C x T x F, got " + shape_str(xs));
  require(ws.size() == 4 && ws[1] == xs[1] && ws[2] == g.kt && ws[3] == g.kf,
          ErrorCode::kShapeMismatch,
          "conv2d: weight " + shape_str(ws) + " incompatible with input " +
              shape_str(xs));
  require(g.kt >= 1 && g.kf >= 1 && g.stride_f >= 1 && g.dil_t >= 1,
          ErrorCode::kInvalidArgument,
          "conv2d: kernel, stride and dilation must be positive");
  ConvDims d{xs[0], xs[1], xs[2], xs[3], ws[0], 0, 0, 0};
  d.to = g.out_time(d.t);
  d.fo = g.out_freq(d.f);
  d.k = d.cin * g.kt * g.kf;
  if (bias.defined())
    require(bias.numel() == d.cout, ErrorCode::kShapeMismatch,
            "conv2d: bias size must equal output channels");
  count_macs(static_cast<double>(d.batch * d.cout * d.k * d.to * d.fo));

  const bool pointwise = is_pointwise(g);
  const std::size_t in_plane = d.cin * d.t * d.f;
  const std::size_t out_area = d.to * d.fo;
  const double* xv = x.value().data();
  const double* wv = w.value().data();
  Tensor y({d.batch, d.cout, d.to, d.fo});
  thread_local std::vector<double> col_buf;
  for (std::size_t b = 0; b < d.batch; ++b) {
    double* yb = y.data() + b * d.cout * out_area;
    if (pointwise) {
      kernels::gemm(false, false, d.cout, out_area, d.cin, wv, d.cin,
                    xv + b * in_plane, out_area, yb, out_area, false);
    } else {
      const std::size_t rows = chunk_rows(d);
      double* col = scratch(col_buf, d.k * rows * d.fo);
      for (std::size_t t0 = 0; t0 < d.to; t0 += rows) {
        const std::size_t r = std::min(rows, d.to - t0);
        im2col(xv + b * in_plane, d, g, t0, r, col);
        kernels::gemm(false, false, d.cout, r * d.fo, d.k, wv, d.k,
                      col, r * d.fo, yb + t0 * d.fo, out_area, false);
      }
    }
    if (bias.defined())
      for (std::size_t co = 0; co < d.cout; ++co) {
        const double bv = bias.value()[co];
        double* p = yb + co * out_area;
        for (std::size_t i = 0; i < out_area; ++i) p[i] += bv;
      }
  }

  return make_result(std::move(y), {x, w, bias},
                     [d, g, pointwise](Node& out) {
    const std::size_t in_plane = d.cin * d.t * d.f;
    const std::size_t out_area = d.to * d.fo;
    const double* xv = out.inputs[0]->value.data();
    const double* wv = out.inputs[1]->value.data();
    Tensor* gx = grad_of(out, 0);
    Tensor* gw = grad_of(out, 1);
    Tensor* gb = grad_of(out, 2);
    const double* gy = out.grad.data();
    if (gb)
      for (std::size_t b = 0; b < d.batch; ++b)
        for (std::size_t co = 0; co < d.cout; ++co) {
          const double* p = gy + (b * d.cout + co) * out_area;
          double acc = 0.0;
          for (std::size_t i = 0; i < out_area; ++i) acc += p[i];
          (*gb)[co] += acc;
        }
    if (!gx && !gw) return;
    thread_local std::vector<double> col_buf, dcol_buf;
    for (std::size_t b = 0; b < d.batch; ++b) {
      const double* gyb = gy + b * d.cout * out_area;
      if (pointwise) {
        if (gw)
          kernels::gemm(false, true, d.cout, d.cin, out_area, gyb, out_area,
                        xv + b * in_plane, out_area, gw->data(), d.cin, true);
        if (gx)
          kernels::gemm(true, false, d.cin, out_area, d.cout, wv, d.cin, gyb,
                        out_area, gx->data() + b * in_plane, out_area, true);
        continue;
      }
      const std::size_t rows = chunk_rows(d);
      double* col = scratch(col_buf, d.k * rows * d.fo);
      double* dcol = gx ? scratch(dcol_buf, d.k * rows * d.fo) : nullptr;
      for (std::size_t t0 = 0; t0 < d.to; t0 += rows) {
        const std::size_t r = std::min(rows, d.to - t0);
        const std::size_t width = r * d.fo;
        if (gw) {
          im2col(xv + b * in_plane, d, g, t0, r, col);
          kernels::gemm(false, true, d.cout, d.k, width, gyb + t0 * d.fo,
                        out_area, col, width, gw->data(), d.k, true);
        }
        if (gx) {
          kernels::gemm(true, false, d.k, width, d.cout, wv, d.k,
                        gyb + t0 * d.fo, out_area, dcol, width, false);
          col2im(dcol, d, g, t0, r, gx->data() + b * in_plane);
        }
      }
    }
  });
}

Var layer_norm_cf(const Var& x, const Var& gamma, const Var& beta,
                  double eps) {
  const Shape& s = x.shape();
  require(s.size() == 4, ErrorCode::kShapeMismatch,
          "layer_norm_cf: input must be B x C x T x F");
  const std::size_t B = s[0], C = s[1], T = s[2], F = s[3];
  require(gamma.numel() == C && beta.numel() == C, ErrorCode::kShapeMismatch,
          "layer_norm_cf: affine parameters must have C entries");
  const double n = static_cast<double>(C * F);
  const Tensor& xv = x.value();
  Tensor y(s);
  // Saved per (b, t): mean, rstd.
  std::vector<double> stats(B * T * 2);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < T; ++t) {
      double sum = 0.0;
      for (std::size_t c = 0; c < C; ++c) {
        const double* p = &xv.at(b, c, t, 0);
        for (std::size_t f = 0; f < F; ++f) sum += p[f];
      }
      const double mean = sum / n;
      double var = 0.0;
      for (std::size_t c = 0; c < C; ++c) {
        const double* p = &xv.at(b, c, t, 0);
        for (std::size_t f = 0; f < F; ++f) {
          const double dlt = p[f] - mean;
          var += dlt * dlt;
        }
      }
      const double rstd = 1.0 / std::sqrt(var / n + eps);
      stats[(b * T + t) * 2] = mean;
      stats[(b * T + t) * 2 + 1] = rstd;
      for (std::size_t c = 0; c < C; ++c) {
        const double* p = &xv.at(b, c, t, 0);
        double* o = &y.at(b, c, t, 0);
        const double ga = gamma.value()[c], be = beta.value()[c];
        for (std::size_t f = 0; f < F; ++f)
          o[f] = (p[f] - mean) * rstd * ga + be;
      }
    }
  return make_result(std::move(y), {x, gamma, beta},
                     [B, C, T, F, n, stats = std::move(stats)](Node& out) {
    const Tensor& xv = out.inputs[0]->value;
    const Tensor& ga = out.inputs[1]->value;
    Tensor* gx = grad_of(out, 0);
    Tensor* gg = grad_of(out, 1);
    Tensor* gbeta = grad_of(out, 2);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t t = 0; t < T; ++t) {
        const double mean = stats[(b * T + t) * 2];
        const double rstd = stats[(b * T + t) * 2 + 1];
        double sum_g = 0.0, sum_gx = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
          const double* p = &xv.at(b, c, t, 0);
          const double* gy = &out.grad.at(b, c, t, 0);
          double acc_g = 0.0, acc_gx = 0.0;
          for (std::size_t f = 0; f < F; ++f) {
            const double xh = (p[f] - mean) * rstd;
            acc_g += gy[f];
            acc_gx += gy[f] * xh;
          }
          if (gg) (*gg)[c] += acc_gx;
          if (gbeta) (*gbeta)[c] += acc_g;
          sum_g += ga[c] * acc_g;
          sum_gx += ga[c] * acc_gx;
        }
        if (!gx) continue;
        const double mg = sum_g / n, mgx = sum_gx / n;
        for (std::size_t c = 0; c < C; ++c) {
          const double* p = &xv.at(b, c, t, 0);
          const double* gy = &out.grad.at(b, c, t, 0);
          double* dx = &gx->at(b, c, t, 0);
          for (std::size_t f = 0; f < F; ++f) {
            const double xh = (p[f] - mean) * rstd;
            dx[f] += rstd * (ga[c] * gy[f] - mg - xh * mgx);
          }
        }
      }
  });
}

Var layer_norm_last(const Var& x, const Var& gamma, const Var& beta,
                    double eps) {
  const Shape& s = x.shape();
  require(!s.empty(), ErrorCode::kShapeMismatch, "layer_norm_last: empty");
  const std::size_t C = s.back();
  const std::size_t rows = x.numel() / C;
  require(gamma.numel() == C && beta.numel() == C, ErrorCode::kShapeMismatch,
          "layer_norm_last: affine parameters must match last axis");
  const Tensor& xv = x.value();
  Tensor y(s);
  std::vector<double> stats(rows * 2);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* p = xv.data() + r * C;
    double mean = 0.0;
    for (std::size_t c = 0; c < C; ++c) mean += p[c];
    mean /= static_cast<double>(C);
    double var = 0.0;
    for (std::size_t c = 0; c < C; ++c) var += (p[c] - mean) * (p[c] - mean);
    const double rstd = 1.0 / std::sqrt(var / static_cast<double>(C) + eps);
    stats[2 * r] = mean;
    stats[2 * r + 1] = rstd;
    double* o = y.data() + r * C;
    for (std::size_t c = 0; c < C; ++c)
      o[c] = (p[c] - mean) * rstd * gamma.value()[c] + beta.value()[c];
  }
  return make_result(std::move(y), {x, gamma, beta},
                     [rows, C, stats = std::move(stats)](Node& out) {
    const Tensor& xv = out.inputs[0]->value;
    const Tensor& ga = out.inputs[1]->value;
    Tensor* gx = grad_of(out, 0);
    Tensor* gg = grad_of(out, 1);
    Tensor* gbeta = grad_of(out, 2);
    const double n = static_cast<double>(C);
    for (std::size_t r = 0; r < rows; ++r) {
      const double mean = stats[2 * r], rstd = stats[2 * r + 1];
      const double* p = xv.data() + r * C;
      const double* gy = out.grad.data() + r * C;
      double sum_g = 0.0, sum_gx = 0.0;
      for (std::size_t c = 0; c < C; ++c) {
        const double xh = (p[c] - mean) * rstd;
        if (gg) (*gg)[c] += gy[c] * xh;
        if (gbeta) (*gbeta)[c] += gy[c];
        sum_g += ga[c] * gy[c];
        sum_gx += ga[c] * gy[c] * xh;
      }
      if (!gx) continue;
      double* dx = gx->data() + r * C;
      for (std::size_t c = 0; c < C; ++c) {
        const double xh = (p[c] - mean) * rstd;
        dx[c] += rstd * (ga[c] * gy[c] - sum_g / n - xh * sum_gx / n);
      }
    }
  });
}

Var linear(const Var& x, const Var& w, const Var& bias) {
  const Shape& s = x.shape();
  const Shape& ws = w.shape();
  require(!s.empty() && ws.size() == 2 && ws[1] == s.back(),
          ErrorCode::kShapeMismatch,
          "linear: weight " + shape_str(ws) + " incompatible with input " +
              shape_str(s));
  const std::size_t in = ws[1], outf = ws[0];
  const std::size_t rows = x.numel() / in;
  if (bias.defined())
    require(bias.numel() == outf, ErrorCode::kShapeMismatch,
            "linear: bias size mismatch");
  count_macs(static_cast<double>(rows * in * outf));
  Shape ys = s;
  ys.back() = outf;
  Tensor y(ys);
  kernels::gemm(false, true, rows, outf, in, x.value().data(), in,
                w.value().data(), in, y.data(), outf, false);
  if (bias.defined())
    for (std::size_t r = 0; r < rows; ++r)
      kernels::axpy(outf, 1.0, bias.value().data(), y.data() + r * outf);
  return make_result(std::move(y), {x, w, bias},
                     [rows, in, outf](Node& out) {
    const double* gy = out.grad.data();
    if (Tensor* gx = grad_of(out, 0))
      kernels::gemm(false, false, rows, in, outf, gy, outf,
                    out.inputs[1]->value.data(), in, gx->data(), in, true);
    if (Tensor* gw = grad_of(out, 1))
      kernels::gemm(true, false, outf, in, rows, gy, outf,
                    out.inputs[0]->value.data(), in, gw->data(), in, true);
    if (Tensor* gb = grad_of(out, 2))
      for (std::size_t r = 0; r < rows; ++r)
        kernels::axpy(outf, 1.0, gy + r * outf, gb->data());
  });
}

}  // namespace dbt::ops
