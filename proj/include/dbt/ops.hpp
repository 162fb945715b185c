// Copyright 2026 The dbtnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Differentiable tensor operations. Feature maps are B x C x T x F;
// sequences are N x L x C. Shape violations throw dbt::Error.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dbt/autograd.hpp"

namespace dbt::ops {

constexpr double kLayerNormEps = 1e-5;

// --- elementwise ---------------------------------------------------------
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
// a * c with c a constant of the same shape.
Var mul_const(const Var& a, const Tensor& c);
Var scale(const Var& a, double s);
// a * s where s is a single-element Var (learnable scalar).
Var scale_by(const Var& a, const Var& s);
Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var relu(const Var& a);
// Per-channel PReLU over axis 1 of a rank >= 2 tensor; slope has C entries.
Var prelu(const Var& x, const Var& slope);

// --- layout --------------------------------------------------------------
Var reshape(const Var& x, Shape shape);
Var concat_channels(std::span<const Var> xs);
// B x C x T x F -> (B*F) x T x C and back.
Var fold_time(const Var& x);
Var unfold_time(const Var& x, std::size_t batch, std::size_t freq);
// B x C x T x F -> (B*T) x F x C and back.
Var fold_freq(const Var& x);
Var unfold_freq(const Var& x, std::size_t batch, std::size_t time);
// B x (r*C) x T x F -> B x C x T x (r*F); input channel k*C + c lands at
// output channel c, frequency r*f + k.
Var pixel_shuffle_freq(const Var& x, std::size_t factor);
// Appends `extra` copies of the last frequency bin.
Var replicate_last_freq(const Var& x, std::size_t extra);

// --- convolution / normalization ------------------------------------------
struct ConvGeom {
  std::size_t kt = 1;        // kernel extent along time
  std::size_t kf = 1;        // kernel extent along frequency
  std::size_t stride_f = 1;  // frequency stride (time stride is always 1)
  std::size_t dil_t = 1;     // time dilation
  std::size_t pad_t = 0;     // zero rows prepended on the time axis
  std::size_t pad_f_lo = 0;
  std::size_t pad_f_hi = 0;

  std::size_t out_time(std::size_t t) const;
  std::size_t out_freq(std::size_t f) const;
};

// w: Cout x Cin x kt x kf; bias (may be undefined): Cout.
Var conv2d(const Var& x, const Var& w, const Var& bias, const ConvGeom& g);
// Normalizes each (b, t) slice jointly over (C, F) with per-channel affine.
Var layer_norm_cf(const Var& x, const Var& gamma, const Var& beta,
                  double eps = kLayerNormEps);
// Normalizes over the last axis with per-feature affine.
Var layer_norm_last(const Var& x, const Var& gamma, const Var& beta,
                    double eps = kLayerNormEps);

// --- sequence ops ----------------------------------------------------------
// x: ... x In, w: Out x In, bias (may be undefined): Out.
Var linear(const Var& x, const Var& w, const Var& bias);

// Scaled dot-product attention over N x L x C with `heads` heads of width
// C/heads. scores = Q_i K_i^T * scale.
Var attention(const Var& q, const Var& k, const Var& v, std::size_t heads,
              double scale);
// Row-stochastic attention matrices, N x heads x L x L.
Tensor attention_weights(const Tensor& q, const Tensor& k, std::size_t heads,
                         double scale);

struct GruWeights {
  Var w_ih;  // 3H x In, gate order (reset, update, new)
  Var w_hh;  // 3H x H
  Var b_ih;  // 3H
  Var b_hh;  // 3H
};
// Bidirectional GRU over N x L x In -> N x L x 2H (forward half first).
Var bigru(const Var& x, const GruWeights& fwd, const GruWeights& bwd);

// --- reductions / mixing ----------------------------------------------------
// B x C x T x F -> B x C mean over (T, F).
Var mean_tf(const Var& x);
// Concatenates B x k_i matrices along columns.
Var concat_cols(std::span<const Var> xs);
Var softmax_rows(const Var& x);
// sum_m w[b, m] * maps[m][b, ...]; w is B x M.
Var weighted_sum(std::span<const Var> maps, const Var& w);

// --- spectral helpers -------------------------------------------------------
// sqrt(r^2 + i^2); gradient taken as zero where the magnitude is zero.
Var magnitude(const Var& r, const Var& i);
// r / max(|z|, eps) and i / max(|z|, eps).
Var phase_cos(const Var& r, const Var& i, double eps);
Var phase_sin(const Var& r, const Var& i, double eps);
// mean((a - b)^2)
Var mse(const Var& a, const Var& b);
Var sum_all(const Var& a);

}  // namespace dbt::ops
