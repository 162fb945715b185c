// Copyright 2026 The dbtnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <algorithm>
#include <cmath>

#include "dbt/error.hpp"
#include "dbt/kernels.hpp"
#include "dbt/ops.hpp"

namespace dbt::ops {
namespace {

// Scores for one (sequence, head): p = softmax(q k^T * scale), rows L x L.
void head_probs(const double* q, const double* k, std::size_t L,
                std::size_t width, std::size_t ld, double scale, double* p) {
  kernels::gemm(false, true, L, L, width, q, ld, k, ld, p, L, false);
  for (std::size_t i = 0; i < L; ++i) {
    double* row = p + i * L;
    double mx = -INFINITY;
    for (std::size_t j = 0; j < L; ++j) mx = std::max(mx, row[j]);
    for (std::size_t j = 0; j < L; ++j) row[j] = (row[j] - mx) * scale;
    kernels::exp(L, row, row);
    double z = 0.0;
    for (std::size_t j = 0; j < L; ++j) z += row[j];
    const double inv = 1.0 / z;
    for (std::size_t j = 0; j < L; ++j) row[j] *= inv;
  }
}

struct AttnDims {
  std::size_t n, L, c, heads, width;
};

AttnDims check_attention(const Shape& q, const Shape& k, const Shape& v,
                         std::size_t heads) {
  require(q.size() == 3 && q == k && q == v, ErrorCode::kShapeMismatch,
          "attention: q, k, v must be equal N x L x C shapes");
  require(q[1] > 0, ErrorCode::kInvalidArgument,
          "attention: sequence length must be positive");
  require(heads > 0 && q[2] % heads == 0, ErrorCode::kShapeMismatch,
          "attention: channels " + std::to_string(q[2]) +
              " not divisible by heads " + std::to_string(heads));
  return {q[0], q[1], q[2], heads, q[2] / heads};
}

void check_scale(double scale) {
  require(scale > 0.0 && std::isfinite(scale), ErrorCode::kInvalidArgument,
          "attention: scale must be positive and finite");
}

}  // namespace

Tensor attention_weights(const Tensor& q, const Tensor& k, std::size_t heads,
                         double scale) {
  const AttnDims d = check_attention(q.shape(), k.shape(), k.shape(), heads);
  check_scale(scale);
  Tensor p({d.n, d.heads, d.L, d.L});
  for (std::size_t s = 0; s < d.n; ++s)
    for (std::size_t h = 0; h < d.heads; ++h)
      head_probs(q.data() + s * d.L * d.c + h * d.width,
                 k.data() + s * d.L * d.c + h * d.width, d.L, d.width, d.c,
                 scale, p.data() + (s * d.heads + h) * d.L * d.L);
  return p;
}

Var attention(const Var& q, const Var& k, const Var& v, std::size_t heads,
              double scale) {
  const AttnDims d = check_attention(q.shape(), k.shape(), v.shape(), heads);
  check_scale(scale);
  count_macs(static_cast<double>(2 * d.n * d.L * d.L * d.c));
  const bool keep = grad_enabled() &&
                    (q.requires_grad() || k.requires_grad() ||
                     v.requires_grad());
  Tensor y({d.n, d.L, d.c});
  Tensor probs;
  if (keep) probs = Tensor({d.n, d.heads, d.L, d.L});
  std::vector<double> scratch(keep ? 0 : d.L * d.L);
  for (std::size_t s = 0; s < d.n; ++s)
    for (std::size_t h = 0; h < d.heads; ++h) {
      const std::size_t off = s * d.L * d.c + h * d.width;
      double* p = keep ? probs.data() + (s * d.heads + h) * d.L * d.L
                       : scratch.data();
      head_probs(q.value().data() + off, k.value().data() + off, d.L, d.width,
                 d.c, scale, p);
      kernels::gemm(false, false, d.L, d.width, d.L, p, d.L,
                    v.value().data() + off, d.c, y.data() + off, d.c, false);
    }
  return make_result(std::move(y), {q, k, v},
                     [d, scale, probs = std::move(probs)](Node& out) {
    const double* qv = out.inputs[0]->value.data();
    const double* kv = out.inputs[1]->value.data();
    const double* vv = out.inputs[2]->value.data();
    Tensor* gq = grad_of(out, 0);
    Tensor* gk = grad_of(out, 1);
    Tensor* gv = grad_of(out, 2);
    std::vector<double> dp(d.L * d.L);
    for (std::size_t s = 0; s < d.n; ++s)
      for (std::size_t h = 0; h < d.heads; ++h) {
        const std::size_t off = s * d.L * d.c + h * d.width;
        const double* p = probs.data() + (s * d.heads + h) * d.L * d.L;
        const double* go = out.grad.data() + off;
        if (gv)
          kernels::gemm(true, false, d.L, d.width, d.L, p, d.L, go, d.c,
                        gv->data() + off, d.c, true);
        if (!gq && !gk) continue;
        // dP = dO V^T, then softmax backward into dS (scaled).
        kernels::gemm(false, true, d.L, d.L, d.width, go, d.c, vv + off, d.c,
                      dp.data(), d.L, false);
        for (std::size_t i = 0; i < d.L; ++i) {
          double* row = dp.data() + i * d.L;
          const double* prow = p + i * d.L;
          const double dotp = kernels::dot(row, prow, d.L);
          for (std::size_t j = 0; j < d.L; ++j)
            row[j] = prow[j] * (row[j] - dotp) * scale;
        }
        if (gq)
          kernels::gemm(false, false, d.L, d.width, d.L, dp.data(), d.L,
                        kv + off, d.c, gq->data() + off, d.c, true);
        if (gk)
          kernels::gemm(true, false, d.L, d.width, d.L, dp.data(), d.L,
                        qv + off, d.c, gk->data() + off, d.c, true);
      }
  });
}

namespace {

struct GruDims {
  std::size_t n, L, in, H;
};

// Per-direction activations saved for backpropagation through time; all
// arrays are time-major [L][N][...].
struct GruTrace {
  std::vector<double> h;    // L x N x H
  std::vector<double> r;    // L x N x H
  std::vector<double> z;    // L x N x H
  std::vector<double> nn;   // L x N x H (candidate)
  std::vector<double> hn;   // L x N x H (W_hn h + b_hn)
};

void check_gru(const GruWeights& w, std::size_t in, std::size_t H) {
  require(w.w_ih.shape() == Shape{3 * H, in} &&
              w.w_hh.shape() == Shape{3 * H, H} && w.b_ih.numel() == 3 * H &&
              w.b_hh.numel() == 3 * H,
          ErrorCode::kShapeMismatch, "bigru: inconsistent weight shapes");
}

// Runs one direction. xt is time-major L x N x In.
void gru_forward(const GruDims& d, const double* xt, const GruWeights& w,
                 bool reverse, double* y, GruTrace* trace) {
  const std::size_t H = d.H, G = 3 * H, N = d.n;
  std::vector<double> xg(d.L * N * G);
  kernels::gemm(false, true, d.L * N, G, d.in, xt, d.in, w.w_ih.value().data(),
                d.in, xg.data(), G, false);
  const double* bih = w.b_ih.value().data();
  const double* bhh = w.b_hh.value().data();
  std::vector<double> h(N * H, 0.0), hg(N * G);
  std::vector<double> rz(N * 2 * H), hn(N * H), cand(N * H);
  for (std::size_t s = 0; s < d.L; ++s) {
    const std::size_t t = reverse ? d.L - 1 - s : s;
    kernels::gemm(false, true, N, G, H, h.data(), H, w.w_hh.value().data(), H,
                  hg.data(), G, false);
    for (std::size_t i = 0; i < N; ++i) {
      const double* xr = xg.data() + (t * N + i) * G;
      const double* hr = hg.data() + i * G;
      double* g = rz.data() + i * 2 * H;
      for (std::size_t j = 0; j < 2 * H; ++j) g[j] = xr[j] + bih[j] + hr[j] + bhh[j];
    }
    kernels::sigmoid(N * 2 * H, rz.data(), rz.data());
    for (std::size_t i = 0; i < N; ++i) {
      const double* xr = xg.data() + (t * N + i) * G;
      const double* hr = hg.data() + i * G;
      const double* r = rz.data() + i * 2 * H;
      for (std::size_t j = 0; j < H; ++j) {
        hn[i * H + j] = hr[2 * H + j] + bhh[2 * H + j];
        cand[i * H + j] = xr[2 * H + j] + bih[2 * H + j] + r[j] * hn[i * H + j];
      }
    }
    kernels::tanh(N * H, cand.data(), cand.data());
    for (std::size_t i = 0; i < N; ++i) {
      const double* r = rz.data() + i * 2 * H;
      const double* z = r + H;
      double* hi = h.data() + i * H;
      for (std::size_t j = 0; j < H; ++j) {
        const double n = cand[i * H + j];
        hi[j] = (1.0 - z[j]) * n + z[j] * hi[j];
      }
      if (trace) {
        const std::size_t o = (t * N + i) * H;
        std::copy_n(r, H, trace->r.data() + o);
        std::copy_n(z, H, trace->z.data() + o);
        std::copy_n(cand.data() + i * H, H, trace->nn.data() + o);
        std::copy_n(hn.data() + i * H, H, trace->hn.data() + o);
        std::copy_n(hi, H, trace->h.data() + o);
      }
      // Output layout N x L x 2H; caller offsets y to the direction half.
      std::copy_n(hi, H, y + (i * d.L + t) * 2 * H);
    }
  }
}

void gru_backward(const GruDims& d, const double* xt, const GruWeights& w,
                  bool reverse, const GruTrace& tr, const double* gy,
                  double* gxt, Tensor* g_wih, Tensor* g_whh, Tensor* g_bih,
                  Tensor* g_bhh) {
  const std::size_t H = d.H, G = 3 * H, N = d.n;
  std::vector<double> dxg(d.L * N * G, 0.0), dhg(N * G);
  std::vector<double> carry(N * H, 0.0), hprev(N * H);
  for (std::size_t s = d.L; s-- > 0;) {
    const std::size_t t = reverse ? d.L - 1 - s : s;
    const bool first = s == 0;
    const std::size_t tp = reverse ? t + 1 : t - 1;  // previous step in time
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < H; ++j)
        hprev[i * H + j] = first ? 0.0 : tr.h[(tp * N + i) * H + j];
    for (std::size_t i = 0; i < N; ++i) {
      double* dx = dxg.data() + (t * N + i) * G;
      double* dh_g = dhg.data() + i * G;
      for (std::size_t j = 0; j < H; ++j) {
        const std::size_t o = (t * N + i) * H + j;
        const double dh = gy[(i * d.L + t) * 2 * H + j] + carry[i * H + j];
        const double r = tr.r[o], z = tr.z[o], n = tr.nn[o], hn = tr.hn[o];
        const double hp = hprev[i * H + j];
        const double dn = dh * (1.0 - z) * (1.0 - n * n);
        const double dz = dh * (hp - n) * z * (1.0 - z);
        const double dr = dn * hn * r * (1.0 - r);
        dx[j] = dr;
        dx[H + j] = dz;
        dx[2 * H + j] = dn;
        dh_g[j] = dr;
        dh_g[H + j] = dz;
        dh_g[2 * H + j] = dn * r;
        carry[i * H + j] = dh * z;
      }
    }
    if (g_whh)
      kernels::gemm(true, false, G, H, N, dhg.data(), G, hprev.data(), H,
                    g_whh->data(), H, true);
    if (g_bhh)
      for (std::size_t i = 0; i < N; ++i)
        kernels::axpy(G, 1.0, dhg.data() + i * G, g_bhh->data());
    kernels::gemm(false, false, N, H, G, dhg.data(), G, w.w_hh.value().data(),
                  H, carry.data(), H, true);
  }
  if (g_wih)
    kernels::gemm(true, false, G, d.in, d.L * N, dxg.data(), G, xt, d.in,
                  g_wih->data(), d.in, true);
  if (g_bih)
    for (std::size_t r = 0; r < d.L * N; ++r)
      kernels::axpy(G, 1.0, dxg.data() + r * G, g_bih->data());
  if (gxt)
    kernels::gemm(false, false, d.L * N, d.in, G, dxg.data(), G,
                  w.w_ih.value().data(), d.in, gxt, d.in, true);
}

std::vector<double> to_time_major(const double* x, std::size_t n,
                                  std::size_t L, std::size_t c) {
  std::vector<double> xt(n * L * c);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t t = 0; t < L; ++t)
      std::copy_n(x + (i * L + t) * c, c, xt.data() + (t * n + i) * c);
  return xt;
}

}  // namespace

Var bigru(const Var& x, const GruWeights& fwd, const GruWeights& bwd) {
  const Shape& s = x.shape();
  require(s.size() == 3 && s[1] > 0, ErrorCode::kShapeMismatch,
          "bigru: input must be N x L x In with L > 0");
  const std::size_t H = fwd.w_hh.shape().at(1);
  GruDims d{s[0], s[1], s[2], H};
  check_gru(fwd, d.in, H);
  check_gru(bwd, d.in, H);
  count_macs(2.0 * static_cast<double>(d.n * d.L * 3 * H * (d.in + H)));

  const bool keep = grad_enabled() &&
                    (x.requires_grad() || fwd.w_ih.requires_grad() ||
                     bwd.w_ih.requires_grad());
  std::vector<double> xt = to_time_major(x.value().data(), d.n, d.L, d.in);
  Tensor y({d.n, d.L, 2 * H});
  auto make_trace = [&] {
    GruTrace t;
    const std::size_t m = d.L * d.n * H;
    t.h.resize(m);
    t.r.resize(m);
    t.z.resize(m);
    t.nn.resize(m);
    t.hn.resize(m);
    return t;
  };
  GruTrace tf, tb;
  if (keep) {
    tf = make_trace();
    tb = make_trace();
  }
  gru_forward(d, xt.data(), fwd, false, y.data(), keep ? &tf : nullptr);
  gru_forward(d, xt.data(), bwd, true, y.data() + H, keep ? &tb : nullptr);

  std::vector<Var> inputs{x,        fwd.w_ih, fwd.w_hh, fwd.b_ih, fwd.b_hh,
                          bwd.w_ih, bwd.w_hh, bwd.b_ih, bwd.b_hh};
  return make_result(
      std::move(y), std::move(inputs),
      [d, fwd, bwd, tf = std::move(tf), tb = std::move(tb)](Node& out) {
        const std::size_t H = d.H;
        std::vector<double> xt =
            to_time_major(out.inputs[0]->value.data(), d.n, d.L, d.in);
        Tensor* gx = grad_of(out, 0);
        std::vector<double> gxt(gx ? xt.size() : 0, 0.0);
        gru_backward(d, xt.data(), fwd, false, tf, out.grad.data(),
                     gx ? gxt.data() : nullptr, grad_of(out, 1),
                     grad_of(out, 2), grad_of(out, 3), grad_of(out, 4));
        gru_backward(d, xt.data(), bwd, true, tb, out.grad.data() + H,
                     gx ? gxt.data() : nullptr, grad_of(out, 5),
                     grad_of(out, 6), grad_of(out, 7), grad_of(out, 8));
        if (gx)
          for (std::size_t i = 0; i < d.n; ++i)
            for (std::size_t t = 0; t < d.L; ++t)
              kernels::axpy(d.in, 1.0, gxt.data() + (t * d.n + i) * d.in,
                            gx->data() + (i * d.L + t) * d.in);
      });
}

}  // namespace dbt::ops
