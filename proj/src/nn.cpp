// Copyright 2026 The dbtnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dbt/nn.hpp"

#include <cmath>

#include "dbt/error.hpp"

namespace dbt::nn {

namespace {
thread_local ShapeLog* g_shape_log = nullptr;
}  // namespace

ShapeLog::ShapeLog() : saved_(g_shape_log) { g_shape_log = this; }
ShapeLog::~ShapeLog() { g_shape_log = saved_; }

void log_shape(std::string layer, const Shape& in, const Shape& out) {
  if (g_shape_log) g_shape_log->rows_.push_back({std::move(layer), in, out});
}

bool shape_log_active() { return g_shape_log != nullptr; }

Var ParamStore::add(const std::string& name, Tensor init) {
  require(!contains(name), ErrorCode::kInvalidArgument,
          "duplicate parameter " + name);
  Var v(std::move(init), true);
  entries_.emplace_back(name, v);
  return v;
}

Var ParamStore::get(const std::string& name) const {
  for (const auto& [n, v] : entries_)
    if (n == name) return v;
  fail(ErrorCode::kInvalidArgument, "unknown parameter " + name);
}

bool ParamStore::contains(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.first == name) return true;
  return false;
}

std::vector<Var> ParamStore::vars() const {
  std::vector<Var> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.second);
  return out;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.second.zero_grad();
}

Tensor Initializer::fan_in_uniform(Shape shape, std::size_t fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = u(rng_);
  return t;
}

Tensor Initializer::orthogonal_blocks(std::size_t blocks, std::size_t n) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Tensor t({blocks * n, n});
  for (std::size_t b = 0; b < blocks; ++b) {
    double* m = t.data() + b * n * n;
    for (std::size_t i = 0; i < n * n; ++i) m[i] = nd(rng_);
    // Modified Gram-Schmidt over rows.
    for (std::size_t i = 0; i < n; ++i) {
      double* ri = m + i * n;
      for (std::size_t j = 0; j < i; ++j) {
        const double* rj = m + j * n;
        double d = 0.0;
        for (std::size_t k = 0; k < n; ++k) d += ri[k] * rj[k];
        for (std::size_t k = 0; k < n; ++k) ri[k] -= d * rj[k];
      }
      double norm = 0.0;
      for (std::size_t k = 0; k < n; ++k) norm += ri[k] * ri[k];
      norm = std::sqrt(norm);
      for (std::size_t k = 0; k < n; ++k) ri[k] /= norm;
    }
  }
  return t;
}

Conv2d::Conv2d(const Builder& b, std::size_t in, std::size_t out,
               std::size_t kt, std::size_t kf, const ops::ConvGeom& g,
               bool with_bias)
    : geom(g) {
  geom.kt = kt;
  geom.kf = kf;
  weight = b.store.add(b.key("weight"),
                       b.init.fan_in_uniform({out, in, kt, kf}, in * kt * kf));
  if (with_bias) bias = b.store.add(b.key("bias"), Tensor({out}));
}

Var Conv2d::operator()(const Var& x) const {
  return ops::conv2d(x, weight, bias, geom);
}

LayerNormCF::LayerNormCF(const Builder& b, std::size_t channels)
    : gamma(b.store.add(b.key("gamma"), Tensor({channels}, 1.0))),
      beta(b.store.add(b.key("beta"), Tensor({channels}))) {}

Var LayerNormCF::operator()(const Var& x) const {
  return ops::layer_norm_cf(x, gamma, beta);
}

PRelu::PRelu(const Builder& b, std::size_t channels)
    : slope(b.store.add(b.key("slope"), Tensor({channels}, 0.25))) {}

Var PRelu::operator()(const Var& x) const { return ops::prelu(x, slope); }

ConvNormAct::ConvNormAct(const Builder& b, std::size_t in, std::size_t out,
                         std::size_t kt, std::size_t kf,
                         const ops::ConvGeom& geom)
    : conv(b.sub("conv"), in, out, kt, kf, geom),
      norm(b.sub("norm"), out),
      act(b.sub("act"), out) {}

Var ConvNormAct::operator()(const Var& x) const { return act(norm(conv(x))); }

DenseBlock::DenseBlock(const Builder& b, std::size_t channels,
                       const std::vector<std::size_t>& dilations) {
  require(!dilations.empty(), ErrorCode::kConfig,
          "dense block needs at least one layer");
  for (std::size_t i = 0; i < dilations.size(); ++i) {
    const std::size_t d = dilations[i];
    require(d > 0, ErrorCode::kConfig, "dilation must be positive");
    ops::ConvGeom g{.dil_t = d, .pad_t = d, .pad_f_lo = 1, .pad_f_hi = 1};
    layers.emplace_back(b.sub("layer" + std::to_string(i)), channels * (i + 1),
                        channels, 2, 3, g);
  }
}

Var DenseBlock::operator()(const Var& x, const std::string& tag) const {
  std::vector<Var> feats{x};
  Var y;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    // Newest features first in the concatenation.
    std::vector<Var> in(feats.rbegin(), feats.rend());
    const Var layer_in = i == 0 ? x : ops::concat_channels(in);
    y = layers[i](layer_in);
    feats.push_back(y);
    if (g_shape_log)
      log_shape(tag + ".dense_" + std::to_string(i + 1), layer_in.shape(), y.shape());
  }
  return y;
}

std::vector<std::size_t> frequency_plan(std::size_t bins, std::size_t depth) {
  std::vector<std::size_t> plan{bins};
  for (std::size_t i = 0; i < depth; ++i) {
    require(plan.back() >= 3, ErrorCode::kConfig,
            "frequency axis too small for " + std::to_string(depth) +
                " downsampling stages");
    plan.push_back(plan.back() / 2);
  }
  return plan;
}

Encoder::Encoder(const Builder& b, std::size_t in_ch, std::size_t channels,
                 std::size_t n_bins, std::size_t depth,
                 const std::vector<std::size_t>& dilations)
    : in_channels(in_ch),
      bins(n_bins),
      stem(b.sub("stem"), in_ch, channels, 1, 1, {}),
      dense(b.sub("dense"), channels, dilations) {
  require(in_ch == 1 || in_ch == 2, ErrorCode::kConfig,
          "encoder input must have 1 or 2 planes, got " + std::to_string(in_ch));
  const auto plan = frequency_plan(n_bins, depth);
  for (std::size_t i = 0; i < depth; ++i) {
    const std::size_t pad = plan[i] % 2 == 0 ? 1 : 0;
    ops::ConvGeom g{.stride_f = 2, .pad_f_lo = pad, .pad_f_hi = pad};
    down.emplace_back(b.sub("down" + std::to_string(i)), channels, channels, 1,
                      3, g);
  }
}

Var Encoder::operator()(const Var& x) const {
  require(x.shape().size() == 4 && x.shape()[1] == in_channels &&
              x.shape()[3] == bins,
          ErrorCode::kShapeMismatch,
          "encoder expects B x " + std::to_string(in_channels) + " x T x " +
              std::to_string(bins) + ", got " + shape_str(x.shape()));
  Var y = stem(x);
  log_shape("encoder.stem", x.shape(), y.shape());
  y = dense(y, "encoder");
  for (const auto& d : down) {
    Var z = d(y);
    log_shape("encoder.down", y.shape(), z.shape());
    y = z;
  }
  return y;
}

SubpixelUp::SubpixelUp(const Builder& b, std::size_t channels,
                       std::size_t f, std::size_t bins)
    : factor(f),
      out_bins(bins),
      conv(b.sub("conv"), channels, channels * f, 1, 3,
           {.pad_f_lo = 1, .pad_f_hi = 1}),
      norm(b.sub("norm"), channels),
      act(b.sub("act"), channels) {
  require(f >= 1, ErrorCode::kConfig, "upsampling factor must be >= 1");
}

Var SubpixelUp::operator()(const Var& x) const {
  Var y = ops::pixel_shuffle_freq(conv(x), factor);
  const std::size_t f = y.shape()[3];
  require(f <= out_bins, ErrorCode::kShapeMismatch,
          "sub-pixel output has " + std::to_string(f) + " bins, target " +
              std::to_string(out_bins));
  if (f < out_bins) y = ops::replicate_last_freq(y, out_bins - f);
  Var out = act(norm(y));
  log_shape("decoder.subpixel", x.shape(), out.shape());
  return out;
}

DecoderTrunk::DecoderTrunk(const Builder& b, std::size_t channels,
                           std::size_t bins, std::size_t depth,
                           const std::vector<std::size_t>& dilations)
    : dense(b.sub("dense"), channels, dilations),
      to_plane(b.sub("to_plane"), channels, 1, 1, 1, {}) {
  const auto plan = frequency_plan(bins, depth);
  for (std::size_t i = 0; i < depth; ++i)
    up.emplace_back(b.sub("up" + std::to_string(i)), channels, 2,
                    plan[depth - 1 - i]);
}

Var DecoderTrunk::operator()(const Var& x) const {
  Var y = dense(x, "decoder");
  for (const auto& u : up) y = u(y);
  Var out = to_plane(y);
  log_shape("decoder.to_plane", y.shape(), out.shape());
  return out;
}

MaskingDecoder::MaskingDecoder(const Builder& b, std::size_t channels,
                               std::size_t bins, std::size_t depth,
                               const std::vector<std::size_t>& dilations)
    : trunk(b.sub("trunk"), channels, bins, depth, dilations),
      tanh_path(b.sub("tanh_path"), 1, 1, 1, 1, {}),
      sigmoid_path(b.sub("sigmoid_path"), 1, 1, 1, 1, {}),
      out(b.sub("out"), 1, 1, 1, 1, {}) {}

Var MaskingDecoder::operator()(const Var& x) const {
  Var h = trunk(x);
  Var t = tanh_path(h), s = sigmoid_path(h);
  log_shape("mask.tanh_path", h.shape(), t.shape());
  log_shape("mask.sigmoid_path", h.shape(), s.shape());
  Var gate = ops::mul(ops::tanh(t), ops::sigmoid(s));
  Var m = out(gate);
  log_shape("mask.out", gate.shape(), m.shape());
  return ops::sigmoid(m);
}

ComplexDecoder::ComplexDecoder(const Builder& b, std::size_t channels,
                               std::size_t bins, std::size_t depth,
                               const std::vector<std::size_t>& dilations)
    : trunk(b.sub("trunk"), channels, bins, depth, dilations) {}

Merge::Merge(const Builder& b, std::size_t in, std::size_t out)
    : conv(b.sub("conv"), in, out, 1, 1, {}), act(b.sub("act"), out) {}

Var Merge::operator()(std::span<const Var> xs) const {
  const Var in = xs.size() == 1 ? xs[0] : ops::concat_channels(xs);
  Var out = act(conv(in));
  log_shape("merge", in.shape(), out.shape());
  return out;
}

}  // namespace dbt::nn
