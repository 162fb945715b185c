// Copyright 2026 The dbtnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dbt/attention.hpp"

#include <cmath>

#include "dbt/error.hpp"

namespace dbt::nn {

SelfAttention::SelfAttention(const Builder& b, std::size_t d, std::size_t h)
    : dim(d), heads(h) {
  require(h > 0 && d % h == 0, ErrorCode::kConfig,
          "attention width " + std::to_string(d) +
              " not divisible by heads " + std::to_string(h));
  auto proj = [&](const char* name, Var& w, Var& bias) {
    w = b.store.add(b.key(std::string(name) + ".weight"),
                    b.init.fan_in_uniform({d, d}, d));
    bias = b.store.add(b.key(std::string(name) + ".bias"), Tensor({d}));
  };
  proj("q", wq, bq);
  proj("k", wk, bk);
  proj("v", wv, bv);
  proj("o", wo, bo);
  ln_gamma = b.store.add(b.key("norm.gamma"), Tensor({d}, 1.0));
  ln_beta = b.store.add(b.key("norm.beta"), Tensor({d}));
}

double SelfAttention::scale() const {
  return 1.0 / std::sqrt(static_cast<double>(dim));
}

Var SelfAttention::operator()(const Var& seq) const {
  require(seq.shape().size() == 3 && seq.shape()[2] == dim,
          ErrorCode::kShapeMismatch,
          "self-attention expects N x L x " + std::to_string(dim) + ", got " +
              shape_str(seq.shape()));
  Var ctx = ops::attention(ops::linear(seq, wq, bq), ops::linear(seq, wk, bk),
                           ops::linear(seq, wv, bv), heads, scale());
  Var out = ops::layer_norm_last(ops::add(seq, ops::linear(ctx, wo, bo)),
                                 ln_gamma, ln_beta);
  log_shape("mhsa", seq.shape(), out.shape());
  return out;
}

Tensor SelfAttention::attention_maps(const Tensor& seq) const {
  NoGradGuard ng;
  Var s(seq);
  return ops::attention_weights(ops::linear(s, wq, bq).value(),
                                ops::linear(s, wk, bk).value(), heads, scale());
}

GruFeedForward::GruFeedForward(const Builder& b, std::size_t dim) {
  const std::size_t hidden = 2 * dim;
  auto dir = [&](const std::string& name) {
    ops::GruWeights w;
    w.w_ih = b.store.add(b.key(name + ".w_ih"),
                         b.init.fan_in_uniform({3 * hidden, dim}, dim));
    w.w_hh = b.store.add(b.key(name + ".w_hh"),
                         b.init.orthogonal_blocks(3, hidden));
    w.b_ih = b.store.add(b.key(name + ".b_ih"), Tensor({3 * hidden}));
    w.b_hh = b.store.add(b.key(name + ".b_hh"), Tensor({3 * hidden}));
    return w;
  };
  fwd = dir("gru_fwd");
  bwd = dir("gru_bwd");
  w_out = b.store.add(b.key("out.weight"),
                      b.init.fan_in_uniform({dim, 2 * hidden}, 2 * hidden));
  b_out = b.store.add(b.key("out.bias"), Tensor({dim}));
  ln_gamma = b.store.add(b.key("norm.gamma"), Tensor({dim}, 1.0));
  ln_beta = b.store.add(b.key("norm.beta"), Tensor({dim}));
}

Var GruFeedForward::operator()(const Var& seq) const {
  Var h = ops::relu(ops::bigru(seq, fwd, bwd));
  log_shape("bigru", seq.shape(), h.shape());
  Var out = ops::layer_norm_last(ops::add(seq, ops::linear(h, w_out, b_out)),
                                 ln_gamma, ln_beta);
  log_shape("linear", h.shape(), out.shape());
  return out;
}

SeqTransformer::SeqTransformer(const Builder& b, std::size_t dim,
                               std::size_t heads)
    : attn(b.sub("mhsa"), dim, heads), ffn(b.sub("ffn"), dim) {}

AxisAttention::AxisAttention(const Builder& b, std::size_t dim,
                             std::size_t heads, Axis a)
    : axis(a), block(b, dim, heads) {}

Var AxisAttention::fold(const Var& x) const {
  return axis == Axis::kTime ? ops::fold_time(x) : ops::fold_freq(x);
}

Var AxisAttention::unfold(const Var& seq, std::size_t batch,
                          std::size_t other) const {
  return axis == Axis::kTime ? ops::unfold_time(seq, batch, other)
                             : ops::unfold_freq(seq, batch, other);
}

Var AxisAttention::operator()(const Var& x) const {
  const Shape& s = x.shape();
  require(s.size() == 4, ErrorCode::kShapeMismatch,
          "axis attention expects B x C x T x F");
  const std::size_t other = axis == Axis::kTime ? s[3] : s[2];
  const std::string tag = axis == Axis::kTime ? "time" : "freq";
  Var seq = fold(x);
  log_shape(tag + ".fold", s, seq.shape());
  Var y = block(seq);
  Var out = unfold(y, s[0], other);
  log_shape(tag + ".unfold", y.shape(), out.shape());
  return out;
}

TfCore::TfCore(const Builder& b, std::size_t dim, std::size_t heads,
               bool use_time, bool use_freq) {
  require(use_time || use_freq, ErrorCode::kConfig,
          "a time-frequency block needs at least one attention branch");
  if (use_time) time.emplace(b.sub("time"), dim, heads, Axis::kTime);
  if (use_freq) freq.emplace(b.sub("freq"), dim, heads, Axis::kFreq);
}

TfHead::TfHead(const Builder& b, std::size_t dim)
    : alpha(b.store.add(b.key("alpha"), Tensor::scalar(1.0))),
      beta(b.store.add(b.key("beta"), Tensor::scalar(1.0))),
      act(b.sub("act"), dim),
      proj(b.sub("proj"), dim, dim, 1, 1, {}) {}

Var TfHead::combine(const Var& x, const Var& time_out,
                    const Var& freq_out) const {
  Var y = x;
  if (time_out.defined()) y = ops::add(y, ops::scale_by(time_out, alpha));
  if (freq_out.defined()) y = ops::add(y, ops::scale_by(freq_out, beta));
  return y;
}

Var tf_block(const TfCore& core, const TfHead& head, const Var& x) {
  Var t = core.time ? (*core.time)(x) : Var();
  Var f = core.freq ? (*core.freq)(x) : Var();
  Var out = head.project(head.combine(x, t, f));
  log_shape("tf.proj", x.shape(), out.shape());
  return out;
}

HierarchicalAggregate::HierarchicalAggregate(const Builder& b,
                                             std::size_t dim)
    : w_pool(b.store.add(b.key("pool.weight"),
                         b.init.fan_in_uniform({1, dim}, dim))),
      b_pool(b.store.add(b.key("pool.bias"), Tensor({1}))),
      gamma(b.store.add(b.key("gamma"), Tensor::scalar(0.0))) {}

Var HierarchicalAggregate::operator()(std::span<const Var> maps,
                                      Tensor* weights) const {
  require(!maps.empty(), ErrorCode::kInvalidArgument,
          "hierarchical aggregation needs at least one map");
  std::vector<Var> logits;
  logits.reserve(maps.size());
  for (const Var& m : maps) {
    require(m.shape() == maps[0].shape(), ErrorCode::kShapeMismatch,
            "aggregated maps must share one shape");
    logits.push_back(ops::linear(ops::mean_tf(m), w_pool, b_pool));
  }
  Var w = ops::softmax_rows(ops::concat_cols(logits));
  if (weights) *weights = w.value();
  Var out = ops::add(maps.back(),
                     ops::scale_by(ops::weighted_sum(maps, w), gamma));
  log_shape("aggregate", maps.back().shape(), out.shape());
  return out;
}

AttentionStack::AttentionStack(const Builder& b, std::size_t dim,
                               std::size_t heads, std::size_t blocks,
                               bool use_time, bool use_freq,
                               bool use_aggregate) {
  require(blocks >= 1, ErrorCode::kConfig, "need at least one block");
  for (std::size_t i = 0; i < blocks; ++i) {
    const Builder bb = b.sub("block" + std::to_string(i));
    cores.emplace_back(bb, dim, heads, use_time, use_freq);
    this->heads.emplace_back(bb, dim);
  }
  if (use_aggregate) aggregate.emplace(b.sub("aggregate"), dim);
}

Var AttentionStack::operator()(const Var& x, const Hook& hook,
                               std::vector<Var>* intermediates) const {
  std::vector<Var> outs;
  Var y = x;
  for (std::size_t i = 0; i < cores.size(); ++i) {
    y = tf_block(cores[i], heads[i], y);
    if (hook) y = hook(i, y);
    outs.push_back(y);
  }
  if (intermediates) *intermediates = outs;
  return aggregate ? (*aggregate)(outs) : y;
}

}  // namespace dbt::nn
