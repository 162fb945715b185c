// Copyright 2026 The dbtnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Sequence modelling stack: self-attention with a recurrent feedforward,
// time- and frequency-axis attention branches, their adaptive combination
// and the hierarchical aggregation over block outputs.

#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "dbt/nn.hpp"

namespace dbt::nn {

// Residual multi-head self-attention followed by LayerNorm. Scores are
// scaled by 1/sqrt(model width), not by the per-head width.
struct SelfAttention {
  SelfAttention() = default;
  SelfAttention(const Builder& b, std::size_t dim, std::size_t heads);
  Var operator()(const Var& seq) const;
  // Row-stochastic maps, N x heads x L x L.
  Tensor attention_maps(const Tensor& seq) const;
  double scale() const;

  std::size_t dim = 0, heads = 0;
  Var wq, bq, wk, bk, wv, bv, wo, bo;
  Var ln_gamma, ln_beta;
};

// Bidirectional GRU (hidden 2*dim per direction) -> ReLU -> linear back to
// dim -> residual -> LayerNorm.
struct GruFeedForward {
  GruFeedForward() = default;
  GruFeedForward(const Builder& b, std::size_t dim);
  Var operator()(const Var& seq) const;

  ops::GruWeights fwd, bwd;
  Var w_out, b_out;
  Var ln_gamma, ln_beta;
};

struct SeqTransformer {
  SeqTransformer() = default;
  SeqTransformer(const Builder& b, std::size_t dim, std::size_t heads);
  Var operator()(const Var& seq) const { return ffn(attn(seq)); }
  SelfAttention attn;
  GruFeedForward ffn;
};

enum class Axis { kTime, kFreq };

// Runs a transformer along one axis of a B x C x T x F map, folding the
// other axis into the batch.
struct AxisAttention {
  AxisAttention() = default;
  AxisAttention(const Builder& b, std::size_t dim, std::size_t heads,
                Axis axis);
  Var operator()(const Var& x) const;
  Var fold(const Var& x) const;
  Var unfold(const Var& seq, std::size_t batch, std::size_t other) const;

  Axis axis = Axis::kTime;
  SeqTransformer block;
};

// The transformer sublayers of one time-frequency block. Either branch may
// be absent (ablations); the same core can serve several feature streams.
struct TfCore {
  TfCore() = default;
  TfCore(const Builder& b, std::size_t dim, std::size_t heads, bool use_time,
         bool use_freq);
  std::optional<AxisAttention> time, freq;
};

// Per-stream part of a time-frequency block:
//   out = conv1x1(PReLU(x + alpha * time(x) + beta * freq(x)))
struct TfHead {
  TfHead() = default;
  TfHead(const Builder& b, std::size_t dim);
  Var combine(const Var& x, const Var& time_out, const Var& freq_out) const;
  Var project(const Var& combined) const { return proj(act(combined)); }

  Var alpha, beta;
  PRelu act;
  Conv2d proj;
};

Var tf_block(const TfCore& core, const TfHead& head, const Var& x);

// Softmax-weighted sum of block outputs, blended into the last one:
//   out = F_N + gamma * sum_m w_m F_m,  w = softmax_m(linear(mean_tf(F_m)))
struct HierarchicalAggregate {
  HierarchicalAggregate() = default;
  HierarchicalAggregate(const Builder& b, std::size_t dim);
  Var operator()(std::span<const Var> maps, Tensor* weights = nullptr) const;

  Var w_pool, b_pool;  // 1 x C, 1
  Var gamma;
};

// Single-stream stack of N blocks plus optional aggregation. `hook` (may be
// empty) rewrites each block output before it is collected.
struct AttentionStack {
  AttentionStack() = default;
  AttentionStack(const Builder& b, std::size_t dim, std::size_t heads,
                 std::size_t blocks, bool use_time, bool use_freq,
                 bool use_aggregate);

  using Hook = std::function<Var(std::size_t, const Var&)>;
  Var operator()(const Var& x, const Hook& hook = {},
                 std::vector<Var>* intermediates = nullptr) const;

  std::vector<TfCore> cores;
  std::vector<TfHead> heads;
  std::optional<HierarchicalAggregate> aggregate;
};

}  // namespace dbt::nn
