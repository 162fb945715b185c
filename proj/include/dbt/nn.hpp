// Copyright 2026 The dbtnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Parameter registry and the convolutional building blocks: dense blocks,
// encoder, sub-pixel upsampling and the masking / complex decoders.

#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "dbt/ops.hpp"

namespace dbt::nn {

// Ordered, named collection of trainable tensors. Names are unique and the
// insertion order is the canonical order for checkpoints and optimizers.
class ParamStore {
 public:
  Var add(const std::string& name, Tensor init);
  Var get(const std::string& name) const;
  bool contains(const std::string& name) const;

  const std::vector<std::pair<std::string, Var>>& entries() const {
    return entries_;
  }
  std::vector<Var> vars() const;
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<std::pair<std::string, Var>> entries_;
};

// Weight initialization. Convolution and linear weights are uniform in
// +-1/sqrt(fan_in); recurrent kernels are orthogonal per gate block.
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}
  Tensor fan_in_uniform(Shape shape, std::size_t fan_in);
  // `blocks` stacked square orthogonal matrices of size n: (blocks*n) x n.
  Tensor orthogonal_blocks(std::size_t blocks, std::size_t n);

 private:
  std::mt19937_64 rng_;
};

// Bundle passed to module constructors.
struct Builder {
  ParamStore& store;
  Initializer& init;
  std::string prefix;

  Builder sub(const std::string& name) const {
    return {store, init, prefix.empty() ? name : prefix + "." + name};
  }
  std::string key(const std::string& name) const {
    return prefix.empty() ? name : prefix + "." + name;
  }
};

// Layer-by-layer shape record. While a ShapeLog scope is active on this
// thread, the modules below append one row per layer they run.
struct LayerShape {
  std::string layer;
  Shape in, out;
};

class ShapeLog {
 public:
  ShapeLog();
  ~ShapeLog();
  ShapeLog(const ShapeLog&) = delete;
  ShapeLog& operator=(const ShapeLog&) = delete;
  const std::vector<LayerShape>& rows() const { return rows_; }

 private:
  ShapeLog* saved_;
  std::vector<LayerShape> rows_;
  friend void log_shape(std::string, const Shape&, const Shape&);
};

void log_shape(std::string layer, const Shape& in, const Shape& out);
bool shape_log_active();

struct Conv2d {
  Conv2d() = default;
  Conv2d(const Builder& b, std::size_t in, std::size_t out, std::size_t kt,
         std::size_t kf, const ops::ConvGeom& geom, bool bias = true);
  Var operator()(const Var& x) const;

  Var weight, bias;
  ops::ConvGeom geom;
};

struct LayerNormCF {
  LayerNormCF() = default;
  LayerNormCF(const Builder& b, std::size_t channels);
  Var operator()(const Var& x) const;
  Var gamma, beta;
};

struct PRelu {
  PRelu() = default;
  PRelu(const Builder& b, std::size_t channels);
  Var operator()(const Var& x) const;
  Var slope;
};

// conv -> LN -> PReLU
struct ConvNormAct {
  ConvNormAct() = default;
  ConvNormAct(const Builder& b, std::size_t in, std::size_t out,
              std::size_t kt, std::size_t kf, const ops::ConvGeom& geom);
  Var operator()(const Var& x) const;
  Conv2d conv;
  LayerNormCF norm;
  PRelu act;
};

// Densely connected stack of 2x3 convolutions, dilated along time. Layer i
// sees the block input and all earlier layer outputs; the block returns the
// last layer's output.
struct DenseBlock {
  DenseBlock() = default;
  DenseBlock(const Builder& b, std::size_t channels,
             const std::vector<std::size_t>& dilations);
  // `tag` prefixes the shape-log rows ("<tag>.dense_<k>").
  Var operator()(const Var& x, const std::string& tag = "dense") const;
  std::vector<ConvNormAct> layers;
};

// Frequency sizes after 0..depth stride-2 stages, starting at `bins`.
// An odd size is downsampled without padding, an even one with one bin of
// padding per side, so each stage maps F to floor(F / 2).
std::vector<std::size_t> frequency_plan(std::size_t bins, std::size_t depth);

struct Encoder {
  Encoder() = default;
  Encoder(const Builder& b, std::size_t in_channels, std::size_t channels,
          std::size_t bins, std::size_t depth,
          const std::vector<std::size_t>& dilations);
  Var operator()(const Var& x) const;

  std::size_t in_channels = 0;
  std::size_t bins = 0;
  ConvNormAct stem;
  DenseBlock dense;
  std::vector<ConvNormAct> down;
};

// 1x3 conv to factor*C channels, pixel shuffle along frequency, replicate
// the top bin up to `out_bins`, then LN + PReLU.
struct SubpixelUp {
  SubpixelUp() = default;
  SubpixelUp(const Builder& b, std::size_t channels, std::size_t factor,
             std::size_t out_bins);
  Var operator()(const Var& x) const;

  std::size_t factor = 2;
  std::size_t out_bins = 0;
  Conv2d conv;
  LayerNormCF norm;
  PRelu act;
};

// Dense block -> upsampling stages -> 1x1 conv to one plane.
struct DecoderTrunk {
  DecoderTrunk() = default;
  DecoderTrunk(const Builder& b, std::size_t channels, std::size_t bins,
               std::size_t depth, const std::vector<std::size_t>& dilations);
  Var operator()(const Var& x) const;

  DenseBlock dense;
  std::vector<SubpixelUp> up;
  Conv2d to_plane;
};

// Gain in (0, 1): trunk, then tanh and sigmoid paths multiplied, a 1x1 conv
// and a final sigmoid.
struct MaskingDecoder {
  MaskingDecoder() = default;
  MaskingDecoder(const Builder& b, std::size_t channels, std::size_t bins,
                 std::size_t depth, const std::vector<std::size_t>& dilations);
  Var operator()(const Var& x) const;

  DecoderTrunk trunk;
  Conv2d tanh_path, sigmoid_path, out;
};

// Unbounded single plane (one instance per real / imaginary part).
struct ComplexDecoder {
  ComplexDecoder() = default;
  ComplexDecoder(const Builder& b, std::size_t channels, std::size_t bins,
                 std::size_t depth, const std::vector<std::size_t>& dilations);
  Var operator()(const Var& x) const { return trunk(x); }
  DecoderTrunk trunk;
};

// 1x1 conv + PReLU over the channel concatenation of its inputs.
struct Merge {
  Merge() = default;
  Merge(const Builder& b, std::size_t in, std::size_t out);
  Var operator()(std::span<const Var> xs) const;
  Conv2d conv;
  PRelu act;
};

}  // namespace dbt::nn
