// Copyright 2026 The dbtnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dbt/model.hpp"

#include <cmath>

#include "dbt/error.hpp"

namespace dbt {

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kDbt: return "dbt";
    case Variant::kMebOnly: return "meb";
    case Variant::kCpbOnly: return "cpb";
    case Variant::kDcb: return "dcb";
    case Variant::kDbtSpade: return "dbt-spade";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  for (Variant v : {Variant::kDbt, Variant::kMebOnly, Variant::kCpbOnly,
                    Variant::kDcb, Variant::kDbtSpade})
    if (variant_name(v) == s) return v;
  fail(ErrorCode::kConfig, "unknown variant '" + s +
                               "' (expected dbt, meb, cpb, dcb or dbt-spade)");
}

void ModelConfig::validate() const {
  require(channels > 0 && attention_dim > 0, ErrorCode::kConfig,
          "channels and attention_dim must be positive");
  require(heads > 0 && attention_dim % heads == 0, ErrorCode::kConfig,
          "attention_dim must be divisible by heads");
  require(blocks >= 1, ErrorCode::kConfig, "blocks must be >= 1");
  require(depth >= 1, ErrorCode::kConfig, "depth must be >= 1");
  require(!dilations.empty(), ErrorCode::kConfig, "dilations must be non-empty");
  for (std::size_t d : dilations)
    require(d >= 1, ErrorCode::kConfig, "dilations must be >= 1");
  require(use_time || use_freq, ErrorCode::kConfig,
          "at least one of use_time / use_freq must be set");
  require(mu >= 0.0 && mu <= 1.0, ErrorCode::kConfig, "mu must lie in [0, 1]");
  require(compression > 0.0 && compression <= 1.0, ErrorCode::kConfig,
          "compression must lie in (0, 1]");
  require(phase_eps > 0.0, ErrorCode::kConfig, "phase_eps must be positive");
  require(bins >= 3, ErrorCode::kConfig, "bins must be >= 3");
  nn::frequency_plan(bins, depth);
}

ModelConfig preset(const std::string& name) {
  ModelConfig c;
  if (name == "dbt") return c;
  if (name == "dbt-spade") {
    c.variant = Variant::kDbtSpade;
    return c;
  }
  if (name == "dcb") {
    c.variant = Variant::kDcb;
    return c;
  }
  if (name == "meb" || name == "cpb") {
    c.variant = name == "meb" ? Variant::kMebOnly : Variant::kCpbOnly;
    c.attention_dim = 32;
    c.shared_transformer = false;
    c.interaction = false;
    return c;
  }
  if (name == "micro" || name == "micro-meb") {
    c.channels = 8;
    c.attention_dim = 8;
    c.heads = 2;
    c.blocks = 2;
    if (name == "micro-meb") {
      c.variant = Variant::kMebOnly;
      c.shared_transformer = false;
      c.interaction = false;
    }
    return c;
  }
  for (const AblationRow& r : ablation_rows())
    if (r.name == name) return r.config;
  fail(ErrorCode::kConfig, "unknown preset '" + name + "'");
}

std::vector<AblationRow> ablation_rows() {
  std::vector<AblationRow> rows;
  auto attn = [](ModelConfig c, bool t, bool f, bool a) {
    c.use_time = t;
    c.use_freq = f;
    c.use_aggregate = a;
    return c;
  };
  const ModelConfig meb = preset("meb"), cpb = preset("cpb");
  const ModelConfig dbt;
  rows.push_back({"meb-1", attn(meb, true, false, false), 0.64, 8.04});
  rows.push_back({"meb-2", attn(meb, false, true, false), 0.64, 7.99});
  rows.push_back({"meb-3", attn(meb, true, true, false), 0.90, 9.71});
  rows.push_back({"meb-4", meb, 0.90, 9.72});
  rows.push_back({"cpb-1", attn(cpb, true, false, false), 0.91, 10.22});
  rows.push_back({"cpb-2", attn(cpb, false, true, false), 0.91, 10.17});
  rows.push_back({"cpb-3", attn(cpb, true, true, false), 1.18, 11.89});
  rows.push_back({"cpb-4", cpb, 1.18, 11.89});
  ModelConfig dcb = dbt;
  dcb.variant = Variant::kDcb;
  rows.push_back({"dcb", dcb, 3.18, 42.76});
  ModelConfig spade = dbt;
  spade.variant = Variant::kDbtSpade;
  rows.push_back({"dbt-spade", spade, 2.91, 40.59});
  for (std::size_t d : {2u, 3u, 4u}) {
    ModelConfig c = dbt;
    c.depth = d;
    const double p[] = {2.98, 3.08, 3.18}, m[] = {23.65, 12.48, 6.92};
    rows.push_back({"dbt-d" + std::to_string(d), c, p[d - 2], m[d - 2]});
  }
  ModelConfig plain = dbt;
  plain.interaction = false;
  rows.push_back({"dbt-1", attn(plain, true, false, false), 2.08, 27.67});
  rows.push_back({"dbt-2", attn(plain, false, true, false), 2.08, 27.49});
  rows.push_back({"dbt-3", attn(plain, true, true, false), 2.80, 40.12});
  rows.push_back({"dbt-4", plain, 2.81, 40.13});
  rows.push_back({"dbt-5", dbt, 2.91, 40.59});
  return rows;
}

struct DbtModel::Branch {
  nn::Merge merge;
  std::vector<nn::TfHead> heads;
  std::optional<nn::HierarchicalAggregate> aggregate;
  std::optional<nn::Merge> out_proj;
  std::optional<nn::MaskingDecoder> mask;
  std::optional<nn::ComplexDecoder> real, imag;
};

namespace {

// Encoder input planes per branch: 1 = compressed magnitude, 2 = RI pair.
std::vector<std::size_t> encoder_planes(Variant v) {
  switch (v) {
    case Variant::kDbt:
    case Variant::kDbtSpade: return {1, 2};
    case Variant::kDcb: return {2, 2};
    case Variant::kMebOnly: return {1};
    case Variant::kCpbOnly: return {2};
  }
  return {};
}

bool masks(Variant v, std::size_t branch) {
  return v == Variant::kMebOnly ||
         ((v == Variant::kDbt || v == Variant::kDbtSpade) && branch == 0);
}

}  // namespace

DbtModel::DbtModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  nn::Initializer init(seed);
  const nn::Builder root{params_, init, ""};
  const std::size_t C = cfg_.channels, A = cfg_.attention_dim;
  const auto planes = encoder_planes(cfg_.variant);
  const std::size_t nb = planes.size();

  for (std::size_t k = 0; k < nb; ++k)
    encoders_.emplace_back(root.sub("encoder" + std::to_string(k)), planes[k],
                           C, cfg_.bins, cfg_.depth, cfg_.dilations);

  const bool shared = cfg_.shared_transformer && nb == 2;
  const std::size_t ncore = shared ? 1 : nb;
  cores_.resize(ncore);
  for (std::size_t s = 0; s < ncore; ++s) {
    const nn::Builder cb =
        shared ? root.sub("core") : root.sub("branch" + std::to_string(s) + ".core");
    for (std::size_t i = 0; i < cfg_.blocks; ++i)
      cores_[s].emplace_back(cb.sub("block" + std::to_string(i)), A,
                             cfg_.heads, cfg_.use_time, cfg_.use_freq);
  }

  for (std::size_t b = 0; b < nb; ++b) {
    const nn::Builder bb = root.sub("branch" + std::to_string(b));
    auto br = std::make_shared<Branch>();
    br->merge = nn::Merge(bb.sub("merge"), nb * C, A);
    for (std::size_t i = 0; i < cfg_.blocks; ++i)
      br->heads.emplace_back(bb.sub("block" + std::to_string(i)), A);
    if (cfg_.use_aggregate) br->aggregate.emplace(bb.sub("aggregate"), A);
    if (A != C) br->out_proj.emplace(bb.sub("out_proj"), A, C);
    if (masks(cfg_.variant, b)) {
      br->mask.emplace(bb.sub("mask_decoder"), C, cfg_.bins, cfg_.depth,
                       cfg_.dilations);
    } else {
      br->real.emplace(bb.sub("real_decoder"), C, cfg_.bins, cfg_.depth,
                       cfg_.dilations);
      br->imag.emplace(bb.sub("imag_decoder"), C, cfg_.bins, cfg_.depth,
                       cfg_.dilations);
    }
    branches_.push_back(std::move(br));
  }

  if (nb == 2 && cfg_.interaction) {
    for (std::size_t i = 0; i < cfg_.blocks; ++i) {
      std::array<Gate, 2> g;
      for (std::size_t d = 0; d < 2; ++d) {
        const nn::Builder gb = root.sub("interact" + std::to_string(i) +
                                        (d == 0 ? ".into0" : ".into1"));
        g[d].conv = nn::Conv2d(gb.sub("conv"), 2 * A, A, 1, 1, {});
        g[d].norm = nn::LayerNormCF(gb.sub("norm"), A);
      }
      gates_.push_back(std::move(g));
    }
  }
}

Var DbtModel::interact(const Gate& g, const Var& self, const Var& other) const {
  const Var pair[] = {self, other};
  Var gate = ops::sigmoid(g.norm(g.conv(ops::concat_channels(pair))));
  return ops::add(self, ops::mul(other, gate));
}

EnhancementOutput DbtModel::forward(const Tensor& real, const Tensor& imag,
                                    const ForwardProbe* probe,
                                    ForwardTrace* trace) const {
  const Shape& s = real.shape();
  require(s.size() == 4 && s[1] == 1 && s[3] == cfg_.bins && s[0] > 0 &&
              s[2] > 0 && imag.shape() == s,
          ErrorCode::kShapeMismatch,
          "model input must be two B x 1 x T x " + std::to_string(cfg_.bins) +
              " planes, got " + shape_str(s) + " and " +
              shape_str(imag.shape()));
  const Var xr(real), xi(imag);
  const std::size_t nb = branches_.size();
  Var mag_in, ri_in;

  std::vector<Var> enc(nb);
  for (std::size_t k = 0; k < nb; ++k) {
    Var in;
    if (encoders_[k].in_channels == 1) {
      if (!mag_in.defined()) mag_in = ops::magnitude(xr, xi);
      in = mag_in;
    } else {
      if (!ri_in.defined()) {
        const Var p[] = {xr, xi};
        ri_in = ops::concat_channels(p);
      }
      in = ri_in;
    }
    enc[k] = encoders_[k](in);
    if (trace) trace->encoder_out.push_back(enc[k].shape());
  }

  std::vector<Var> x(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    std::vector<Var> parts{enc[b]};
    if (nb == 2) parts.push_back(enc[1 - b]);
    x[b] = branches_[b]->merge(parts);
  }

  std::vector<std::vector<Var>> collected(nb);
  for (std::size_t i = 0; i < cfg_.blocks; ++i) {
    std::vector<Var> y(nb);
    for (std::size_t b = 0; b < nb; ++b) {
      const nn::TfCore& core = cores_[cores_.size() == 1 ? 0 : b][i];
      if (trace && i == 0 && b == 0) {
        if (core.time) trace->time_fold.push_back(core.time->fold(x[b]).shape());
        if (core.freq) trace->freq_fold.push_back(core.freq->fold(x[b]).shape());
      }
      y[b] = nn::tf_block(core, branches_[b]->heads[i], x[b]);
    }
    if (!gates_.empty()) {
      if (cfg_.collect_before_interaction)
        for (std::size_t b = 0; b < nb; ++b) collected[b].push_back(y[b]);
      const Var z0 = interact(gates_[i][0], y[0], y[1]);
      const Var z1 = interact(gates_[i][1], y[1], y[0]);
      y = {z0, z1};
      if (!cfg_.collect_before_interaction)
        for (std::size_t b = 0; b < nb; ++b) collected[b].push_back(y[b]);
    } else {
      for (std::size_t b = 0; b < nb; ++b) collected[b].push_back(y[b]);
    }
    x = y;
  }

  std::vector<Var> feat(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    const Branch& br = *branches_[b];
    Var f = x[b];
    if (br.aggregate) {
      Tensor w;
      f = (*br.aggregate)(collected[b], trace ? &w : nullptr);
      if (trace) trace->aggregate_weights.push_back(std::move(w));
    }
    if (br.out_proj) {
      const Var one[] = {f};
      f = (*br.out_proj)(one);
    }
    feat[b] = f;
  }

  EnhancementOutput out;
  const Shape plane = s;
  auto constant = [&](double v) { return Var(Tensor(plane, v)); };
  std::vector<std::pair<Var, Var>> ri(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    const Branch& br = *branches_[b];
    if (br.mask) {
      out.mask = probe && probe->mask ? constant(*probe->mask) : (*br.mask)(feat[b]);
      if (trace) trace->decoder_out.push_back(out.mask.shape());
    } else {
      const bool fixed = probe && probe->residual;
      ri[b] = {fixed ? constant(*probe->residual) : (*br.real)(feat[b]),
               fixed ? constant(*probe->residual) : (*br.imag)(feat[b])};
      if (trace) {
        trace->decoder_out.push_back(ri[b].first.shape());
        trace->decoder_out.push_back(ri[b].second.shape());
      }
    }
  }

  const double eps = cfg_.phase_eps;
  switch (cfg_.variant) {
    case Variant::kMebOnly:
    case Variant::kDbt:
    case Variant::kDbtSpade: {
      if (!mag_in.defined()) mag_in = ops::magnitude(xr, xi);
      const Var est_mag = ops::mul(mag_in, out.mask);
      out.meb_real = ops::mul_const(est_mag, ops::phase_cos(xr, xi, eps).value());
      out.meb_imag = ops::mul_const(est_mag, ops::phase_sin(xr, xi, eps).value());
      if (cfg_.variant == Variant::kMebOnly) {
        out.final_real = out.meb_real;
        out.final_imag = out.meb_imag;
        break;
      }
      out.cpb_real = ri[1].first;
      out.cpb_imag = ri[1].second;
      if (cfg_.variant == Variant::kDbt) {
        out.final_real = ops::add(out.meb_real, out.cpb_real);
        out.final_imag = ops::add(out.meb_imag, out.cpb_imag);
      } else {
        // Average of the two magnitude estimates, with the phase of the
        // complex branch (cos/sin of atan2(imag, real)).
        const Var avg = ops::scale(
            ops::add(est_mag, ops::magnitude(out.cpb_real, out.cpb_imag)), 0.5);
        out.final_real = ops::mul(avg, ops::phase_cos(out.cpb_real, out.cpb_imag, eps));
        out.final_imag = ops::mul(avg, ops::phase_sin(out.cpb_real, out.cpb_imag, eps));
      }
      break;
    }
    case Variant::kCpbOnly:
      out.cpb_real = out.final_real = ri[0].first;
      out.cpb_imag = out.final_imag = ri[0].second;
      break;
    case Variant::kDcb:
      out.meb_real = ri[0].first;
      out.meb_imag = ri[0].second;
      out.cpb_real = ri[1].first;
      out.cpb_imag = ri[1].second;
      out.final_real = ops::add(out.meb_real, out.cpb_real);
      out.final_imag = ops::add(out.meb_imag, out.cpb_imag);
      break;
  }
  return out;
}

EnhancementOutput DbtModel::forward(const Spectrogram& noisy) const {
  require(noisy.compressed, ErrorCode::kInvalidArgument,
          "model input must be a compressed spectrogram");
  require(std::abs(noisy.exponent - cfg_.compression) < 1e-12,
          ErrorCode::kInvalidArgument,
          "spectrogram compression exponent does not match the model");
  require(noisy.real.rank() == 2 && noisy.bins() == cfg_.bins,
          ErrorCode::kShapeMismatch,
          "spectrogram has " + std::to_string(noisy.real.rank() == 2 ? noisy.bins() : 0) +
              " bins, model expects " + std::to_string(cfg_.bins));
  const Shape s{1, 1, noisy.frames(), noisy.bins()};
  return forward(noisy.real.reshaped(s), noisy.imag.reshaped(s));
}

std::size_t count_params(const DbtModel& m) { return m.params().scalar_count(); }

double count_macs(const ModelConfig& cfg, double seconds,
                  const StftConfig& stft_cfg) {
  cfg.validate();
  const auto samples =
      static_cast<std::size_t>(std::llround(seconds * stft_cfg.sample_rate));
  const double T = static_cast<double>(stft_cfg.frames(samples));
  const auto plan = nn::frequency_plan(cfg.bins, cfg.depth);
  const double C = static_cast<double>(cfg.channels);
  const double A = static_cast<double>(cfg.attention_dim);
  const double F0 = static_cast<double>(cfg.bins);
  const double Fd = static_cast<double>(plan.back());
  const double layers = static_cast<double>(cfg.dilations.size());

  const double dense_per_bin = 6.0 * C * C * layers * (layers + 1.0) / 2.0;
  auto encoder = [&](double planes) {
    double m = planes * C * T * F0 + dense_per_bin * T * F0;
    for (std::size_t j = 1; j < plan.size(); ++j)
      m += 3.0 * C * C * T * static_cast<double>(plan[j]);
    return m;
  };
  const double trunk = [&] {
    double m = dense_per_bin * T * Fd;
    for (std::size_t j = plan.size() - 1; j >= 1; --j)
      m += 6.0 * C * C * T * static_cast<double>(plan[j]);
    return m + C * T * F0;
  }();
  auto transformer = [&](double seqs, double len) {
    const double tokens = seqs * len, H = 2.0 * A;
    return 4.0 * A * A * tokens + 2.0 * seqs * len * len * A +
           2.0 * tokens * 3.0 * H * (A + H) + tokens * 2.0 * H * A;
  };
  const double core = (cfg.use_time ? transformer(Fd, T) : 0.0) +
                      (cfg.use_freq ? transformer(T, Fd) : 0.0);

  const auto planes = encoder_planes(cfg.variant);
  const double nb = static_cast<double>(planes.size());
  double total = 0.0;
  for (std::size_t p : planes) total += encoder(static_cast<double>(p));
  total += nb * (nb * C) * A * T * Fd;                      // merges
  total += nb * static_cast<double>(cfg.blocks) * core;      // transformers
  total += nb * static_cast<double>(cfg.blocks) * A * A * T * Fd;  // projections
  if (planes.size() == 2 && cfg.interaction)
    total += 2.0 * static_cast<double>(cfg.blocks) * 2.0 * A * A * T * Fd;
  if (cfg.use_aggregate) total += nb * static_cast<double>(cfg.blocks) * A;
  if (cfg.attention_dim != cfg.channels) total += nb * A * C * T * Fd;
  for (std::size_t b = 0; b < planes.size(); ++b)
    total += masks(cfg.variant, b) ? trunk + 3.0 * T * F0 : 2.0 * trunk;
  return total;
}

double traced_macs(const DbtModel& m, double seconds,
                   const StftConfig& stft_cfg) {
  const auto samples =
      static_cast<std::size_t>(std::llround(seconds * stft_cfg.sample_rate));
  const Shape s{1, 1, stft_cfg.frames(samples), m.config().bins};
  Tensor re(s, 0.1), im(s, -0.1);
  NoGradGuard ng;
  MacCounter counter;
  m.forward(re, im);
  return counter.total();
}

}  // namespace dbt
