// Copyright 2026 The WaLi Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Full model assembly: an encoder ladder that halves the frequency axis at
// every step, gated attention blocks at configurable rungs, a conformer over
// the bottleneck sequence, skip blocks feeding a mirrored decoder ladder, and
// a 1x1 head back to one complex channel. Also the waveform-level inference
// wrapper (upsample, analyze, enhance, synthesize).

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "wali/attention.hpp"
#include "wali/dsp.hpp"
#include "wali/errors.hpp"
#include "wali/layers.hpp"
#include "wali/resample.hpp"
#include "wali/tape.hpp"

namespace wali {

struct NetworkConfig {
  int64_t depth = 8;
  std::vector<int64_t> channels = {16, 32, 32, 64, 64, 128, 128, 256};
  StftConfig stft;  // n_fft 512, hop 128: 256 usable bins, 251 frames per clip
  // d_model/d_ff of 0 resolve to the bottleneck geometry. The bottleneck of
  // the default ladder is one bin wide, so the stock conformer runs d_model 1
  // with a single head; attention still mixes along time.
  ConformerConfig conformer{0, 1, 0, 7, 2};
  CgabConfig cgab{5, 0, 0};  // fixed extents always derive from the geometry
  std::vector<int64_t> cgab_placements = {1, 7};
  bool use_cgab = true;
  double clip_seconds = 4.0;
  int64_t sample_rate = 8000;

  int64_t clip_samples() const { return std::llround(clip_seconds * double(sample_rate)); }
  // The Nyquist bin is dropped in front of the network and re-appended as
  // zero at synthesis, leaving a power-of-two bin count for the ladder.
  int64_t bins() const { return int64_t(stft.n_fft) / 2; }
  int64_t frames() const { return stft_frame_count(clip_samples(), stft); }
  int64_t bottleneck_bins() const { return bins() >> depth; }

  // Copy with the conformer extents filled in from the geometry; validates.
  NetworkConfig resolved() const {
    NetworkConfig c = *this;
    c.validate_ladder();
    if (c.conformer.d_model == 0) c.conformer.d_model = c.bottleneck_bins();
    if (c.conformer.d_model != c.bottleneck_bins()) {
      throw ConfigError("network: conformer d_model " + std::to_string(c.conformer.d_model) +
                        " does not match the bottleneck width " +
                        std::to_string(c.bottleneck_bins()));
    }
    if (c.conformer.d_ff == 0) c.conformer.d_ff = 2 * c.conformer.d_model;
    c.conformer.validate();
    c.cgab.fixed_F = 0;
    c.cgab.fixed_T = 0;
    return c;
  }

 private:
  void validate_ladder() const {
    if (depth < 1 || depth > 32) {
      throw ConfigError("network: depth must be in [1, 32], got " + std::to_string(depth));
    }
    if (channels.size() != size_t(depth)) {
      throw ConfigError("network: need one channel count per level, got " +
                        std::to_string(channels.size()) + " for depth " + std::to_string(depth));
    }
    for (int64_t c : channels) {
      if (c < 1) throw ConfigError("network: channel counts must be positive");
    }
    validate_stft(stft, "network");
    if (bins() % (int64_t(1) << depth) != 0 || bottleneck_bins() < 1) {
      throw ConfigError("network: " + std::to_string(bins()) + " bins do not support " +
                        std::to_string(depth) + " halvings");
    }
    if (sample_rate < 1 || !(clip_seconds > 0) || clip_samples() < stft.hop) {
      throw ConfigError("network: clip geometry is degenerate");
    }
    int64_t prev = 0;
    for (int64_t p : cgab_placements) {
      if (p < 1 || p > depth) {
        throw ConfigError("network: attention placement " + std::to_string(p) +
                          " outside [1, " + std::to_string(depth) + "]");
      }
      if (p <= prev) throw ConfigError("network: attention placements must be strictly increasing");
      prev = p;
      if (use_cgab && cgab.c_attn > channels[size_t(p - 1)]) {
        throw ConfigError("network: c_attn " + std::to_string(cgab.c_attn) +
                          " exceeds the " + std::to_string(channels[size_t(p - 1)]) +
                          " channels at placement " + std::to_string(p));
      }
    }
  }
};

template <typename T>
class WaLiNet {
 public:
  WaLiNet(const NetworkConfig& cfg, uint64_t seed)
      : cfg_(cfg.resolved()),
        head_w_("head.w", ComplexTensor<T>(Shape{1, cfg_.channels.front(), 1, 1})),
        head_b_("head.b", ComplexTensor<T>(Shape{1})) {
    std::mt19937_64 rng(seed);
    const int64_t depth = cfg_.depth;
    encoders_.reserve(size_t(depth));
    skips_.reserve(size_t(depth));
    decoders_.reserve(size_t(depth));
    cgab_at_.assign(size_t(depth) + 1, -1);

    int64_t cin = 1;
    for (int64_t n = 1; n <= depth; ++n) {
      const int64_t cout = cfg_.channels[size_t(n - 1)];
      encoders_.emplace_back("enc" + std::to_string(n), cin, cout, rng);
      if (cgab_placed(n)) {
        cgab_at_[size_t(n)] = int64_t(cgabs_.size());
        CgabConfig gc{cfg_.cgab.c_attn, cfg_.bins() >> n, cfg_.frames()};
        cgabs_.emplace_back("cgab" + std::to_string(n), cout, gc, rng);
      }
      cin = cout;
    }
    for (int64_t n = 1; n <= depth; ++n) {
      skips_.emplace_back("skip" + std::to_string(n), cfg_.channels[size_t(n - 1)], rng);
    }
    conformer_.emplace("bottleneck", cfg_.conformer, rng);
    for (int64_t n = 1; n <= depth; ++n) {
      const int64_t cout = n < depth ? cfg_.channels[size_t(depth - 1 - n)] : cfg_.channels[0];
      const int64_t from_above = n == 1 ? cfg_.channels.back() : dec_out_[size_t(n - 2)];
      const int64_t cin_total = from_above + cfg_.channels[size_t(depth - n)];
      decoders_.emplace_back("dec" + std::to_string(n), cin_total, cout, rng);
      dec_out_.push_back(cout);
    }
    init_complex_uniform(head_w_.value, cfg_.channels.front(), rng);
  }

  WaLiNet(const WaLiNet&) = delete;
  WaLiNet& operator=(const WaLiNet&) = delete;

  // [B, 1, F, T] -> [B, 1, F, T]
  Var forward(Tape<T>& tape, Var x) {
    {
      const ComplexTensor<T>& xv = tape.val(x);
      if (xv.ndim() != 4 || xv.dim(1) != 1) {
        throw std::invalid_argument("network: input must be [B,1,F,T], got " +
                                    shape_str(xv.shape));
      }
      if (xv.dim(2) != cfg_.bins()) {
        throw std::invalid_argument("network: expected " + std::to_string(cfg_.bins()) +
                                    " bins, got " + std::to_string(xv.dim(2)));
      }
      if (!cgabs_.empty() && xv.dim(3) != cfg_.frames()) {
        throw std::invalid_argument("network: attention blocks are built for " +
                                    std::to_string(cfg_.frames()) + " frames, got " +
                                    std::to_string(xv.dim(3)));
      }
    }
    const int64_t depth = cfg_.depth;
    std::vector<Var> sk(size_t(depth), Var{});
    Var cur = x;
    for (int64_t n = 1; n <= depth; ++n) {
      cur = encoders_[size_t(n - 1)].forward(tape, cur);
      const int64_t g = cgab_at_[size_t(n)];
      if (g >= 0) cur = cgabs_[size_t(g)].forward(tape, cur);
      sk[size_t(n - 1)] = skips_[size_t(n - 1)].forward(tape, cur);
    }
    cur = conformer_block(tape, cur, *conformer_);
    for (int64_t n = 1; n <= depth; ++n) {
      cur = decoders_[size_t(n - 1)].forward(tape, cur, sk[size_t(depth - n)]);
    }
    return c_conv2d(tape, cur, tape.param(head_w_), tape.param(head_b_),
                    Conv2dGeom{1, 1, 0, 0, 0, 0});
  }

  void set_training(bool on) {
    training_ = on;
    for (auto& e : encoders_) e.cbn.set_training(on);
    for (auto& s : skips_) s.cbn.set_training(on);
    for (auto& d : decoders_) d.cbn.set_training(on);
    for (auto& g : cgabs_) g.set_training(on);
    conformer_->set_training(on);
  }
  bool training() const { return training_; }

  std::vector<Parameter<T>*> params() {
    std::vector<Parameter<T>*> out;
    for (int64_t n = 1; n <= cfg_.depth; ++n) {
      append(out, encoders_[size_t(n - 1)].params());
      const int64_t g = cgab_at_[size_t(n)];
      if (g >= 0) append(out, cgabs_[size_t(g)].params());
    }
    for (auto& s : skips_) append(out, s.params());
    append(out, conformer_->params());
    for (auto& d : decoders_) append(out, d.params());
    out.push_back(&head_w_);
    out.push_back(&head_b_);
    return out;
  }

  std::vector<CbnModule<T>*> norms() {
    std::vector<CbnModule<T>*> out;
    for (int64_t n = 1; n <= cfg_.depth; ++n) {
      out.push_back(&encoders_[size_t(n - 1)].cbn);
      const int64_t g = cgab_at_[size_t(n)];
      if (g >= 0) {
        for (auto* m : cgabs_[size_t(g)].norms()) out.push_back(m);
      }
    }
    for (auto& s : skips_) out.push_back(&s.cbn);
    for (auto* m : conformer_->norms()) out.push_back(m);
    for (auto& d : decoders_) out.push_back(&d.cbn);
    return out;
  }

  // Complex elements across all learnable tensors.
  int64_t param_count() {
    int64_t total = 0;
    for (auto* p : params()) total += p->value.numel();
    return total;
  }

  const NetworkConfig& config() const { return cfg_; }
  size_t encoder_count() const { return encoders_.size(); }
  size_t decoder_count() const { return decoders_.size(); }
  size_t skip_count() const { return skips_.size(); }
  size_t cgab_count() const { return cgabs_.size(); }
  size_t conformer_layer_count() const { return conformer_->config().n_layers; }

 private:
  bool cgab_placed(int64_t level) const {
    if (!cfg_.use_cgab) return false;
    return std::find(cfg_.cgab_placements.begin(), cfg_.cgab_placements.end(), level) !=
           cfg_.cgab_placements.end();
  }

  static void append(std::vector<Parameter<T>*>& out, std::vector<Parameter<T>*> in) {
    out.insert(out.end(), in.begin(), in.end());
  }

  NetworkConfig cfg_;
  bool training_ = true;
  std::vector<EncoderBlock<T>> encoders_;
  std::vector<CgabBlock<T>> cgabs_;
  std::vector<int64_t> cgab_at_;  // level -> index into cgabs_, -1 if absent
  std::vector<SkipBlock<T>> skips_;
  std::optional<ConformerStack<T>> conformer_;
  std::vector<DecoderBlock<T>> decoders_;
  std::vector<int64_t> dec_out_;
  Parameter<T> head_w_, head_b_;
};

namespace detail {

// One fixed-length window through the spectrogram pipeline: analyze, drop the
// Nyquist row, enhance, restore the row as zeros, synthesize.
template <typename T>
std::vector<T> enhance_window(WaLiNet<T>& net, const std::vector<T>& window) {
  const NetworkConfig& cfg = net.config();
  const ComplexTensor<T> spec = stft(window, cfg.stft);
  const int64_t F = cfg.bins();
  const int64_t frames = spec.dim(1);
  ComplexTensor<T> trimmed(Shape{1, 1, F, frames});
  std::copy_n(spec.re.begin(), size_t(F * frames), trimmed.re.begin());
  std::copy_n(spec.im.begin(), size_t(F * frames), trimmed.im.begin());

  Tape<T> tape;
  tape.set_grads_enabled(false);
  Var out = net.forward(tape, tape.leaf(std::move(trimmed), false));
  const ComplexTensor<T>& ov = tape.val(out);

  ComplexTensor<T> full(Shape{F + 1, frames});
  std::copy_n(ov.re.begin(), size_t(F * frames), full.re.begin());
  std::copy_n(ov.im.begin(), size_t(F * frames), full.im.begin());
  return istft(full, cfg.stft, int64_t(window.size()));
}

}  // namespace detail

// Waveform-level inference: sinc-upsample the sensor capture to the model
// rate, enhance in fixed-length windows (50% overlap, triangular cross-fade
// for inputs longer than one clip), and return a waveform of the input
// duration with peak forced to at most 1. Switches the net to eval mode.
template <typename T>
std::vector<T> reconstruct(WaLiNet<T>& net, const std::vector<T>& x, int64_t input_rate) {
  const NetworkConfig& cfg = net.config();
  detail::rate_ratio(cfg.sample_rate, input_rate, "reconstruct");
  std::vector<T> up = sinc_upsample(x, input_rate, cfg.sample_rate);
  if (up.empty()) return up;
  net.set_training(false);

  const int64_t W = cfg.clip_samples();
  const int64_t n = int64_t(up.size());
  std::vector<T> out;
  if (n <= W) {
    std::vector<T> window = up;
    window.resize(size_t(W), T(0));
    std::vector<T> y = detail::enhance_window(net, window);
    out.assign(y.begin(), y.begin() + n);
  } else {
    const int64_t hop = std::max<int64_t>(1, W / 2);
    const int64_t n_win = 1 + (n - W + hop - 1) / hop;
    const int64_t padded = (n_win - 1) * hop + W;
    std::vector<T> src = up;
    src.resize(size_t(padded), T(0));
    std::vector<double> acc(size_t(padded), 0.0), wsum(size_t(padded), 0.0);
    std::vector<T> window(size_t(W), T(0));
    for (int64_t wi = 0; wi < n_win; ++wi) {
      const int64_t start = wi * hop;
      std::copy_n(src.begin() + start, size_t(W), window.begin());
      std::vector<T> y = detail::enhance_window(net, window);
      for (int64_t i = 0; i < W; ++i) {
        const double weight = double(std::min<int64_t>(i + 1, W - i));
        acc[size_t(start + i)] += weight * double(y[size_t(i)]);
        wsum[size_t(start + i)] += weight;
      }
    }
    out.resize(size_t(n));
    for (int64_t i = 0; i < n; ++i) out[size_t(i)] = T(acc[size_t(i)] / wsum[size_t(i)]);
  }

  T peak = T(0);
  for (T v : out) peak = std::max(peak, std::abs(v));
  if (peak > T(1)) {
    for (T& v : out) v /= peak;
  }
  return out;
}

}  // namespace wali
