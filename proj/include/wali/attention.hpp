// Copyright 2026 The WaLi Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Complex multi-head self-attention, the conformer bottleneck stack, and the
// global attention block.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "wali/conv.hpp"
#include "wali/errors.hpp"
#include "wali/layers.hpp"
#include "wali/ops.hpp"
#include "wali/tape.hpp"
#include "wali/tensor.hpp"

namespace wali {

struct ConformerConfig {
  int64_t d_model = 0;
  int64_t n_heads = 4;
  int64_t d_ff = 0;  // 0 resolves to 2 * d_model at construction
  int64_t conv_kernel = 7;
  int64_t n_layers = 2;

  void validate() const {
    if (d_model < 1 || n_heads < 1 || conv_kernel < 1 || n_layers < 1 || d_ff < 0) {
      throw ConfigError("conformer: all counts must be >= 1");
    }
    if (d_model % n_heads != 0) {
      throw ConfigError("conformer: d_model " + std::to_string(d_model) +
                        " not divisible by n_heads " + std::to_string(n_heads));
    }
    if (conv_kernel % 2 == 0) {
      throw ConfigError("conformer: conv_kernel must be odd for same-length output");
    }
  }
};

namespace detail {

// Scaled dot-product attention over projected q, k, v [G, S, d]. Per head,
// logits are Re(Q K^H)/sqrt(d_k); the softmax weights are real. If
// attn_capture is non-null it receives the weights as [G*H, S, S] in the real
// plane (forward values only).
template <typename T>
Var mhsa_core(Tape<T>& tape, Var q, Var k, Var v, int64_t n_heads,
              ComplexTensor<T>* attn_capture = nullptr) {
  const ComplexTensor<T>& qv = tape.val(q);
  const ComplexTensor<T>& kv = tape.val(k);
  const ComplexTensor<T>& vv = tape.val(v);
  require_ndim(qv, 3, "mhsa_core q");
  if (qv.shape != kv.shape || qv.shape != vv.shape) {
    throw std::invalid_argument("mhsa_core: q/k/v shapes differ");
  }
  const int64_t G = qv.dim(0), S = qv.dim(1), d = qv.dim(2);
  if (n_heads < 1 || d % n_heads != 0) {
    throw std::invalid_argument("mhsa_core: d_model " + std::to_string(d) +
                                " not divisible by n_heads " + std::to_string(n_heads));
  }
  const int64_t H = n_heads, dk = d / H;
  const double scale = 1.0 / std::sqrt(double(dk));

  const size_t uSS = size_t(S * S);
  std::vector<double> logits(uSS, 0.0), p(uSS, 0.0);
  if (attn_capture) *attn_capture = ComplexTensor<T>(Shape{G * H, S, S});

  // row-softmax of Re(Q K^H)/sqrt(dk) for one (g, h) slice
  auto softmax_slice = [S, dk, d, scale](const ComplexTensor<T>& qt, const ComplexTensor<T>& kt,
                                         int64_t g, int64_t h, std::vector<double>& lg,
                                         std::vector<double>& pw) {
    for (int64_t i = 0; i < S; ++i) {
      for (int64_t j = 0; j < S; ++j) {
        double acc = 0;
        const size_t qb = size_t((g * S + i) * d + h * dk);
        const size_t kb = size_t((g * S + j) * d + h * dk);
        for (int64_t m = 0; m < dk; ++m) {
          acc += double(qt.re[qb + size_t(m)]) * double(kt.re[kb + size_t(m)]) +
                 double(qt.im[qb + size_t(m)]) * double(kt.im[kb + size_t(m)]);
        }
        lg[size_t(i * S + j)] = acc * scale;
      }
    }
    for (int64_t i = 0; i < S; ++i) {
      double mx = lg[size_t(i * S)];
      for (int64_t j = 1; j < S; ++j) mx = std::max(mx, lg[size_t(i * S + j)]);
      double sum = 0;
      for (int64_t j = 0; j < S; ++j) {
        const double e = std::exp(lg[size_t(i * S + j)] - mx);
        pw[size_t(i * S + j)] = e;
        sum += e;
      }
      for (int64_t j = 0; j < S; ++j) pw[size_t(i * S + j)] /= sum;
    }
  };

  ComplexTensor<T> out(qv.shape);
  for (int64_t g = 0; g < G; ++g) {
    for (int64_t h = 0; h < H; ++h) {
      softmax_slice(qv, kv, g, h, logits, p);
      if (attn_capture) {
        for (size_t i = 0; i < uSS; ++i) {
          attn_capture->re[size_t((g * H + h) * S * S) + i] = T(p[i]);
        }
      }
      for (int64_t i = 0; i < S; ++i) {
        const size_t ob = size_t((g * S + i) * d + h * dk);
        for (int64_t m = 0; m < dk; ++m) {
          double ar = 0, ai = 0;
          for (int64_t j = 0; j < S; ++j) {
            const size_t vb = size_t((g * S + j) * d + h * dk + m);
            ar += p[size_t(i * S + j)] * double(vv.re[vb]);
            ai += p[size_t(i * S + j)] * double(vv.im[vb]);
          }
          out.re[ob + size_t(m)] = T(ar);
          out.im[ob + size_t(m)] = T(ai);
        }
      }
    }
  }

  auto bw = [q, k, v, G, S, d, H, dk, scale, softmax_slice](Tape<T>& t, int32_t self) {
    const ComplexTensor<T>& go = t.grad(Var{self});
    const ComplexTensor<T>& qt = t.val(q);
    const ComplexTensor<T>& kt = t.val(k);
    const ComplexTensor<T>& vt = t.val(v);
    const bool nq = t.needs(q), nk = t.needs(k), nv = t.needs(v);
    const size_t uSS = size_t(S * S);
    std::vector<double> lg(uSS, 0.0), pw(uSS, 0.0), dp(uSS, 0.0), dl(uSS, 0.0);
    for (int64_t g = 0; g < G; ++g) {
      for (int64_t h = 0; h < H; ++h) {
        softmax_slice(qt, kt, g, h, lg, pw);
        if (nv) {
          ComplexTensor<T>& gv = t.grad_mut(v);
          for (int64_t j = 0; j < S; ++j) {
            for (int64_t m = 0; m < dk; ++m) {
              double sr = 0, si = 0;
              for (int64_t i = 0; i < S; ++i) {
                const size_t gb = size_t((g * S + i) * d + h * dk + m);
                sr += pw[size_t(i * S + j)] * double(go.re[gb]);
                si += pw[size_t(i * S + j)] * double(go.im[gb]);
              }
              const size_t vb = size_t((g * S + j) * d + h * dk + m);
              gv.re[vb] += T(sr);
              gv.im[vb] += T(si);
            }
          }
        }
        if (!nq && !nk) continue;
        // dP then the softmax Jacobian, rows independently
        for (int64_t i = 0; i < S; ++i) {
          for (int64_t j = 0; j < S; ++j) {
            double acc = 0;
            const size_t gb = size_t((g * S + i) * d + h * dk);
            const size_t vb = size_t((g * S + j) * d + h * dk);
            for (int64_t m = 0; m < dk; ++m) {
              acc += double(go.re[gb + size_t(m)]) * double(vt.re[vb + size_t(m)]) +
                     double(go.im[gb + size_t(m)]) * double(vt.im[vb + size_t(m)]);
            }
            dp[size_t(i * S + j)] = acc;
          }
          double dot = 0;
          for (int64_t j = 0; j < S; ++j) dot += dp[size_t(i * S + j)] * pw[size_t(i * S + j)];
          for (int64_t j = 0; j < S; ++j) {
            dl[size_t(i * S + j)] = pw[size_t(i * S + j)] * (dp[size_t(i * S + j)] - dot);
          }
        }
        if (nq) {
          ComplexTensor<T>& gq = t.grad_mut(q);
          for (int64_t i = 0; i < S; ++i) {
            for (int64_t m = 0; m < dk; ++m) {
              double sr = 0, si = 0;
              for (int64_t j = 0; j < S; ++j) {
                const size_t kb = size_t((g * S + j) * d + h * dk + m);
                sr += dl[size_t(i * S + j)] * double(kt.re[kb]);
                si += dl[size_t(i * S + j)] * double(kt.im[kb]);
              }
              const size_t qb = size_t((g * S + i) * d + h * dk + m);
              gq.re[qb] += T(scale * sr);
              gq.im[qb] += T(scale * si);
            }
          }
        }
        if (nk) {
          ComplexTensor<T>& gk = t.grad_mut(k);
          for (int64_t j = 0; j < S; ++j) {
            for (int64_t m = 0; m < dk; ++m) {
              double sr = 0, si = 0;
              for (int64_t i = 0; i < S; ++i) {
                const size_t qb = size_t((g * S + i) * d + h * dk + m);
                sr += dl[size_t(i * S + j)] * double(qt.re[qb]);
                si += dl[size_t(i * S + j)] * double(qt.im[qb]);
              }
              const size_t kb = size_t((g * S + j) * d + h * dk + m);
              gk.re[kb] += T(scale * sr);
              gk.im[kb] += T(scale * si);
            }
          }
        }
      }
    }
  };
  return tape.op(std::move(out), {q, k, v}, bw);
}

}  // namespace detail

// Self-attention with learned complex projections. Accepts [G, S, d] or a
// single sequence [S, d].
template <typename T>
class MhsaModule {
 public:
  MhsaModule() = default;
  MhsaModule(const std::string& name, int64_t d_model, int64_t n_heads, std::mt19937_64& g)
      : d_model_(d_model),
        n_heads_(n_heads),
        wq_(name + ".wq", ComplexTensor<T>(Shape{d_model, d_model})),
        bq_(name + ".bq", ComplexTensor<T>(Shape{d_model})),
        wk_(name + ".wk", ComplexTensor<T>(Shape{d_model, d_model})),
        bk_(name + ".bk", ComplexTensor<T>(Shape{d_model})),
        wv_(name + ".wv", ComplexTensor<T>(Shape{d_model, d_model})),
        bv_(name + ".bv", ComplexTensor<T>(Shape{d_model})),
        wo_(name + ".wo", ComplexTensor<T>(Shape{d_model, d_model})),
        bo_(name + ".bo", ComplexTensor<T>(Shape{d_model})) {
    if (n_heads < 1 || d_model % n_heads != 0) {
      throw std::invalid_argument("mhsa: d_model " + std::to_string(d_model) +
                                  " not divisible by n_heads " + std::to_string(n_heads));
    }
    init_complex_uniform(wq_.value, d_model, g);
    init_complex_uniform(wk_.value, d_model, g);
    init_complex_uniform(wv_.value, d_model, g);
    init_complex_uniform(wo_.value, d_model, g);
  }

  Var forward(Tape<T>& tape, Var x, ComplexTensor<T>* attn_capture = nullptr) {
    const int nd = tape.val(x).ndim();
    if (nd == 2) {
      const int64_t S = tape.val(x).dim(0);
      Var batched = reshape(tape, x, Shape{1, S, d_model_});
      Var y = forward(tape, batched, attn_capture);
      return reshape(tape, y, Shape{S, d_model_});
    }
    require_ndim(tape.val(x), 3, "mhsa");
    Var qk = complex_linear(tape, x, tape.param(wq_), tape.param(bq_));
    Var kk = complex_linear(tape, x, tape.param(wk_), tape.param(bk_));
    Var vk = complex_linear(tape, x, tape.param(wv_), tape.param(bv_));
    Var att = detail::mhsa_core(tape, qk, kk, vk, n_heads_, attn_capture);
    return complex_linear(tape, att, tape.param(wo_), tape.param(bo_));
  }

  std::vector<Parameter<T>*> params() {
    return {&wq_, &bq_, &wk_, &bk_, &wv_, &bv_, &wo_, &bo_};
  }

  Parameter<T>& wv_param() { return wv_; }
  Parameter<T>& bv_param() { return bv_; }
  Parameter<T>& wo_param() { return wo_; }
  Parameter<T>& bo_param() { return bo_; }
  int64_t n_heads() const { return n_heads_; }

 private:
  int64_t d_model_ = 0, n_heads_ = 0;
  Parameter<T> wq_, bq_, wk_, bk_, wv_, bv_, wo_, bo_;
};

// Pointwise feed-forward: linear d -> d_ff, CReLU, linear d_ff -> d.
template <typename T>
struct FeedForward {
  Parameter<T> w1, b1, w2, b2;

  FeedForward() = default;
  FeedForward(const std::string& name, int64_t d, int64_t d_ff, std::mt19937_64& g)
      : w1(name + ".w1", ComplexTensor<T>(Shape{d, d_ff})),
        b1(name + ".b1", ComplexTensor<T>(Shape{d_ff})),
        w2(name + ".w2", ComplexTensor<T>(Shape{d_ff, d})),
        b2(name + ".b2", ComplexTensor<T>(Shape{d})) {
    init_complex_uniform(w1.value, d, g);
    init_complex_uniform(w2.value, d_ff, g);
  }

  Var forward(Tape<T>& tape, Var x) {
    Var h = crelu(tape, complex_linear(tape, x, tape.param(w1), tape.param(b1)));
    return complex_linear(tape, h, tape.param(w2), tape.param(b2));
  }

  std::vector<Parameter<T>*> params() { return {&w1, &b1, &w2, &b2}; }
};

// Two same-length 1-d convolutions along the sequence axis with CReLU between.
template <typename T>
struct ConvModule {
  Parameter<T> w1, b1, w2, b2;
  int64_t kernel = 0;

  ConvModule() = default;
  ConvModule(const std::string& name, int64_t d, int64_t k, std::mt19937_64& g)
      : w1(name + ".w1", ComplexTensor<T>(Shape{d, d, k})),
        b1(name + ".b1", ComplexTensor<T>(Shape{d})),
        w2(name + ".w2", ComplexTensor<T>(Shape{d, d, k})),
        b2(name + ".b2", ComplexTensor<T>(Shape{d})),
        kernel(k) {
    init_complex_uniform(w1.value, d * k, g);
    init_complex_uniform(w2.value, d * k, g);
  }

  Var forward(Tape<T>& tape, Var x) {  // [G, S, d]
    const int pad = int((kernel - 1) / 2);
    Var c = permute(tape, x, {0, 2, 1});  // [G, d, S]
    c = c_conv1d(tape, c, tape.param(w1), tape.param(b1), 1, pad);
    c = crelu(tape, c);
    c = c_conv1d(tape, c, tape.param(w2), tape.param(b2), 1, pad);
    return permute(tape, c, {0, 2, 1});
  }

  std::vector<Parameter<T>*> params() { return {&w1, &b1, &w2, &b2}; }
};

// One conformer layer over sequences [G, S, d]: each sub-module is applied as
// y = CBN(x + Sub(x)).
template <typename T>
class ConformerLayer {
 public:
  ConformerLayer() = default;
  ConformerLayer(const std::string& name, const ConformerConfig& cfg, std::mt19937_64& g)
      : ff1_(name + ".ff1", cfg.d_model, cfg.d_ff, g),
        mhsa_(name + ".mhsa", cfg.d_model, cfg.n_heads, g),
        conv_(name + ".conv", cfg.d_model, cfg.conv_kernel, g),
        ff2_(name + ".ff2", cfg.d_model, cfg.d_ff, g),
        cbn_ff1_(name + ".cbn_ff1", cfg.d_model),
        cbn_att_(name + ".cbn_att", cfg.d_model),
        cbn_conv_(name + ".cbn_conv", cfg.d_model),
        cbn_ff2_(name + ".cbn_ff2", cfg.d_model) {}

  Var forward(Tape<T>& tape, Var x) {
    Var h = cbn_ff1_.forward_seq(tape, c_add(tape, x, ff1_.forward(tape, x)));
    h = cbn_att_.forward_seq(tape, c_add(tape, h, mhsa_.forward(tape, h)));
    h = cbn_conv_.forward_seq(tape, c_add(tape, h, conv_.forward(tape, h)));
    return cbn_ff2_.forward_seq(tape, c_add(tape, h, ff2_.forward(tape, h)));
  }

  void set_training(bool on) {
    cbn_ff1_.set_training(on);
    cbn_att_.set_training(on);
    cbn_conv_.set_training(on);
    cbn_ff2_.set_training(on);
  }

  std::vector<Parameter<T>*> params() {
    std::vector<Parameter<T>*> out;
    for (auto* p : ff1_.params()) out.push_back(p);
    for (auto* p : mhsa_.params()) out.push_back(p);
    for (auto* p : conv_.params()) out.push_back(p);
    for (auto* p : ff2_.params()) out.push_back(p);
    for (auto& cbn : {&cbn_ff1_, &cbn_att_, &cbn_conv_, &cbn_ff2_}) {
      for (auto* p : cbn->params()) out.push_back(p);
    }
    return out;
  }

  std::vector<CbnModule<T>*> norms() { return {&cbn_ff1_, &cbn_att_, &cbn_conv_, &cbn_ff2_}; }

 private:
  FeedForward<T> ff1_;
  MhsaModule<T> mhsa_;
  ConvModule<T> conv_;
  FeedForward<T> ff2_;
  CbnModule<T> cbn_ff1_, cbn_att_, cbn_conv_, cbn_ff2_;
};

template <typename T>
class ConformerStack {
 public:
  ConformerStack() = default;
  ConformerStack(const std::string& name, ConformerConfig cfg, std::mt19937_64& g) : cfg_(cfg) {
    if (cfg_.d_ff == 0) cfg_.d_ff = 2 * cfg_.d_model;
    cfg_.validate();
    layers_.reserve(size_t(cfg_.n_layers));
    for (int64_t i = 0; i < cfg_.n_layers; ++i) {
      layers_.emplace_back(name + ".layer" + std::to_string(i), cfg_, g);
    }
  }

  Var forward(Tape<T>& tape, Var x) {
    for (auto& l : layers_) x = l.forward(tape, x);
    return x;
  }

  void set_training(bool on) {
    for (auto& l : layers_) l.set_training(on);
  }

  std::vector<Parameter<T>*> params() {
    std::vector<Parameter<T>*> out;
    for (auto& l : layers_) {
      for (auto* p : l.params()) out.push_back(p);
    }
    return out;
  }

  std::vector<CbnModule<T>*> norms() {
    std::vector<CbnModule<T>*> out;
    for (auto& l : layers_) {
      for (auto* n : l.norms()) out.push_back(n);
    }
    return out;
  }

  const ConformerConfig& config() const { return cfg_; }

 private:
  ConformerConfig cfg_;
  std::vector<ConformerLayer<T>> layers_;
};

// Bottleneck entry point: [B, C, F_b, T_b] processed per channel as sequences
// of length T_b with feature width F_b.
template <typename T>
Var conformer_block(Tape<T>& tape, Var x, ConformerStack<T>& stack) {
  const ComplexTensor<T>& xv = tape.val(x);
  require_ndim(xv, 4, "conformer_block");
  const int64_t B = xv.dim(0), C = xv.dim(1), F = xv.dim(2), Tt = xv.dim(3);
  if (F != stack.config().d_model) {
    throw std::invalid_argument("conformer_block: feature width " + std::to_string(F) +
                                " does not match d_model " + std::to_string(stack.config().d_model));
  }
  Var s = reshape(tape, permute(tape, x, {0, 1, 3, 2}), Shape{B * C, Tt, F});
  Var y = stack.forward(tape, s);
  Var out = permute(tape, reshape(tape, y, Shape{B, C, Tt, F}), {0, 1, 3, 2});
  const ComplexTensor<T>& ov = tape.val(out);
  for (size_t i = 0; i < ov.re.size(); ++i) {
    if (!std::isfinite(double(ov.re[i])) || !std::isfinite(double(ov.im[i]))) {
      throw std::runtime_error("conformer_block: non-finite activations");
    }
  }
  return out;
}

struct CgabConfig {
  int64_t c_attn = 5;
  int64_t fixed_F = 0;
  int64_t fixed_T = 0;
};

// Global attention over both spectrogram axes: per-axis attention maps
// modulate the input, a per-axis fully connected mixes along that axis, and a
// 1x1 projection fuses both branches with the input.
template <typename T>
class CgabBlock {
 public:
  CgabBlock() = default;
  CgabBlock(const std::string& name, int64_t channels, const CgabConfig& cfg, std::mt19937_64& g)
      : channels_(channels),
        cfg_(cfg),
        pre_f_w_(name + ".pre_f.w", ComplexTensor<T>(Shape{cfg.c_attn, channels, 1, 1})),
        pre_f_b_(name + ".pre_f.b", ComplexTensor<T>(Shape{cfg.c_attn})),
        cbn_f_(name + ".cbn_f", cfg.c_attn),
        attn_f_w_(name + ".attn_f.w", ComplexTensor<T>(Shape{1, cfg.c_attn, kAttnKernel})),
        attn_f_b_(name + ".attn_f.b", ComplexTensor<T>(Shape{1})),
        fc_f_w_(name + ".fc_f.w", ComplexTensor<T>(Shape{cfg.fixed_F, cfg.fixed_F})),
        fc_f_b_(name + ".fc_f.b", ComplexTensor<T>(Shape{cfg.fixed_F})),
        pre_t_w_(name + ".pre_t.w", ComplexTensor<T>(Shape{cfg.c_attn, channels, 1, 1})),
        pre_t_b_(name + ".pre_t.b", ComplexTensor<T>(Shape{cfg.c_attn})),
        cbn_t_(name + ".cbn_t", cfg.c_attn),
        attn_t_w_(name + ".attn_t.w", ComplexTensor<T>(Shape{1, cfg.c_attn, kAttnKernel})),
        attn_t_b_(name + ".attn_t.b", ComplexTensor<T>(Shape{1})),
        fc_t_w_(name + ".fc_t.w", ComplexTensor<T>(Shape{cfg.fixed_T, cfg.fixed_T})),
        fc_t_b_(name + ".fc_t.b", ComplexTensor<T>(Shape{cfg.fixed_T})),
        proj_w_(name + ".proj.w", ComplexTensor<T>(Shape{channels, 3 * channels, 1, 1})),
        proj_b_(name + ".proj.b", ComplexTensor<T>(Shape{channels})) {
    if (cfg.c_attn < 1 || cfg.c_attn > channels) {
      throw ConfigError("cgab: c_attn must be in [1, channels]");
    }
    if (cfg.fixed_F < 1 || cfg.fixed_T < 1) {
      throw ConfigError("cgab: fixed_F and fixed_T must be >= 1");
    }
    init_complex_uniform(pre_f_w_.value, channels, g);
    init_complex_uniform(attn_f_w_.value, cfg.c_attn * kAttnKernel, g);
    init_complex_uniform(fc_f_w_.value, cfg.fixed_F, g);
    init_complex_uniform(pre_t_w_.value, channels, g);
    init_complex_uniform(attn_t_w_.value, cfg.c_attn * kAttnKernel, g);
    init_complex_uniform(fc_t_w_.value, cfg.fixed_T, g);
    init_complex_uniform(proj_w_.value, 3 * channels, g);
  }

  Var forward(Tape<T>& tape, Var x) {
    const ComplexTensor<T>& xv = tape.val(x);
    require_ndim(xv, 4, "cgab_forward");
    const int64_t B = xv.dim(0), C = xv.dim(1), F = xv.dim(2), Tt = xv.dim(3);
    if (C != channels_ || F != cfg_.fixed_F || Tt != cfg_.fixed_T) {
      throw std::invalid_argument("cgab_forward: geometry " + shape_str(xv.shape) +
                                  " does not match the configured clip geometry");
    }
    const Conv2dGeom one{1, 1, 0, 0, 0, 0};
    constexpr int kPad = (kAttnKernel - 1) / 2;

    Var a_f{}, a_t{};
    if (force_unit_maps_) {
      ComplexTensor<T> ones_f(Shape{B, 1, F, Tt});
      for (auto& r : ones_f.re) r = T(1);
      a_f = tape.leaf(std::move(ones_f));
      ComplexTensor<T> ones_t(Shape{B, 1, F, Tt});
      for (auto& r : ones_t.re) r = T(1);
      a_t = tape.leaf(std::move(ones_t));
    } else {
      // frequency map: per time step, a 1-d conv over bins
      Var pf = crelu(tape, cbn_f_.forward(tape, c_conv2d(tape, x, tape.param(pre_f_w_),
                                                         tape.param(pre_f_b_), one)));
      Var pf_seq = reshape(tape, permute(tape, pf, {0, 3, 1, 2}), Shape{B * Tt, cfg_.c_attn, F});
      Var af = c_conv1d(tape, pf_seq, tape.param(attn_f_w_), tape.param(attn_f_b_), 1, kPad);
      a_f = permute(tape, reshape(tape, af, Shape{B, Tt, 1, F}), {0, 2, 3, 1});  // [B,1,F,T]

      // time map: per frequency bin, a 1-d conv over frames
      Var pt = crelu(tape, cbn_t_.forward(tape, c_conv2d(tape, x, tape.param(pre_t_w_),
                                                         tape.param(pre_t_b_), one)));
      Var pt_seq = reshape(tape, permute(tape, pt, {0, 2, 1, 3}), Shape{B * F, cfg_.c_attn, Tt});
      Var at = c_conv1d(tape, pt_seq, tape.param(attn_t_w_), tape.param(attn_t_b_), 1, kPad);
      a_t = permute(tape, reshape(tape, at, Shape{B, F, 1, Tt}), {0, 2, 1, 3});  // [B,1,F,T]
    }

    // attended branches, then the per-axis fully connected mixes
    Var branch_f = c_mul(tape, a_f, x);
    branch_f = permute(tape, branch_f, {0, 1, 3, 2});  // trailing axis F
    branch_f = complex_linear(tape, branch_f, tape.param(fc_f_w_), tape.param(fc_f_b_));
    branch_f = permute(tape, branch_f, {0, 1, 3, 2});

    Var branch_t = c_mul(tape, a_t, x);  // trailing axis is already T
    branch_t = complex_linear(tape, branch_t, tape.param(fc_t_w_), tape.param(fc_t_b_));

    Var cat = concat_channels<T>(tape, {branch_f, branch_t, x});
    return c_conv2d(tape, cat, tape.param(proj_w_), tape.param(proj_b_), one);
  }

  void set_training(bool on) {
    cbn_f_.set_training(on);
    cbn_t_.set_training(on);
  }

  // test hook: replaces both attention maps with 1+0j
  void set_force_unit_maps(bool on) { force_unit_maps_ = on; }

  std::vector<Parameter<T>*> params() {
    std::vector<Parameter<T>*> out{&pre_f_w_, &pre_f_b_};
    for (auto* p : cbn_f_.params()) out.push_back(p);
    out.push_back(&attn_f_w_);
    out.push_back(&attn_f_b_);
    out.push_back(&fc_f_w_);
    out.push_back(&fc_f_b_);
    out.push_back(&pre_t_w_);
    out.push_back(&pre_t_b_);
    for (auto* p : cbn_t_.params()) out.push_back(p);
    out.push_back(&attn_t_w_);
    out.push_back(&attn_t_b_);
    out.push_back(&fc_t_w_);
    out.push_back(&fc_t_b_);
    out.push_back(&proj_w_);
    out.push_back(&proj_b_);
    return out;
  }

  std::vector<CbnModule<T>*> norms() { return {&cbn_f_, &cbn_t_}; }

  Parameter<T>& fc_f_w() { return fc_f_w_; }
  Parameter<T>& fc_t_w() { return fc_t_w_; }
  Parameter<T>& proj_w() { return proj_w_; }
  Parameter<T>& proj_b() { return proj_b_; }

 private:
  static constexpr int64_t kAttnKernel = 9;

  int64_t channels_ = 0;
  CgabConfig cfg_;
  bool force_unit_maps_ = false;
  Parameter<T> pre_f_w_, pre_f_b_;
  CbnModule<T> cbn_f_;
  Parameter<T> attn_f_w_, attn_f_b_, fc_f_w_, fc_f_b_;
  Parameter<T> pre_t_w_, pre_t_b_;
  CbnModule<T> cbn_t_;
  Parameter<T> attn_t_w_, attn_t_b_, fc_t_w_, fc_t_b_;
  Parameter<T> proj_w_, proj_b_;
};

}  // namespace wali
