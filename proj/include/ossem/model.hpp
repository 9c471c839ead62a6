#pragma once

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ossem/rng.hpp"
#include "ossem/speaker.hpp"
#include "ossem/tensor.hpp"

namespace ossem {

// Pipeline site where the speaker mask multiplies the features.
enum class Placement { Pre, Mid1, Mid2, Last, Non };

inline Placement placement_from_string(const std::string& s) {
  if (s == "Pre") return Placement::Pre;
  if (s == "Mid1") return Placement::Mid1;
  if (s == "Mid2") return Placement::Mid2;
  if (s == "Last") return Placement::Last;
  if (s == "Non") return Placement::Non;
  throw std::invalid_argument("placement: unknown value '" + s +
                              "' (expected Pre, Mid1, Mid2, Last or Non)");
}

inline std::string placement_to_string(Placement p) {
  switch (p) {
    case Placement::Pre: return "Pre";
    case Placement::Mid1: return "Mid1";
    case Placement::Mid2: return "Mid2";
    case Placement::Last: return "Last";
    case Placement::Non: return "Non";
  }
  throw std::invalid_argument("placement: bad enum value");
}

// The four candidate multiplication sites along the enhancer.
enum class MaskSite { EncoderIn, AttentionIn, DecoderIn, DecoderOut };

constexpr bool mask_active_at(Placement p, MaskSite site) {
  switch (p) {
    case Placement::Pre: return site == MaskSite::EncoderIn;
    case Placement::Mid1: return site == MaskSite::AttentionIn;
    case Placement::Mid2: return site == MaskSite::DecoderIn;
    case Placement::Last: return site == MaskSite::DecoderOut;
    case Placement::Non: return false;
  }
  return false;
}

struct ModelConfig {
  int freq_bins = 257;   // F = frame_len/2 + 1
  int model_dim = 64;    // D, conv/attention width
  int blocks = 1;        // B attention blocks
  int heads = 4;
  int conv_kernel = 3;
  int ssm_hidden1 = 256;
  int ssm_hidden2 = 256;
  Placement placement = Placement::Pre;
  bool causal = true;

  // Mask width at the active site: spectrogram width for Pre/Last (and the
  // unused Non mask), model width for the two interior sites.
  int mask_width() const {
    return (placement == Placement::Mid1 || placement == Placement::Mid2) ? model_dim : freq_bins;
  }

  void validate() const {
    if (freq_bins < 2) throw std::invalid_argument("model: freq_bins must be >= 2");
    if (model_dim < 1) throw std::invalid_argument("model: model_dim must be >= 1");
    if (blocks < 1) throw std::invalid_argument("model: blocks must be >= 1");
    if (heads < 1 || model_dim % heads != 0)
      throw std::invalid_argument("model: heads must divide model_dim (" + std::to_string(heads) +
                                  " vs " + std::to_string(model_dim) + ")");
    if (conv_kernel < 1) throw std::invalid_argument("model: conv_kernel must be >= 1");
    if (ssm_hidden1 < 1 || ssm_hidden2 < 1)
      throw std::invalid_argument("model: ssm hidden widths must be >= 1");
  }

  bool operator==(const ModelConfig&) const = default;
};

enum class Partition { SSM, SE };

inline std::string partition_to_string(Partition p) { return p == Partition::SSM ? "SSM" : "SE"; }
inline Partition partition_from_string(const std::string& s) {
  if (s == "SSM") return Partition::SSM;
  if (s == "SE") return Partition::SE;
  throw std::invalid_argument("partition: unknown tag '" + s + "'");
}

template <class S>
struct AttnBlockParams {
  Tensor<S> wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor<S> ln1_g, ln1_b;
  Tensor<S> ff_w1, ff_b1, ff_w2, ff_b2;
  Tensor<S> ln2_g, ln2_b;
};

// All trainable weights. Names are stable identifiers used by checkpoints;
// every tensor carries exactly one partition tag.
template <class S>
struct ParamSet {
  ModelConfig cfg;

  // Speaker mask network: three dense layers, 192 -> H1 -> H2 -> mask_width.
  Tensor<S> ssm_w1, ssm_b1, ssm_w2, ssm_b2, ssm_w3, ssm_b3;

  // Enhancer: conv encoder (4 causal layers), attention blocks, dense decoder.
  std::vector<Tensor<S>> conv_w, conv_b;
  std::vector<AttnBlockParams<S>> block;
  Tensor<S> dec_w, dec_b;

  template <class Fn>
  void for_each(Fn&& fn) {
    fn("ssm.w1", Partition::SSM, ssm_w1);
    fn("ssm.b1", Partition::SSM, ssm_b1);
    fn("ssm.w2", Partition::SSM, ssm_w2);
    fn("ssm.b2", Partition::SSM, ssm_b2);
    fn("ssm.w3", Partition::SSM, ssm_w3);
    fn("ssm.b3", Partition::SSM, ssm_b3);
    for (size_t i = 0; i < conv_w.size(); ++i) {
      const std::string p = "se.conv" + std::to_string(i);
      fn(p + ".w", Partition::SE, conv_w[i]);
      fn(p + ".b", Partition::SE, conv_b[i]);
    }
    for (size_t i = 0; i < block.size(); ++i) {
      const std::string p = "se.block" + std::to_string(i);
      auto& b = block[i];
      fn(p + ".wq", Partition::SE, b.wq);
      fn(p + ".bq", Partition::SE, b.bq);
      fn(p + ".wk", Partition::SE, b.wk);
      fn(p + ".bk", Partition::SE, b.bk);
      fn(p + ".wv", Partition::SE, b.wv);
      fn(p + ".bv", Partition::SE, b.bv);
      fn(p + ".wo", Partition::SE, b.wo);
      fn(p + ".bo", Partition::SE, b.bo);
      fn(p + ".ln1_g", Partition::SE, b.ln1_g);
      fn(p + ".ln1_b", Partition::SE, b.ln1_b);
      fn(p + ".ff_w1", Partition::SE, b.ff_w1);
      fn(p + ".ff_b1", Partition::SE, b.ff_b1);
      fn(p + ".ff_w2", Partition::SE, b.ff_w2);
      fn(p + ".ff_b2", Partition::SE, b.ff_b2);
      fn(p + ".ln2_g", Partition::SE, b.ln2_g);
      fn(p + ".ln2_b", Partition::SE, b.ln2_b);
    }
    fn("se.dec.w", Partition::SE, dec_w);
    fn("se.dec.b", Partition::SE, dec_b);
  }

  template <class Fn>
  void for_each(Fn&& fn) const {
    const_cast<ParamSet*>(this)->for_each(
        [&](const std::string& n, Partition p, Tensor<S>& t) { fn(n, p, const_cast<const Tensor<S>&>(t)); });
  }

  std::vector<Tensor<S>> tensors(std::optional<Partition> only = std::nullopt) {
    std::vector<Tensor<S>> out;
    for_each([&](const std::string&, Partition p, Tensor<S>& t) {
      if (!only || p == *only) out.push_back(t);
    });
    return out;
  }

  void set_requires_grad(bool ssm, bool se) {
    for_each([&](const std::string&, Partition p, Tensor<S>& t) {
      t.set_requires_grad(p == Partition::SSM ? ssm : se);
    });
  }

  void clear_grads() {
    for_each([](const std::string&, Partition, Tensor<S>& t) { t.clear_grad(); });
  }

  ParamSet deep_copy() const {
    ParamSet out = *this;  // copies handles
    out.for_each([](const std::string&, Partition, Tensor<S>& t) { t = t.deep_copy(); });
    return out;
  }

  // Order- and shape-stable digest of one partition's raw values.
  uint64_t partition_hash(Partition part) const {
    uint64_t h = 0xCBF29CE484222325ull;
    for_each([&](const std::string& name, Partition p, const Tensor<S>& t) {
      if (p != part) return;
      h = fnv1a64(name.data(), name.size(), h);
      h = fnv1a64(t.data().data(), t.data().size_bytes(), h);
    });
    return h;
  }
};

namespace detail {

template <class S>
Tensor<S> init_dense(Rng& rng, int fan_in, int fan_out) {
  Tensor<S> t(std::vector<int>{fan_in, fan_out});
  const double s = std::sqrt(1.0 / static_cast<double>(fan_in));
  for (auto& v : t.data()) v = static_cast<S>(rng.uniform(-s, s));
  return t;
}

template <class S>
Tensor<S> init_conv(Rng& rng, int k, int cin, int cout) {
  Tensor<S> t(std::vector<int>{k, cin, cout});
  const double s = std::sqrt(1.0 / static_cast<double>(k * cin));
  for (auto& v : t.data()) v = static_cast<S>(rng.uniform(-s, s));
  return t;
}

template <class S>
Tensor<S> zeros1(int n) { return Tensor<S>(std::vector<int>{n}); }

template <class S>
Tensor<S> ones1(int n) {
  Tensor<S> t(std::vector<int>{n});
  for (auto& v : t.data()) v = S(1);
  return t;
}

}  // namespace detail

template <class S>
ParamSet<S> init_params(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  Rng rng(Rng::mix(seed, 0x6F73736D /* "ossm" */));
  ParamSet<S> p;
  p.cfg = cfg;
  const int f = cfg.freq_bins, d = cfg.model_dim, w_out = cfg.mask_width();

  p.ssm_w1 = detail::init_dense<S>(rng, kEmbeddingDim, cfg.ssm_hidden1);
  p.ssm_b1 = detail::zeros1<S>(cfg.ssm_hidden1);
  p.ssm_w2 = detail::init_dense<S>(rng, cfg.ssm_hidden1, cfg.ssm_hidden2);
  p.ssm_b2 = detail::zeros1<S>(cfg.ssm_hidden2);
  p.ssm_w3 = detail::init_dense<S>(rng, cfg.ssm_hidden2, w_out);
  p.ssm_b3 = detail::zeros1<S>(w_out);

  for (int i = 0; i < 4; ++i) {
    const int cin = i == 0 ? f : d;
    p.conv_w.push_back(detail::init_conv<S>(rng, cfg.conv_kernel, cin, d));
    p.conv_b.push_back(detail::zeros1<S>(d));
  }
  for (int b = 0; b < cfg.blocks; ++b) {
    AttnBlockParams<S> blk;
    blk.wq = detail::init_dense<S>(rng, d, d);
    blk.bq = detail::zeros1<S>(d);
    blk.wk = detail::init_dense<S>(rng, d, d);
    blk.bk = detail::zeros1<S>(d);
    blk.wv = detail::init_dense<S>(rng, d, d);
    blk.bv = detail::zeros1<S>(d);
    blk.wo = detail::init_dense<S>(rng, d, d);
    blk.bo = detail::zeros1<S>(d);
    blk.ln1_g = detail::ones1<S>(d);
    blk.ln1_b = detail::zeros1<S>(d);
    blk.ff_w1 = detail::init_dense<S>(rng, d, 4 * d);
    blk.ff_b1 = detail::zeros1<S>(4 * d);
    blk.ff_w2 = detail::init_dense<S>(rng, 4 * d, d);
    blk.ff_b2 = detail::zeros1<S>(d);
    blk.ln2_g = detail::ones1<S>(d);
    blk.ln2_b = detail::zeros1<S>(d);
    p.block.push_back(std::move(blk));
  }
  p.dec_w = detail::init_dense<S>(rng, d, f);
  p.dec_b = detail::zeros1<S>(f);
  return p;
}

template <class S>
Tensor<S> embedding_tensor(const SpeakerEmbedding& e) {
  std::vector<S> v(e.vec.size());
  for (size_t i = 0; i < e.vec.size(); ++i) v[i] = static_cast<S>(e.vec[i]);
  return Tensor<S>::from({1, static_cast<int>(e.vec.size())}, std::move(v));
}

// Mask from the three-layer dense network: lrelu, lrelu, sigmoid. Rank-1
// [mask_width]; constant across time frames by construction.
template <class S>
Tensor<S> ssm_forward(Tape<S>& tape, ParamSet<S>& p, const Tensor<S>& emb) {
  if (emb.rank() != 2 || emb.dim(0) != 1 || emb.dim(1) != kEmbeddingDim)
    throw std::invalid_argument("ssm: embedding must be [1 x " + std::to_string(kEmbeddingDim) + "]");
  Tensor<S> h = tape.leaky_relu(tape.add_rowvec(tape.matmul(emb, p.ssm_w1), p.ssm_b1));
  h = tape.leaky_relu(tape.add_rowvec(tape.matmul(h, p.ssm_w2), p.ssm_b2));
  h = tape.sigmoid(tape.add_rowvec(tape.matmul(h, p.ssm_w3), p.ssm_b3));
  return tape.reshape(h, {h.dim(1)});
}

// Multiplies by the mask when `site` is the active site for the configured
// placement; identity otherwise (and always for Non).
template <class S>
Tensor<S> apply_mask(Tape<S>& tape, const Tensor<S>& x, const Tensor<S>* mask, Placement placement,
                     MaskSite site) {
  if (!mask_active_at(placement, site)) return x;
  if (mask == nullptr) throw std::invalid_argument("apply_mask: active site but no mask supplied");
  return tape.mul_rowvec(x, *mask);
}

// Enhancer forward pass on one utterance of magnitudes [T x F]. `mask` may be
// null only when the placement never uses it (Non).
template <class S>
Tensor<S> se_forward(Tape<S>& tape, ParamSet<S>& p, const Tensor<S>& x, const Tensor<S>* mask) {
  const ModelConfig& cfg = p.cfg;
  if (x.rank() != 2 || x.dim(1) != cfg.freq_bins)
    throw std::invalid_argument("se: input width " +
                                std::to_string(x.rank() == 2 ? x.dim(1) : -1) +
                                " does not match freq_bins " + std::to_string(cfg.freq_bins));
  Tensor<S> h = apply_mask(tape, x, mask, cfg.placement, MaskSite::EncoderIn);
  for (size_t i = 0; i < p.conv_w.size(); ++i)
    h = tape.leaky_relu(tape.causal_conv1d(h, p.conv_w[i], p.conv_b[i]));
  h = apply_mask(tape, h, mask, cfg.placement, MaskSite::AttentionIn);
  for (auto& blk : p.block) {
    Tensor<S> q = tape.add_rowvec(tape.matmul(h, blk.wq), blk.bq);
    Tensor<S> k = tape.add_rowvec(tape.matmul(h, blk.wk), blk.bk);
    Tensor<S> v = tape.add_rowvec(tape.matmul(h, blk.wv), blk.bv);
    Tensor<S> ctx = causal_softmax_attention(tape, q, k, v, cfg.heads, cfg.causal);
    Tensor<S> proj = tape.add_rowvec(tape.matmul(ctx, blk.wo), blk.bo);
    h = tape.layer_norm(tape.add(h, proj), blk.ln1_g, blk.ln1_b);
    Tensor<S> ff = tape.leaky_relu(tape.add_rowvec(tape.matmul(h, blk.ff_w1), blk.ff_b1));
    ff = tape.add_rowvec(tape.matmul(ff, blk.ff_w2), blk.ff_b2);
    h = tape.layer_norm(tape.add(h, ff), blk.ln2_g, blk.ln2_b);
  }
  h = apply_mask(tape, h, mask, cfg.placement, MaskSite::DecoderIn);
  Tensor<S> out = tape.relu(tape.add_rowvec(tape.matmul(h, p.dec_w), p.dec_b));
  return apply_mask(tape, out, mask, cfg.placement, MaskSite::DecoderOut);
}

// Full model: speaker mask injected at the placement site around/within the
// enhancer. Output is the enhanced magnitude estimate [T x F]; the caller
// reuses the noisy phase for reconstruction.
template <class S>
Tensor<S> ossem_forward(Tape<S>& tape, ParamSet<S>& p, const Tensor<S>& emb, const Tensor<S>& noisy) {
  if (p.cfg.placement == Placement::Non) return se_forward<S>(tape, p, noisy, nullptr);
  Tensor<S> mask = ssm_forward(tape, p, emb);
  return se_forward<S>(tape, p, noisy, &mask);
}

}  // namespace ossem
