#include "ossem/stream.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ossem {

namespace {

Tensor<float> mag_to_tensor(const Spectrogram& spec) {
  std::vector<float> v(spec.mag.size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(spec.mag[i]);
  return Tensor<float>::from({spec.frames, spec.bins}, std::move(v));
}

// Attention for the newest frame against all cached frames: same per-head
// slicing, scaling and softmax as the whole-utterance path, with the future
// positions simply absent instead of masked.
Tensor<float> attention_row(Tape<float>& tape, const Tensor<float>& q_row, const Tensor<float>& k_all,
                            const Tensor<float>& v_all, int heads) {
  const int d = q_row.dim(1);
  const int dh = d / heads;
  const float scale = static_cast<float>(1.0 / std::sqrt(static_cast<double>(dh)));
  std::vector<Tensor<float>> ctx;
  ctx.reserve(static_cast<size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const int c0 = h * dh, c1 = (h + 1) * dh;
    Tensor<float> qh = tape.slice_cols(q_row, c0, c1);
    Tensor<float> kh = tape.slice_cols(k_all, c0, c1);
    Tensor<float> vh = tape.slice_cols(v_all, c0, c1);
    Tensor<float> scores = tape.scalar_mul(tape.matmul(qh, tape.transpose(kh)), scale);
    Tensor<float> probs = tape.softmax_causal(scores, false);
    ctx.push_back(tape.matmul(probs, vh));
  }
  return tape.concat_cols(std::span<const Tensor<float>>(ctx.data(), ctx.size()));
}

}  // namespace

std::vector<double> enhance_wave(ParamSet<float>& params, const Tensor<float>& emb,
                                 std::span<const double> wave, const StftConfig& stft_cfg) {
  if (stft_cfg.bins() != params.cfg.freq_bins)
    throw std::invalid_argument("enhance: frame geometry gives " + std::to_string(stft_cfg.bins()) +
                                " bins but the model expects " + std::to_string(params.cfg.freq_bins));
  Spectrogram spec = stft(wave, stft_cfg);
  Tensor<float> noisy = mag_to_tensor(spec);
  Tape<float> tape(false);
  Tensor<float> out = ossem_forward(tape, params, emb, noisy);
  for (size_t i = 0; i < spec.mag.size(); ++i) spec.mag[i] = static_cast<double>(out.data()[i]);
  return istft(spec, wave.size());
}

StreamingEnhancer::StreamingEnhancer(const ParamSet<float>& params, const Tensor<float>& emb,
                                     const StftConfig& stft_cfg)
    : params_(params.deep_copy()), emb_(emb.deep_copy()), cfg_(stft_cfg) {
  validate_stft_config(cfg_);
  if (!params_.cfg.causal)
    throw std::invalid_argument("stream: streaming requires a causal model configuration");
  if (cfg_.bins() != params_.cfg.freq_bins)
    throw std::invalid_argument("stream: frame geometry gives " + std::to_string(cfg_.bins()) +
                                " bins but the model expects " + std::to_string(params_.cfg.freq_bins));
  params_.set_requires_grad(false, false);
  window_ = make_window(cfg_.window, cfg_.frame_len);
  if (params_.cfg.placement != Placement::Non) {
    Tape<float> tape(false);
    mask_ = ssm_forward(tape, params_, emb_);
    has_mask_ = true;
  }
  conv_hist_.resize(params_.conv_w.size());
  for (size_t i = 0; i < conv_hist_.size(); ++i) {
    const int cin = params_.conv_w[i].dim(1);
    conv_hist_[i].assign(static_cast<size_t>(params_.cfg.conv_kernel - 1),
                         std::vector<float>(static_cast<size_t>(cin), 0.0f));
  }
  k_cache_.resize(params_.block.size());
  v_cache_.resize(params_.block.size());
}

std::vector<float> StreamingEnhancer::model_step(const std::vector<float>& mag_row) {
  Tape<float> tape(false);
  const ModelConfig& mc = params_.cfg;
  const int d = mc.model_dim;
  Tensor<float> row = Tensor<float>::from({1, mc.freq_bins}, mag_row);
  const Tensor<float>* mask = has_mask_ ? &mask_ : nullptr;
  row = apply_mask(tape, row, mask, mc.placement, MaskSite::EncoderIn);

  // Conv layers: evaluate on the short window [K x Cin] of current + cached
  // rows; the final output row carries exactly the batch row's terms.
  for (size_t li = 0; li < params_.conv_w.size(); ++li) {
    const int k = mc.conv_kernel;
    const int cin = params_.conv_w[li].dim(1);
    std::vector<float> win(static_cast<size_t>(k) * cin, 0.0f);
    for (int j = 0; j < k - 1; ++j)
      std::copy(conv_hist_[li][static_cast<size_t>(j)].begin(), conv_hist_[li][static_cast<size_t>(j)].end(),
                win.begin() + static_cast<size_t>(j) * cin);
    std::copy(row.data().begin(), row.data().end(), win.begin() + static_cast<size_t>(k - 1) * cin);
    if (k > 1) {
      conv_hist_[li].erase(conv_hist_[li].begin());
      conv_hist_[li].emplace_back(row.data().begin(), row.data().end());
    }
    Tensor<float> stacked = Tensor<float>::from({k, cin}, std::move(win));
    Tensor<float> conv = tape.leaky_relu(tape.causal_conv1d(stacked, params_.conv_w[li], params_.conv_b[li]));
    // keep only the newest output row (the one with full left context)
    row = tape.reshape(tape.slice_cols(tape.reshape(conv, {1, k * d}), (k - 1) * d, k * d), {1, d});
  }
  row = apply_mask(tape, row, mask, mc.placement, MaskSite::AttentionIn);

  for (size_t bi = 0; bi < params_.block.size(); ++bi) {
    auto& blk = params_.block[bi];
    Tensor<float> q = tape.add_rowvec(tape.matmul(row, blk.wq), blk.bq);
    Tensor<float> k = tape.add_rowvec(tape.matmul(row, blk.wk), blk.bk);
    Tensor<float> v = tape.add_rowvec(tape.matmul(row, blk.wv), blk.bv);
    k_cache_[bi].insert(k_cache_[bi].end(), k.data().begin(), k.data().end());
    v_cache_[bi].insert(v_cache_[bi].end(), v.data().begin(), v.data().end());
    const int t_len = static_cast<int>(k_cache_[bi].size()) / d;
    Tensor<float> k_all = Tensor<float>::from({t_len, d}, k_cache_[bi]);
    Tensor<float> v_all = Tensor<float>::from({t_len, d}, v_cache_[bi]);
    Tensor<float> ctx = attention_row(tape, q, k_all, v_all, mc.heads);
    Tensor<float> proj = tape.add_rowvec(tape.matmul(ctx, blk.wo), blk.bo);
    row = tape.layer_norm(tape.add(row, proj), blk.ln1_g, blk.ln1_b);
    Tensor<float> ff = tape.leaky_relu(tape.add_rowvec(tape.matmul(row, blk.ff_w1), blk.ff_b1));
    ff = tape.add_rowvec(tape.matmul(ff, blk.ff_w2), blk.ff_b2);
    row = tape.layer_norm(tape.add(row, ff), blk.ln2_g, blk.ln2_b);
  }
  row = apply_mask(tape, row, mask, mc.placement, MaskSite::DecoderIn);
  Tensor<float> out = tape.relu(tape.add_rowvec(tape.matmul(row, params_.dec_w), params_.dec_b));
  out = apply_mask(tape, out, mask, mc.placement, MaskSite::DecoderOut);
  return {out.data().begin(), out.data().end()};
}

void StreamingEnhancer::process_frame() {
  const int bins = cfg_.bins();
  const size_t start = static_cast<size_t>(frames_done_) * static_cast<size_t>(cfg_.hop);
  std::vector<double> mag(static_cast<size_t>(bins)), phase(static_cast<size_t>(bins));
  analyze_frame(in_, start, cfg_, window_, mag, phase);
  std::vector<float> mag_f(static_cast<size_t>(bins));
  for (int i = 0; i < bins; ++i) mag_f[static_cast<size_t>(i)] = static_cast<float>(mag[static_cast<size_t>(i)]);

  const std::vector<float> enh = model_step(mag_f);
  std::vector<double> enh_d(enh.size());
  for (size_t i = 0; i < enh.size(); ++i) enh_d[i] = static_cast<double>(enh[i]);

  const std::vector<double> frame = synth_frame(enh_d, phase, cfg_, window_);
  const size_t need = start + static_cast<size_t>(cfg_.frame_len);
  if (ola_acc_.size() < need) {
    ola_acc_.resize(need, 0.0);
    ola_den_.resize(need, 0.0);
  }
  for (int i = 0; i < cfg_.frame_len; ++i) {
    ola_acc_[start + static_cast<size_t>(i)] += frame[static_cast<size_t>(i)];
    ola_den_[start + static_cast<size_t>(i)] += window_[static_cast<size_t>(i)] * window_[static_cast<size_t>(i)];
  }
  ++frames_done_;
}

std::vector<double> StreamingEnhancer::drain(size_t upto) {
  std::vector<double> out;
  for (size_t n = emitted_; n < upto; ++n)
    out.push_back(ola_acc_[n] / std::max(ola_den_[n], kWolaDenomFloor));
  emitted_ = std::max(emitted_, upto);
  return out;
}

std::vector<double> StreamingEnhancer::push(std::span<const double> samples) {
  if (finished_) throw std::logic_error("stream: push after finish");
  in_.insert(in_.end(), samples.begin(), samples.end());
  while ((static_cast<size_t>(frames_done_) * cfg_.hop) + static_cast<size_t>(cfg_.frame_len) <= in_.size())
    process_frame();
  // Sample n is final once the frame starting after it has been folded in.
  const size_t safe = std::min(in_.size(), static_cast<size_t>(frames_done_) * cfg_.hop);
  return drain(safe);
}

std::vector<double> StreamingEnhancer::finish() {
  if (finished_) throw std::logic_error("stream: finish called twice");
  finished_ = true;
  const size_t total = in_.size();
  if (total == 0) return {};
  const int frames = frame_count(total, cfg_.hop);
  while (frames_done_ < frames) process_frame();
  return drain(total);
}

}  // namespace ossem
