#pragma once

#include <span>
#include <vector>

#include "ossem/features.hpp"
#include "ossem/model.hpp"

namespace ossem {

// Whole-utterance enhancement: analyze, run the model on [T x F], rebuild the
// waveform with the noisy phase. Output length equals the input length.
std::vector<double> enhance_wave(ParamSet<float>& params, const Tensor<float>& emb,
                                 std::span<const double> wave, const StftConfig& stft_cfg);

// Frame-synchronous enhancement. Each output sample is emitted as soon as the
// last frame overlapping it has been processed, and results are bit-identical
// to enhance_wave on the full utterance. Requires a causal model.
class StreamingEnhancer {
 public:
  StreamingEnhancer(const ParamSet<float>& params, const Tensor<float>& emb,
                    const StftConfig& stft_cfg);

  // Feed samples; returns every output sample that became final.
  std::vector<double> push(std::span<const double> samples);

  // Flush: pads the tail the way the batch analysis does and returns the
  // remaining output. Total output length equals total input length.
  std::vector<double> finish();

  int frames_processed() const { return frames_done_; }

 private:
  void process_frame();
  std::vector<float> model_step(const std::vector<float>& mag_row);
  std::vector<double> drain(size_t upto);

  ParamSet<float> params_;
  Tensor<float> emb_;
  StftConfig cfg_;
  std::vector<double> window_;
  Tensor<float> mask_;
  bool has_mask_ = false;

  // per conv layer: the most recent kernel-1 input rows (oldest first)
  std::vector<std::vector<std::vector<float>>> conv_hist_;
  // per attention block: cached key/value rows, frame-major
  std::vector<std::vector<float>> k_cache_, v_cache_;

  std::vector<double> in_;       // buffered input samples
  std::vector<double> ola_acc_;  // overlap-add numerator
  std::vector<double> ola_den_;  // overlap-add denominator
  size_t emitted_ = 0;           // samples already handed out
  int frames_done_ = 0;
  bool finished_ = false;
};

}  // namespace ossem
