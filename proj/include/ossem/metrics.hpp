#pragma once

#include <span>

#include "ossem/features.hpp"

namespace ossem {

inline constexpr double kSiSdrCapDb = 60.0;

// Scale-invariant signal-to-distortion ratio in dB: the estimate is projected
// onto the reference and the projection/residual energy ratio is reported,
// clamped to [-60, +60] dB so degenerate estimates stay finite.
double si_sdr(std::span<const double> est, std::span<const double> ref);

// Mean over non-overlapping frames of the per-frame scale-invariant SNR, each
// clamped to [-10, 35] dB; frames with a silent reference are skipped.
double seg_snr(std::span<const double> est, std::span<const double> ref, int frame_len = 256);

// Mean absolute spectral magnitude difference between two waveforms.
double spectral_l1(std::span<const double> est, std::span<const double> ref, const StftConfig& cfg);

}  // namespace ossem
