#pragma once

#include <span>

#include "ossem/train.hpp"

namespace ossem {

struct AdaptOptions {
  double ilr = 1e-3;
  int steps = 1;
  bool rescale = false;  // energy-ratio scaling in the enrollment loss
  RescaleApply rescale_apply = RescaleApply::Output;
};

// One-shot speaker adaptation: K descent steps on the enrollment loss applied
// to a copy of theta_meta, restricted to the mask-network partition. The
// source parameters are never modified.
InnerResult one_shot_adapt(const ParamSet<float>& theta_meta, const Tensor<float>& emb,
                           std::span<const UttPair> enroll, const AdaptOptions& opt);

}  // namespace ossem
