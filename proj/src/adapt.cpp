#include "ossem/adapt.hpp"

namespace ossem {

InnerResult one_shot_adapt(const ParamSet<float>& theta_meta, const Tensor<float>& emb,
                           std::span<const UttPair> enroll, const AdaptOptions& opt) {
  if (enroll.empty()) throw std::invalid_argument("adapt: empty enrollment set");
  if (opt.steps < 0) throw std::invalid_argument("adapt: negative step count");
  Techniques tech;
  tech.speaker_inner_loop = true;  // online adaptation always spares the enhancer
  tech.feature_rescale = opt.rescale;
  return inner_adapt(theta_meta, emb, enroll, opt.ilr, opt.steps, tech, opt.rescale_apply);
}

}  // namespace ossem
