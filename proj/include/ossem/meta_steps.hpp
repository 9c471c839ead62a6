#pragma once

#include <functional>
#include <stdexcept>
#include <vector>

#include "ossem/tensor.hpp"

namespace ossem {

// Builds a scalar loss for the current values of `params` on a fresh tape.
template <class S>
using TapedLoss = std::function<Tensor<S>(Tape<S>&, std::vector<Tensor<S>>&)>;

// Inner adaptation on an already-copied parameter vector: K plain
// gradient-descent steps on the support loss, restricted to parameters
// flagged adaptable. Rates of exactly zero leave values bitwise untouched.
// Returns the support loss of the first step (the pre-adaptation loss).
template <class S>
double adapt_in_place(std::vector<Tensor<S>>& params, const std::vector<bool>& adaptable,
                      const TapedLoss<S>& support_loss, double ilr, int k_steps) {
  if (params.size() != adaptable.size())
    throw std::invalid_argument("adapt: adaptable mask size mismatch");
  if (k_steps < 0) throw std::invalid_argument("adapt: negative step count");
  double first_loss = 0.0;
  for (size_t i = 0; i < params.size(); ++i) params[i].set_requires_grad(adaptable[i]);
  for (int k = 0; k < k_steps; ++k) {
    for (auto& p : params) p.clear_grad();
    Tape<S> tape;
    Tensor<S> loss = support_loss(tape, params);
    if (k == 0) first_loss = static_cast<double>(loss.item());
    tape.backward(loss);
    sgd_update<S>(std::span<const Tensor<S>>(params.data(), params.size()), static_cast<S>(ilr));
  }
  for (auto& p : params) p.clear_grad();
  return first_loss;
}

// First-order outer update: query-loss gradients are taken at the adapted
// parameters and applied as a descent step to the original parameters,
// position for position, across every parameter. Returns the query loss.
template <class S>
double outer_update(std::vector<Tensor<S>>& theta, std::vector<Tensor<S>>& adapted,
                    const TapedLoss<S>& query_loss, double olr) {
  if (theta.size() != adapted.size())
    throw std::invalid_argument("outer: parameter count mismatch");
  for (auto& p : adapted) {
    p.set_requires_grad(true);
    p.clear_grad();
  }
  Tape<S> tape;
  Tensor<S> loss = query_loss(tape, adapted);
  const double value = static_cast<double>(loss.item());
  tape.backward(loss);
  if (olr != 0.0) {
    for (size_t i = 0; i < theta.size(); ++i) {
      if (!adapted[i].has_grad()) continue;
      if (theta[i].numel() != adapted[i].numel())
        throw std::invalid_argument("outer: adapted parameter shape drifted from original");
      auto tv = theta[i].data();
      auto g = adapted[i].grad_view();
      for (size_t j = 0; j < tv.size(); ++j) {
        if (!std::isfinite(static_cast<double>(g[j])))
          throw std::runtime_error("outer: non-finite gradient");
        tv[j] -= static_cast<S>(olr) * g[j];
      }
    }
  }
  for (auto& p : adapted) p.clear_grad();
  return value;
}

}  // namespace ossem
