#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

#include "fidfix/model.hpp"

namespace fidfix {

// Compares analytic gradients of the total loss against central finite
// differences on a stratified random subsample of parameters (at least one
// element per tensor, at least min_samples overall). Returns the maximum
// relative error observed.
//
// The error denominator floors at 1e-4 of the sampled gradient scale:
// central differences of a double-precision loss carry rounding noise of
// roughly ulp(loss)/eps, so entries far below the gradient scale are held to
// an absolute rather than relative standard.
inline double gradient_check(FidModel& model, const ContextBundle& bundle, double eps,
                             std::size_t min_samples = 200, std::uint64_t seed = 1234) {
  Params grads = model.params().zeros_like();
  model.compute_loss_and_grads(bundle, grads);

  Params& params = model.params();
  const std::size_t total = params.total_elements();
  std::mt19937_64 rng(seed);

  std::vector<std::size_t> picks;
  std::size_t flat_base = 0;
  for (std::size_t t = 0; t < params.count(); ++t) {
    const std::size_t sz = static_cast<std::size_t>(params[t].size());
    std::size_t quota = std::max<std::size_t>(1, (min_samples * sz + total - 1) / total);
    quota = std::min(quota, sz);
    std::vector<std::size_t> offsets(sz);
    for (std::size_t i = 0; i < sz; ++i) offsets[i] = i;
    std::shuffle(offsets.begin(), offsets.end(), rng);
    for (std::size_t i = 0; i < quota; ++i) picks.push_back(flat_base + offsets[i]);
    flat_base += sz;
  }
  // Top up to min_samples with uniform draws.
  std::uniform_int_distribution<std::size_t> uni(0, total - 1);
  while (picks.size() < min_samples) picks.push_back(uni(rng));

  double grad_scale = 0.0;
  for (std::size_t flat : picks) grad_scale = std::max(grad_scale, std::abs(grads.get_flat(flat)));
  const double floor = 1e-4 * std::max(grad_scale, 1e-4);

  double max_rel = 0.0;
  for (std::size_t flat : picks) {
    params.add_flat(flat, eps);
    double up = model.compute_loss(bundle).total;
    params.add_flat(flat, -2.0 * eps);
    double down = model.compute_loss(bundle).total;
    params.add_flat(flat, eps);
    double fd = (up - down) / (2.0 * eps);
    double an = grads.get_flat(flat);
    double denom = std::max({std::abs(fd), std::abs(an), floor});
    max_rel = std::max(max_rel, std::abs(fd - an) / denom);
  }
  return max_rel;
}

}  // namespace fidfix
