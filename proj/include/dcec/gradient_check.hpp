#ifndef DCEC_GRADIENT_CHECK_HPP
#define DCEC_GRADIENT_CHECK_HPP

#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "dcec/tensor.hpp"

namespace dcec {

struct GradCheckConfig {
  double epsilon = 1e-5;
  Index max_coords = 0;  // 0 checks every coordinate of every tensor
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  Index coords_checked = 0;
};

// Central-difference check of analytic gradients. `objective` must evaluate
// the scalar objective at the current values of `params`; the harness perturbs
// one coordinate at a time and restores it. Relative error per coordinate is
// |analytic - fd| / max(|analytic|, |fd|, 1e-12). Large tensors are sampled:
// at most max_coords coordinates per tensor, chosen by a seeded generator.
template <typename Objective>
GradCheckReport gradient_check(Objective&& objective, const std::vector<Tensor<double>*>& params,
                               const std::vector<const Tensor<double>*>& analytic,
                               const GradCheckConfig& cfg = {}) {
  if (cfg.epsilon < 1e-6 || cfg.epsilon > 1e-2)
    throw NumericError("gradient_check: epsilon must lie in [1e-6, 1e-2]");
  if (params.size() != analytic.size())
    throw ShapeError("gradient_check: " + std::to_string(params.size()) + " params vs " +
                     std::to_string(analytic.size()) + " gradients");

  GradCheckReport report;
  std::mt19937_64 rng(cfg.seed);
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor<double>& theta = *params[p];
    const Tensor<double>& grad = *analytic[p];
    if (theta.shape() != grad.shape())
      throw ShapeError("gradient_check: param " + shape_string(theta.shape()) +
                       " vs gradient " + shape_string(grad.shape()));

    std::vector<Index> coords(static_cast<std::size_t>(theta.size()));
    std::iota(coords.begin(), coords.end(), Index{0});
    if (cfg.max_coords > 0 && theta.size() > cfg.max_coords) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(static_cast<std::size_t>(cfg.max_coords));
    }

    for (Index c : coords) {
      const double saved = theta[c];
      theta[c] = saved + cfg.epsilon;
      const double f_plus = objective();
      theta[c] = saved - cfg.epsilon;
      const double f_minus = objective();
      theta[c] = saved;
      if (!std::isfinite(f_plus) || !std::isfinite(f_minus))
        throw NumericError("gradient_check: objective is not finite near the base point");
      const double fd = (f_plus - f_minus) / (2.0 * cfg.epsilon);
      const double a = grad[c];
      const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-12});
      report.max_rel_error = std::max(report.max_rel_error, rel);
      ++report.coords_checked;
    }
  }
  return report;
}

}  // namespace dcec

#endif  // DCEC_GRADIENT_CHECK_HPP
