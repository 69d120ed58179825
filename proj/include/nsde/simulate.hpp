#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>

#include <Eigen/Dense>

#include "nsde/graph.hpp"
#include "nsde/model.hpp"

namespace nsde {

/// Observations X_{t_0}, ..., X_{t_n} on the grid t_k = k * delta (row k = X_{t_k}).
struct SamplePath {
  double delta = 0.0;
  Eigen::MatrixXd data;
  std::uint64_t seed = 0;

  std::size_t n() const noexcept { return data.rows() == 0 ? 0 : static_cast<std::size_t>(data.rows() - 1); }
  std::size_t d() const noexcept { return static_cast<std::size_t>(data.cols()); }
  double horizon() const noexcept { return delta * static_cast<double>(n()); }
};

struct SimulationOptions {
  double delta = 0.01;
  std::size_t n = 0;
  std::size_t substeps = 10;
  std::size_t burn_in_steps = 0;  // observation intervals discarded before recording
  std::uint64_t seed = 0;
  double explosion_threshold = 1e8;
};

/// Standard normal for internal step `step` (burn-in included) and coordinate `coord`.
using NoiseSource = std::function<double(std::uint64_t step, std::size_t coord)>;

/// Euler-Maruyama with internal step h = delta / substeps:
///   X <- X + b(X) h + sigma(X) * xi * sqrt(h),
/// recording every substeps-th state. Noise is addressed by (seed, step, coordinate)
/// through a counter-based generator, so a run is a pure function of its arguments.
/// Throws Explosion (|X|_inf above the threshold or non-finite), InvalidSubsteps.
SamplePath simulate_path(const NsdeSpec& spec, const DirectedGraph& g, const ParamVector& theta,
                         const Eigen::VectorXd& x0, const SimulationOptions& options);

/// Same scheme with caller-supplied noise (used for coupling checks).
SamplePath simulate_path(const NsdeSpec& spec, const DirectedGraph& g, const ParamVector& theta,
                         const Eigen::VectorXd& x0, const SimulationOptions& options, const NoiseSource& noise);

}  // namespace nsde
