#include "nsde/simulate.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "nsde/error.hpp"
#include "nsde/rng.hpp"

namespace nsde {

SamplePath simulate_path(const NsdeSpec& spec, const DirectedGraph& g, const ParamVector& theta,
                         const Eigen::VectorXd& x0, const SimulationOptions& options) {
  const std::uint64_t seed = options.seed;
  return simulate_path(spec, g, theta, x0, options, [seed](std::uint64_t step, std::size_t coord) {
    return counter_normal(seed, step, static_cast<std::uint32_t>(coord));
  });
}

SamplePath simulate_path(const NsdeSpec& spec, const DirectedGraph& g, const ParamVector& theta,
                         const Eigen::VectorXd& x0, const SimulationOptions& options, const NoiseSource& noise) {
  if (options.substeps == 0) throw Error(ErrorCode::InvalidSubsteps, "substeps must be >= 1");
  if (!(options.delta > 0.0)) throw Error(ErrorCode::InvalidArgument, "delta must be > 0");
  spec.validate();
  const bool augmented = theta.augmented();
  const DirectedGraph& design_graph = g;
  const ParamLayout layout(spec, augmented ? DirectedGraph::complete(g.d()) : g, augmented);
  check_layout(layout, theta);
  const std::size_t d = layout.d();
  if (static_cast<std::size_t>(x0.size()) != d) {
    throw Error(ErrorCode::DimensionMismatch, "x0 has " + std::to_string(x0.size()) + " coordinates");
  }
  if (!x0.allFinite()) throw Error(ErrorCode::NonFiniteState, "x0 is not finite");
  for (Eigen::Index i = 0; i < theta.alpha.size(); ++i) {
    if (theta.alpha(i) < 0.0) throw Error(ErrorCode::NegativeAlpha, "alpha_" + std::to_string(i) + " < 0");
  }

  const DriftDesign design(spec, augmented ? DirectedGraph::empty(d) : design_graph, layout);
  const Eigen::VectorXd flat = theta.flatten();
  const double h = options.delta / static_cast<double>(options.substeps);
  const double sqrt_h = std::sqrt(h);

  SamplePath path;
  path.delta = options.delta;
  path.seed = options.seed;
  path.data.resize(static_cast<Eigen::Index>(options.n + 1), static_cast<Eigen::Index>(d));

  std::vector<double> x(x0.data(), x0.data() + d);
  std::vector<double> b(d);
  std::vector<double> scratch;
  std::uint64_t step = 0;

  auto advance = [&] {
    design.drift(x, flat, b, scratch);
    for (std::size_t i = 0; i < d; ++i) {
      const double sigma = theta.alpha(static_cast<Eigen::Index>(i)) * diffusion_shape(spec.diffusion, x[i]);
      x[i] += b[i] * h + sigma * noise(step, i) * sqrt_h;
    }
    for (std::size_t i = 0; i < d; ++i) {
      if (!std::isfinite(x[i]) || std::abs(x[i]) > options.explosion_threshold) {
        throw Error(ErrorCode::Explosion, "state left the explosion guard at internal step " + std::to_string(step));
      }
    }
    ++step;
  };

  for (std::size_t k = 0; k < options.burn_in_steps * options.substeps; ++k) advance();
  for (std::size_t i = 0; i < d; ++i) path.data(0, static_cast<Eigen::Index>(i)) = x[i];
  for (std::size_t row = 1; row <= options.n; ++row) {
    for (std::size_t s = 0; s < options.substeps; ++s) advance();
    for (std::size_t i = 0; i < d; ++i) path.data(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(i)) = x[i];
  }
  return path;
}

}  // namespace nsde
