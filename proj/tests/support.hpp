#pragma once

#include <doctest.h>

#include "nsde/error.hpp"
#include "nsde/graph.hpp"
#include "nsde/model.hpp"
#include "nsde/simulate.hpp"

namespace nsde::test {

template <class Fn>
ErrorCode code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no nsde::Error thrown");
  return ErrorCode::InvalidArgument;
}

struct Instance {
  NsdeSpec spec;
  DirectedGraph g;
  ParamVector theta;
  SamplePath path;
};

inline NsdeSpec linear_spec(std::size_t d, DiffusionFamily diffusion = TanhClipped{100.0}) {
  NsdeSpec s;
  s.d = d;
  s.diffusion = diffusion;
  return s;
}

/// Linear N-SDE with uniform (alpha, mu, beta) on g, simulated after a 500-interval burn-in.
inline Instance simulate_instance(const DirectedGraph& g, double mu, double beta, double alpha, double horizon,
                                  std::uint64_t seed, double delta = 0.01,
                                  DiffusionFamily diffusion = TanhClipped{100.0}) {
  Instance in{linear_spec(g.d(), diffusion), g, {}, {}};
  in.theta = uniform_params(ParamLayout(in.spec, g, false), alpha, mu, beta);
  SimulationOptions o;
  o.delta = delta;
  o.n = static_cast<std::size_t>(std::llround(horizon / delta));
  o.burn_in_steps = 500;
  o.seed = seed;
  in.path = simulate_path(in.spec, g, in.theta, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(g.d())), o);
  return in;
}

}  // namespace nsde::test
