#pragma once

#include <cmath>
#include <cstdio>
#include <string>

#include "nsde/rng.hpp"

namespace nsde::test {

/// CSV text of a synthetic price panel: `rows` five-minute bars of `d` geometric random
/// walks, ISO time stamps, full-precision values.
inline std::string synthetic_panel_csv(std::size_t d, std::size_t rows, std::uint64_t seed) {
  SeededStream rng(seed);
  std::vector<double> price(d);
  for (auto& p : price) p = 20.0 + 200.0 * rng.uniform();
  std::string out = "time";
  for (std::size_t j = 0; j < d; ++j) out += ",S" + std::to_string(j);
  out += '\n';
  char buf[64];
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t minutes = 9 * 60 + 30 + 5 * r;
    const std::size_t day = 2 + minutes / (24 * 60);
    const std::size_t m = minutes % (24 * 60);
    std::snprintf(buf, sizeof buf, "2011-03-%02zuT%02zu:%02zu:00", day, m / 60, m % 60);
    out += buf;
    for (auto& p : price) {
      p *= std::exp(0.002 * rng.normal());
      std::snprintf(buf, sizeof buf, ",%.17g", p);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

}  // namespace nsde::test
