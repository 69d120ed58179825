#pragma once

#include <array>
#include <cstdint>

namespace nsde {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
/// Output is a pure function of (key, counter), so any stream position can be
/// addressed directly without sequential state.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key) noexcept;

/// Standard normal draw addressed by (seed, step, coordinate).
double counter_normal(std::uint64_t seed, std::uint64_t step, std::uint32_t coord) noexcept;

/// Uniform draw in [0, 1) addressed by (seed, step, coordinate).
double counter_uniform(std::uint64_t seed, std::uint64_t step, std::uint32_t coord) noexcept;

/// SplitMix64 finalizer; used to derive independent seeds (per replication, per fold).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) noexcept;

/// Small sequential generator with a portable uniform mapping (unlike std distributions,
/// results do not depend on the standard library implementation).
class SeededStream {
 public:
  explicit SeededStream(std::uint64_t seed) noexcept : seed_(seed) {}

  double uniform() noexcept { return counter_uniform(seed_, next_++, 0); }
  double normal() noexcept { return counter_normal(seed_, next_++, 1); }

 private:
  std::uint64_t seed_;
  std::uint64_t next_ = 0;
};

}  // namespace nsde
