#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace gdalab {

// Random numbers used everywhere in the project.
//
// The engine is std::mt19937_64, whose output sequence is fixed by the C++
// standard. Distributions are implemented here rather than taken from
// <random> because the standard leaves their algorithms unspecified:
//   uniform():  top 53 bits of one engine draw, scaled to [0, 1).
//   normal():   Marsaglia polar method; the second variate of each accepted
//               pair is cached and returned by the next call.
// Substreams are derived with split(seed, index), a SplitMix64 finaliser over
// seed ^ (golden-ratio * (index + 1)), so that sibling streams never share a
// starting state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  double uniform();
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  static std::uint64_t split(std::uint64_t seed, std::uint64_t index);

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

std::uint64_t splitmix64(std::uint64_t x);

/// FNV-1a over the bytes of `text`; stable across platforms.
std::uint64_t stable_hash(std::string_view text);

}  // namespace gdalab
