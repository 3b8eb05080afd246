#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace abacus {

// Counter-based generator (splitmix64 core). Cheap to copy, explicit
// everywhere: nothing in the library touches a global stream. Identical
// seeds give identical draw sequences on every platform we build for.
class RngState {
 public:
  explicit RngState(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform on the open interval (0, 1); never returns an exact endpoint,
  // so logit-style transforms of the result stay finite.
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
  }

  // Standard normal via Box-Muller. Consumes two uniforms per pair and
  // caches the second variate, keeping the stream layout deterministic.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 6.283185307179586477 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  // Independent child stream; advances this stream by one draw.
  RngState split() { return RngState(next_u64() ^ 0x5851f42d4c957f2dull); }

  std::vector<RngState> split(std::size_t n) {
    std::vector<RngState> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(split());
    return out;
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace abacus
