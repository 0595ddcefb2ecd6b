#pragma once
// rng.hpp - the seeded random source used everywhere randomness is consumed.
//
// All stochastic components (strategy sampling, triple sampling, pixel noise,
// reparameterization draws, pairing shuffles) pull from an explicitly owned
// Rng so that a run is a pure function of its master seed. The engine state
// round-trips through strings for checkpoint resume.

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

#include "clfa/common.hpp"

namespace clfa {

class Rng {
 public:
  Rng() : engine_(0x9e3779b97f4a7c15ULL) {}
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // uniform in [lo, hi)
  double uniform(double lo = 0.0, double hi = 1.0) {
    // 53-bit mantissa mapping, avoids distribution-object hidden state
    const double u = (engine_() >> 11) * 0x1.0p-53;
    return lo + u * (hi - lo);
  }

  // uniform integer in [0, n)
  std::size_t index(std::size_t n) {
    require_arg(n > 0, "Rng::index needs n > 0");
    // rejection sampling keeps the draw unbiased
    const std::uint64_t span = n;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() / span * span;
    std::uint64_t v = engine_();
    while (v >= limit) v = engine_();
    return static_cast<std::size_t>(v % span);
  }

  int int_in(int lo, int hi) {  // inclusive both ends
    require_arg(hi >= lo, "Rng::int_in needs hi >= lo");
    return lo + static_cast<int>(index(static_cast<std::size_t>(hi - lo) + 1));
  }

  // standard normal via Box-Muller; stateless beyond the engine so the
  // serialized engine alone reproduces the stream
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  Rng fork() { return Rng(next_u64() ^ 0xd1342543de82ef95ULL); }

  std::string serialize() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }

  static Rng deserialize(const std::string& s) {
    Rng r;
    std::istringstream is(s);
    is >> r.engine_;
    if (is.fail()) throw IoError("bad rng state string");
    return r;
  }

  bool operator==(const Rng& o) const { return engine_ == o.engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace clfa
