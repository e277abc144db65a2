#pragma once

#include <cstdint>
#include <random>

namespace hfz {

// All randomized behaviour goes through std::mt19937_64, whose output sequence
// is fixed by the C++ standard. The std distributions are not, so bounded
// draws are done here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  // Uniform in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return v % n;
  }
  bool coin() { return (engine_() >> 63) != 0; }
  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace hfz
