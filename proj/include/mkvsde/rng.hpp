#pragma once

#include <cmath>
#include <cstdint>

namespace mkv {

// Stateless counter-based generator: draws are keyed by (seed, a, b, c), so
// per-particle streams are identical under any execution order or thread
// schedule. Mixing is two rounds of the splitmix64 finalizer over the packed
// counter words.
struct CounterRng {
  std::uint64_t seed = 0;

  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t raw(std::uint64_t a, std::uint64_t b = 0,
                    std::uint64_t c = 0) const {
    std::uint64_t h = mix(seed ^ 0x6a09e667f3bcc909ULL);
    h = mix(h ^ a);
    h = mix(h ^ b);
    h = mix(h ^ c);
    return mix(h ^ (a * 0x9e3779b97f4a7c15ULL) ^ b);
  }

  // uniform in [0, 1)
  double uniform(std::uint64_t a, std::uint64_t b = 0,
                 std::uint64_t c = 0) const {
    return double(raw(a, b, c) >> 11) * 0x1.0p-53;
  }

  // standard normal via Box-Muller; draw index c selects the pair member.
  double normal(std::uint64_t a, std::uint64_t b = 0,
                std::uint64_t c = 0) const {
    std::uint64_t pair = c / 2;
    double u1 = uniform(a, b, 2 * pair);
    double u2 = uniform(a, b, 2 * pair + 1);
    if (u1 <= 0) u1 = 0x1.0p-53;
    double r = std::sqrt(-2.0 * std::log(u1));
    double th = 2.0 * M_PI * u2;
    return (c % 2 == 0) ? r * std::cos(th) : r * std::sin(th);
  }
};

}  // namespace mkv
