#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace softnet {

/// Seeded generator with portable draws: the std distributions are
/// implementation-defined, these are not.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Independent stream derived from (seed, stream).
  static Rng stream(std::uint64_t seed, std::uint64_t stream);

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Stream identifiers, so that e.g. minor-mask sampling never perturbs the
/// batch order.
enum class RngStream : std::uint64_t {
  weights = 1,
  scores = 2,
  shuffle = 3,
  minor = 4,
  freeze = 5,
  plan = 6,
  shots = 7,
  directions = 8,
  split = 9,
};

inline Rng make_rng(std::uint64_t seed, RngStream s) {
  return Rng::stream(seed, static_cast<std::uint64_t>(s));
}

}  // namespace softnet
