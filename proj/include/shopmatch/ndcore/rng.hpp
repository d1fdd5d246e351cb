#pragma once

#include <cstdint>
#include <string_view>

namespace shopmatch {

// Counter-based generator: the n-th draw of a stream is a pure function of
// (key, n), so streams can be forked and replayed without shared state. The
// mixing function is the SplitMix64 finalizer.
class Rng {
 public:
  explicit Rng(std::uint64_t key = 0) : key_(key) {}

  // Named stream derived from a run seed ("init", "batching", "generation", ...).
  static Rng stream(std::uint64_t seed, std::string_view name);

  // Independent child stream; does not advance this stream.
  Rng fork(std::uint64_t index) const;
  Rng fork(std::string_view name) const;

  std::uint64_t next_u64();

  // Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal (Box-Muller, one value per call).
  double normal();

  // Uniform integer in [0, n); n must be > 0.
  std::uint64_t below(std::uint64_t n);

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x);
std::uint64_t hash_name(std::string_view name);

}  // namespace shopmatch
