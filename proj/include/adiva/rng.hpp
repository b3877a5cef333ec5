#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

#include "adiva/tensor.hpp"

namespace adiva {

/// Seed-deterministic pseudorandom stream (SplitMix64 core).
///
/// The whole state is one 64-bit cursor, so it can be checkpointed exactly.
/// Normal draws use Box-Muller on two uniforms and discard the sine branch;
/// this keeps the cursor the only state and makes draws identical across
/// standard libraries.
///
/// Independent sub-streams are derived from (seed, path...) with `Rng::stream`,
/// e.g. `Rng::stream(seed, {kInstanceTag, class_id, instance})`. Adding new
/// entities never perturbs the draws of existing ones.
class Rng {
 public:
  explicit Rng(std::uint64_t state = 0) : state_(state) {}

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  static Rng stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
    std::uint64_t h = mix(seed + 0x9e3779b97f4a7c15ULL);
    for (std::uint64_t p : path) h = mix(h ^ (mix(p + 0x632be59bd9b4e019ULL) + 0x9e3779b97f4a7c15ULL));
    return Rng(h);
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix(state_);
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

  Mat normal_mat(Index rows, Index cols, double scale = 1.0) {
    Mat m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = scale * normal();
    return m;
  }

  Mat uniform_mat(Index rows, Index cols, double lo, double hi) {
    Mat m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(lo, hi);
    return m;
  }

  std::uint64_t cursor() const { return state_; }
  void set_cursor(std::uint64_t c) { state_ = c; }

 private:
  std::uint64_t state_;
};

// Sub-stream tags. Values are part of the determinism contract.
namespace stream_tag {
inline constexpr std::uint64_t kClassMean = 1;
inline constexpr std::uint64_t kClassVar = 2;
inline constexpr std::uint64_t kSemantic = 3;
inline constexpr std::uint64_t kDirections = 4;
inline constexpr std::uint64_t kMixing = 5;
inline constexpr std::uint64_t kOffset = 6;
inline constexpr std::uint64_t kInstance = 7;
inline constexpr std::uint64_t kAssignment = 8;
inline constexpr std::uint64_t kInit = 20;
inline constexpr std::uint64_t kShuffle = 21;
inline constexpr std::uint64_t kStepNoise = 22;
inline constexpr std::uint64_t kCriticNoise = 23;
inline constexpr std::uint64_t kSynthesis = 24;
inline constexpr std::uint64_t kClassifier = 25;
}  // namespace stream_tag

}  // namespace adiva
