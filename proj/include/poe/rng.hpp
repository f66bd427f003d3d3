#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>

#include <Eigen/Core>

namespace poe {

/// SplitMix64 finalizer. Used to derive independent engine seeds from
/// (seed, stream) pairs.
std::uint64_t mix64(std::uint64_t value) noexcept;

/// A deterministic random stream. One handle per particle; the same
/// (seed, stream) and call sequence always reproduces the same draws.
class RngHandle {
 public:
  RngHandle(std::uint64_t seed, std::uint64_t stream);

  /// Stream for particle `index` after `generation` resampling rounds.
  static RngHandle for_particle(std::uint64_t seed, std::size_t index, std::uint64_t generation = 0);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }

  double normal();
  double uniform();  // [0, 1)
  Eigen::VectorXd normal_vector(Eigen::Index dim);
  std::size_t index(std::size_t n);  // uniform over [0, n)

  /// Inverse-CDF draw from nonnegative (not necessarily normalized) weights.
  std::size_t categorical(std::span<const double> weights);

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace poe
