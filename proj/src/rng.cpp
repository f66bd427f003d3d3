#include "poe/rng.hpp"

#include <numeric>

#include "poe/errors.hpp"

namespace poe {

std::uint64_t mix64(std::uint64_t value) noexcept {
  value += 0x9e3779b97f4a7c15ULL;
  value = (value ^ (value >> 30)) * 0xbf58476d1ce4e5b9ULL;
  value = (value ^ (value >> 27)) * 0x94d049bb133111ebULL;
  return value ^ (value >> 31);
}

RngHandle::RngHandle(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), stream_(stream), engine_(mix64(mix64(seed) ^ mix64(stream ^ 0x5851f42d4c957f2dULL))) {}

RngHandle RngHandle::for_particle(std::uint64_t seed, std::size_t index, std::uint64_t generation) {
  // Generation 0 streams are the particle indices themselves so a single
  // chain with stream 0 matches particle 0 of a population.
  const std::uint64_t stream =
      generation == 0 ? static_cast<std::uint64_t>(index) : mix64(generation) ^ static_cast<std::uint64_t>(index);
  return RngHandle(seed, stream);
}

double RngHandle::normal() { return normal_(engine_); }

double RngHandle::uniform() { return uniform_(engine_); }

Eigen::VectorXd RngHandle::normal_vector(Eigen::Index dim) {
  Eigen::VectorXd out(dim);
  for (Eigen::Index i = 0; i < dim; ++i) out[i] = normal_(engine_);
  return out;
}

std::size_t RngHandle::index(std::size_t n) {
  if (n == 0) fail(ErrorKind::kInvalidArgument, "index() over an empty range");
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
}

std::size_t RngHandle::categorical(std::span<const double> weights) {
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(total > 0.0)) fail(ErrorKind::kInvalidArgument, "categorical draw from weights with no mass");
  const double u = uniform() * total;
  double running = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    running += weights[i];
    last_positive = i;
    if (u < running) return i;
  }
  return last_positive;
}

}  // namespace poe
