#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "poe/experts.hpp"
#include "poe/rng.hpp"
#include "poe/sample.hpp"

namespace poe {

enum class SweepOrder { kSequential, kRandom };

/// kArgmax replaces sampling in the append kernel by the mode of the
/// product conditional (ties to the lowest code).
enum class AppendMode { kSample, kArgmax };

std::string_view to_string(SweepOrder order) noexcept;
SweepOrder parse_sweep_order(std::string_view name);

/// Experts of one autoregressive product. All share a slice geometry.
class ArProduct {
 public:
  explicit ArProduct(std::vector<ArExpertPtr> experts, SweepOrder order = SweepOrder::kSequential,
                     AppendMode append_mode = AppendMode::kSample);

  const SliceGeometry& geometry() const noexcept { return geometry_; }
  std::span<const ArExpertPtr> experts() const noexcept { return experts_; }
  SweepOrder sweep_order() const noexcept { return order_; }
  AppendMode append_mode() const noexcept { return append_mode_; }

 private:
  std::vector<ArExpertPtr> experts_;
  SliceGeometry geometry_;
  SweepOrder order_;
  AppendMode append_mode_;
};

/// Normalized elementwise product of the experts' next-slice conditionals.
/// Throws kIncompatibleExperts when the product vanishes.
std::vector<double> product_conditional(std::span<const ArExpertPtr> experts, std::span<const std::size_t> prefix);

/// Propagation kernel: append one slice drawn from the product conditional.
void append_kernel(DiscreteState& state, std::span<const ArExpertPtr> experts, RngHandle& rng,
                   AppendMode mode = AppendMode::kSample);

/// One Gibbs sweep over the filled slices. Slice j is resampled from
///   prod_e prod_{k >= j, k < filled} p_e(x_k | x_{<k})
/// as a function of x_j, which is the exact full conditional of the product
/// of prefix marginals.
void gibbs_kernel(DiscreteState& state, std::span<const ArExpertPtr> experts, SweepOrder order, RngHandle& rng);

/// Deterministic completion of a prefix by the argmax of the product
/// conditionals. Used to score discrete prefixes with reward experts.
DiscreteState greedy_complete(const DiscreteState& state, std::span<const ArExpertPtr> experts);

/// Normalized product distribution over complete sequences, indexed by
/// sequence_index(). Throws kCapacity above kMaxEnumeratedStates and
/// kIncompatibleExperts when the product has no mass.
std::vector<double> exact_product_enumeration(std::span<const ArExpertPtr> experts);

/// Index of a complete sequence: slice codes read as a base-S number, first
/// slice most significant.
std::size_t sequence_index(const DiscreteState& state);
DiscreteState sequence_from_index(const SliceGeometry& geometry, std::size_t index);
std::size_t sequence_count(const SliceGeometry& geometry);

}  // namespace poe
