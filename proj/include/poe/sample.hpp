#pragma once

#include <cstddef>
#include <span>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "poe/rng.hpp"

namespace poe {

/// Shape of a discrete sequence: `num_slices` slices of `slice_shape`
/// symbols, each symbol in [0, alphabet).
struct SliceGeometry {
  int num_slices = 1;
  int alphabet = 2;
  int slice_shape = 1;

  /// Number of distinct values one slice can take, alphabet^slice_shape.
  std::size_t slice_values() const;
  void validate() const;

  friend bool operator==(const SliceGeometry&, const SliceGeometry&) = default;
};

/// A partially filled discrete sequence. Slices are addressed by their code
/// in [0, slice_values()), symbols stored big-endian within the slice.
class DiscreteState {
 public:
  explicit DiscreteState(SliceGeometry geometry);

  const SliceGeometry& geometry() const noexcept { return geometry_; }
  int filled_len() const noexcept { return filled_len_; }
  bool complete() const noexcept { return filled_len_ == geometry_.num_slices; }

  std::size_t slice_code(int slice) const;
  std::span<const int> slice_symbols(int slice) const;
  std::span<const int> symbols() const noexcept { return symbols_; }

  /// Codes of the first `filled_len()` slices.
  std::vector<std::size_t> prefix_codes() const;

  void set_slice(int slice, std::size_t code);
  void append(std::size_t code);
  void truncate(int filled_len);

  friend bool operator==(const DiscreteState&, const DiscreteState&) = default;

 private:
  SliceGeometry geometry_;
  std::vector<int> symbols_;
  int filled_len_ = 0;
};

using Sample = std::variant<Eigen::VectorXd, DiscreteState>;

bool is_finite(const Sample& sample);

/// Real-valued view used by reward experts and sample dumps. Discrete
/// symbols of the filled prefix are converted to doubles.
std::vector<double> flatten(const Sample& sample);

/// Draw from the Gaussian end of the path, N(0, I_dim).
Eigen::VectorXd sample_initial(Eigen::Index dim, RngHandle& rng);

/// Empty discrete sequence (filled_len = 0).
DiscreteState sample_initial(const SliceGeometry& geometry);

}  // namespace poe
