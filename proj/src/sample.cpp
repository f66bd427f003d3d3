#include "poe/sample.hpp"

#include <cmath>
#include <string>

#include "poe/errors.hpp"

namespace poe {

std::size_t SliceGeometry::slice_values() const {
  std::size_t values = 1;
  for (int i = 0; i < slice_shape; ++i) values *= static_cast<std::size_t>(alphabet);
  return values;
}

void SliceGeometry::validate() const {
  if (num_slices < 1 || alphabet < 1 || slice_shape < 1) {
    fail(ErrorKind::kInvalidArgument, "slice geometry needs num_slices, alphabet and slice_shape >= 1");
  }
}

DiscreteState::DiscreteState(SliceGeometry geometry)
    : geometry_(geometry),
      symbols_(static_cast<std::size_t>(geometry.num_slices) * static_cast<std::size_t>(geometry.slice_shape), 0) {
  geometry_.validate();
}

std::size_t DiscreteState::slice_code(int slice) const {
  const auto symbols = slice_symbols(slice);
  std::size_t code = 0;
  for (int s : symbols) code = code * static_cast<std::size_t>(geometry_.alphabet) + static_cast<std::size_t>(s);
  return code;
}

std::span<const int> DiscreteState::slice_symbols(int slice) const {
  if (slice < 0 || slice >= geometry_.num_slices) {
    fail(ErrorKind::kInvalidArgument, "slice index " + std::to_string(slice) + " out of range");
  }
  return std::span<const int>(symbols_).subspan(static_cast<std::size_t>(slice) * geometry_.slice_shape,
                                                static_cast<std::size_t>(geometry_.slice_shape));
}

std::vector<std::size_t> DiscreteState::prefix_codes() const {
  std::vector<std::size_t> codes;
  codes.reserve(static_cast<std::size_t>(filled_len_));
  for (int i = 0; i < filled_len_; ++i) codes.push_back(slice_code(i));
  return codes;
}

void DiscreteState::set_slice(int slice, std::size_t code) {
  if (slice < 0 || slice >= geometry_.num_slices) {
    fail(ErrorKind::kInvalidArgument, "slice index " + std::to_string(slice) + " out of range");
  }
  if (code >= geometry_.slice_values()) {
    fail(ErrorKind::kInvalidArgument, "slice code " + std::to_string(code) + " outside the alphabet");
  }
  const auto base = static_cast<std::size_t>(geometry_.alphabet);
  for (int k = geometry_.slice_shape - 1; k >= 0; --k) {
    symbols_[static_cast<std::size_t>(slice) * geometry_.slice_shape + k] = static_cast<int>(code % base);
    code /= base;
  }
}

void DiscreteState::append(std::size_t code) {
  if (complete()) fail(ErrorKind::kInvalidArgument, "cannot append to a complete sequence");
  set_slice(filled_len_, code);
  ++filled_len_;
}

void DiscreteState::truncate(int filled_len) {
  if (filled_len < 0 || filled_len > filled_len_) {
    fail(ErrorKind::kInvalidArgument, "truncate length " + std::to_string(filled_len) + " out of range");
  }
  for (std::size_t i = static_cast<std::size_t>(filled_len) * geometry_.slice_shape; i < symbols_.size(); ++i) {
    symbols_[i] = 0;
  }
  filled_len_ = filled_len;
}

bool is_finite(const Sample& sample) {
  if (const auto* x = std::get_if<Eigen::VectorXd>(&sample)) return x->allFinite();
  return true;
}

std::vector<double> flatten(const Sample& sample) {
  if (const auto* x = std::get_if<Eigen::VectorXd>(&sample)) return {x->data(), x->data() + x->size()};
  const auto& d = std::get<DiscreteState>(sample);
  const auto filled = static_cast<std::size_t>(d.filled_len()) * d.geometry().slice_shape;
  std::vector<double> out;
  out.reserve(filled);
  for (std::size_t i = 0; i < filled; ++i) out.push_back(d.symbols()[i]);
  return out;
}

Eigen::VectorXd sample_initial(Eigen::Index dim, RngHandle& rng) {
  if (dim < 1) fail(ErrorKind::kInvalidArgument, "state dimension must be >= 1");
  return rng.normal_vector(dim);
}

DiscreteState sample_initial(const SliceGeometry& geometry) { return DiscreteState(geometry); }

}  // namespace poe
