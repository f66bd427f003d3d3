#include "poe/ar.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "poe/errors.hpp"

namespace poe {
namespace {

std::string prefix_string(std::span<const std::size_t> prefix) {
  std::string out = "[";
  for (std::size_t i = 0; i < prefix.size(); ++i) out += (i ? "," : "") + std::to_string(prefix[i]);
  return out + "]";
}

void check_experts(std::span<const ArExpertPtr> experts) {
  if (experts.empty()) fail(ErrorKind::kInvalidArgument, "autoregressive product needs at least one expert");
  for (const auto& e : experts) {
    if (!e) fail(ErrorKind::kInvalidArgument, "null autoregressive expert");
    if (!(e->geometry() == experts.front()->geometry())) {
      fail(ErrorKind::kIncompatibleExperts, "autoregressive experts must share slice geometry");
    }
  }
}

// Elementwise product of the conditionals without normalization. For a
// single expert this is exactly that expert's conditional.
std::vector<double> unnormalized_product(std::span<const ArExpertPtr> experts, std::span<const std::size_t> prefix) {
  std::vector<double> probs = experts.front()->conditional(prefix);
  for (std::size_t e = 1; e < experts.size(); ++e) {
    const auto other = experts[e]->conditional(prefix);
    for (std::size_t c = 0; c < probs.size(); ++c) probs[c] *= other[c];
  }
  if (!(std::accumulate(probs.begin(), probs.end(), 0.0) > 0.0)) {
    fail(ErrorKind::kIncompatibleExperts, "product conditional vanishes at prefix " + prefix_string(prefix));
  }
  return probs;
}

std::size_t argmax(std::span<const double> values) {
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

}  // namespace

std::string_view to_string(SweepOrder order) noexcept {
  return order == SweepOrder::kSequential ? "sequential" : "random";
}

SweepOrder parse_sweep_order(std::string_view name) {
  if (name == "sequential") return SweepOrder::kSequential;
  if (name == "random") return SweepOrder::kRandom;
  fail(ErrorKind::kInvalidArgument, "unknown sweep order '" + std::string(name) + "'");
}

ArProduct::ArProduct(std::vector<ArExpertPtr> experts, SweepOrder order, AppendMode append_mode)
    : experts_(std::move(experts)), order_(order), append_mode_(append_mode) {
  check_experts(experts_);
  geometry_ = experts_.front()->geometry();
}

std::vector<double> product_conditional(std::span<const ArExpertPtr> experts, std::span<const std::size_t> prefix) {
  check_experts(experts);
  std::vector<double> probs = unnormalized_product(experts, prefix);
  const double total = std::accumulate(probs.begin(), probs.end(), 0.0);
  for (double& p : probs) p /= total;
  return probs;
}

void append_kernel(DiscreteState& state, std::span<const ArExpertPtr> experts, RngHandle& rng, AppendMode mode) {
  check_experts(experts);
  if (!(state.geometry() == experts.front()->geometry())) {
    fail(ErrorKind::kIncompatibleExperts, "state geometry differs from the experts'");
  }
  if (state.complete()) fail(ErrorKind::kInvalidArgument, "append to a complete sequence");
  const auto prefix = state.prefix_codes();
  const auto probs = unnormalized_product(experts, prefix);
  state.append(mode == AppendMode::kArgmax ? argmax(probs) : rng.categorical(probs));
}

void gibbs_kernel(DiscreteState& state, std::span<const ArExpertPtr> experts, SweepOrder order, RngHandle& rng) {
  check_experts(experts);
  const int filled = state.filled_len();
  if (filled < 1) fail(ErrorKind::kInvalidArgument, "Gibbs sweep needs at least one filled slice");
  const std::size_t values = state.geometry().slice_values();

  std::vector<int> positions(static_cast<std::size_t>(filled));
  std::iota(positions.begin(), positions.end(), 0);
  if (order == SweepOrder::kRandom) std::shuffle(positions.begin(), positions.end(), rng.engine());

  std::vector<std::size_t> codes = state.prefix_codes();
  std::vector<double> weights(values);
  for (int j : positions) {
    const auto pos = static_cast<std::size_t>(j);
    for (std::size_t c = 0; c < values; ++c) {
      codes[pos] = c;
      double w = 1.0;
      for (const auto& e : experts) {
        for (std::size_t k = pos; k < codes.size() && w > 0.0; ++k) {
          w *= e->conditional_probability(std::span<const std::size_t>(codes).first(k), codes[k]);
        }
      }
      weights[c] = w;
    }
    if (!(std::accumulate(weights.begin(), weights.end(), 0.0) > 0.0)) {
      fail(ErrorKind::kIncompatibleExperts, "Gibbs conditional of slice " + std::to_string(j) + " vanishes");
    }
    codes[pos] = rng.categorical(weights);
    state.set_slice(j, codes[pos]);
  }
}

DiscreteState greedy_complete(const DiscreteState& state, std::span<const ArExpertPtr> experts) {
  check_experts(experts);
  DiscreteState out = state;
  while (!out.complete()) {
    const auto prefix = out.prefix_codes();
    out.append(argmax(unnormalized_product(experts, prefix)));
  }
  return out;
}

std::size_t sequence_count(const SliceGeometry& geometry) {
  geometry.validate();
  const std::size_t s = geometry.slice_values();
  std::size_t total = 1;
  for (int i = 0; i < geometry.num_slices; ++i) {
    if (total > kMaxEnumeratedStates / s) {
      fail(ErrorKind::kCapacity, "sequence space exceeds " + std::to_string(kMaxEnumeratedStates) + " states");
    }
    total *= s;
  }
  return total;
}

std::size_t sequence_index(const DiscreteState& state) {
  if (!state.complete()) fail(ErrorKind::kInvalidArgument, "sequence_index needs a complete sequence");
  const std::size_t s = state.geometry().slice_values();
  std::size_t index = 0;
  for (int i = 0; i < state.geometry().num_slices; ++i) index = index * s + state.slice_code(i);
  return index;
}

DiscreteState sequence_from_index(const SliceGeometry& geometry, std::size_t index) {
  const std::size_t s = geometry.slice_values();
  if (index >= sequence_count(geometry)) fail(ErrorKind::kInvalidArgument, "sequence index out of range");
  std::vector<std::size_t> codes(static_cast<std::size_t>(geometry.num_slices));
  for (std::size_t i = codes.size(); i-- > 0;) {
    codes[i] = index % s;
    index /= s;
  }
  DiscreteState state(geometry);
  for (std::size_t c : codes) state.append(c);
  return state;
}

std::vector<double> exact_product_enumeration(std::span<const ArExpertPtr> experts) {
  check_experts(experts);
  const SliceGeometry& g = experts.front()->geometry();
  const std::size_t total = sequence_count(g);
  const std::size_t s = g.slice_values();
  const auto depth = static_cast<std::size_t>(g.num_slices);

  std::vector<double> probs;
  probs.reserve(total);
  std::vector<std::size_t> codes;
  codes.reserve(depth);
  // Depth-first in lexicographic order, so entries land at sequence_index.
  auto visit = [&](auto&& self, double weight) -> void {
    if (codes.size() == depth) {
      probs.push_back(weight);
      return;
    }
    for (std::size_t c = 0; c < s; ++c) {
      double w = weight;
      for (const auto& e : experts) {
        if (w == 0.0) break;
        w *= e->conditional_probability(codes, c);
      }
      codes.push_back(c);
      self(self, w);
      codes.pop_back();
    }
  };
  visit(visit, 1.0);

  const double mass = std::accumulate(probs.begin(), probs.end(), 0.0);
  if (!(mass > 0.0)) fail(ErrorKind::kIncompatibleExperts, "product of autoregressive experts has no mass");
  for (double& p : probs) p /= mass;
  return probs;
}

}  // namespace poe
