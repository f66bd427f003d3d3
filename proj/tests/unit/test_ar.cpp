#include <catch_amalgamated.hpp>

#include <cmath>
#include <numeric>
#include <vector>

#include "poe/annealing.hpp"
#include "poe/ar.hpp"
#include "poe/errors.hpp"
#include "poe/experts.hpp"
#include "poe/oracle.hpp"
#include "poe/rng.hpp"

using namespace poe;

namespace {

const SliceGeometry kBench{6, 4, 1};

std::vector<ArExpertPtr> bench_pair() {
  return {random_markov_ar_expert(kBench, 0.3, 11), random_markov_ar_expert(kBench, 0.3, 23)};
}

// Every slice takes code (k + shift) % alphabet.
ArExpertPtr deterministic_chain(SliceGeometry g, std::size_t shift) {
  const std::size_t s = g.slice_values();
  std::vector<std::vector<double>> levels;
  std::size_t rows = 1;
  for (int k = 0; k < g.num_slices; ++k, rows *= s) {
    std::vector<double> t(rows * s, 0.0);
    for (std::size_t r = 0; r < rows; ++r) t[r * s + (static_cast<std::size_t>(k) + shift) % s] = 1.0;
    levels.push_back(std::move(t));
  }
  return tabular_ar_expert(g, std::move(levels));
}

std::vector<std::size_t> codes_of(const SliceGeometry& g, std::size_t index, int len) {
  if (len == 0) return {};
  SliceGeometry partial = g;
  partial.num_slices = len;
  return sequence_from_index(partial, index).prefix_codes();
}

// Unnormalized product of prefix marginals over all sequences of length `len`.
std::vector<double> prefix_product(const std::vector<ArExpertPtr>& experts, int len) {
  const SliceGeometry& g = experts.front()->geometry();
  const auto count = static_cast<std::size_t>(std::pow(double(g.slice_values()), len));
  std::vector<double> out(count, 1.0);
  for (std::size_t i = 0; i < count; ++i) {
    const auto codes = codes_of(g, i, len);
    for (const auto& e : experts) out[i] *= e->joint_probability(codes);
  }
  return out;
}

// Exact law of initial_prefix + run_chain with sequential sweeps, propagated
// as a probability vector over prefixes.
std::vector<double> sampler_law(const std::vector<ArExpertPtr>& experts, int sweeps) {
  const SliceGeometry& g = experts.front()->geometry();
  const std::size_t s = g.slice_values();
  std::vector<double> dist{1.0};
  for (int n = 1; n <= g.num_slices; ++n) {
    std::vector<double> next(dist.size() * s);
    for (std::size_t i = 0; i < dist.size(); ++i) {
      const auto prefix = codes_of(g, i, n - 1);
      std::vector<double> cond(s, 1.0);
      for (const auto& e : experts) {
        const auto c = e->conditional(prefix);
        for (std::size_t k = 0; k < s; ++k) cond[k] *= c[k];
      }
      const double z = std::accumulate(cond.begin(), cond.end(), 0.0);
      for (std::size_t k = 0; k < s; ++k) next[i * s + k] = dist[i] * cond[k] / z;
    }
    dist = std::move(next);
    if (n == 1) continue;
    const auto w = prefix_product(experts, n);
    for (int sweep = 0; sweep < sweeps; ++sweep) {
      for (int j = 0; j < n; ++j) {
        // Slice j has stride s^(n - 1 - j) in the index.
        const auto stride = static_cast<std::size_t>(std::pow(double(s), n - 1 - j));
        std::vector<double> updated(dist.size(), 0.0);
        for (std::size_t i = 0; i < dist.size(); ++i) {
          const std::size_t digit = (i / stride) % s;
          const std::size_t base = i - digit * stride;
          double mass = 0.0, norm = 0.0;
          for (std::size_t c = 0; c < s; ++c) {
            mass += dist[base + c * stride];
            norm += w[base + c * stride];
          }
          updated[i] = mass * w[i] / norm;
        }
        dist = std::move(updated);
      }
    }
  }
  return dist;
}

std::vector<std::size_t> run_annealed(const ArProduct& product, int sweeps, std::size_t runs, std::uint64_t seed) {
  const auto sched = make_schedule(product.geometry().num_slices, TimeGrid::kUniform, KappaRule{}, sweeps);
  AnnealOptions opts;
  opts.record_snapshots = false;
  std::vector<std::size_t> states(runs);
  for (std::size_t r = 0; r < runs; ++r) {
    RngHandle rng(seed, r);
    auto x0 = initial_prefix(product, rng);
    auto chain = run_chain(std::move(x0), product, sched, rng, opts);
    states[r] = sequence_index(std::get<DiscreteState>(chain.sample));
  }
  return states;
}

}  // namespace

TEST_CASE("product conditional") {
  SECTION("single uniform expert is uniform") {
    const std::vector<ArExpertPtr> e{uniform_ar_expert({3, 4, 1})};
    const std::vector<std::size_t> prefix{1};
    CHECK(product_conditional(e, prefix) == std::vector<double>(4, 0.25));
    RngHandle rng(1, 0);
    std::vector<int> counts(4, 0);
    for (int i = 0; i < 40000; ++i) {
      DiscreteState s(SliceGeometry{3, 4, 1});
      append_kernel(s, e, rng);
      ++counts[s.slice_code(0)];
    }
    for (int c : counts) CHECK(std::abs(c / 40000.0 - 0.25) < 0.01);
  }
  SECTION("identical deterministic experts") {
    const auto d = deterministic_chain({3, 4, 1}, 2);
    const std::vector<ArExpertPtr> e{d, d};
    RngHandle rng(2, 0);
    DiscreteState s(SliceGeometry{3, 4, 1});
    append_kernel(s, e, rng);
    append_kernel(s, e, rng);
    CHECK(s.prefix_codes() == std::vector<std::size_t>{2, 3});
  }
  SECTION("equals the conditional of the enumerated prefix product") {
    const auto experts = bench_pair();
    const std::vector<std::size_t> prefix{3, 0, 2};
    const auto cond = product_conditional(experts, prefix);
    const auto table = prefix_product(experts, 4);
    const std::size_t base = ((3 * 4 + 0) * 4 + 2) * 4;
    double z = 0.0;
    for (std::size_t c = 0; c < 4; ++c) z += table[base + c];
    for (std::size_t c = 0; c < 4; ++c) CHECK(std::abs(cond[c] - table[base + c] / z) <= 1e-12);
    double manual_z = 0.0;
    std::vector<double> manual(4);
    for (std::size_t c = 0; c < 4; ++c) {
      manual[c] = experts[0]->conditional(prefix)[c] * experts[1]->conditional(prefix)[c];
      manual_z += manual[c];
    }
    for (std::size_t c = 0; c < 4; ++c) CHECK(std::abs(cond[c] - manual[c] / manual_z) <= 1e-15);
  }
  SECTION("incompatible experts") {
    const std::vector<ArExpertPtr> e{deterministic_chain({2, 3, 1}, 0), deterministic_chain({2, 3, 1}, 1)};
    const std::vector<std::size_t> empty;
    CHECK_THROWS_AS(product_conditional(e, empty), Error);
    RngHandle rng(1, 0);
    DiscreteState s(SliceGeometry{2, 3, 1});
    try {
      append_kernel(s, e, rng);
      FAIL("expected incompatible experts");
    } catch (const Error& err) {
      CHECK(err.kind() == ErrorKind::kIncompatibleExperts);
    }
  }
  SECTION("mismatched geometry is rejected") {
    const std::vector<ArExpertPtr> e{uniform_ar_expert({3, 4, 1}), uniform_ar_expert({3, 3, 1})};
    CHECK_THROWS_AS(ArProduct(e), Error);
  }
  SECTION("argmax append breaks ties low") {
    const std::vector<ArExpertPtr> e{uniform_ar_expert({2, 4, 1})};
    RngHandle rng(3, 0);
    DiscreteState s(SliceGeometry{2, 4, 1});
    append_kernel(s, e, rng, AppendMode::kArgmax);
    CHECK(s.slice_code(0) == 0);
  }
}

TEST_CASE("Gibbs kernel") {
  SECTION("point mass is stationary") {
    const std::vector<ArExpertPtr> e{deterministic_chain({5, 3, 1}, 1)};
    DiscreteState s(SliceGeometry{5, 3, 1});
    for (std::size_t c : {1, 2, 0, 1}) s.append(c);
    const auto before = s;
    RngHandle rng(4, 0);
    for (auto order : {SweepOrder::kSequential, SweepOrder::kRandom}) {
      for (int i = 0; i < 10; ++i) gibbs_kernel(s, e, order, rng);
    }
    CHECK(s == before);
  }
  SECTION("leaves the product invariant") {
    const auto experts = bench_pair();
    const auto exact = exact_product_enumeration(experts);
    const std::size_t n = 100000;
    for (auto order : {SweepOrder::kSequential, SweepOrder::kRandom}) {
      RngHandle rng(5, static_cast<std::uint64_t>(order));
      std::vector<std::size_t> states(n);
      std::vector<std::vector<double>> marginal(6, std::vector<double>(4, 0.0));
      for (std::size_t i = 0; i < n; ++i) {
        DiscreteState s = sequence_from_index(kBench, rng.categorical(exact));
        gibbs_kernel(s, experts, order, rng);
        states[i] = sequence_index(s);
        for (int j = 0; j < 6; ++j) marginal[j][s.slice_code(j)] += 1.0 / n;
      }
      CHECK(oracle::tv_distance(states, oracle::ExactDensity::table(exact)) <= 0.03);
      for (int j = 0; j < 6; ++j) {
        for (std::size_t c = 0; c < 4; ++c) {
          double p = 0.0;
          for (std::size_t i = 0; i < exact.size(); ++i) p += sequence_from_index(kBench, i).slice_code(j) == c ? exact[i] : 0.0;
          CHECK(std::abs(marginal[j][c] - p) <= 3.0 * std::sqrt(p * (1 - p) / n) + 1e-12);
        }
      }
    }
  }
  SECTION("needs a filled slice") {
    const std::vector<ArExpertPtr> e{uniform_ar_expert({3, 2, 1})};
    DiscreteState s(SliceGeometry{3, 2, 1});
    RngHandle rng(1, 0);
    CHECK_THROWS_AS(gibbs_kernel(s, e, SweepOrder::kSequential, rng), Error);
  }
}

TEST_CASE("exact enumeration") {
  SECTION("single expert is its own joint") {
    const auto e = random_tabular_ar_expert({4, 3, 1}, 0.7, 3);
    const auto table = exact_product_enumeration(std::vector<ArExpertPtr>{e});
    for (std::size_t i = 0; i < table.size(); ++i) {
      CHECK(std::abs(table[i] - e->joint_probability(sequence_from_index({4, 3, 1}, i).prefix_codes())) <= 1e-15);
    }
  }
  SECTION("uniform pair is uniform") {
    const auto table = exact_product_enumeration(std::vector<ArExpertPtr>{uniform_ar_expert({3, 3, 1}), uniform_ar_expert({3, 3, 1})});
    for (double p : table) CHECK(std::abs(p - 1.0 / 27.0) < 1e-15);
  }
  SECTION("seeded pair") {
    const auto table = exact_product_enumeration(bench_pair());
    REQUIRE(table.size() == 4096);
    CHECK(std::abs(std::accumulate(table.begin(), table.end(), 0.0) - 1.0) <= 1e-12);
    const auto raw = prefix_product(bench_pair(), 6);
    const double z = std::accumulate(raw.begin(), raw.end(), 0.0);
    CHECK(z > 0.0);
    for (std::size_t i = 0; i < table.size(); ++i) CHECK(std::abs(table[i] - raw[i] / z) <= 1e-12);
  }
  SECTION("capacity") {
    CHECK(sequence_count({11, 4, 1}) == 4194304);
    try {
      sequence_count({12, 4, 1});
      FAIL("expected a capacity error");
    } catch (const Error& err) {
      CHECK(err.kind() == ErrorKind::kCapacity);
    }
    const std::vector<ArExpertPtr> e{std::make_shared<TabularArExpert>(SliceGeometry{2, 4, 1},
                                                                       std::vector<std::vector<double>>{
                                                                           std::vector<double>(4, 0.25),
                                                                           std::vector<double>(16, 0.25)})};
    CHECK(exact_product_enumeration(e).size() == 16);
    CHECK_THROWS_AS(uniform_ar_expert({12, 4, 1}), Error);
  }
  SECTION("index round trip") {
    for (std::size_t i : {0, 1, 77, 4095}) CHECK(sequence_index(sequence_from_index(kBench, i)) == i);
    CHECK(sequence_from_index(kBench, 1).slice_code(5) == 1);
  }
}

TEST_CASE("greedy completion follows argmax conditionals") {
  const auto experts = bench_pair();
  DiscreteState s(kBench);
  s.append(2);
  const auto done = greedy_complete(s, experts);
  CHECK(done.complete());
  CHECK(done.slice_code(0) == 2);
  for (int k = 1; k < 6; ++k) {
    const auto prefix = done.prefix_codes();
    const auto cond = product_conditional(experts, std::span<const std::size_t>(prefix).first(static_cast<std::size_t>(k)));
    CHECK(static_cast<std::size_t>(std::max_element(cond.begin(), cond.end()) - cond.begin()) == done.slice_code(k));
  }
}

TEST_CASE("annealed AR sampler matches its exact law") {
  const SliceGeometry g{4, 3, 1};
  const std::vector<ArExpertPtr> experts{random_tabular_ar_expert(g, 0.5, 3), random_tabular_ar_expert(g, 0.5, 4)};
  const ArProduct product(experts);
  for (int sweeps : {0, 2}) {
    const auto law = sampler_law(experts, sweeps);
    const auto states = run_annealed(product, sweeps, 100000, 17);
    CHECK(oracle::tv_distance(states, oracle::ExactDensity::table(law)) <= 0.01);
  }
}

TEST_CASE("single expert without Gibbs is ancestral sampling") {
  const std::vector<ArExpertPtr> experts{random_markov_ar_expert(kBench, 0.3, 11)};
  const auto states = run_annealed(ArProduct(experts), 0, 100000, 3);
  CHECK(oracle::tv_distance(states, oracle::ExactDensity::table(exact_product_enumeration(experts))) <= 0.02);
}

TEST_CASE("sweep order parsing") {
  CHECK(parse_sweep_order("sequential") == SweepOrder::kSequential);
  CHECK(parse_sweep_order(to_string(SweepOrder::kRandom)) == SweepOrder::kRandom);
  CHECK_THROWS_AS(parse_sweep_order("backwards"), Error);
}
