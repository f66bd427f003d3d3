#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "poe/config.hpp"
#include "poe/errors.hpp"
#include "poe/parallel.hpp"
#include "poe/runner.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerifyFailed = 1;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  std::string out_dir;
  int jobs = 0;
};

void add_common(CLI::App* cmd, Common& c, bool with_out_dir) {
  cmd->add_option("--config", c.config, "Experiment config (JSON)")->required();
  cmd->add_option("--seed", c.seed, "Run this seed instead of the config's seed list");
  cmd->add_option("--override", c.overrides, "Set a config field, key=value with a dotted key")->take_all();
  if (with_out_dir) cmd->add_option("--out-dir", c.out_dir, "Output folder (default: the config's output_dir)");
  cmd->add_option("--jobs", c.jobs, "OpenMP threads (0 = runtime default)")->check(CLI::NonNegativeNumber);
}

poe::config::ExperimentConfig prepare(const Common& c) {
  std::vector<std::string> overrides = c.overrides;
  if (c.seed) overrides.push_back("seeds=[" + std::to_string(*c.seed) + "]");
  auto config = poe::config::with_overrides(poe::config::load_config(c.config), overrides);
  if (c.jobs > 0) poe::set_thread_count(c.jobs);
  return config;
}

void report_error(const poe::Error& e) {
  poe::config::Json j = {{"error", std::string(poe::to_string(e.kind()))}, {"message", e.what()}};
  std::cerr << j.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Product-of-experts sampler: annealed MCMC with sequential Monte Carlo"};
  app.require_subcommand(1);

  Common run_opts;
  auto* run = app.add_subcommand("run", "Run the sampler for every seed and write report, samples and diagnostics");
  add_common(run, run_opts, true);

  Common verify_opts;
  auto* verify = app.add_subcommand("verify", "Compare the sampler against the config's oracle");
  add_common(verify, verify_opts, false);

  Common sweep_opts;
  std::string axis;
  std::vector<std::string> values;
  auto* sweep = app.add_subcommand("sweep", "Run once per axis value and seed; CSV to stdout and out-dir");
  add_common(sweep, sweep_opts, true);
  sweep->add_option("--axis", axis, "Dotted config field to vary, e.g. smc.L")->required();
  sweep->add_option("--values", values, "Values for the axis")->required()->delimiter(',');

  std::string bench_dir;
  auto* list = app.add_subcommand("list-benchmarks", "List the shipped benchmark configs");
  list->add_option("--dir", bench_dir, "Benchmark folder");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run) {
      const auto config = prepare(run_opts);
      const auto runs = poe::runner::run_seeds(config, config.seeds, poe::Execution::kParallel);
      const std::string dir = run_opts.out_dir.empty() ? config.output_dir : run_opts.out_dir;
      poe::runner::write_outputs(dir, config, runs);
      for (const auto& r : runs) {
        std::cout << "seed " << r.seed << ": selected particle " << r.result.selected << ", reward "
                  << r.result.selected_reward << ", " << r.result.resample_events.size() << " resampling events\n";
      }
      std::cout << "wrote " << dir << "/report.json, samples.csv, diagnostics.csv\n";
      return kExitOk;
    }
    if (*verify) {
      const auto config = prepare(verify_opts);
      const auto result = poe::runner::verify(config, poe::Execution::kParallel);
      poe::runner::print_verify(std::cout, result);
      return result.passed() ? kExitOk : kExitVerifyFailed;
    }
    if (*sweep) {
      const auto config = prepare(sweep_opts);
      const auto rows = poe::runner::sweep(config, axis, values, poe::Execution::kParallel);
      poe::runner::write_sweep_csv(std::cout, axis, rows);
      if (!sweep_opts.out_dir.empty()) {
        std::filesystem::create_directories(sweep_opts.out_dir);
        std::ofstream out(std::filesystem::path(sweep_opts.out_dir) / "sweep.csv");
        poe::runner::write_sweep_csv(out, axis, rows);
      }
      return kExitOk;
    }
    const auto dir = bench_dir.empty() ? poe::runner::default_benchmark_dir() : std::filesystem::path(bench_dir);
    for (const auto& b : poe::runner::list_benchmarks(dir)) {
      std::cout << b.name << "\t" << b.description << "\n";
    }
    return kExitOk;
  } catch (const poe::Error& e) {
    report_error(e);
    return e.kind() == poe::ErrorKind::kInvalidConfig ? kExitConfig : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << poe::config::Json{{"error", "runtime"}, {"message", e.what()}}.dump() << '\n';
    return kExitRuntime;
  }
}
