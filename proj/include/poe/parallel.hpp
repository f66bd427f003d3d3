#pragma once

#include <cstddef>
#include <exception>
#include <string_view>

#include <omp.h>

namespace poe {

/// Particle loops have an OpenMP path and a serial reference path. Both
/// produce bit-identical results because every particle owns its RNG
/// stream and reductions happen serially after the loop.
enum class Execution { kSerial, kParallel };

std::string_view to_string(Execution execution) noexcept;

/// Calls body(i) for i in [0, n). Exceptions thrown inside the parallel
/// region are captured and the first one (lowest index) is rethrown.
template <typename Body>
void for_each_index(std::size_t n, Execution execution, Body&& body) {
  if (execution == Execution::kSerial || n < 2) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::exception_ptr first_error;
  std::size_t first_index = n;
  const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(poe_for_each_index)
      {
        if (static_cast<std::size_t>(i) < first_index) {
          first_index = static_cast<std::size_t>(i);
          first_error = std::current_exception();
        }
      }
    }
  }
  if (first_error) std::rethrow_exception(first_error);
}

void set_thread_count(int threads);

}  // namespace poe
