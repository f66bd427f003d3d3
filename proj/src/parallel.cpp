#include "poe/parallel.hpp"

namespace poe {

std::string_view to_string(Execution execution) noexcept {
  return execution == Execution::kSerial ? "serial" : "parallel";
}

void set_thread_count(int threads) {
  if (threads > 0) omp_set_num_threads(threads);
}

}  // namespace poe
