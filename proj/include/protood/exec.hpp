#pragma once

#include <cstddef>
#include <exception>
#include <vector>

namespace protood {

// Kernels take an execution policy. Exec::serial runs the same loop body on
// the calling thread and is the reference the parallel path is tested against.
enum class Exec { serial, parallel };

// Runs fn(i) for i in [0, n). Every kernel writes results into slot i and
// reduces afterwards in index order, so both policies give bitwise-equal
// output. If any iteration throws, the lowest-index exception is rethrown.
template <class F>
void parallel_for(std::size_t n, Exec exec, F&& fn) {
  std::vector<std::exception_ptr> errors(n);
  const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(static) if (exec == Exec::parallel)
  for (long long i = 0; i < count; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace protood
