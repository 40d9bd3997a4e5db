#pragma once

#include <cstddef>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace spex {

/// Execution policy for the data-parallel kernels. Serial is the reference
/// path; Parallel uses OpenMP. Both must produce bitwise-identical results:
/// parallel loops write into per-index slots and any reduction happens
/// afterwards in index order.
enum class Exec { Serial, Parallel };

template <typename Body>
void for_index(Exec exec, std::size_t n, Body&& body) {
  if (exec == Exec::Parallel) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
      body(static_cast<std::size_t>(i));
    }
    return;
#endif
  }
  for (std::size_t i = 0; i < n; ++i) body(i);
}

inline int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace spex
