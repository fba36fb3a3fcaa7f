// OpenMP helpers. Every parallel kernel in the project keeps a serial
// reference path selected by ExecPolicy so tests can compare the two.

#pragma once

#ifdef _OPENMP
#include <omp.h>
#endif

namespace af {

enum class ExecPolicy { Serial, Parallel };

inline int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

/// parallel_for(n, f) calls f(i) for i in [0, n). Iterations must be
/// independent; any shared writes are the caller's problem.
template <class F>
void parallel_for(int n, F&& f, ExecPolicy policy = ExecPolicy::Parallel) {
#ifdef _OPENMP
    if (policy == ExecPolicy::Parallel && n > 1) {
#pragma omp parallel for schedule(dynamic)
        for (int i = 0; i < n; ++i) f(i);
        return;
    }
#else
    (void)policy;
#endif
    for (int i = 0; i < n; ++i) f(i);
}

}  // namespace af
