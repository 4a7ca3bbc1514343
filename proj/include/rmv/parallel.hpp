#pragma once

#include <cstddef>
#include <thread>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace rmv {

inline int default_workers() {
    const unsigned n = std::thread::hardware_concurrency();
    return n == 0 ? 1 : static_cast<int>(n);
}

// Static-schedule loop over [0, n). Each index must write only its own
// outputs; results are then identical for any worker count.
template <class Body>
void parallel_for(std::size_t n, int workers, Body&& body) {
#ifdef _OPENMP
    if (workers > 1 && n >= 64) {
        const long long nn = static_cast<long long>(n);
#pragma omp parallel for schedule(static) num_threads(workers)
        for (long long i = 0; i < nn; ++i) body(static_cast<std::size_t>(i));
        return;
    }
#else
    (void)workers;
#endif
    for (std::size_t i = 0; i < n; ++i) body(i);
}

} // namespace rmv
