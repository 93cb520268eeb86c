#pragma once

#include <cstddef>
#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace phaseforge::nn {

/// Worker count from PHASEFORGE_THREADS: unset uses every core, 0 or 1 runs
/// single-threaded. Every parallel loop writes disjoint outputs and reduces in
/// a fixed order, so results do not depend on this value.
inline int configured_threads()
{
    static const int threads = [] {
        int hw = 1;
#ifdef _OPENMP
        hw = omp_get_max_threads();
#endif
        const char* env = std::getenv("PHASEFORGE_THREADS");
        if (env == nullptr || *env == '\0') {
            return hw;
        }
        const long requested = std::strtol(env, nullptr, 10);
        if (requested <= 1) {
            return 1;
        }
        return requested < hw ? static_cast<int>(requested) : hw;
    }();
    return threads;
}

template <typename F>
void parallel_for(std::size_t count, F&& body)
{
#ifdef _OPENMP
    const int threads = configured_threads();
    if (threads > 1 && count > 1) {
#pragma omp parallel for schedule(static) num_threads(threads)
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(count); ++i) {
            body(static_cast<std::size_t>(i));
        }
        return;
    }
#endif
    for (std::size_t i = 0; i < count; ++i) {
        body(i);
    }
}

} // namespace phaseforge::nn
