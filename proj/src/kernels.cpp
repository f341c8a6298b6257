// SPDX-License-Identifier: Apache-2.0

#include "owlet/kernels.h"

#include <algorithm>
#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace owlet::kernels {

bool flop_counter::enabled = false;
std::uint64_t flop_counter::total = 0;
std::uint64_t flop_counter::attention = 0;
int flop_counter::attention_depth = 0;

namespace {

int initial_threads() {
#ifdef _OPENMP
    int n = omp_get_max_threads();
#else
    int n = 1;
#endif
    if (const char* env = std::getenv("OWLET_THREADS")) {
        try {
            const int cap = std::stoi(env);
            if (cap >= 1) n = std::min(n, cap);
        } catch (...) {
            // ignore unparsable values, keep the hardware default
        }
    }
    return std::max(1, n);
}

int g_threads = initial_threads();

}  // namespace

int max_threads() { return g_threads; }

void set_threads(int n) {
    g_threads = std::max(1, n);
#ifdef _OPENMP
    omp_set_num_threads(g_threads);
#endif
}

bool use_parallel(std::int64_t work) {
#ifdef _OPENMP
    return g_threads > 1 && work >= kParallelGrain;
#else
    (void)work;
    return false;
#endif
}

}  // namespace owlet::kernels
