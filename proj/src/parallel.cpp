#include "tweezerlab/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <string>
#include <thread>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace tweezerlab {

namespace {

int default_workers()
{
#ifdef _OPENMP
    int n = omp_get_num_procs();
#else
    int n = static_cast<int>(std::thread::hardware_concurrency());
#endif
    n = std::max(n, 1);
    if (const char* env = std::getenv("TWEEZERLAB_THREADS")) {
        try {
            int cap = std::stoi(env);
            if (cap >= 1)
                n = cap;
        }
        catch (...) {
        }
    }
    return n;
}

int& workers()
{
    static int n = default_workers();
    return n;
}

}  // namespace

int worker_count() { return workers(); }

void set_worker_count(int n) { workers() = std::max(n, 1); }

bool openmp_enabled()
{
#ifdef _OPENMP
    return true;
#else
    return false;
#endif
}

}  // namespace tweezerlab
