#pragma once

namespace tweezerlab {

enum class Execution { Serial, Parallel };

// Worker count for Execution::Parallel kernels. Defaults to the machine
// parallelism, capped by TWEEZERLAB_THREADS when set.
int worker_count();
void set_worker_count(int workers);
bool openmp_enabled();

}  // namespace tweezerlab
