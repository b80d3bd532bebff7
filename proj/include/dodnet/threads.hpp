#pragma once

namespace dodnet {

/// Caps OpenMP and BLAS threads. n < 1 is treated as 1.
void set_threads(int n);
int max_threads();
/// Applies DOD_THREADS when set; returns the resulting thread count.
int init_threads_from_env();

}  // namespace dodnet
