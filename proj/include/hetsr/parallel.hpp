#pragma once

namespace hetsr {

// Caps the worker threads used by data-parallel kernels. Results do not
// depend on the thread count.
void set_num_threads(int threads);
int num_threads();

// Applies HETSR_THREADS from the environment when set to a positive integer.
void configure_threads_from_env();

}  // namespace hetsr
