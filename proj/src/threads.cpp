#include "dodnet/threads.hpp"

#include <omp.h>

#include <cstdlib>
#include <string>

#include "dodnet/error.hpp"

extern "C" void openblas_set_num_threads(int);

namespace dodnet {

void set_threads(int n) {
  if (n < 1) n = 1;
  omp_set_num_threads(n);
  openblas_set_num_threads(n);
}

int max_threads() { return omp_get_max_threads(); }

int init_threads_from_env() {
  if (const char* env = std::getenv("DOD_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || n < 1) {
      throw ConfigError("DOD_THREADS must be a positive integer, got '" + std::string(env) + "'");
    }
    set_threads(static_cast<int>(n));
  }
  return max_threads();
}

}  // namespace dodnet
