#include "qreg/parallel.hpp"

#include <omp.h>

namespace qreg {

namespace {
const int kDefaultThreads = omp_get_max_threads();
}

void set_num_threads(int n) { omp_set_num_threads(n > 0 ? n : kDefaultThreads); }

int max_threads() { return omp_get_max_threads(); }

}  // namespace qreg
