#pragma once

namespace qreg {

// Thread count used by the OpenMP kernels; n <= 0 restores the default.
void set_num_threads(int n);
int max_threads();

}  // namespace qreg
