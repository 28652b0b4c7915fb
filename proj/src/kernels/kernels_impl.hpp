#pragma once

#include <cstddef>

#include "collapse/kernels.hpp"

namespace collapse::kernels::detail {

extern const KernelTable scalar_table;

#if defined(COLLAPSE_HAVE_AVX2)
extern const KernelTable avx2_table;
#endif

#if defined(COLLAPSE_HAVE_NEON)
extern const KernelTable neon_table;
#endif

}  // namespace collapse::kernels::detail
