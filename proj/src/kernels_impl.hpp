#pragma once
#include "riskcast/kernels.hpp"

namespace riskcast::kernels {

const Ops& scalar_ops();
#if defined(RISKCAST_HAVE_AVX2)
const Ops& avx2_ops();
#endif
#if defined(RISKCAST_HAVE_NEON)
const Ops& neon_ops();
#endif

}  // namespace riskcast::kernels
