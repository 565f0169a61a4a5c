#pragma once

namespace pathweaver::num {

// The library is compiled twice: the default 32-bit build used for training
// and planning, and a 64-bit build (PATHWEAVER_REAL_DOUBLE) used for gradient
// verification.
#ifdef PATHWEAVER_REAL_DOUBLE
using Real = double;
inline constexpr const char* kPrecisionName = "f64";
#else
using Real = float;
inline constexpr const char* kPrecisionName = "f32";
#endif

}  // namespace pathweaver::num
