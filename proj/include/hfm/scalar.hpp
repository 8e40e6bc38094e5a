#pragma once

// The learned-computation code (tensor core, network, losses) is compiled
// twice: once with 32-bit floats for training and once with HFM_DOUBLE for
// tight gradient checks. The inline namespace keeps both builds linkable
// into a single binary.
#ifdef HFM_DOUBLE
#define HFM_ABI_NAMESPACE f64
#else
#define HFM_ABI_NAMESPACE f32
#endif

namespace hfm {
inline namespace HFM_ABI_NAMESPACE {

#ifdef HFM_DOUBLE
using Scalar = double;
#else
using Scalar = float;
#endif

}  // namespace HFM_ABI_NAMESPACE
}  // namespace hfm
