#ifndef RSQAIR_GLIMPSE_HPP
#define RSQAIR_GLIMPSE_HPP

// Differentiable attention windows. A physical window (s_x, s_y, t_x, t_y)
// in normalized [-1,1] coordinates selects a frame region: extraction
// resamples it to a G x G glimpse, placement warps a glimpse back onto an
// otherwise-zero canvas with the inverse map. Sampling is bilinear with zero
// padding, so both directions preserve the [0,1] range of their inputs.

#include "rsqair/autodiff.hpp"
#include "rsqair/tensor.hpp"

namespace rsqair {

struct AffineWindow {
    // [[s_x, 0, t_x], [0, s_y, t_y]]
    double m[2][3];
};

// throws InvalidWindowError when s_x or s_y is not strictly positive
AffineWindow where_to_affine(const Tensor& z_where);

// tensor side (no gradients)
Tensor extract_glimpse(const Tensor& frame, const Tensor& z_where, int G);
Tensor place_glimpse(const Tensor& glimpse, const Tensor& z_where, int H, int W);

// tape side; z_where is a length-4 Var, gradients flow into frame/glimpse
// and window
ad::Var extract_glimpse(ad::Tape& t, ad::Var frame, ad::Var z_where, int G);
ad::Var place_glimpse(ad::Tape& t, ad::Var glimpse, ad::Var z_where, int H, int W);

}  // namespace rsqair

#endif
