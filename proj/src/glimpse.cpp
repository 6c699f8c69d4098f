#include "rsqair/glimpse.hpp"

#include "rsqair/errors.hpp"
#include "rsqair/kernels.hpp"

namespace rsqair {

namespace {

void check_window(double sx, double sy) {
    if (!(sx > 0.0) || !(sy > 0.0))
        throw InvalidWindowError("scale must be strictly positive, got (" +
                                 std::to_string(sx) + ", " + std::to_string(sy) + ")");
}

}  // namespace

AffineWindow where_to_affine(const Tensor& z_where) {
    if (z_where.size() != 4) throw ShapeError("window needs 4 components");
    check_window(z_where[0], z_where[1]);
    AffineWindow w;
    w.m[0][0] = z_where[0];
    w.m[0][1] = 0.0;
    w.m[0][2] = z_where[2];
    w.m[1][0] = 0.0;
    w.m[1][1] = z_where[1];
    w.m[1][2] = z_where[3];
    return w;
}

Tensor extract_glimpse(const Tensor& frame, const Tensor& z_where, int G) {
    if (frame.shape().rank != 2) throw ShapeError("frame must be 2-d");
    check_window(z_where[0], z_where[1]);
    Tensor out(Shape::mat(G, G));
    kernels::bilinear_extract(frame.data(), frame.shape().rows(), frame.shape().cols(),
                              z_where.data(), out.data(), G);
    return out;
}

Tensor place_glimpse(const Tensor& glimpse, const Tensor& z_where, int H, int W) {
    if (glimpse.shape().rank != 2) throw ShapeError("glimpse must be 2-d");
    check_window(z_where[0], z_where[1]);
    Tensor out(Shape::mat(H, W));
    kernels::bilinear_place(glimpse.data(), glimpse.shape().rows(), z_where.data(),
                            out.data(), H, W);
    return out;
}

ad::Var extract_glimpse(ad::Tape& t, ad::Var frame, ad::Var z_where, int G) {
    (void)t;
    check_window(z_where.v[0], z_where.v[1]);
    return ad::bilinear_extract_(frame, z_where, G);
}

ad::Var place_glimpse(ad::Tape& t, ad::Var glimpse, ad::Var z_where, int H, int W) {
    (void)t;
    check_window(z_where.v[0], z_where.v[1]);
    return ad::bilinear_place_(glimpse, z_where, H, W);
}

}  // namespace rsqair
