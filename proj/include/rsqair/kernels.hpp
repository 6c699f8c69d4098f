#ifndef RSQAIR_KERNELS_HPP
#define RSQAIR_KERNELS_HPP

// Numeric inner loops shared by the autodiff ops and the simulator.
//
// Every kernel here comes in two flavours: the default OpenMP version and a
// plain serial twin in kernels::ref. The parallel versions only ever split
// work across independent output elements and keep each accumulation inside
// one thread in a fixed order, so their results are bit-identical to the
// serial reference (reductions use a fixed block decomposition and are the
// one place where ref:: may differ in the last ulp; see block_sum).

namespace rsqair::kernels {

// Y (r x out) = X (r x in) * W^T (out x in) + b
void linear_rows(const double* X, const double* W, const double* b, double* Y,
                 int r, int in, int out);
// accumulates into gX, gW, gb
void linear_rows_bwd(const double* X, const double* W, const double* gY,
                     double* gX, double* gW, double* gb, int r, int in, int out);

// C (m x n) = A (m x k) * B (k x n), optionally accumulating
void matmul(const double* A, const double* B, double* C, int m, int k, int n, bool acc);
// C (m x n) = A (m x k) * B^T (n x k)
void matmul_nt(const double* A, const double* B, double* C, int m, int k, int n, bool acc);
// C (m x n) = A^T (k x m) * B (k x n)
void matmul_tn(const double* A, const double* B, double* C, int m, int k, int n, bool acc);

// deterministic blocked sum; identical bits for any thread count
double block_sum(const double* x, int n);

// win = [sx, sy, tx, ty] in normalized coordinates: a window pixel at
// normalized position (u,v) in [-1,1]^2 samples the frame at
// (sx*u + tx, sy*v + ty), bilinearly, zero outside the frame.
void bilinear_extract(const double* frame, int H, int W, const double* win,
                      double* out, int G);
void bilinear_extract_bwd(const double* frame, int H, int W, const double* win,
                          const double* gout, double* gframe, double* gwin, int G);

// inverse warp: canvas pixel at normalized (fx,fy) samples the glimpse at
// ((fx-tx)/sx, (fy-ty)/sy); zero outside the glimpse
void bilinear_place(const double* glimpse, int G, const double* win,
                    double* out, int H, int W);
void bilinear_place_bwd(const double* glimpse, int G, const double* win,
                        const double* gout, double* gglimpse, double* gwin,
                        int H, int W);

// valid convolution, stride s; x is (C,H,W), w is (Co, C*k*k), y is (Co,Ho,Wo)
void conv2d(const double* x, int C, int H, int W, const double* w, const double* b,
            int Co, int k, int s, double* y);
void conv2d_bwd(const double* x, int C, int H, int W, const double* w,
                const double* gy, double* gx, double* gw, double* gb,
                int Co, int k, int s);

inline int conv_out(int n, int k, int s) { return (n - k) / s + 1; }

namespace ref {
void linear_rows(const double* X, const double* W, const double* b, double* Y,
                 int r, int in, int out);
void matmul(const double* A, const double* B, double* C, int m, int k, int n, bool acc);
void matmul_nt(const double* A, const double* B, double* C, int m, int k, int n, bool acc);
void matmul_tn(const double* A, const double* B, double* C, int m, int k, int n, bool acc);
double plain_sum(const double* x, int n);
void bilinear_extract(const double* frame, int H, int W, const double* win,
                      double* out, int G);
void bilinear_place(const double* glimpse, int G, const double* win,
                    double* out, int H, int W);
void conv2d(const double* x, int C, int H, int W, const double* w, const double* b,
            int Co, int k, int s, double* y);
}  // namespace ref

}  // namespace rsqair::kernels

#endif
