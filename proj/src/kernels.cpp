#include "rsqair/kernels.hpp"

#include <cmath>
#include <cstring>
#include <vector>

namespace rsqair::kernels {

namespace {

// shared bilinear helpers; both directions sample with zero padding

inline double sample2d(const double* img, int H, int W, int y, int x) {
    if (y < 0 || y >= H || x < 0 || x >= W) return 0.0;
    return img[y * W + x];
}

struct Tap {
    int x0, y0;
    double ax, ay;  // fractional parts
};

inline Tap tap_at(double px, double py) {
    double fx = std::floor(px), fy = std::floor(py);
    return Tap{static_cast<int>(fx), static_cast<int>(fy), px - fx, py - fy};
}

inline double bilerp(const double* img, int H, int W, const Tap& t) {
    double v00 = sample2d(img, H, W, t.y0, t.x0);
    double v01 = sample2d(img, H, W, t.y0, t.x0 + 1);
    double v10 = sample2d(img, H, W, t.y0 + 1, t.x0);
    double v11 = sample2d(img, H, W, t.y0 + 1, t.x0 + 1);
    double top = v00 + t.ax * (v01 - v00);
    double bot = v10 + t.ax * (v11 - v10);
    return top + t.ay * (bot - top);
}

inline double d_bilerp_dx(const double* img, int H, int W, const Tap& t) {
    double v00 = sample2d(img, H, W, t.y0, t.x0);
    double v01 = sample2d(img, H, W, t.y0, t.x0 + 1);
    double v10 = sample2d(img, H, W, t.y0 + 1, t.x0);
    double v11 = sample2d(img, H, W, t.y0 + 1, t.x0 + 1);
    return (1.0 - t.ay) * (v01 - v00) + t.ay * (v11 - v10);
}

inline double d_bilerp_dy(const double* img, int H, int W, const Tap& t) {
    double v00 = sample2d(img, H, W, t.y0, t.x0);
    double v01 = sample2d(img, H, W, t.y0, t.x0 + 1);
    double v10 = sample2d(img, H, W, t.y0 + 1, t.x0);
    double v11 = sample2d(img, H, W, t.y0 + 1, t.x0 + 1);
    return (1.0 - t.ax) * (v10 - v00) + t.ax * (v11 - v01);
}

inline void scatter2d(double* img, int H, int W, int y, int x, double v) {
    if (y < 0 || y >= H || x < 0 || x >= W) return;
    img[y * W + x] += v;
}

inline void bilerp_scatter(double* gimg, int H, int W, const Tap& t, double g) {
    scatter2d(gimg, H, W, t.y0, t.x0, g * (1.0 - t.ax) * (1.0 - t.ay));
    scatter2d(gimg, H, W, t.y0, t.x0 + 1, g * t.ax * (1.0 - t.ay));
    scatter2d(gimg, H, W, t.y0 + 1, t.x0, g * (1.0 - t.ax) * t.ay);
    scatter2d(gimg, H, W, t.y0 + 1, t.x0 + 1, g * t.ax * t.ay);
}

inline double grid_coord(int i, int n) { return -1.0 + 2.0 * (i + 0.5) / n; }

inline double to_pixel(double norm, int n) { return 0.5 * (norm + 1.0) * n - 0.5; }

}  // namespace

void linear_rows(const double* X, const double* W, const double* b, double* Y,
                 int r, int in, int out) {
#pragma omp parallel for collapse(2) if (r * out > 256) schedule(static)
    for (int i = 0; i < r; ++i)
        for (int o = 0; o < out; ++o) {
            const double* x = X + static_cast<long>(i) * in;
            const double* w = W + static_cast<long>(o) * in;
            double acc = b ? b[o] : 0.0;
            for (int j = 0; j < in; ++j) acc += x[j] * w[j];
            Y[static_cast<long>(i) * out + o] = acc;
        }
}

void linear_rows_bwd(const double* X, const double* W, const double* gY,
                     double* gX, double* gW, double* gb, int r, int in, int out) {
    if (gX) {
#pragma omp parallel for if (r > 4) schedule(static)
        for (int i = 0; i < r; ++i) {
            const double* gy = gY + static_cast<long>(i) * out;
            double* gx = gX + static_cast<long>(i) * in;
            for (int o = 0; o < out; ++o) {
                double g = gy[o];
                const double* w = W + static_cast<long>(o) * in;
                for (int j = 0; j < in; ++j) gx[j] += g * w[j];
            }
        }
    }
    if (gW) {
#pragma omp parallel for if (out > 8) schedule(static)
        for (int o = 0; o < out; ++o) {
            double* gw = gW + static_cast<long>(o) * in;
            for (int i = 0; i < r; ++i) {
                double g = gY[static_cast<long>(i) * out + o];
                const double* x = X + static_cast<long>(i) * in;
                for (int j = 0; j < in; ++j) gw[j] += g * x[j];
            }
        }
    }
    if (gb) {
        for (int o = 0; o < out; ++o) {
            double acc = 0.0;
            for (int i = 0; i < r; ++i) acc += gY[static_cast<long>(i) * out + o];
            gb[o] += acc;
        }
    }
}

void matmul(const double* A, const double* B, double* C, int m, int k, int n, bool acc) {
#pragma omp parallel for if (m > 2) schedule(static)
    for (int i = 0; i < m; ++i) {
        double* c = C + static_cast<long>(i) * n;
        if (!acc) std::memset(c, 0, sizeof(double) * n);
        const double* a = A + static_cast<long>(i) * k;
        for (int l = 0; l < k; ++l) {
            double av = a[l];
            const double* b = B + static_cast<long>(l) * n;
            for (int j = 0; j < n; ++j) c[j] += av * b[j];
        }
    }
}

void matmul_nt(const double* A, const double* B, double* C, int m, int k, int n, bool acc) {
#pragma omp parallel for collapse(2) if (m * n > 64) schedule(static)
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            const double* a = A + static_cast<long>(i) * k;
            const double* b = B + static_cast<long>(j) * k;
            double s = 0.0;
            for (int l = 0; l < k; ++l) s += a[l] * b[l];
            long idx = static_cast<long>(i) * n + j;
            C[idx] = acc ? C[idx] + s : s;
        }
}

void matmul_tn(const double* A, const double* B, double* C, int m, int k, int n, bool acc) {
#pragma omp parallel for collapse(2) if (m * n > 64) schedule(static)
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int l = 0; l < k; ++l)
                s += A[static_cast<long>(l) * m + i] * B[static_cast<long>(l) * n + j];
            long idx = static_cast<long>(i) * n + j;
            C[idx] = acc ? C[idx] + s : s;
        }
}

double block_sum(const double* x, int n) {
    constexpr int kBlock = 2048;
    int nb = (n + kBlock - 1) / kBlock;
    if (nb <= 1) {
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += x[i];
        return s;
    }
    std::vector<double> partial(nb);
#pragma omp parallel for schedule(static)
    for (int b = 0; b < nb; ++b) {
        int lo = b * kBlock, hi = std::min(n, lo + kBlock);
        double s = 0.0;
        for (int i = lo; i < hi; ++i) s += x[i];
        partial[b] = s;
    }
    double s = 0.0;
    for (int b = 0; b < nb; ++b) s += partial[b];
    return s;
}

void bilinear_extract(const double* frame, int H, int W, const double* win,
                      double* out, int G) {
    double sx = win[0], sy = win[1], tx = win[2], ty = win[3];
#pragma omp parallel for if (G >= 32) schedule(static)
    for (int gy = 0; gy < G; ++gy) {
        double v = grid_coord(gy, G);
        double py = to_pixel(sy * v + ty, H);
        for (int gx = 0; gx < G; ++gx) {
            double u = grid_coord(gx, G);
            double px = to_pixel(sx * u + tx, W);
            out[gy * G + gx] = bilerp(frame, H, W, tap_at(px, py));
        }
    }
}

void bilinear_extract_bwd(const double* frame, int H, int W, const double* win,
                          const double* gout, double* gframe, double* gwin, int G) {
    double sx = win[0], sy = win[1], tx = win[2], ty = win[3];
    // serial: neighbouring output pixels scatter into shared frame pixels
    for (int gy = 0; gy < G; ++gy) {
        double v = grid_coord(gy, G);
        double py = to_pixel(sy * v + ty, H);
        for (int gx = 0; gx < G; ++gx) {
            double u = grid_coord(gx, G);
            double px = to_pixel(sx * u + tx, W);
            Tap t = tap_at(px, py);
            double g = gout[gy * G + gx];
            if (g == 0.0) continue;
            if (gframe) bilerp_scatter(gframe, H, W, t, g);
            if (gwin) {
                double dpx = d_bilerp_dx(frame, H, W, t);
                double dpy = d_bilerp_dy(frame, H, W, t);
                gwin[0] += g * dpx * 0.5 * W * u;
                gwin[1] += g * dpy * 0.5 * H * v;
                gwin[2] += g * dpx * 0.5 * W;
                gwin[3] += g * dpy * 0.5 * H;
            }
        }
    }
}

void bilinear_place(const double* glimpse, int G, const double* win,
                    double* out, int H, int W) {
    double sx = win[0], sy = win[1], tx = win[2], ty = win[3];
#pragma omp parallel for if (H >= 32) schedule(static)
    for (int y = 0; y < H; ++y) {
        double fy = grid_coord(y, H);
        double gy = to_pixel((fy - ty) / sy, G);
        for (int x = 0; x < W; ++x) {
            double fx = grid_coord(x, W);
            double gx = to_pixel((fx - tx) / sx, G);
            out[y * W + x] = bilerp(glimpse, G, G, tap_at(gx, gy));
        }
    }
}

void bilinear_place_bwd(const double* glimpse, int G, const double* win,
                        const double* gout, double* gglimpse, double* gwin,
                        int H, int W) {
    double sx = win[0], sy = win[1], tx = win[2], ty = win[3];
    for (int y = 0; y < H; ++y) {
        double fy = grid_coord(y, H);
        double v = (fy - ty) / sy;
        double gyc = to_pixel(v, G);
        for (int x = 0; x < W; ++x) {
            double fx = grid_coord(x, W);
            double u = (fx - tx) / sx;
            double gxc = to_pixel(u, G);
            Tap t = tap_at(gxc, gyc);
            double g = gout[y * W + x];
            if (g == 0.0) continue;
            if (gglimpse) bilerp_scatter(gglimpse, G, G, t, g);
            if (gwin) {
                double dgx = d_bilerp_dx(glimpse, G, G, t);
                double dgy = d_bilerp_dy(glimpse, G, G, t);
                // d gxc / d sx = 0.5*G * (-u/sx), d gxc / d tx = 0.5*G * (-1/sx)
                gwin[0] += g * dgx * 0.5 * G * (-u / sx);
                gwin[1] += g * dgy * 0.5 * G * (-v / sy);
                gwin[2] += g * dgx * 0.5 * G * (-1.0 / sx);
                gwin[3] += g * dgy * 0.5 * G * (-1.0 / sy);
            }
        }
    }
}

void conv2d(const double* x, int C, int H, int W, const double* w, const double* b,
            int Co, int k, int s, double* y) {
    int Ho = conv_out(H, k, s), Wo = conv_out(W, k, s);
#pragma omp parallel for if (Co > 1) schedule(static)
    for (int co = 0; co < Co; ++co) {
        const double* wc = w + static_cast<long>(co) * C * k * k;
        double* yc = y + static_cast<long>(co) * Ho * Wo;
        for (int oy = 0; oy < Ho; ++oy)
            for (int ox = 0; ox < Wo; ++ox) {
                double acc = b ? b[co] : 0.0;
                for (int ci = 0; ci < C; ++ci) {
                    const double* xc = x + (static_cast<long>(ci) * H + oy * s) * W + ox * s;
                    const double* wk = wc + static_cast<long>(ci) * k * k;
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx)
                            acc += wk[ky * k + kx] * xc[ky * W + kx];
                }
                yc[oy * Wo + ox] = acc;
            }
    }
}

void conv2d_bwd(const double* x, int C, int H, int W, const double* w,
                const double* gy, double* gx, double* gw, double* gb,
                int Co, int k, int s) {
    int Ho = conv_out(H, k, s), Wo = conv_out(W, k, s);
    if (gb) {
        for (int co = 0; co < Co; ++co)
            gb[co] += block_sum(gy + static_cast<long>(co) * Ho * Wo, Ho * Wo);
    }
    if (gw) {
#pragma omp parallel for if (Co > 1) schedule(static)
        for (int co = 0; co < Co; ++co) {
            const double* gyc = gy + static_cast<long>(co) * Ho * Wo;
            double* gwc = gw + static_cast<long>(co) * C * k * k;
            for (int ci = 0; ci < C; ++ci)
                for (int ky = 0; ky < k; ++ky)
                    for (int kx = 0; kx < k; ++kx) {
                        double acc = 0.0;
                        for (int oy = 0; oy < Ho; ++oy) {
                            const double* xrow = x + (static_cast<long>(ci) * H + oy * s + ky) * W + kx;
                            const double* grow = gyc + oy * Wo;
                            for (int ox = 0; ox < Wo; ++ox) acc += grow[ox] * xrow[ox * s];
                        }
                        gwc[(ci * k + ky) * k + kx] += acc;
                    }
        }
    }
    if (gx) {
        // gather form: each input pixel sums the output gradients it fed
#pragma omp parallel for if (C > 1) schedule(static)
        for (int ci = 0; ci < C; ++ci) {
            double* gxc = gx + static_cast<long>(ci) * H * W;
            for (int iy = 0; iy < H; ++iy)
                for (int ix = 0; ix < W; ++ix) {
                    double acc = 0.0;
                    for (int ky = 0; ky < k; ++ky) {
                        int ry = iy - ky;
                        if (ry < 0 || ry % s != 0) continue;
                        int oy = ry / s;
                        if (oy >= Ho) continue;
                        for (int kx = 0; kx < k; ++kx) {
                            int rx = ix - kx;
                            if (rx < 0 || rx % s != 0) continue;
                            int ox = rx / s;
                            if (ox >= Wo) continue;
                            for (int co = 0; co < Co; ++co)
                                acc += gy[(static_cast<long>(co) * Ho + oy) * Wo + ox] *
                                       w[(static_cast<long>(co) * C + ci) * k * k + ky * k + kx];
                        }
                    }
                    gxc[iy * W + ix] += acc;
                }
        }
    }
}

namespace ref {

void linear_rows(const double* X, const double* W, const double* b, double* Y,
                 int r, int in, int out) {
    for (int i = 0; i < r; ++i)
        for (int o = 0; o < out; ++o) {
            double acc = b ? b[o] : 0.0;
            for (int j = 0; j < in; ++j) acc += X[i * in + j] * W[o * in + j];
            Y[i * out + o] = acc;
        }
}

void matmul(const double* A, const double* B, double* C, int m, int k, int n, bool acc) {
    for (int i = 0; i < m; ++i) {
        if (!acc)
            for (int j = 0; j < n; ++j) C[i * n + j] = 0.0;
        for (int l = 0; l < k; ++l) {
            double av = A[i * k + l];
            for (int j = 0; j < n; ++j) C[i * n + j] += av * B[l * n + j];
        }
    }
}

void matmul_nt(const double* A, const double* B, double* C, int m, int k, int n, bool acc) {
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int l = 0; l < k; ++l) s += A[i * k + l] * B[j * k + l];
            C[i * n + j] = acc ? C[i * n + j] + s : s;
        }
}

void matmul_tn(const double* A, const double* B, double* C, int m, int k, int n, bool acc) {
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int l = 0; l < k; ++l) s += A[l * m + i] * B[l * n + j];
            C[i * n + j] = acc ? C[i * n + j] + s : s;
        }
}

double plain_sum(const double* x, int n) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += x[i];
    return s;
}

void bilinear_extract(const double* frame, int H, int W, const double* win,
                      double* out, int G) {
    double sx = win[0], sy = win[1], tx = win[2], ty = win[3];
    for (int gy = 0; gy < G; ++gy) {
        double py = to_pixel(sy * grid_coord(gy, G) + ty, H);
        for (int gx = 0; gx < G; ++gx) {
            double px = to_pixel(sx * grid_coord(gx, G) + tx, W);
            out[gy * G + gx] = bilerp(frame, H, W, tap_at(px, py));
        }
    }
}

void bilinear_place(const double* glimpse, int G, const double* win,
                    double* out, int H, int W) {
    double sx = win[0], sy = win[1], tx = win[2], ty = win[3];
    for (int y = 0; y < H; ++y) {
        double gy = to_pixel((grid_coord(y, H) - ty) / sy, G);
        for (int x = 0; x < W; ++x) {
            double gx = to_pixel((grid_coord(x, W) - tx) / sx, G);
            out[y * W + x] = bilerp(glimpse, G, G, tap_at(gx, gy));
        }
    }
}

void conv2d(const double* x, int C, int H, int W, const double* w, const double* b,
            int Co, int k, int s, double* y) {
    int Ho = conv_out(H, k, s), Wo = conv_out(W, k, s);
    for (int co = 0; co < Co; ++co)
        for (int oy = 0; oy < Ho; ++oy)
            for (int ox = 0; ox < Wo; ++ox) {
                double acc = b ? b[co] : 0.0;
                for (int ci = 0; ci < C; ++ci)
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx)
                            acc += w[(static_cast<long>(co) * C + ci) * k * k + ky * k + kx] *
                                   x[(static_cast<long>(ci) * H + oy * s + ky) * W + ox * s + kx];
                y[(static_cast<long>(co) * Ho + oy) * Wo + ox] = acc;
            }
}

}  // namespace ref

}  // namespace rsqair::kernels
