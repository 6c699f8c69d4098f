// Times the OpenMP kernels against their serial reference twins on
// model-shaped workloads and verifies they agree numerically. Usage:
//   kernel_bench [reps]
// reps scales the measurement loop (default 20); each cell reports the best
// wall time over that many runs.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <string>
#include <vector>

#include "rsqair/kernels.hpp"
#include "rsqair/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace rsqair;

namespace {

std::vector<double> randv(int n, uint64_t key) {
    Rng r = Rng::derive(1234, "bench", key);
    std::vector<double> v(n);
    for (double& x : v) x = 2.0 * r.uniform() - 1.0;
    return v;
}

template <typename F>
double best_ms(F&& f, int reps) {
    double best = 1e300;
    for (int i = 0; i < reps; ++i) {
        auto t0 = std::chrono::steady_clock::now();
        f();
        auto t1 = std::chrono::steady_clock::now();
        best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    return best;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

void report(const char* name, const char* size, double serial, double parallel, double diff) {
    std::printf("%-18s %-22s %10.3f %10.3f %8.2fx   %.2e\n", name, size, serial, parallel,
                serial / parallel, diff);
}

}  // namespace

int main(int argc, char** argv) {
    int reps = argc > 1 ? std::atoi(argv[1]) : 20;
    if (reps < 1) reps = 1;
#ifdef _OPENMP
    std::printf("openmp threads: %d\n", omp_get_max_threads());
#else
    std::printf("openmp disabled: both columns run serially\n");
#endif
    std::printf("%-18s %-22s %10s %10s %9s   %s\n", "kernel", "size", "serial ms", "omp ms",
                "speedup", "max|diff|");

    {
        int m = 256, k = 256, n = 256;
        auto a = randv(m * k, 1), b = randv(k * n, 2);
        std::vector<double> yp(m * n), yr(m * n);
        kernels::matmul(a.data(), b.data(), yp.data(), m, k, n, false);
        kernels::ref::matmul(a.data(), b.data(), yr.data(), m, k, n, false);
        double tp = best_ms([&] { kernels::matmul(a.data(), b.data(), yp.data(), m, k, n, false); },
                            reps);
        double tr = best_ms(
            [&] { kernels::ref::matmul(a.data(), b.data(), yr.data(), m, k, n, false); }, reps);
        report("matmul", "256x256 * 256x256", tr, tp, max_abs_diff(yp, yr));
    }
    {
        int m = 256, k = 256, n = 256;
        auto a = randv(m * k, 3), b = randv(n * k, 4);
        std::vector<double> yp(m * n), yr(m * n);
        double tp = best_ms(
            [&] { kernels::matmul_nt(a.data(), b.data(), yp.data(), m, k, n, false); }, reps);
        double tr = best_ms(
            [&] { kernels::ref::matmul_nt(a.data(), b.data(), yr.data(), m, k, n, false); }, reps);
        report("matmul_nt", "256x256 * (256x256)t", tr, tp, max_abs_diff(yp, yr));
    }
    {
        int m = 256, k = 256, n = 256;
        auto a = randv(k * m, 5), b = randv(k * n, 6);
        std::vector<double> yp(m * n), yr(m * n);
        double tp = best_ms(
            [&] { kernels::matmul_tn(a.data(), b.data(), yp.data(), m, k, n, false); }, reps);
        double tr = best_ms(
            [&] { kernels::ref::matmul_tn(a.data(), b.data(), yr.data(), m, k, n, false); }, reps);
        report("matmul_tn", "(256x256)t * 256x256", tr, tp, max_abs_diff(yp, yr));
    }
    {
        int r = 64, in = 512, out = 512;
        auto x = randv(r * in, 7), w = randv(in * out, 8), b = randv(out, 9);
        std::vector<double> yp(r * out), yr(r * out);
        double tp = best_ms(
            [&] { kernels::linear_rows(x.data(), w.data(), b.data(), yp.data(), r, in, out); },
            reps);
        double tr = best_ms(
            [&] { kernels::ref::linear_rows(x.data(), w.data(), b.data(), yr.data(), r, in, out); },
            reps);
        report("linear_rows", "64 rows, 512->512", tr, tp, max_abs_diff(yp, yr));
    }
    {
        int C = 8, H = 128, W = 128, Co = 16, k = 5, s = 2;
        int Ho = kernels::conv_out(H, k, s), Wo = kernels::conv_out(W, k, s);
        auto x = randv(C * H * W, 10), w = randv(Co * C * k * k, 11), b = randv(Co, 12);
        std::vector<double> yp(Co * Ho * Wo), yr(Co * Ho * Wo);
        double tp = best_ms(
            [&] { kernels::conv2d(x.data(), C, H, W, w.data(), b.data(), Co, k, s, yp.data()); },
            reps);
        double tr = best_ms(
            [&] {
                kernels::ref::conv2d(x.data(), C, H, W, w.data(), b.data(), Co, k, s, yr.data());
            },
            reps);
        report("conv2d", "8x128x128 k5 s2 co16", tr, tp, max_abs_diff(yp, yr));
    }
    {
        int H = 256, W = 256, G = 64;
        auto frame = randv(H * W, 13);
        double win[4] = {0.6, 0.5, 0.1, -0.2};
        std::vector<double> yp(G * G), yr(G * G);
        double tp = best_ms(
            [&] { kernels::bilinear_extract(frame.data(), H, W, win, yp.data(), G); }, reps);
        double tr = best_ms(
            [&] { kernels::ref::bilinear_extract(frame.data(), H, W, win, yr.data(), G); }, reps);
        report("bilinear_extract", "256x256 -> 64x64", tr, tp, max_abs_diff(yp, yr));
    }
    {
        int H = 256, W = 256, G = 64;
        auto glimpse = randv(G * G, 14);
        double win[4] = {0.6, 0.5, 0.1, -0.2};
        std::vector<double> yp(H * W), yr(H * W);
        double tp = best_ms(
            [&] { kernels::bilinear_place(glimpse.data(), G, win, yp.data(), H, W); }, reps);
        double tr = best_ms(
            [&] { kernels::ref::bilinear_place(glimpse.data(), G, win, yr.data(), H, W); }, reps);
        report("bilinear_place", "64x64 -> 256x256", tr, tp, max_abs_diff(yp, yr));
    }
    {
        int n = 1 << 22;
        auto x = randv(n, 15);
        double vp = 0.0, vr = 0.0;
        double tp = best_ms([&] { vp = kernels::block_sum(x.data(), n); }, reps);
        double tr = best_ms([&] { vr = kernels::ref::plain_sum(x.data(), n); }, reps);
        report("block_sum", "4M doubles", tr, tp, std::abs(vp - vr));
    }
    return 0;
}
