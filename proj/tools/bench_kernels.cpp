// Times the OpenMP kernels against their serial references and verifies the
// forward results stay bitwise identical. Usage: bench_kernels [reps]

#include "advmk/kernels.hpp"
#include "advmk/rng.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>

using namespace advmk;

static TensorD randu(Shape s, Rng& rng) {
    TensorD t(std::move(s));
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-1.0, 1.0);
    return t;
}

template <class F>
static double time_ms(int reps, F&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    for (int r = 0; r < reps; ++r) fn();
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

int main(int argc, char** argv) {
    const int reps = argc > 1 ? std::atoi(argv[1]) : 20;
    Rng rng(42);

    struct ConvCase {
        const char* name;
        int ic, ih, iw, oc, k, stride, pad;
    } conv_cases[] = {
        {"conv 3->16 64x64 s1", 3, 64, 64, 16, 3, 1, 1},
        {"conv 16->32 32x32 s2", 16, 32, 32, 32, 3, 2, 1},
        {"conv 32->64 16x16 s1", 32, 16, 16, 64, 3, 1, 1},
    };

    std::printf("%-24s %12s %12s %8s %10s\n", "kernel", "omp ms", "serial ms", "speedup",
                "bitwise");
    for (const auto& c : conv_cases) {
        TensorD x = randu(Shape{c.ic, c.ih, c.iw}, rng);
        TensorD w = randu(Shape{c.oc, c.ic, c.k, c.k}, rng);
        const int oh = kernels::conv_out_dim(c.ih, c.k, c.stride, c.pad);
        const int ow = kernels::conv_out_dim(c.iw, c.k, c.stride, c.pad);
        TensorD out(Shape{c.oc, oh, ow}), ref_out(Shape{c.oc, oh, ow});

        const double t_omp =
            time_ms(reps, [&] { kernels::conv2d_forward(x, w, c.stride, c.pad, out); });
        const double t_ref =
            time_ms(reps, [&] { kernels::ref::conv2d_forward(x, w, c.stride, c.pad, ref_out); });
        bool same = true;
        for (std::int64_t i = 0; i < out.size(); ++i)
            if (out[i] != ref_out[i]) same = false;
        std::printf("%-24s %12.3f %12.3f %7.2fx %10s\n", c.name, t_omp, t_ref, t_ref / t_omp,
                    same ? "yes" : "NO");
    }

    {
        TensorD a = randu(Shape{256, 256}, rng), b = randu(Shape{256, 256}, rng);
        TensorD c(Shape{256, 256}), cr(Shape{256, 256});
        const double t_omp = time_ms(reps, [&] { kernels::matmul_nn(a, b, c); });
        const double t_ref = time_ms(reps, [&] { kernels::ref::matmul_nn(a, b, cr); });
        bool same = true;
        for (std::int64_t i = 0; i < c.size(); ++i)
            if (c[i] != cr[i]) same = false;
        std::printf("%-24s %12.3f %12.3f %7.2fx %10s\n", "matmul 256x256", t_omp, t_ref,
                    t_ref / t_omp, same ? "yes" : "NO");
    }

    {
        // grad kernels against the scatter reference (tolerance, not bitwise)
        TensorD x = randu(Shape{16, 32, 32}, rng);
        TensorD w = randu(Shape{32, 16, 3, 3}, rng);
        TensorD gout = randu(Shape{32, 32, 32}, rng);
        TensorD gx(x.shape), gw(w.shape), gx_ref(x.shape), gw_ref(w.shape);
        const double t_omp = time_ms(reps, [&] {
            gx.fill(0.0);
            gw.fill(0.0);
            kernels::conv2d_grad_input(gout, w, 1, 1, gx);
            kernels::conv2d_grad_weight(x, gout, 1, 1, gw);
        });
        const double t_ref = time_ms(reps, [&] {
            kernels::ref::conv2d_backward_scatter(x, w, gout, 1, 1, gx_ref, gw_ref);
        });
        double max_rel = 0;
        for (std::int64_t i = 0; i < gx.size(); ++i)
            max_rel = std::max(max_rel, std::abs(gx[i] - gx_ref[i]) /
                                            std::max(1.0, std::abs(gx_ref[i])));
        std::printf("%-24s %12.3f %12.3f %7.2fx  rel %.1e\n", "conv backward", t_omp, t_ref,
                    t_ref / t_omp, max_rel);
    }
    return 0;
}
