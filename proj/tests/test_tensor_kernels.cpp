// Kernel correctness: OpenMP kernels against the serial references (bitwise
// where the summation order matches, tolerance where it does not), plus
// adjoint consistency of the resize pair.

#include "advmk/kernels.hpp"
#include "advmk/rng.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>

using namespace advmk;

static int checks = 0;

#define CHECK(cond)                                                                              \
    do {                                                                                         \
        if (!(cond)) {                                                                           \
            std::fprintf(stderr, "FAIL %s:%d: %s\n", __FILE__, __LINE__, #cond);                 \
            std::exit(1);                                                                        \
        }                                                                                        \
        ++checks;                                                                                \
    } while (0)

static TensorD randu(Shape s, Rng& rng) {
    TensorD t(std::move(s));
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-1.0, 1.0);
    return t;
}

static bool bitwise_equal(const TensorD& a, const TensorD& b) {
    if (!a.same_shape(b)) return false;
    for (std::int64_t i = 0; i < a.size(); ++i)
        if (a[i] != b[i]) return false;
    return true;
}

static double max_rel_diff(const TensorD& a, const TensorD& b) {
    double m = 0;
    for (std::int64_t i = 0; i < a.size(); ++i) {
        const double d = std::abs(a[i] - b[i]);
        const double s = std::max(1.0, std::max(std::abs(a[i]), std::abs(b[i])));
        m = std::max(m, d / s);
    }
    return m;
}

static void test_conv_forward_matches_ref(Rng& rng) {
    struct Case {
        int ic, ih, iw, oc, k, stride, pad;
    } cases[] = {
        {3, 16, 16, 8, 3, 1, 1}, {3, 15, 13, 4, 3, 2, 1}, {5, 9, 9, 7, 5, 2, 2},
        {1, 4, 4, 1, 3, 1, 0},   {2, 8, 12, 6, 1, 1, 0},
    };
    for (const auto& c : cases) {
        TensorD x = randu(Shape{c.ic, c.ih, c.iw}, rng);
        TensorD w = randu(Shape{c.oc, c.ic, c.k, c.k}, rng);
        const int oh = kernels::conv_out_dim(c.ih, c.k, c.stride, c.pad);
        const int ow = kernels::conv_out_dim(c.iw, c.k, c.stride, c.pad);
        TensorD out(Shape{c.oc, oh, ow}), ref_out(Shape{c.oc, oh, ow});
        kernels::conv2d_forward(x, w, c.stride, c.pad, out);
        kernels::ref::conv2d_forward(x, w, c.stride, c.pad, ref_out);
        CHECK(bitwise_equal(out, ref_out));

        // flag off must route identically
        kernels::set_parallel(false);
        TensorD out2(Shape{c.oc, oh, ow});
        kernels::conv2d_forward(x, w, c.stride, c.pad, out2);
        kernels::set_parallel(true);
        CHECK(bitwise_equal(out, out2));
    }
    std::puts("conv2d forward matches serial reference bitwise: passed");
}

static void test_conv_grads_match_scatter(Rng& rng) {
    struct Case {
        int ic, ih, iw, oc, k, stride, pad;
    } cases[] = {{3, 10, 10, 6, 3, 1, 1}, {2, 9, 11, 5, 3, 2, 1}, {4, 8, 8, 3, 5, 2, 2}};
    for (const auto& c : cases) {
        TensorD x = randu(Shape{c.ic, c.ih, c.iw}, rng);
        TensorD w = randu(Shape{c.oc, c.ic, c.k, c.k}, rng);
        const int oh = kernels::conv_out_dim(c.ih, c.k, c.stride, c.pad);
        const int ow = kernels::conv_out_dim(c.iw, c.k, c.stride, c.pad);
        TensorD gout = randu(Shape{c.oc, oh, ow}, rng);

        TensorD gx(x.shape), gw(w.shape);
        kernels::conv2d_grad_input(gout, w, c.stride, c.pad, gx);
        kernels::conv2d_grad_weight(x, gout, c.stride, c.pad, gw);

        TensorD gx_ref(x.shape), gw_ref(w.shape);
        kernels::ref::conv2d_backward_scatter(x, w, gout, c.stride, c.pad, gx_ref, gw_ref);

        CHECK(max_rel_diff(gx, gx_ref) < 1e-12);
        CHECK(max_rel_diff(gw, gw_ref) < 1e-12);
    }
    std::puts("conv2d gather gradients match scatter reference: passed");
}

static void test_matmul_matches_ref(Rng& rng) {
    TensorD a = randu(Shape{7, 5}, rng), b = randu(Shape{5, 9}, rng);
    TensorD c(Shape{7, 9}), cr(Shape{7, 9});
    kernels::matmul_nn(a, b, c);
    kernels::ref::matmul_nn(a, b, cr);
    CHECK(bitwise_equal(c, cr));

    // nt against nn with an explicitly transposed operand
    TensorD bt(Shape{9, 5});
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 9; ++j) bt[(std::int64_t)j * 5 + i] = b[(std::int64_t)i * 9 + j];
    TensorD c2(Shape{7, 9});
    kernels::matmul_nt(a, bt, c2);
    CHECK(bitwise_equal(c2, cr));

    // tn likewise
    TensorD at(Shape{5, 7});
    for (int i = 0; i < 7; ++i)
        for (int j = 0; j < 5; ++j) at[(std::int64_t)j * 7 + i] = a[(std::int64_t)i * 5 + j];
    TensorD c3(Shape{7, 9});
    kernels::matmul_tn(at, b, c3);
    CHECK(bitwise_equal(c3, cr));
    std::puts("matmul family consistent with serial reference: passed");
}

// <J v, u> == <v, J^T u> for the resize pair
static void test_resize_adjoint(Rng& rng) {
    struct Case {
        int ih, iw, oh, ow;
    } cases[] = {{8, 8, 16, 16}, {16, 12, 7, 9}, {5, 5, 5, 5}, {4, 11, 13, 3}};
    for (const auto& c : cases) {
        TensorD v = randu(Shape{2, c.ih, c.iw}, rng);
        TensorD u = randu(Shape{2, c.oh, c.ow}, rng);
        TensorD jv(Shape{2, c.oh, c.ow});
        kernels::resize_bilinear_forward(v, jv);
        TensorD jtu(Shape{2, c.ih, c.iw});
        kernels::resize_bilinear_backward(u, jtu);
        double lhs = 0, rhs = 0;
        for (std::int64_t i = 0; i < jv.size(); ++i) lhs += jv[i] * u[i];
        for (std::int64_t i = 0; i < jtu.size(); ++i) rhs += jtu[i] * v[i];
        CHECK(std::abs(lhs - rhs) < 1e-10 * std::max(1.0, std::abs(lhs)));
    }
    // identity-size resize must reproduce the input exactly
    TensorD x = randu(Shape{3, 6, 6}, rng);
    TensorD y(Shape{3, 6, 6});
    kernels::resize_bilinear_forward(x, y);
    CHECK(bitwise_equal(x, y));
    std::puts("resize forward/backward adjoint pair consistent: passed");
}

static void test_out_dim() {
    CHECK(kernels::conv_out_dim(16, 3, 1, 1) == 16);
    CHECK(kernels::conv_out_dim(16, 3, 2, 1) == 8);
    CHECK(kernels::conv_out_dim(15, 3, 2, 1) == 8);
    CHECK(kernels::conv_out_dim(5, 3, 2, 1) == 3);
    CHECK(kernels::conv_out_dim(4, 3, 1, 0) == 2);
    std::puts("conv_out_dim: passed");
}

int main() {
    Rng rng(1234);
    test_out_dim();
    test_conv_forward_matches_ref(rng);
    test_conv_grads_match_scatter(rng);
    test_matmul_matches_ref(rng);
    test_resize_adjoint(rng);
    std::printf("all kernel tests passed (%d checks)\n", checks);
    return 0;
}
