// Autodiff correctness: every graph op against central finite differences,
// multi-loss backward on a shared tape, node reuse, and exact Hessian-vector
// products through dual-number replay.

#include "advmk/graph.hpp"
#include "advmk/rng.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>

using namespace advmk;
using ad::GraphD;

static int checks = 0;

#define CHECK(cond)                                                                              \
    do {                                                                                         \
        if (!(cond)) {                                                                           \
            std::fprintf(stderr, "FAIL %s:%d: %s\n", __FILE__, __LINE__, #cond);                 \
            std::exit(1);                                                                        \
        }                                                                                        \
        ++checks;                                                                                \
    } while (0)

static Rng g_rng(777);

// random values bounded away from 0 so kinked activations see no FD trouble
static TensorD rand_signed(Shape s) {
    TensorD t(std::move(s));
    for (std::int64_t i = 0; i < t.size(); ++i) {
        const double m = 0.05 + 0.9 * g_rng.uniform();
        t[i] = g_rng.uniform() < 0.5 ? -m : m;
    }
    return t;
}

static TensorD rand_pos(Shape s, double lo, double hi) {
    TensorD t(std::move(s));
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = g_rng.uniform(lo, hi);
    return t;
}

using BuildFn = std::function<int(GraphD&, int)>;

static double eval_loss(const TensorD& x, const BuildFn& build) {
    GraphD g;
    int xn = g.input(x);
    return g.val(build(g, xn))[0];
}

static void fd_check(const char* label, const TensorD& x0, const BuildFn& build,
                     double tol = 1e-5) {
    GraphD g;
    int xn = g.input(x0);
    int loss = build(g, xn);
    g.backward(loss);
    const TensorD analytic = g.grad(xn);
    const double h = 1e-6;
    TensorD x = x0;
    for (std::int64_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double fp = eval_loss(x, build);
        x[i] = keep - h;
        const double fm = eval_loss(x, build);
        x[i] = keep;
        const double fd = (fp - fm) / (2 * h);
        const double err = std::abs(fd - analytic[i]);
        const double ref = std::max(1.0, std::max(std::abs(fd), std::abs(analytic[i])));
        if (err / ref >= tol) {
            std::fprintf(stderr, "FAIL fd_check(%s) elem %lld: analytic %.12g fd %.12g\n", label,
                         (long long)i, analytic[i], fd);
            std::exit(1);
        }
        ++checks;
    }
}

static void test_elementwise_ops() {
    const TensorD a0 = rand_signed(Shape{2, 3, 4});
    const TensorD b0 = rand_signed(Shape{2, 3, 4});
    const TensorD w0 = rand_pos(Shape{2, 3, 4}, 0.6, 1.4); // safe divisor

    fd_check("add", a0, [&](GraphD& g, int x) { return g.sum(g.add(x, g.constant(b0))); });
    fd_check("sub", a0, [&](GraphD& g, int x) { return g.sum(g.sub(x, g.constant(b0))); });
    fd_check("mul", a0, [&](GraphD& g, int x) { return g.sum(g.mul(x, g.constant(b0))); });
    fd_check("div num", a0, [&](GraphD& g, int x) { return g.sum(g.div(x, g.constant(w0))); });
    fd_check("div den", w0, [&](GraphD& g, int x) { return g.sum(g.div(g.constant(a0), x)); });
    fd_check("scale", a0, [&](GraphD& g, int x) { return g.sum(g.scale(x, -2.5)); });
    fd_check("add_c", a0, [&](GraphD& g, int x) { return g.sum(g.mul(g.add_c(x, 0.7), x)); });
    fd_check("lrelu", a0, [&](GraphD& g, int x) { return g.sum(g.mul(g.lrelu(x, 0.2), g.constant(b0))); });
    fd_check("sigmoid", a0, [&](GraphD& g, int x) { return g.sum(g.mul(g.sigmoid(x), g.constant(b0))); });
    fd_check("tanh", a0, [&](GraphD& g, int x) { return g.sum(g.mul(g.tanh_n(x), g.constant(b0))); });
    fd_check("log", rand_pos(Shape{2, 3, 4}, 0.1, 1.0),
             [&](GraphD& g, int x) { return g.sum(g.mul(g.log_clamped(x, 1e-12), g.constant(b0))); });
    fd_check("clamp", a0, [&](GraphD& g, int x) { return g.sum(g.mul(g.clamp(x, -3, 3), g.constant(b0))); });
    fd_check("sqrt", rand_pos(Shape{2, 3, 4}, 0.2, 2.0),
             [&](GraphD& g, int x) { return g.sum(g.mul(g.sqrt_n(x), g.constant(b0))); });
    fd_check("mean", a0, [&](GraphD& g, int x) { return g.mean(g.mul(x, x)); });
    fd_check("chan_affine", a0, [&](GraphD& g, int x) {
        return g.sum(g.mul(g.chan_affine(x, {1.5, -0.5}, {0.2, 0.1}), g.constant(b0)));
    });
    fd_check("bcast_mul scale-side", rand_pos(Shape{1}, 0.5, 1.5), [&](GraphD& g, int s) {
        return g.sum(g.bcast_mul(g.constant(a0), s));
    });
    fd_check("bcast_mul tensor-side", a0, [&](GraphD& g, int x) {
        GraphD::NodeId s = g.mean(g.mul(x, x));
        return g.sum(g.mul(g.bcast_mul(x, s), g.constant(b0)));
    });
    std::puts("elementwise op gradients match finite differences: passed");
}

static void test_structure_ops() {
    const TensorD a0 = rand_signed(Shape{2, 5, 6});
    const TensorD c0 = rand_signed(Shape{2, 5, 6});
    const TensorD m0 = rand_signed(Shape{4, 3});
    const TensorD n0 = rand_signed(Shape{3, 5});
    const TensorD nt0 = rand_signed(Shape{5, 3});
    const TensorD v0 = rand_signed(Shape{3});
    const TensorD small0 = rand_signed(Shape{2, 2, 3});

    const TensorD k2 = rand_signed(Shape{2});
    const TensorD k45 = rand_signed(Shape{4, 5});
    const TensorD k45b = rand_signed(Shape{4, 5});
    const TensorD k44 = rand_signed(Shape{4, 4});
    const TensorD k4 = rand_signed(Shape{4});
    const TensorD k456 = rand_signed(Shape{4, 5, 6});
    const TensorD k234 = rand_signed(Shape{2, 3, 4});
    const TensorD k256 = rand_signed(Shape{2, 5, 6});
    const TensorD k610 = rand_signed(Shape{6, 10});

    fd_check("chan_mean", a0, [&](GraphD& g, int x) {
        return g.sum(g.mul(g.chan_mean(x), g.constant(k2)));
    });
    fd_check("matmul_nn A", m0, [&](GraphD& g, int x) {
        return g.sum(g.mul(g.matmul_nn(x, g.constant(n0)), g.constant(k45)));
    });
    fd_check("matmul_nn B", n0, [&](GraphD& g, int x) {
        return g.sum(g.mul(g.matmul_nn(g.constant(m0), x), g.constant(k45)));
    });
    fd_check("matmul_nt A", m0, [&](GraphD& g, int x) {
        return g.sum(g.mul(g.matmul_nt(x, g.constant(nt0)), g.constant(k45b)));
    });
    fd_check("matmul_nt B", nt0, [&](GraphD& g, int x) {
        return g.sum(g.mul(g.matmul_nt(g.constant(m0), x), g.constant(k45b)));
    });
    fd_check("gram reuse", m0, [&](GraphD& g, int x) {
        return g.sum(g.mul(g.matmul_nt(x, x), g.constant(k44)));
    });
    fd_check("matvec W", m0, [&](GraphD& g, int x) {
        return g.sum(g.mul(g.matvec(x, g.constant(v0)), g.constant(k4)));
    });
    fd_check("matvec x", v0, [&](GraphD& g, int x) {
        return g.sum(g.mul(g.matvec(g.constant(m0), x), g.constant(k4)));
    });
    fd_check("concat_c", a0, [&](GraphD& g, int x) {
        return g.sum(g.mul(g.concat_c(x, g.constant(c0)), g.constant(k456)));
    });
    fd_check("crop", a0, [&](GraphD& g, int x) {
        return g.sum(g.mul(g.crop(x, 1, 2, 3, 4), g.constant(k234)));
    });
    fd_check("embed", small0, [&](GraphD& g, int x) {
        return g.sum(g.mul(g.embed(x, 2, 1, 5, 6), g.constant(k256)));
    });
    fd_check("diff_x", a0, [&](GraphD& g, int x) {
        return g.sum(g.mul(g.diff_x(x), g.constant(k256)));
    });
    fd_check("diff_y", a0, [&](GraphD& g, int x) {
        return g.sum(g.mul(g.diff_y(x), g.constant(k256)));
    });
    fd_check("reshape", a0, [&](GraphD& g, int x) {
        return g.sum(g.mul(g.reshape(x, Shape{6, 10}), g.constant(k610)));
    });
    fd_check("softmax_xent", rand_signed(Shape{7}),
             [&](GraphD& g, int x) { return g.softmax_xent(x, 3); });
    std::puts("structure op gradients match finite differences: passed");
}

static void test_conv_resize_ops() {
    const TensorD x0 = rand_signed(Shape{2, 5, 5});
    const TensorD w0 = rand_signed(Shape{3, 2, 3, 3});
    const TensorD k355 = rand_signed(Shape{3, 5, 5});
    const TensorD k333 = rand_signed(Shape{3, 3, 3});
    const TensorD k344a = rand_signed(Shape{3, 4, 4});
    const TensorD k344b = rand_signed(Shape{3, 4, 4});
    const TensorD k297 = rand_signed(Shape{2, 9, 7});
    const TensorD k235 = rand_signed(Shape{2, 3, 5});

    fd_check("conv2d input", x0, [&](GraphD& g, int x) {
        return g.sum(g.mul(g.conv2d(x, g.constant(w0), 1, 1), g.constant(k355)));
    });
    fd_check("conv2d weight", w0, [&](GraphD& g, int w) {
        return g.sum(g.mul(g.conv2d(g.constant(x0), w, 1, 1), g.constant(k355)));
    });
    fd_check("conv2d strided", x0, [&](GraphD& g, int x) {
        return g.sum(g.mul(g.conv2d(x, g.constant(w0), 2, 1), g.constant(k333)));
    });
    fd_check("add_chan_bias", rand_signed(Shape{3}), [&](GraphD& g, int b) {
        return g.sum(g.mul(g.add_chan_bias(g.constant(k344a), b), g.constant(k344b)));
    });
    fd_check("resize up", x0, [&](GraphD& g, int x) {
        return g.sum(g.mul(g.resize_bilinear(x, 9, 7), g.constant(k297)));
    });
    fd_check("resize down", rand_signed(Shape{2, 8, 8}), [&](GraphD& g, int x) {
        return g.sum(g.mul(g.resize_bilinear(x, 3, 5), g.constant(k235)));
    });
    std::puts("conv/resize gradients match finite differences: passed");
}

static void test_composite_op() {
    const int h = 2, w = 3;
    std::vector<std::uint8_t> mask = {1, 0, 1, 0, 1, 0};
    const TensorD src0 = rand_pos(Shape{2, 5, 6}, 0.0, 1.0);
    const TensorD patch0 = rand_pos(Shape{2, h, w}, 0.0, 1.0);
    const TensorD k256 = rand_signed(Shape{2, 5, 6});

    fd_check("composite patch", patch0, [&](GraphD& g, int p) {
        return g.sum(g.mul(g.composite(p, g.constant(src0), 1, 2, mask), g.constant(k256)));
    });
    fd_check("composite source", src0, [&](GraphD& g, int s) {
        return g.sum(g.mul(g.composite(g.constant(patch0), s, 1, 2, mask), g.constant(k256)));
    });

    // bitwise: untouched pixels carry the source bits
    GraphD g;
    int out = g.composite(g.input(patch0), g.constant(src0), 1, 2, mask);
    const TensorD& v = g.val(out);
    int replaced = 0;
    for (int c = 0; c < 2; ++c)
        for (int y = 0; y < 5; ++y)
            for (int x = 0; x < 6; ++x) {
                const bool in_mask = y >= 1 && y < 1 + h && x >= 2 && x < 2 + w &&
                                     mask[(size_t)(y - 1) * w + (x - 2)];
                if (in_mask) {
                    CHECK(v.at(c, y, x) == patch0.at(c, y - 1, x - 2));
                    ++replaced;
                } else {
                    CHECK(v.at(c, y, x) == src0.at(c, y, x));
                }
            }
    CHECK(replaced == 2 * 3);
    std::puts("composite op gradients and bitwise locality: passed");
}

// one forward tape, two backward passes over different losses
static void test_multi_loss_backward() {
    const TensorD x0 = rand_signed(Shape{2, 4, 4});
    GraphD g;
    int x = g.input(x0);
    int shared = g.sigmoid(x);
    int loss1 = g.sum(g.mul(shared, shared));
    int loss2 = g.mean(shared);

    g.backward(loss1);
    const TensorD g1 = g.grad(x);
    g.backward(loss2);
    const TensorD g2 = g.grad(x);

    GraphD ga;
    int xa = ga.input(x0);
    int sa = ga.sigmoid(xa);
    ga.backward(ga.sum(ga.mul(sa, sa)));
    GraphD gb;
    int xb = gb.input(x0);
    gb.backward(gb.mean(gb.sigmoid(xb)));

    for (std::int64_t i = 0; i < x0.size(); ++i) {
        CHECK(g1[i] == ga.grad(xa)[i]);
        CHECK(g2[i] == gb.grad(xb)[i]);
    }
    std::puts("multiple backward passes on one tape: passed");
}

// H·v by dual replay, checked against a closed form and against FD-of-gradient
static void test_dual_hvp() {
    using advmk::Dual;
    const TensorD x0 = rand_signed(Shape{6});
    const TensorD v0 = rand_signed(Shape{6});

    // f = sum(x^3): grad = 3x^2, H = diag(6x)
    {
        ad::Graph<Dual> g;
        Tensor<Dual> seed(Shape{6});
        for (int i = 0; i < 6; ++i) seed[i] = Dual{x0[i], v0[i]};
        int x = g.input(std::move(seed));
        int loss = g.sum(g.mul(g.mul(x, x), x));
        g.backward(loss);
        for (int i = 0; i < 6; ++i) {
            CHECK(std::abs(g.grad(x)[i].re - 3 * x0[i] * x0[i]) < 1e-12);
            CHECK(std::abs(g.grad(x)[i].du - 6 * x0[i] * v0[i]) < 1e-12);
        }
    }

    // composite net-like loss: f(x) = sum(sigmoid(conv(x, w)) * k)
    const TensorD xc0 = rand_signed(Shape{2, 5, 5});
    const TensorD vc0 = rand_signed(Shape{2, 5, 5});
    const TensorD w0 = rand_signed(Shape{3, 2, 3, 3});
    const TensorD k0 = rand_signed(Shape{3, 5, 5});

    auto grad_at = [&](const TensorD& xv) {
        GraphD g;
        int x = g.input(xv);
        int loss = g.sum(g.mul(g.sigmoid(g.conv2d(x, g.constant(w0), 1, 1)), g.constant(k0)));
        g.backward(loss);
        return g.grad(x);
    };

    ad::Graph<Dual> gd;
    Tensor<Dual> seed(xc0.shape);
    for (std::int64_t i = 0; i < xc0.size(); ++i) seed[i] = Dual{xc0[i], vc0[i]};
    int xd = gd.input(std::move(seed));
    int lossd = gd.sum(gd.mul(gd.sigmoid(gd.conv2d(xd, gd.constant(ad::lift<Dual>(w0)), 1, 1)),
                              gd.constant(ad::lift<Dual>(k0))));
    gd.backward(lossd);

    const double h = 1e-5;
    TensorD xp = xc0, xm = xc0;
    for (std::int64_t i = 0; i < xc0.size(); ++i) {
        xp[i] += h * vc0[i];
        xm[i] -= h * vc0[i];
    }
    const TensorD gp = grad_at(xp), gm = grad_at(xm), gc = grad_at(xc0);
    for (std::int64_t i = 0; i < xc0.size(); ++i) {
        const double hv_fd = (gp[i] - gm[i]) / (2 * h);
        const double hv_dual = gd.grad(xd)[i].du;
        CHECK(std::abs(gd.grad(xd)[i].re - gc[i]) < 1e-12);
        CHECK(std::abs(hv_dual - hv_fd) < 1e-5 * std::max(1.0, std::abs(hv_fd)));
    }
    std::puts("dual-number Hessian-vector products: passed");
}

static void test_determinism() {
    const TensorD x0 = rand_signed(Shape{2, 6, 6});
    const TensorD w0 = rand_signed(Shape{4, 2, 3, 3});
    auto run = [&]() {
        GraphD g;
        int x = g.input(x0);
        int y = g.conv2d(x, g.constant(w0), 2, 1);
        int loss = g.sum(g.mul(g.tanh_n(y), y));
        g.backward(loss);
        return g.grad(x);
    };
    const TensorD a = run(), b = run();
    for (std::int64_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
    std::puts("backward determinism: passed");
}

int main() {
    test_elementwise_ops();
    test_structure_ops();
    test_conv_resize_ops();
    test_composite_op();
    test_multi_loss_backward();
    test_dual_hvp();
    test_determinism();
    std::printf("all autodiff tests passed (%d checks)\n", checks);
    return 0;
}
