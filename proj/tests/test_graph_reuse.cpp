// Tape re-execution: a graph whose leaves and composite masks are swapped and
// re-run must match a freshly built graph bitwise, values and gradients both,
// across every op family the training tapes use.

#include "advmk/losses.hpp"
#include "advmk/nn.hpp"

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

namespace {

constexpr int H = 16, W = 16;
const geo::BBox kWindow{4, 3, 6, 10};

struct Vals {
    nn::ParamSet genP, disP, fxP, vicP;
    TensorD img, emb, m1, m0;
    geo::OrbitalMask m;
    std::vector<std::uint8_t> maskvec;
    std::vector<TensorD> acts, grams, grids;
};

nn::ExtractorSpec fx_spec() {
    nn::ExtractorSpec s;
    s.input_size = H;
    s.widths = {2, 3};
    s.alpha = {0.5, 0.5};
    s.beta = {0.5, 0.5};
    return s;
}

Vals make_vals(std::uint64_t seed) {
    Rng rng(seed);
    const nn::EmbedderArch arch = nn::embedder_presets()[0];
    Vals v;
    v.genP = nn::generator_init(2, rng);
    v.disP = nn::discriminator_init(2, rng);
    v.fxP = nn::extractor_init(fx_spec(), rng);
    v.vicP = nn::embedder_init(arch, rng);
    v.img = TensorD(Shape{3, H, W});
    for (std::int64_t i = 0; i < v.img.size(); ++i) v.img[i] = rng.uniform();
    v.emb = TensorD(Shape{arch.embed_dim});
    for (std::int64_t i = 0; i < v.emb.size(); ++i) v.emb[i] = rng.uniform(-1.0, 1.0);

    v.m.mask = Tensor<std::uint8_t>(Shape{kWindow.height, kWindow.width});
    for (std::int64_t i = 0; i < v.m.mask.size(); ++i)
        v.m.mask[i] = (std::uint8_t)(rng.uniform() < 0.6);
    v.m.mask[0] = 0; // keep both mask values present
    v.m.mask[1] = 1;
    v.m.bbox = kWindow;
    v.m.img_h = H;
    v.m.img_w = W;
    v.maskvec.assign(v.m.mask.data.begin(), v.m.mask.data.end());
    std::tie(v.m1, v.m0) = losses::mask_weight_pair(v.m, 3);

    // frozen-extractor constants for the source side
    ad::GraphD pg;
    auto pbf = nn::bind(pg, v.fxP, false);
    auto pacts = nn::extractor_forward(pg, pbf, fx_spec(), pg.constant(v.img));
    const auto mstar = v.m.expanded();
    for (int an : pacts) {
        TensorD a = pg.val(an);
        TensorD flat(Shape{a.shape[0], a.shape[1] * a.shape[2]});
        flat.data = a.data;
        v.grams.push_back(losses::gram(flat));
        v.grids.push_back(losses::mask_to_feature_grid(mstar, a.shape[0], a.shape[1], a.shape[2]));
        v.acts.push_back(std::move(a));
    }
    return v;
}

/// The shapes every training tape exercises: generator, discriminator on real
/// and generated patches, composite/embed, all three blending losses from
/// prebuilt constants, and a victim transfer loss.
struct Tape {
    ad::GraphD g;
    nn::Bound<double> bg, bd, bf, bv;
    int img = -1, crop = -1, comp = -1, m1 = -1, m0 = -1, emb = -1;
    std::vector<int> asrc, agram, agrid;
    int weighted = -1;
    std::vector<int> parts;
};

void build(Tape& t, const Vals& v) {
    const nn::EmbedderArch arch = nn::embedder_presets()[0];
    auto& g = t.g;
    t.bg = nn::bind(g, v.genP, true);
    t.bd = nn::bind(g, v.disP, true);
    t.bf = nn::bind(g, v.fxP, false);
    t.bv = nn::bind(g, v.vicP, false);
    t.img = g.constant(v.img);
    t.crop = g.constant(geo::crop_patch(v.img, kWindow));
    const int patch = nn::generator_forward(g, t.bg, t.crop);
    const int fake = nn::discriminator_forward(g, t.bd, patch);
    const int real = nn::discriminator_forward(g, t.bd, t.crop);
    t.comp = g.composite(patch, t.img, kWindow.top, kWindow.left, v.maskvec);
    const int hc = g.embed(patch, kWindow.top, kWindow.left, H, W);
    t.m1 = g.constant(v.m1);
    t.m0 = g.constant(v.m0);
    const int lgr = losses::grad_loss_core(g, t.img, hc, t.comp, t.m1, t.m0);
    for (size_t p = 0; p < v.acts.size(); ++p) {
        t.asrc.push_back(g.constant(v.acts[p]));
        t.agram.push_back(g.constant(v.grams[p]));
        t.agrid.push_back(g.constant(v.grids[p]));
    }
    auto [lco, lst] =
        losses::content_style_core(g, t.bf, fx_spec(), t.comp, t.asrc, t.agram, t.agrid);
    t.emb = g.constant(v.emb);
    const int latk = losses::attack_loss_node(g, t.bv, arch, t.emb, t.comp);
    const int lgen = losses::gen_loss_node(g, std::vector<int>{fake});
    const int ldis = losses::dis_loss_node(g, std::vector<int>{real}, std::vector<int>{fake});
    t.parts = {lgen, lgr, lco, lst, latk, ldis};
    int w = -1;
    const double coef[] = {1.0, 0.1, 0.1, 0.1, 1.0, 0.7};
    for (size_t i = 0; i < t.parts.size(); ++i) {
        const int s = g.scale(t.parts[i], coef[i]);
        w = w < 0 ? s : g.add(w, s);
    }
    t.weighted = w;
}

void push(Tape& t, const Vals& v) {
    auto& g = t.g;
    nn::refresh_bound(g, t.bg, v.genP);
    nn::refresh_bound(g, t.bd, v.disP);
    nn::refresh_bound(g, t.bf, v.fxP);
    nn::refresh_bound(g, t.bv, v.vicP);
    g.set_leaf(t.img, v.img);
    g.set_leaf(t.crop, geo::crop_patch(v.img, kWindow));
    g.set_composite_mask(t.comp, v.maskvec);
    g.set_leaf(t.m1, v.m1);
    g.set_leaf(t.m0, v.m0);
    g.set_leaf(t.emb, v.emb);
    for (size_t p = 0; p < t.asrc.size(); ++p) {
        g.set_leaf(t.asrc[p], v.acts[p]);
        g.set_leaf(t.agram[p], v.grams[p]);
        g.set_leaf(t.agrid[p], v.grids[p]);
    }
    g.refresh();
}

bool same_tensor(const TensorD& a, const TensorD& b) {
    if (a.shape != b.shape) return false;
    for (std::int64_t i = 0; i < a.size(); ++i)
        if (a[i] != b[i]) return false;
    return true;
}

void check_identical(Tape& a, Tape& b) {
    CHECK(a.g.size() == b.g.size());
    for (int i = 0; i < a.g.size(); ++i) CHECK(same_tensor(a.g.val(i), b.g.val(i)));
    for (int i = 0; i < a.g.size(); ++i) {
        CHECK(a.g.grad(i).size() == b.g.grad(i).size());
        if (a.g.grad(i).size()) CHECK(same_tensor(a.g.grad(i), b.g.grad(i)));
    }
}

} // namespace

int main() {
    const Vals va = make_vals(11), vb = make_vals(22);

    Tape fresh;
    build(fresh, vb);
    fresh.g.backward(fresh.weighted);

    // build at A, differentiate (dirtying every grad buffer), then swap in B
    Tape reused;
    build(reused, va);
    reused.g.backward(reused.weighted);
    push(reused, vb);
    reused.g.backward(reused.weighted);
    check_identical(reused, fresh);

    // a second refresh with unchanged leaves must be a fixed point
    reused.g.refresh();
    reused.g.backward(reused.weighted);
    check_identical(reused, fresh);

    // backward on a sub-loss prunes differently; both tapes must agree on it
    fresh.g.backward(fresh.parts[4]);
    reused.g.backward(reused.parts[4]);
    check_identical(reused, fresh);

    // leaf setters reject structural edits
    bool threw = false;
    try {
        reused.g.set_leaf(reused.comp, va.img);
    } catch (const Error&) {
        threw = true;
    }
    CHECK(threw);
    threw = false;
    try {
        reused.g.set_leaf(reused.img, TensorD(Shape{3, H, W + 1}));
    } catch (const Error&) {
        threw = true;
    }
    CHECK(threw);

    std::printf("test_graph_reuse: %d checks passed\n", checks);
    return 0;
}
