#pragma once

#include "advmk/graph.hpp"
#include "advmk/rng.hpp"

#include <cmath>
#include <string>
#include <utility>
#include <vector>

namespace advmk::nn {

/// Ordered, named collection of parameter tensors. Order is fixed at
/// construction and shared with optimizer state and gradient collections.
struct ParamSet {
    std::vector<std::pair<std::string, TensorD>> items;

    void add(const std::string& name, TensorD t) {
        require(!has(name), "ParamSet: duplicate name " + name);
        items.emplace_back(name, std::move(t));
    }
    bool has(const std::string& name) const {
        for (const auto& [k, v] : items)
            if (k == name) return true;
        return false;
    }
    TensorD& at(const std::string& name) {
        for (auto& [k, v] : items)
            if (k == name) return v;
        throw Error("ParamSet: missing " + name);
    }
    const TensorD& at(const std::string& name) const {
        for (const auto& [k, v] : items)
            if (k == name) return v;
        throw Error("ParamSet: missing " + name);
    }
    size_t size() const { return items.size(); }
    std::int64_t numel() const {
        std::int64_t n = 0;
        for (const auto& [k, v] : items) n += v.size();
        return n;
    }
    bool finite() const {
        for (const auto& [k, v] : items)
            if (!all_finite(v)) return false;
        return true;
    }
    /// Same names/shapes, all values zero.
    ParamSet zeros_like() const {
        ParamSet z;
        for (const auto& [k, v] : items) z.items.emplace_back(k, TensorD(v.shape));
        return z;
    }
};

inline void axpy(ParamSet& dst, double a, const ParamSet& x) {
    require(dst.size() == x.size(), "axpy: param set mismatch");
    for (size_t i = 0; i < dst.items.size(); ++i) {
        auto& d = dst.items[i].second;
        const auto& s = x.items[i].second;
        for (std::int64_t j = 0; j < d.size(); ++j) d[j] += a * s[j];
    }
}

inline double max_abs_diff(const ParamSet& a, const ParamSet& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.items.size(); ++i)
        for (std::int64_t j = 0; j < a.items[i].second.size(); ++j)
            m = std::max(m, std::abs(a.items[i].second[j] - b.items[i].second[j]));
    return m;
}

/// Momentum SGD: v ← μv + g; θ ← θ − lr·v.
struct SgdMomentum {
    double lr = 0.001;
    double momentum = 0.9;
    std::vector<TensorD> vel;

    void init(const ParamSet& p) {
        vel.clear();
        for (const auto& [k, v] : p.items) vel.emplace_back(v.shape);
    }
    void step(ParamSet& p, const ParamSet& grads) {
        require(vel.size() == p.size() && grads.size() == p.size(), "sgd: state mismatch");
        for (size_t i = 0; i < p.items.size(); ++i) {
            auto& th = p.items[i].second;
            const auto& g = grads.items[i].second;
            auto& v = vel[i];
            for (std::int64_t j = 0; j < th.size(); ++j) {
                v[j] = momentum * v[j] + g[j];
                th[j] -= lr * v[j];
            }
        }
    }
};

// ---------------------------------------------------------------------------
// Binding a ParamSet onto a graph: every tensor becomes a node, trainable sets
// get gradient-tracking leaves, frozen sets become constants.
// ---------------------------------------------------------------------------

template <class T>
struct Bound {
    std::vector<std::pair<std::string, int>> ids;
    int id(const std::string& name) const {
        for (const auto& [k, v] : ids)
            if (k == name) return v;
        throw Error("Bound: missing " + name);
    }
};

template <class T>
Bound<T> bind(ad::Graph<T>& g, const ParamSet& p, bool trainable) {
    Bound<T> b;
    for (const auto& [k, v] : p.items) {
        auto t = ad::lift<T>(v);
        b.ids.emplace_back(k, trainable ? g.input(std::move(t)) : g.constant(std::move(t)));
    }
    return b;
}

/// Push fresh parameter values onto already-bound leaves, for tapes that are
/// re-run across iterations. Works for trainable and frozen bindings alike.
template <class T>
void refresh_bound(ad::Graph<T>& g, const Bound<T>& b, const ParamSet& p) {
    require(b.ids.size() == p.size(), "refresh_bound: layout mismatch");
    for (size_t i = 0; i < b.ids.size(); ++i) g.set_leaf(b.ids[i].second, ad::lift<T>(p.items[i].second));
}

inline void refresh_bound(ad::Graph<double>& g, const Bound<double>& b, const ParamSet& p) {
    require(b.ids.size() == p.size(), "refresh_bound: layout mismatch");
    for (size_t i = 0; i < b.ids.size(); ++i) g.set_leaf(b.ids[i].second, p.items[i].second);
}

/// Copy gradients accumulated on bound leaves back into a ParamSet layout.
inline void collect_grads(const ad::Graph<double>& g, const Bound<double>& b, ParamSet& out) {
    require(b.ids.size() == out.size(), "collect_grads: layout mismatch");
    for (size_t i = 0; i < b.ids.size(); ++i) {
        const auto& gt = g.grad(b.ids[i].second);
        auto& dst = out.items[i].second;
        if (gt.size() == 0) {
            dst.fill(0.0);
        } else {
            require(gt.size() == dst.size(), "collect_grads: shape mismatch");
            dst.data = gt.data;
        }
    }
}

// ---------------------------------------------------------------------------
// Weight init
// ---------------------------------------------------------------------------

inline TensorD conv_init(int oc, int ic, int kh, int kw, Rng& rng) {
    TensorD w(Shape{oc, ic, kh, kw});
    const double s = std::sqrt(2.0 / (ic * kh * kw));
    for (std::int64_t i = 0; i < w.size(); ++i) w[i] = s * rng.normal();
    return w;
}

inline TensorD dense_init(int out, int in, Rng& rng) {
    TensorD w(Shape{out, in});
    const double s = std::sqrt(2.0 / in);
    for (std::int64_t i = 0; i < w.size(); ++i) w[i] = s * rng.normal();
    return w;
}

template <class T>
int conv_block(ad::Graph<T>& g, const Bound<T>& b, const std::string& name, int x, int stride,
               int pad, double slope) {
    int y = g.conv2d(x, b.id(name + ".w"), stride, pad);
    y = g.add_chan_bias(y, b.id(name + ".b"));
    return g.lrelu(y, slope);
}

// ---------------------------------------------------------------------------
// Generator: 3-level encoder-decoder with skip connections, sigmoid output.
// Fully convolutional, so it runs at any patch size >= 4x4.
// ---------------------------------------------------------------------------

inline ParamSet generator_init(int width, Rng& rng) {
    require(width >= 2, "generator_init: width too small");
    ParamSet p;
    const int w = width;
    auto conv = [&](const std::string& n, int oc, int ic, int k) {
        p.add(n + ".w", conv_init(oc, ic, k, k, rng));
        p.add(n + ".b", TensorD(Shape{oc}));
    };
    conv("g.enc1", w, 3, 3);
    conv("g.enc2", 2 * w, w, 3);
    conv("g.enc3", 4 * w, 2 * w, 3);
    conv("g.bott", 4 * w, 4 * w, 3);
    conv("g.dec2", 2 * w, 6 * w, 3);
    conv("g.dec1", w, 3 * w, 3);
    conv("g.out", 3, w, 3);
    return p;
}

template <class T>
int generator_forward(ad::Graph<T>& g, const Bound<T>& b, int patch) {
    const double sl = 0.2;
    int e1 = conv_block(g, b, "g.enc1", patch, 1, 1, sl);
    int e2 = conv_block(g, b, "g.enc2", e1, 2, 1, sl);
    int e3 = conv_block(g, b, "g.enc3", e2, 2, 1, sl);
    int bt = conv_block(g, b, "g.bott", e3, 1, 1, sl);
    int u2 = g.resize_bilinear(bt, g.val(e2).shape[1], g.val(e2).shape[2]);
    int d2 = conv_block(g, b, "g.dec2", g.concat_c(u2, e2), 1, 1, sl);
    int u1 = g.resize_bilinear(d2, g.val(e1).shape[1], g.val(e1).shape[2]);
    int d1 = conv_block(g, b, "g.dec1", g.concat_c(u1, e1), 1, 1, sl);
    int out = g.conv2d(d1, b.id("g.out.w"), 1, 1);
    out = g.add_chan_bias(out, b.id("g.out.b"));
    return g.sigmoid(out);
}

// ---------------------------------------------------------------------------
// Discriminator: 3 strided conv layers, global average pool, dense to one
// logit, sigmoid. Output kept strictly inside (0,1) by a clamp at 1e-12.
// ---------------------------------------------------------------------------

inline ParamSet discriminator_init(int width, Rng& rng) {
    ParamSet p;
    const int w = width;
    auto conv = [&](const std::string& n, int oc, int ic) {
        p.add(n + ".w", conv_init(oc, ic, 3, 3, rng));
        p.add(n + ".b", TensorD(Shape{oc}));
    };
    conv("d.c1", w, 3);
    conv("d.c2", 2 * w, w);
    conv("d.c3", 4 * w, 2 * w);
    p.add("d.head.w", dense_init(1, 4 * w, rng));
    p.add("d.head.b", TensorD(Shape{1}));
    return p;
}

template <class T>
int discriminator_forward(ad::Graph<T>& g, const Bound<T>& b, int patch) {
    const double sl = 0.2;
    int h = conv_block(g, b, "d.c1", patch, 2, 1, sl);
    h = conv_block(g, b, "d.c2", h, 2, 1, sl);
    h = conv_block(g, b, "d.c3", h, 2, 1, sl);
    int pooled = g.chan_mean(h);
    int logit = g.add(g.matvec(b.id("d.head.w"), pooled), b.id("d.head.b"));
    int score = g.sigmoid(logit);
    return g.clamp(score, 1e-12, 1.0 - 1e-12);
}

// ---------------------------------------------------------------------------
// Frozen random feature pyramid standing in for a pretrained perceptual
// network: three conv stages, each stage's activation map is exposed.
// ---------------------------------------------------------------------------

struct ExtractorSpec {
    int input_size = 64;
    bool allow_resize = true;
    std::vector<int> widths{8, 16, 32};
    std::vector<double> alpha; // per-layer content weights
    std::vector<double> beta;  // per-layer style weights
};

inline ParamSet extractor_init(const ExtractorSpec& spec, Rng& rng) {
    ParamSet p;
    int ic = 3;
    for (size_t i = 0; i < spec.widths.size(); ++i) {
        p.add("fx.c" + std::to_string(i) + ".w", conv_init(spec.widths[i], ic, 3, 3, rng));
        p.add("fx.c" + std::to_string(i) + ".b", TensorD(Shape{spec.widths[i]}));
        ic = spec.widths[i];
    }
    return p;
}

/// Returns one activation node per stage. First stage keeps full resolution,
/// later stages stride by 2.
template <class T>
std::vector<int> extractor_forward(ad::Graph<T>& g, const Bound<T>& b, const ExtractorSpec& spec,
                                   int img) {
    require(g.val(img).shape.size() == 3 && g.val(img).shape[0] == 3, "extractor: want (3,H,W)");
    int x = img;
    if (g.val(img).shape[1] != spec.input_size || g.val(img).shape[2] != spec.input_size) {
        require(spec.allow_resize, "extractor: input size mismatch and resizing disabled");
        x = g.resize_bilinear(img, spec.input_size, spec.input_size);
    }
    std::vector<int> stages;
    for (size_t i = 0; i < spec.widths.size(); ++i) {
        const int stride = i == 0 ? 1 : 2;
        x = conv_block(g, b, "fx.c" + std::to_string(i), x, stride, 1, 0.2);
        stages.push_back(x);
    }
    return stages;
}

// ---------------------------------------------------------------------------
// Victim embedders: four deliberately different small conv nets. Each resizes
// its input, normalizes, runs the trunk, pools and projects to an embedding.
// ---------------------------------------------------------------------------

struct ConvSpec {
    int out_c, k, stride, pad;
};

struct EmbedderArch {
    std::string name;
    int input_size;
    std::vector<ConvSpec> convs;
    int embed_dim;
    double lrelu;
    std::vector<double> norm_shift; // per input channel
    std::vector<double> norm_scale;
};

inline std::vector<EmbedderArch> embedder_presets() {
    std::vector<EmbedderArch> v;
    v.push_back({"toyA", 32,
                 {{10, 3, 2, 1}, {20, 3, 2, 1}, {32, 3, 2, 1}, {32, 3, 1, 1}},
                 32, 0.1,
                 {-0.45, -0.45, -0.45}, {4.0, 4.0, 4.0}});
    v.push_back({"toyB", 28,
                 {{12, 3, 2, 1}, {24, 3, 2, 1}, {28, 3, 2, 1}},
                 24, 0.05,
                 {-0.5, -0.5, -0.5}, {3.5, 3.5, 3.5}});
    v.push_back({"toyC", 24,
                 {{8, 5, 2, 2}, {24, 3, 2, 1}, {40, 3, 2, 1}},
                 40, 0.2,
                 {-0.4, -0.45, -0.5}, {4.2, 4.0, 3.8}});
    v.push_back({"toyD", 36,
                 {{10, 3, 2, 1}, {14, 3, 2, 1}, {28, 3, 2, 1}, {28, 3, 1, 1}, {36, 3, 1, 1}},
                 48, 0.1,
                 {-0.45, -0.45, -0.45}, {3.0, 3.0, 3.0}});
    return v;
}

inline ParamSet embedder_init(const EmbedderArch& a, Rng& rng) {
    ParamSet p;
    int ic = 3;
    for (size_t i = 0; i < a.convs.size(); ++i) {
        const auto& c = a.convs[i];
        p.add("f.c" + std::to_string(i) + ".w", conv_init(c.out_c, ic, c.k, c.k, rng));
        p.add("f.c" + std::to_string(i) + ".b", TensorD(Shape{c.out_c}));
        ic = c.out_c;
    }
    p.add("f.proj.w", dense_init(a.embed_dim, 4 * ic, rng));
    p.add("f.proj.b", TensorD(Shape{a.embed_dim}));
    return p;
}

/// Raw (unnormalized) embedding node for an image in [0,1].
template <class T>
int embedder_forward(ad::Graph<T>& g, const Bound<T>& b, const EmbedderArch& a, int img) {
    require(g.val(img).shape.size() == 3 && g.val(img).shape[0] == 3, "embed: want (3,H,W)");
    int x = img;
    if (g.val(img).shape[1] != a.input_size || g.val(img).shape[2] != a.input_size)
        x = g.resize_bilinear(img, a.input_size, a.input_size);
    std::vector<double> sh = a.norm_shift, sc = a.norm_scale;
    // normalization is (x + shift) * scale expressed as x*scale + shift*scale
    std::vector<double> shift_scaled(3);
    for (int c = 0; c < 3; ++c) shift_scaled[c] = sh[c] * sc[c];
    x = g.chan_affine(x, sc, shift_scaled);
    for (size_t i = 0; i < a.convs.size(); ++i) {
        const auto& c = a.convs[i];
        x = g.conv2d(x, b.id("f.c" + std::to_string(i) + ".w"), c.stride, c.pad);
        x = g.add_chan_bias(x, b.id("f.c" + std::to_string(i) + ".b"));
        x = g.lrelu(x, a.lrelu);
    }
    // quadrant pooling: channel means over the 2x2 spatial blocks, so the
    // embedding keeps coarse layout instead of averaging the face away
    const int fh = g.val(x).shape[1], fw = g.val(x).shape[2];
    const int ch = g.val(x).shape[0], hh = fh / 2, hw = fw / 2;
    require(hh > 0 && hw > 0, "embed: feature map too small to pool");
    int pooled = -1;
    for (int qy = 0; qy < 2; ++qy)
        for (int qx = 0; qx < 2; ++qx) {
            int q = g.crop(x, qy * hh, qx * hw, qy ? fh - hh : hh, qx ? fw - hw : hw);
            int v = g.reshape(g.chan_mean(q), Shape{ch, 1, 1});
            pooled = pooled < 0 ? v : g.concat_c(pooled, v);
        }
    pooled = g.reshape(pooled, Shape{4 * ch});
    return g.add(g.matvec(b.id("f.proj.w"), pooled), b.id("f.proj.b"));
}

/// v / ||v||, via graph ops so gradients flow.
template <class T>
int normalize_vec(ad::Graph<T>& g, int v) {
    int nrm = g.sqrt_n(g.sum(g.mul(v, v)));
    int inv = g.div(g.constant(ad::lift<T>(TensorD(Shape{1}, 1.0))), nrm);
    return g.bcast_mul(v, inv);
}

/// cosine(u, v) as a scalar node.
template <class T>
int cosine_node(ad::Graph<T>& g, int u, int v) {
    return g.sum(g.mul(normalize_vec(g, u), normalize_vec(g, v)));
}

} // namespace advmk::nn
