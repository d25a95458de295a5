#pragma once

#include "advmk/geometry.hpp"
#include "advmk/graph.hpp"
#include "advmk/nn.hpp"

#include <utility>
#include <vector>

namespace advmk::losses {

// ---------------------------------------------------------------------------
// Adversarial losses over discriminator scores. Scores live in (0,1); the
// logs are clamped at 1e-12 so the extremes stay finite.
// ---------------------------------------------------------------------------

constexpr double kLogEps = 1e-12;

/// mean over batch of log(1 - s): the generator descends this.
template <class T>
int gen_loss_node(ad::Graph<T>& g, const std::vector<int>& fake_scores) {
    require(!fake_scores.empty(), "gen_loss: empty batch");
    int one = g.constant(ad::lift<T>(TensorD(Shape{1}, 1.0)));
    int acc = -1;
    for (int s : fake_scores) {
        int term = g.log_clamped(g.sub(one, s), kLogEps);
        acc = acc < 0 ? term : g.add(acc, term);
    }
    return g.scale(acc, 1.0 / (double)fake_scores.size());
}

/// -[mean log(real) + mean log(1 - fake)]
template <class T>
int dis_loss_node(ad::Graph<T>& g, const std::vector<int>& real_scores,
                  const std::vector<int>& fake_scores) {
    require(!real_scores.empty() && !fake_scores.empty(), "dis_loss: empty batch");
    int one = g.constant(ad::lift<T>(TensorD(Shape{1}, 1.0)));
    int acc_r = -1, acc_f = -1;
    for (int s : real_scores) {
        int term = g.log_clamped(s, kLogEps);
        acc_r = acc_r < 0 ? term : g.add(acc_r, term);
    }
    for (int s : fake_scores) {
        int term = g.log_clamped(g.sub(one, s), kLogEps);
        acc_f = acc_f < 0 ? term : g.add(acc_f, term);
    }
    int mean_r = g.scale(acc_r, 1.0 / (double)real_scores.size());
    int mean_f = g.scale(acc_f, 1.0 / (double)fake_scores.size());
    return g.scale(g.add(mean_r, mean_f), -1.0);
}

// host-side conveniences over plain score lists
double gen_loss(const std::vector<double>& fake_scores);
double dis_loss(const std::vector<double>& real_scores, const std::vector<double>& fake_scores);

// ---------------------------------------------------------------------------
// Gradient-domain blending constraint.
// ---------------------------------------------------------------------------

/// Forward differences along x and y; last column / row zero.
std::pair<TensorD, TensorD> spatial_gradient(const TensorD& img);

/// Full-image M* and 1-M* replicated over `channels`, as host tensors.
std::pair<TensorD, TensorD> mask_weight_pair(const geo::OrbitalMask& m, int channels);

/// The gradient-domain residual given already-built nodes: h_canvas is the
/// patch on a zero canvas, comp the masked paste, m1n/m0n the M* / 1-M*
/// weights replicated over channels. Callers that re-run one tape across
/// iterations own those nodes; the wrapper below builds them in place.
template <class T>
int grad_loss_core(ad::Graph<T>& g, int source, int h_canvas, int comp, int m1n, int m0n) {
    int loss = -1;
    for (int dir = 0; dir < 2; ++dir) {
        auto d = [&](int node) { return dir == 0 ? g.diff_x(node) : g.diff_y(node); };
        int blend = g.add(g.mul(d(source), m0n), g.mul(d(h_canvas), m1n));
        int resid = g.sub(blend, d(comp));
        int term = g.sum(g.mul(resid, resid));
        loss = loss < 0 ? term : g.add(loss, term);
    }
    return loss;
}

/// || [grad(I_s) (1-M*) + grad(h(patch)) M*] - grad(composite) ||_2^2 summed
/// over both directions and all channels. `source` must be a graph node so
/// one builder serves both the patch-attack path (source constant) and
/// FD checks (source variable).
template <class T>
int grad_loss_node(ad::Graph<T>& g, int source, int patch, const geo::OrbitalMask& m) {
    const Shape& ss = g.val(source).shape;
    require(ss.size() == 3, "grad_loss: want rank-3 source");
    const int H = ss[1], W = ss[2];
    require(g.val(patch).shape[1] == m.bbox.height && g.val(patch).shape[2] == m.bbox.width,
            "grad_loss: patch/mask shape mismatch");

    // M* and 1-M* broadcast over channels, as constants
    auto [m1, m0] = mask_weight_pair(m, ss[0]);
    int m1n = g.constant(ad::lift<T>(m1));
    int m0n = g.constant(ad::lift<T>(m0));

    std::vector<std::uint8_t> maskvec(m.mask.data.begin(), m.mask.data.end());
    int h_canvas = g.embed(patch, m.bbox.top, m.bbox.left, H, W);
    int comp = g.composite(patch, source, m.bbox.top, m.bbox.left, maskvec);
    return grad_loss_core(g, source, h_canvas, comp, m1n, m0n);
}

// ---------------------------------------------------------------------------
// Perceptual content/style losses over a frozen extractor.
// ---------------------------------------------------------------------------

/// B = A A^T over an N x M activation matrix.
TensorD gram(const TensorD& a);

/// Nearest-neighbor downsample of a full-image binary mask onto a feature
/// grid, replicated across that layer's channels.
TensorD mask_to_feature_grid(const Tensor<std::uint8_t>& mstar, int channels, int fh, int fw);

/// Σ_p α_p/(2 N_p M_p) Σ [(A_p[comp] - A_p[src]) ⊙ M*_p]²
template <class T>
int content_loss_node(ad::Graph<T>& g, const nn::Bound<T>& fx, const nn::ExtractorSpec& spec,
                      int comp, int src, const geo::OrbitalMask& m) {
    auto a_comp = nn::extractor_forward(g, fx, spec, comp);
    auto a_src = nn::extractor_forward(g, fx, spec, src);
    const auto mstar = m.expanded();
    int loss = -1;
    for (size_t p = 0; p < a_comp.size(); ++p) {
        const Shape& s = g.val(a_comp[p]).shape;
        const int n_p = s[0], m_p = s[1] * s[2];
        int mp = g.constant(ad::lift<T>(mask_to_feature_grid(mstar, n_p, s[1], s[2])));
        int diff = g.mul(g.sub(a_comp[p], a_src[p]), mp);
        int term = g.scale(g.sum(g.mul(diff, diff)), spec.alpha[p] / (2.0 * n_p * m_p));
        loss = loss < 0 ? term : g.add(loss, term);
    }
    return loss;
}

/// Σ_p β_p/(2 N_p²) Σ (B_p[comp] - B_p[src])², Gram-matrix statistics.
/// `gatys_norm` switches to the conventional β_p/(4 N_p² M_p²) scaling.
template <class T>
int style_loss_node(ad::Graph<T>& g, const nn::Bound<T>& fx, const nn::ExtractorSpec& spec,
                    int comp, int src, bool gatys_norm = false) {
    auto a_comp = nn::extractor_forward(g, fx, spec, comp);
    auto a_src = nn::extractor_forward(g, fx, spec, src);
    int loss = -1;
    for (size_t p = 0; p < a_comp.size(); ++p) {
        const Shape& s = g.val(a_comp[p]).shape;
        const int n_p = s[0], m_p = s[1] * s[2];
        int bc = g.matmul_nt(g.reshape(a_comp[p], Shape{n_p, m_p}),
                             g.reshape(a_comp[p], Shape{n_p, m_p}));
        int bs = g.matmul_nt(g.reshape(a_src[p], Shape{n_p, m_p}),
                             g.reshape(a_src[p], Shape{n_p, m_p}));
        int diff = g.sub(bc, bs);
        const double w = gatys_norm ? spec.beta[p] / (4.0 * (double)n_p * n_p * (double)m_p * m_p)
                                    : spec.beta[p] / (2.0 * (double)n_p * n_p);
        int term = g.scale(g.sum(g.mul(diff, diff)), w);
        loss = loss < 0 ? term : g.add(loss, term);
    }
    return loss;
}

/// Content and style given the source side as prebuilt nodes: per level p,
/// a_src[p] holds the source activations, gram_src[p] their Gram matrix, and
/// grid[p] the mask on that level's feature grid. A re-run tape feeds these
/// as updatable leaves; the wrapper below derives them from the source node.
template <class T>
std::pair<int, int> content_style_core(ad::Graph<T>& g, const nn::Bound<T>& fx,
                                       const nn::ExtractorSpec& spec, int comp,
                                       const std::vector<int>& a_src,
                                       const std::vector<int>& gram_src,
                                       const std::vector<int>& grid, bool gatys_norm = false) {
    auto a_comp = nn::extractor_forward(g, fx, spec, comp);
    require(a_src.size() == a_comp.size() && gram_src.size() == a_comp.size() &&
                grid.size() == a_comp.size(),
            "content_style: per-level node count mismatch");
    int cont = -1, sty = -1;
    for (size_t p = 0; p < a_comp.size(); ++p) {
        const Shape& s = g.val(a_comp[p]).shape;
        const int n_p = s[0], m_p = s[1] * s[2];
        int cdiff = g.mul(g.sub(a_comp[p], a_src[p]), grid[p]);
        int cterm = g.scale(g.sum(g.mul(cdiff, cdiff)), spec.alpha[p] / (2.0 * n_p * m_p));
        cont = cont < 0 ? cterm : g.add(cont, cterm);

        int bc = g.matmul_nt(g.reshape(a_comp[p], Shape{n_p, m_p}),
                             g.reshape(a_comp[p], Shape{n_p, m_p}));
        int sdiff = g.sub(bc, gram_src[p]);
        const double w = gatys_norm ? spec.beta[p] / (4.0 * (double)n_p * n_p * (double)m_p * m_p)
                                    : spec.beta[p] / (2.0 * (double)n_p * n_p);
        int sterm = g.scale(g.sum(g.mul(sdiff, sdiff)), w);
        sty = sty < 0 ? sterm : g.add(sty, sterm);
    }
    return {cont, sty};
}

/// Content and style over one shared pair of extractor passes; same values as
/// the two single-purpose builders, half the forward work.
template <class T>
std::pair<int, int> content_style_nodes(ad::Graph<T>& g, const nn::Bound<T>& fx,
                                        const nn::ExtractorSpec& spec, int comp, int src,
                                        const geo::OrbitalMask& m, bool gatys_norm = false) {
    auto a_src = nn::extractor_forward(g, fx, spec, src);
    const auto mstar = m.expanded();
    std::vector<int> gram_src, grid;
    for (size_t p = 0; p < a_src.size(); ++p) {
        const Shape& s = g.val(a_src[p]).shape;
        const int n_p = s[0], m_p = s[1] * s[2];
        gram_src.push_back(g.matmul_nt(g.reshape(a_src[p], Shape{n_p, m_p}),
                                       g.reshape(a_src[p], Shape{n_p, m_p})));
        grid.push_back(g.constant(ad::lift<T>(mask_to_feature_grid(mstar, n_p, s[1], s[2]))));
    }
    return content_style_core(g, fx, spec, comp, a_src, gram_src, grid, gatys_norm);
}

// ---------------------------------------------------------------------------
// Impersonation attack loss: 1 - cos(F(target), F(adv)).
// ---------------------------------------------------------------------------

/// Node-id form: the target embedding is an existing node, typically an
/// updatable leaf on a re-run tape.
template <class T>
int attack_loss_node(ad::Graph<T>& g, const nn::Bound<T>& victim, const nn::EmbedderArch& arch,
                     int target_embedding, int adv_img) {
    int e_adv = nn::embedder_forward(g, victim, arch, adv_img);
    int one = g.constant(ad::lift<T>(TensorD(Shape{1}, 1.0)));
    return g.sub(one, nn::cosine_node(g, target_embedding, e_adv));
}

/// Target side comes in as a precomputed embedding constant so callers can
/// cache it across iterations.
template <class T>
int attack_loss_node(ad::Graph<T>& g, const nn::Bound<T>& victim, const nn::EmbedderArch& arch,
                     const TensorD& target_embedding, int adv_img) {
    int e_adv = nn::embedder_forward(g, victim, arch, adv_img);
    int e_t = g.constant(ad::lift<T>(target_embedding));
    int one = g.constant(ad::lift<T>(TensorD(Shape{1}, 1.0)));
    return g.sub(one, nn::cosine_node(g, e_t, e_adv));
}

} // namespace advmk::losses
