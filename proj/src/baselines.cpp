#include "advmk/baselines.hpp"
#include "advmk/losses.hpp"

#include <cmath>

namespace advmk::baselines {

namespace {

double sign_of(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

void check_mask(const TensorD& source, const Tensor<std::uint8_t>& mask) {
    require(source.shape.size() == 3, "baseline: want (3,H,W) source");
    require(mask.shape.size() == 2 && mask.shape[0] == source.shape[1] &&
                mask.shape[1] == source.shape[2],
            "baseline: mask/source shape mismatch");
}

/// One signed step from x, projected to the eps-ball around source and [0,1],
/// written only under the mask. All three attacks share this op so their
/// pinned equivalences hold bit for bit.
TensorD masked_step(const TensorD& x, const TensorD& dir, const TensorD& source,
                    const Tensor<std::uint8_t>& mask, double eps, double step) {
    TensorD out = x;
    const int H = source.shape[1], W = source.shape[2];
    for (int c = 0; c < 3; ++c)
        for (std::int64_t i = 0; i < (std::int64_t)H * W; ++i) {
            if (!mask[i]) continue;
            const std::int64_t j = (std::int64_t)c * H * W + i;
            double v = x[j] - step * sign_of(dir[j]);
            const double lo = source[j] - eps, hi = source[j] + eps;
            v = v < lo ? lo : (v > hi ? hi : v);
            out[j] = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
        }
    return out;
}

} // namespace

TensorD image_grad(const std::vector<const victims::VictimModel*>& models,
                   const std::vector<TensorD>& target_embs, const TensorD& img) {
    require(!models.empty() && models.size() == target_embs.size(), "image_grad: bad model list");
    ad::Graph<double> g;
    const int x = g.input(TensorD(img));
    int loss = -1;
    for (size_t m = 0; m < models.size(); ++m) {
        auto b = nn::bind(g, models[m]->params, false);
        int t = losses::attack_loss_node(g, b, models[m]->arch, target_embs[m], x);
        loss = loss < 0 ? t : g.add(loss, t);
    }
    g.backward(g.scale(loss, 1.0 / (double)models.size()));
    return g.grad(x);
}

TensorD fgsm(const std::vector<const victims::VictimModel*>& models,
             const std::vector<TensorD>& target_embs, const TensorD& source,
             const Tensor<std::uint8_t>& mask, double eps) {
    check_mask(source, mask);
    require(eps >= 0, "fgsm: negative eps");
    const TensorD gx = image_grad(models, target_embs, source);
    return masked_step(source, gx, source, mask, eps, eps);
}

TensorD pgd(const std::vector<const victims::VictimModel*>& models,
            const std::vector<TensorD>& target_embs, const TensorD& source,
            const Tensor<std::uint8_t>& mask, double eps, int steps, double step) {
    check_mask(source, mask);
    require(eps >= 0 && steps >= 1 && step >= 0, "pgd: bad config");
    TensorD x = source;
    for (int t = 0; t < steps; ++t) {
        const TensorD gx = image_grad(models, target_embs, x);
        x = masked_step(x, gx, source, mask, eps, step);
    }
    return x;
}

TensorD mifgsm(const std::vector<const victims::VictimModel*>& models,
               const std::vector<TensorD>& target_embs, const TensorD& source,
               const Tensor<std::uint8_t>& mask, double eps, int steps, double step, double mu) {
    check_mask(source, mask);
    require(eps >= 0 && steps >= 1 && step >= 0, "mifgsm: bad config");
    TensorD x = source;
    TensorD acc(source.shape);
    for (int t = 0; t < steps; ++t) {
        const TensorD gx = image_grad(models, target_embs, x);
        double l1 = 0;
        for (std::int64_t i = 0; i < gx.size(); ++i) l1 += std::abs(gx[i]);
        for (std::int64_t i = 0; i < gx.size(); ++i)
            acc[i] = mu * acc[i] + (l1 > 0 ? gx[i] / l1 : 0.0);
        x = masked_step(x, acc, source, mask, eps, step);
    }
    return x;
}

} // namespace advmk::baselines
