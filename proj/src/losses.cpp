#include "advmk/losses.hpp"

#include <cmath>

namespace advmk::losses {

double gen_loss(const std::vector<double>& fake_scores) {
    require(!fake_scores.empty(), "gen_loss: empty batch");
    double acc = 0;
    for (double s : fake_scores) acc += std::log(std::max(1.0 - s, kLogEps));
    return acc / (double)fake_scores.size();
}

double dis_loss(const std::vector<double>& real_scores, const std::vector<double>& fake_scores) {
    require(!real_scores.empty() && !fake_scores.empty(), "dis_loss: empty batch");
    double r = 0, f = 0;
    for (double s : real_scores) r += std::log(std::max(s, kLogEps));
    for (double s : fake_scores) f += std::log(std::max(1.0 - s, kLogEps));
    return -(r / (double)real_scores.size() + f / (double)fake_scores.size());
}

std::pair<TensorD, TensorD> spatial_gradient(const TensorD& img) {
    require(img.shape.size() == 3, "spatial_gradient: want rank-3");
    require(img.shape[1] >= 2 && img.shape[2] >= 2, "spatial_gradient: degenerate dimension");
    TensorD gx(img.shape), gy(img.shape);
    for (int c = 0; c < img.shape[0]; ++c)
        for (int y = 0; y < img.shape[1]; ++y)
            for (int x = 0; x < img.shape[2]; ++x) {
                gx.at(c, y, x) = x + 1 < img.shape[2] ? img.at(c, y, x + 1) - img.at(c, y, x) : 0.0;
                gy.at(c, y, x) = y + 1 < img.shape[1] ? img.at(c, y + 1, x) - img.at(c, y, x) : 0.0;
            }
    return {std::move(gx), std::move(gy)};
}

std::pair<TensorD, TensorD> mask_weight_pair(const geo::OrbitalMask& m, int channels) {
    const auto mstar = m.expanded();
    const int H = mstar.shape[0], W = mstar.shape[1];
    TensorD m1(Shape{channels, H, W}), m0(Shape{channels, H, W});
    for (int c = 0; c < channels; ++c)
        for (std::int64_t i = 0; i < (std::int64_t)H * W; ++i) {
            m1[(std::int64_t)c * H * W + i] = mstar[i];
            m0[(std::int64_t)c * H * W + i] = 1.0 - mstar[i];
        }
    return {std::move(m1), std::move(m0)};
}

TensorD gram(const TensorD& a) {
    require(a.shape.size() == 2, "gram: want matrix");
    require(all_finite(a), "gram: non-finite input");
    const int n = a.shape[0], m = a.shape[1];
    TensorD b(Shape{n, n});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double acc = 0;
            for (int k = 0; k < m; ++k)
                acc += a[(std::int64_t)i * m + k] * a[(std::int64_t)j * m + k];
            b[(std::int64_t)i * n + j] = acc;
        }
    return b;
}

TensorD mask_to_feature_grid(const Tensor<std::uint8_t>& mstar, int channels, int fh, int fw) {
    const int H = mstar.shape[0], W = mstar.shape[1];
    TensorD out(Shape{channels, fh, fw});
    for (int y = 0; y < fh; ++y) {
        int sy = (int)(((double)y + 0.5) * H / fh);
        sy = sy < 0 ? 0 : (sy >= H ? H - 1 : sy);
        for (int x = 0; x < fw; ++x) {
            int sx = (int)(((double)x + 0.5) * W / fw);
            sx = sx < 0 ? 0 : (sx >= W ? W - 1 : sx);
            const double v = mstar[(std::int64_t)sy * W + sx];
            for (int c = 0; c < channels; ++c) out.at(c, y, x) = v;
        }
    }
    return out;
}

} // namespace advmk::losses
