#include "advmk/geometry.hpp"

#include <cmath>
#include <complex>

namespace advmk::geo {

Tensor<std::uint8_t> OrbitalMask::expanded() const {
    require(img_h > 0 && img_w > 0, "OrbitalMask: image size unset");
    Tensor<std::uint8_t> full(Shape{img_h, img_w});
    for (int y = 0; y < bbox.height; ++y)
        for (int x = 0; x < bbox.width; ++x)
            full[(std::int64_t)(bbox.top + y) * img_w + (bbox.left + x)] =
                mask[(std::int64_t)y * bbox.width + x];
    return full;
}

namespace {

using cplx = std::complex<double>;

// Least-squares a,b over complex points: min Σ |a z_i + b − w_i|².
void solve_similarity(const std::vector<std::array<double, 2>>& from,
                      const std::vector<std::array<double, 2>>& to, cplx& a, cplx& b) {
    const size_t n = from.size();
    cplx sz(0), sw(0), szw(0);
    double szz = 0;
    for (size_t i = 0; i < n; ++i) {
        const cplx z(from[i][0], from[i][1]), w(to[i][0], to[i][1]);
        sz += z;
        sw += w;
        szw += std::conj(z) * w;
        szz += std::norm(z);
    }
    const cplx den = cplx((double)n) * szz - std::conj(sz) * sz;
    require(std::abs(den) > 1e-9, "align_face: coincident landmarks");
    a = (cplx((double)n) * szw - std::conj(sz) * sw) / den;
    b = (sw - a * sz) / cplx((double)n);
}

void check_not_collinear(const std::vector<std::array<double, 2>>& pts) {
    require(pts.size() >= 3, "align_face: need at least 3 landmarks");
    double mx = 0, my = 0;
    for (const auto& p : pts) {
        mx += p[0];
        my += p[1];
    }
    mx /= (double)pts.size();
    my /= (double)pts.size();
    double sxx = 0, syy = 0, sxy = 0;
    for (const auto& p : pts) {
        const double dx = p[0] - mx, dy = p[1] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    // smaller eigenvalue of the 2x2 scatter matrix
    const double tr = sxx + syy;
    const double det = sxx * syy - sxy * sxy;
    const double disc = std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
    const double lmin = tr / 2.0 - disc;
    require(lmin > 1e-9 * std::max(1.0, tr), "align_face: collinear landmarks");
}

double sample_bilinear(const TensorD& img, int c, double fy, double fx) {
    const int h = img.shape[1], w = img.shape[2];
    if (fy < 0) fy = 0;
    if (fy > h - 1) fy = h - 1;
    if (fx < 0) fx = 0;
    if (fx > w - 1) fx = w - 1;
    const int y0 = (int)fy, x0 = (int)fx;
    const int y1 = y0 + 1 < h ? y0 + 1 : y0;
    const int x1 = x0 + 1 < w ? x0 + 1 : x0;
    const double wy = fy - y0, wx = fx - x0;
    return img.at(c, y0, x0) * (1 - wy) * (1 - wx) + img.at(c, y0, x1) * (1 - wy) * wx +
           img.at(c, y1, x0) * wy * (1 - wx) + img.at(c, y1, x1) * wy * wx;
}

bool point_in_poly(const std::array<double, 2>* poly, size_t n, double x, double y) {
    bool inside = false;
    for (size_t i = 0, j = n - 1; i < n; j = i++) {
        const double xi = poly[i][0], yi = poly[i][1];
        const double xj = poly[j][0], yj = poly[j][1];
        if ((yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi) inside = !inside;
    }
    return inside;
}

} // namespace

std::pair<TensorD, Landmarks> align_face(const TensorD& img, const Landmarks& lm,
                                         const AlignTemplate& tpl) {
    require(img.shape.size() == 3 && img.shape[0] == 3, "align_face: want (3,H,W) image");
    require(lm.schema == tpl.lm.schema && lm.pts.size() == tpl.lm.pts.size(),
            "align_face: landmark schema mismatch");
    require(tpl.out_h > 0 && tpl.out_w > 0, "align_face: template has no canonical size");
    check_not_collinear(lm.pts);

    cplx a, b;
    solve_similarity(lm.pts, tpl.lm.pts, a, b);
    require(std::abs(a) > 1e-12, "align_face: degenerate transform");

    TensorD out(Shape{3, tpl.out_h, tpl.out_w});
    const cplx inv_a = cplx(1.0) / a;
    for (int y = 0; y < tpl.out_h; ++y)
        for (int x = 0; x < tpl.out_w; ++x) {
            // pixel centers sit at +0.5; map the output center back to input
            const cplx q(x + 0.5, y + 0.5);
            const cplx src = (q - b) * inv_a;
            for (int c = 0; c < 3; ++c)
                out.at(c, y, x) = sample_bilinear(img, c, src.imag() - 0.5, src.real() - 0.5);
        }

    Landmarks moved;
    moved.schema = lm.schema;
    moved.pts.reserve(lm.pts.size());
    for (const auto& p : lm.pts) {
        const cplx w = a * cplx(p[0], p[1]) + b;
        moved.pts.push_back({w.real(), w.imag()});
    }
    return {std::move(out), std::move(moved)};
}

double default_margin(const Landmarks& lm) {
    require(lm.pts.size() >= 2 && lm.pts.size() % 2 == 0, "default_margin: bad landmark count");
    const size_t half = lm.pts.size() / 2;
    double lx = 0, ly = 0, rx = 0, ry = 0;
    for (size_t i = 0; i < half; ++i) {
        lx += lm.pts[i][0];
        ly += lm.pts[i][1];
        rx += lm.pts[half + i][0];
        ry += lm.pts[half + i][1];
    }
    lx /= (double)half;
    ly /= (double)half;
    rx /= (double)half;
    ry /= (double)half;
    return 0.15 * std::hypot(rx - lx, ry - ly);
}

OrbitalMask build_orbital_mask(const Landmarks& lm, int img_h, int img_w, double margin) {
    require(lm.pts.size() >= 6 && lm.pts.size() % 2 == 0,
            "build_orbital_mask: need two polygons of >= 3 points");
    require(margin >= 0, "build_orbital_mask: negative margin");
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& p : lm.pts) {
        require(p[0] >= 0 && p[0] < img_w && p[1] >= 0 && p[1] < img_h,
                "build_orbital_mask: landmark outside image");
        xmin = std::min(xmin, p[0]);
        xmax = std::max(xmax, p[0]);
        ymin = std::min(ymin, p[1]);
        ymax = std::max(ymax, p[1]);
    }
    // dilate by margin, clamp to image
    int top = (int)std::floor(ymin - margin);
    int bot = (int)std::ceil(ymax + margin);
    int left = (int)std::floor(xmin - margin);
    int right = (int)std::ceil(xmax + margin);
    top = std::max(top, 0);
    left = std::max(left, 0);
    bot = std::min(bot, img_h - 1);
    right = std::min(right, img_w - 1);

    OrbitalMask m;
    m.bbox = {top, left, bot - top + 1, right - left + 1};
    m.img_h = img_h;
    m.img_w = img_w;
    m.mask = Tensor<std::uint8_t>(Shape{m.bbox.height, m.bbox.width});

    const size_t half = lm.pts.size() / 2;
    std::int64_t area = 0;
    for (int y = 0; y < m.bbox.height; ++y)
        for (int x = 0; x < m.bbox.width; ++x) {
            const double cx = left + x + 0.5, cy = top + y + 0.5;
            const bool in = point_in_poly(lm.pts.data(), half, cx, cy) ||
                            point_in_poly(lm.pts.data() + half, half, cx, cy);
            m.mask[(std::int64_t)y * m.bbox.width + x] = in ? 1 : 0;
            area += in;
        }
    require(area > 0, "build_orbital_mask: polygon area zero");
    return m;
}

TensorD crop_patch(const TensorD& img, const BBox& b) {
    require(img.shape.size() == 3, "crop_patch: want rank-3 image");
    require(b.top >= 0 && b.left >= 0 && b.height > 0 && b.width > 0 &&
                b.top + b.height <= img.shape[1] && b.left + b.width <= img.shape[2],
            "crop_patch: bbox outside image");
    TensorD out(Shape{img.shape[0], b.height, b.width});
    for (int c = 0; c < img.shape[0]; ++c)
        for (int y = 0; y < b.height; ++y)
            for (int x = 0; x < b.width; ++x) out.at(c, y, x) = img.at(c, b.top + y, b.left + x);
    return out;
}

TensorD embed_patch(const TensorD& patch, const BBox& b, int canvas_h, int canvas_w) {
    require(patch.shape.size() == 3, "embed_patch: want rank-3 patch");
    require(patch.shape[1] == b.height && patch.shape[2] == b.width,
            "embed_patch: bbox shape mismatch");
    require(b.top >= 0 && b.left >= 0 && b.top + b.height <= canvas_h &&
                b.left + b.width <= canvas_w,
            "embed_patch: bbox outside canvas");
    TensorD out(Shape{patch.shape[0], canvas_h, canvas_w});
    for (int c = 0; c < patch.shape[0]; ++c)
        for (int y = 0; y < b.height; ++y)
            for (int x = 0; x < b.width; ++x) out.at(c, b.top + y, b.left + x) = patch.at(c, y, x);
    return out;
}

TensorD composite(const TensorD& source, const TensorD& patch, const OrbitalMask& m) {
    require(source.shape.size() == 3 && patch.shape.size() == 3 &&
                source.shape[0] == patch.shape[0],
            "composite: shape mismatch");
    require(patch.shape[1] == m.bbox.height && patch.shape[2] == m.bbox.width,
            "composite: patch/mask shape mismatch");
    require(m.bbox.top >= 0 && m.bbox.left >= 0 && m.bbox.top + m.bbox.height <= source.shape[1] &&
                m.bbox.left + m.bbox.width <= source.shape[2],
            "composite: bbox outside source");
    TensorD out = source;
    for (int c = 0; c < patch.shape[0]; ++c)
        for (int y = 0; y < m.bbox.height; ++y)
            for (int x = 0; x < m.bbox.width; ++x)
                if (m.mask[(std::int64_t)y * m.bbox.width + x])
                    out.at(c, m.bbox.top + y, m.bbox.left + x) = patch.at(c, y, x);
    return out;
}

OrbitalMask fit_mask_to_window(const OrbitalMask& m, const BBox& window) {
    require(window.top >= 0 && window.left >= 0 && window.top + window.height <= m.img_h &&
                window.left + window.width <= m.img_w,
            "fit_mask_to_window: window outside image");
    OrbitalMask out;
    out.bbox = window;
    out.img_h = m.img_h;
    out.img_w = m.img_w;
    out.mask = Tensor<std::uint8_t>(Shape{window.height, window.width});
    for (int y = 0; y < m.bbox.height; ++y)
        for (int x = 0; x < m.bbox.width; ++x) {
            if (!m.mask[(std::int64_t)y * m.bbox.width + x]) continue;
            const int gy = m.bbox.top + y, gx = m.bbox.left + x;
            require(gy >= window.top && gy < window.top + window.height && gx >= window.left &&
                        gx < window.left + window.width,
                    "fit_mask_to_window: mask pixel outside window");
            out.mask[(std::int64_t)(gy - window.top) * window.width + (gx - window.left)] = 1;
        }
    return out;
}

} // namespace advmk::geo
