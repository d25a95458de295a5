#pragma once

#include "advmk/tensor.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace advmk::geo {

/// Ordered landmark list in image coordinates; x right, y down. The default
/// schema "eyes12" carries 6 points per eye tracing the orbit contour,
/// left eye first. Pixel (r,c) covers the unit square with center
/// (x,y) = (c+0.5, r+0.5).
struct Landmarks {
    std::string schema = "eyes12";
    std::vector<std::array<double, 2>> pts; // (x, y)
};

struct BBox {
    int top = 0, left = 0, height = 0, width = 0;
    bool contains(const BBox& inner) const {
        return inner.top >= top && inner.left >= left && inner.top + inner.height <= top + height &&
               inner.left + inner.width <= left + width;
    }
};

/// Binary patch mask M plus its location; expanded() is the full-image M*.
struct OrbitalMask {
    Tensor<std::uint8_t> mask; // (h_p, w_p), entries 0/1
    BBox bbox;
    int img_h = 0, img_w = 0;

    Tensor<std::uint8_t> expanded() const;
    std::int64_t area() const {
        std::int64_t s = 0;
        for (std::int64_t i = 0; i < mask.size(); ++i) s += mask[i];
        return s;
    }
};

/// Canonical alignment target: landmark positions plus output image size.
struct AlignTemplate {
    Landmarks lm;
    int out_h = 0, out_w = 0;
};

/// Least-squares similarity (rotation+scale+translation) sending landmarks
/// onto the template; returns the warped image at the template's canonical
/// size and the transformed landmarks.
std::pair<TensorD, Landmarks> align_face(const TensorD& img, const Landmarks& lm,
                                         const AlignTemplate& tpl);

/// Union of the two filled eye polygons (first half / second half of the
/// points), rasterized with the even-odd pixel-center rule, inside the tight
/// bbox dilated by margin and clamped to the image.
OrbitalMask build_orbital_mask(const Landmarks& lm, int img_h, int img_w, double margin);

/// 15% of the distance between the two eye-contour centroids.
double default_margin(const Landmarks& lm);

TensorD crop_patch(const TensorD& img, const BBox& bbox);

/// The function h: patch copied at bbox into an all-zero canvas.
TensorD embed_patch(const TensorD& patch, const BBox& bbox, int canvas_h, int canvas_w);

/// Î_s = source with O_s⊙(1−M)+Ô_s⊙M pasted at the bbox. M is binary, so
/// pixels where M==0 (and everything outside the bbox) are bit-for-bit the
/// source.
TensorD composite(const TensorD& source, const TensorD& patch, const OrbitalMask& m);

/// Re-situate a mask inside a fixed window (the patch rectangle the generator
/// works on). Every set pixel must fall inside the window.
OrbitalMask fit_mask_to_window(const OrbitalMask& m, const BBox& window);

} // namespace advmk::geo
