#pragma once

#include "advmk/geometry.hpp"
#include "advmk/tensor.hpp"

#include <string>
#include <vector>

namespace advmk::data {

struct Dataset {
    std::vector<std::string> ids;       // "id07_03"
    std::vector<TensorD> images;        // (3,H,W) in [0,1]
    std::vector<geo::Landmarks> lms;    // matching order
    std::vector<int> identity;          // identity label per image
    int n_identities = 0;
    int makeup_from = 0; // identities >= this render the shared makeup style

    size_t size() const { return images.size(); }
    bool is_makeup(int ident) const { return ident >= makeup_from; }
    std::vector<int> indices_of(int ident) const {
        std::vector<int> v;
        for (size_t i = 0; i < identity.size(); ++i)
            if (identity[i] == ident) v.push_back((int)i);
        return v;
    }
};

/// Procedural face spec. Identity lives mostly in the orbital texture band so
/// a patch confined to the eye window can actually steer recognition.
struct SyntheticFaceSpec {
    int n_identities = 20;
    int images_per_identity = 10;
    int image_size = 64;
    double makeup_fraction = 0.5; // upper identities carry the makeup style
    double illum_lo = 0.92, illum_hi = 1.08;
    double max_rot_deg = 3.0;
    double pixel_noise = 0.01;
};

Dataset synth_dataset(const SyntheticFaceSpec& spec, std::uint64_t seed);

/// Canonical (un-rotated) landmark positions for the 12-point schema at a
/// given image size; doubles as the alignment template.
geo::Landmarks canonical_landmarks(int image_size);

void save_dataset(const std::string& dir, const Dataset& ds);
Dataset load_dataset(const std::string& dir);

} // namespace advmk::data
