#include "advmk/dataset.hpp"
#include "advmk/io.hpp"
#include "advmk/rng.hpp"

#include <cmath>
#include <numeric>
#include <filesystem>

namespace advmk::data {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Base geometry laid out for a 64px canvas; everything scales linearly.
struct Layout {
    double q;
    double face_cx, face_cy, face_a, face_b;
    double eye_y, eye_lx, eye_rx;
    double eye_rx_r = 5, eye_ry_r = 3;  // dark interior
    double lm_rx = 7.5, lm_ry = 5;      // landmark hexagon
    double band_rx = 9, band_ry = 6;    // textured orbital band

    explicit Layout(int s) : q(s / 64.0) {
        face_cx = 32 * q;
        face_cy = 36 * q;
        face_a = 24 * q;
        face_b = 26 * q;
        eye_y = 26 * q;
        eye_lx = 20 * q;
        eye_rx = 44 * q;
        eye_rx_r *= q;
        eye_ry_r *= q;
        lm_rx *= q;
        lm_ry *= q;
        band_rx *= q;
        band_ry *= q;
    }
};

// Smooth random field: a handful of oriented cosine waves. Continuous in
// (x,y), so rotated sampling needs no resampling.
struct TextureField {
    struct Wave {
        double ax, ay, phase, amp;
    };
    std::vector<Wave> waves;
    double norm = 1;

    static TextureField make(Rng& rng, double scale) {
        TextureField f;
        double total = 0;
        for (int k = 0; k < 6; ++k) {
            const double lambda = rng.uniform(5.0, 12.0) * scale;
            const double dir = rng.uniform(0.0, 2 * kPi);
            const double amp = rng.uniform(0.5, 1.0);
            f.waves.push_back({2 * kPi * std::cos(dir) / lambda, 2 * kPi * std::sin(dir) / lambda,
                               rng.uniform(0.0, 2 * kPi), amp});
            total += amp;
        }
        f.norm = total;
        return f;
    }

    /// Identity variant: the first wave is anchored on a stratified
    /// orientation/wavelength grid (u in [0,1) unique per identity) and made
    /// dominant, so no two identities can draw near-identical texture and
    /// blur the impostor tail.
    static TextureField make_anchored(Rng& rng, double scale, double u) {
        TextureField f = make(rng, scale);
        const double dir = kPi * u; // orientations live mod pi
        const double lambda = (5.0 + 6.0 * std::fmod(u * 7.0, 1.0)) * scale;
        f.waves[0] = {2 * kPi * std::cos(dir) / lambda, 2 * kPi * std::sin(dir) / lambda,
                      rng.uniform(0.0, 2 * kPi), 2.2};
        double total = 0;
        for (const auto& w : f.waves) total += w.amp;
        f.norm = total;
        return f;
    }
    double at(double x, double y) const {
        double v = 0;
        for (const auto& w : waves) v += w.amp * std::cos(w.ax * x + w.ay * y + w.phase);
        return v / norm;
    }
};

/// Only the orbital bands carry identity (texture field + per-band tint);
/// face shape and skin tone vary per image instead, so recognizers can't key
/// on regions the makeup patch never touches.
struct IdentityParams {
    TextureField personal;
    double band_tint_l[3], band_tint_r[3]; // color cast of each orbital band
    bool makeup;
};

IdentityParams identity_params(const SyntheticFaceSpec& spec, std::uint64_t seed, int ident,
                               const Layout& lay) {
    Rng rng(seed * 0x9e3779b97f4a7c15ull + 1 + (std::uint64_t)ident * 0x100000001b3ull);
    IdentityParams p;
    const int mf = std::max((int)(spec.n_identities * spec.makeup_fraction), 1);
    p.makeup = ident >= mf;
    // Texture orientation: plain identities stratify the full semicircle
    // (they are the calibration population, so they need the room); made-up
    // faces keep only a faint personal residue under the shared cosmetic
    // texture, so their anchor hardly matters.
    p.personal = TextureField::make_anchored(
        rng, lay.q, p.makeup ? (ident + 0.5) / spec.n_identities : (ident + 0.5) / mf);
    // Mean band color is the other strong cue, and the minimum pairwise gap
    // among plain identities sets the impostor tail of the score
    // distribution. One hue circle is too crowded, so each band gets its own
    // hue: the right band follows identity order, the left walks the circle
    // with a coprime stride. Identities adjacent in orientation (hence in
    // right hue) then sit far apart in left hue, and vice versa — every pair
    // ends up well separated in at least one cue.
    auto tint = [](double psi, double* t) {
        t[0] = 0.14 * std::cos(psi);
        t[1] = 0.14 * std::sin(psi);
        t[2] = -0.09 * std::cos(psi) + 0.09 * std::sin(psi);
    };
    if (!p.makeup) {
        int stride = std::max(2, (int)std::lround(mf * 0.3));
        while (mf > 4 && (std::gcd(stride, mf) != 1 || stride == mf - 1)) ++stride;
        const double cell = 2 * kPi / mf;
        tint(cell * ((ident * stride) % mf + 0.25), p.band_tint_l);
        tint(cell * (ident + 0.25), p.band_tint_r);
    } else {
        // one tight cosmetic cluster: a shared tint for every made-up face
        // (the strong makeup color shift already keeps them away from every
        // plain identity, and only plain pairs enter threshold calibration)
        tint(2 * kPi * 0.75 / mf, p.band_tint_l);
        for (int c = 0; c < 3; ++c) p.band_tint_r[c] = p.band_tint_l[c];
    }
    return p;
}

inline bool in_ellipse(double x, double y, double cx, double cy, double rx, double ry) {
    const double dx = (x - cx) / rx, dy = (y - cy) / ry;
    return dx * dx + dy * dy <= 1.0;
}

} // namespace

geo::Landmarks canonical_landmarks(int image_size) {
    const Layout lay(image_size);
    geo::Landmarks lm;
    lm.schema = "eyes12";
    for (double ex : {lay.eye_lx, lay.eye_rx})
        for (int k = 0; k < 6; ++k) {
            const double a = k * kPi / 3.0;
            lm.pts.push_back({ex + lay.lm_rx * std::cos(a), lay.eye_y + lay.lm_ry * std::sin(a)});
        }
    return lm;
}

Dataset synth_dataset(const SyntheticFaceSpec& spec, std::uint64_t seed) {
    require(spec.n_identities >= 2, "synth_dataset: need at least 2 identities");
    require(spec.images_per_identity >= 1 && spec.image_size >= 32,
            "synth_dataset: invalid spec ranges");
    require(spec.illum_lo > 0 && spec.illum_hi >= spec.illum_lo && spec.pixel_noise >= 0 &&
                spec.max_rot_deg >= 0,
            "synth_dataset: invalid nuisance ranges");

    const int S = spec.image_size;
    const Layout lay(S);

    // shared makeup signature: its own stream, independent of identities
    Rng shared_rng(seed * 0x9e3779b97f4a7c15ull + 0xabcdef);
    const TextureField makeup_base = TextureField::make(shared_rng, lay.q);

    Dataset ds;
    ds.n_identities = spec.n_identities;
    ds.makeup_from = (int)(spec.n_identities * spec.makeup_fraction);

    const geo::Landmarks canon = canonical_landmarks(S);

    for (int ident = 0; ident < spec.n_identities; ++ident) {
        const IdentityParams idp = identity_params(spec, seed, ident, lay);
        for (int k = 0; k < spec.images_per_identity; ++k) {
            Rng rng(seed * 0x9e3779b97f4a7c15ull + 101 +
                    (std::uint64_t)(ident * 1000 + k) * 0x100000001b3ull);
            const double rot = rng.uniform(-spec.max_rot_deg, spec.max_rot_deg) * kPi / 180.0;
            const double gain = rng.uniform(spec.illum_lo, spec.illum_hi);
            const double cr = std::cos(rot), sr = std::sin(rot);
            const double face_a = lay.face_a + rng.uniform(-2.0, 2.0) * lay.q;
            const double face_b = lay.face_b + rng.uniform(-2.0, 2.0) * lay.q;
            const double base[3] = {0.75, 0.62, 0.55};
            double skin[3];
            for (int c = 0; c < 3; ++c) skin[c] = base[c] + 0.02 * rng.normal();

            TensorD img(Shape{3, S, S});
            for (int y = 0; y < S; ++y)
                for (int x = 0; x < S; ++x) {
                    // evaluate the scene in the un-rotated frame
                    const double px = x + 0.5 - lay.face_cx, py = y + 0.5 - lay.face_cy;
                    const double u = cr * px + sr * py + lay.face_cx;
                    const double v = -sr * px + cr * py + lay.face_cy;

                    double col[3] = {0.12, 0.12, 0.12};
                    if (in_ellipse(u, v, lay.face_cx, lay.face_cy, face_a, face_b)) {
                        for (int c = 0; c < 3; ++c) col[c] = skin[c];

                        const bool in_l_band =
                            in_ellipse(u, v, lay.eye_lx, lay.eye_y, lay.band_rx, lay.band_ry);
                        const bool in_r_band =
                            in_ellipse(u, v, lay.eye_rx, lay.eye_y, lay.band_rx, lay.band_ry);
                        const bool in_l_eye =
                            in_ellipse(u, v, lay.eye_lx, lay.eye_y, lay.eye_rx_r, lay.eye_ry_r);
                        const bool in_r_eye =
                            in_ellipse(u, v, lay.eye_rx, lay.eye_y, lay.eye_rx_r, lay.eye_ry_r);

                        if (in_l_eye || in_r_eye) {
                            col[0] = 0.15;
                            col[1] = 0.12;
                            col[2] = 0.12;
                            const double ex = in_l_eye ? lay.eye_lx : lay.eye_rx;
                            if (in_ellipse(u, v, ex, lay.eye_y, lay.eye_rx_r * 0.3,
                                           lay.eye_ry_r * 0.5)) {
                                col[0] = col[1] = col[2] = 0.45;
                            }
                        } else if (in_l_band || in_r_band) {
                            // identity lives here: personal texture, plus the
                            // shared cosmetic signature for makeup identities
                            double tex = idp.makeup
                                             ? 0.3 * idp.personal.at(u, v) + 0.95 * makeup_base.at(u, v)
                                             : idp.personal.at(u, v);
                            const double cw[3] = {1.0, 0.85, 0.9};
                            const double* bt = in_l_band ? idp.band_tint_l : idp.band_tint_r;
                            for (int c = 0; c < 3; ++c)
                                col[c] += 0.26 * cw[c] * tex + bt[c];
                            if (idp.makeup) {
                                col[0] -= 0.10;
                                col[1] -= 0.22;
                                col[2] += 0.06;
                            }
                        }

                        // mouth
                        if (std::abs(v - 50 * lay.q) < 1.2 * lay.q &&
                            std::abs(u - 32 * lay.q) < 8 * lay.q) {
                            col[0] = 0.45;
                            col[1] = 0.2;
                            col[2] = 0.2;
                        }
                    }
                    for (int c = 0; c < 3; ++c) {
                        double val = col[c] * gain + spec.pixel_noise * rng.normal();
                        img.at(c, y, x) = val < 0 ? 0 : (val > 1 ? 1 : val);
                    }
                }

            // landmarks follow the same rotation (forward transform)
            geo::Landmarks lm;
            lm.schema = canon.schema;
            for (const auto& p : canon.pts) {
                const double px = p[0] - lay.face_cx, py = p[1] - lay.face_cy;
                lm.pts.push_back(
                    {cr * px - sr * py + lay.face_cx, sr * px + cr * py + lay.face_cy});
            }

            char id[32];
            std::snprintf(id, sizeof id, "id%02d_%02d", ident, k);
            ds.ids.push_back(id);
            ds.images.push_back(std::move(img));
            ds.lms.push_back(std::move(lm));
            ds.identity.push_back(ident);
        }
    }
    return ds;
}

void save_dataset(const std::string& dir, const Dataset& ds) {
    io::ensure_dir(dir);
    io::ensure_dir(dir + "/images");
    std::map<std::string, geo::Landmarks> lms;
    io::json labels = io::json::object();
    for (size_t i = 0; i < ds.size(); ++i) {
        io::png_write(dir + "/images/" + ds.ids[i] + ".png", ds.images[i]);
        lms[ds.ids[i]] = ds.lms[i];
        labels[ds.ids[i]] = ds.identity[i];
    }
    io::save_landmarks(dir + "/landmarks.json", lms);
    io::json meta;
    meta["labels"] = labels;
    meta["n_identities"] = ds.n_identities;
    meta["makeup_from"] = ds.makeup_from;
    io::save_json(dir + "/dataset.json", meta);
}

Dataset load_dataset(const std::string& dir) {
    require(io::file_exists(dir + "/dataset.json"), "load_dataset: missing " + dir + "/dataset.json");
    const io::json meta = io::load_json(dir + "/dataset.json");
    const auto lms = io::load_landmarks(dir + "/landmarks.json");
    Dataset ds;
    ds.n_identities = meta["n_identities"].get<int>();
    ds.makeup_from = meta["makeup_from"].get<int>();
    for (auto it = meta["labels"].begin(); it != meta["labels"].end(); ++it) {
        ds.ids.push_back(it.key());
        ds.identity.push_back(it.value().get<int>());
        ds.images.push_back(io::png_read(dir + "/images/" + it.key() + ".png"));
        auto f = lms.find(it.key());
        require(f != lms.end(), "load_dataset: missing landmarks for " + it.key());
        ds.lms.push_back(f->second);
    }
    return ds;
}

} // namespace advmk::data
