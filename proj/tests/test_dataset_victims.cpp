// Synthetic face corpus and toy recognizer training: determinism, disk
// round-trips, landmark/mask geometry, and holdout identity separation.
#include "advmk/dataset.hpp"
#include "advmk/io.hpp"
#include "advmk/victims.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>

static int checks = 0;
#define CHECK(cond)                                                                      \
    do {                                                                                 \
        if (!(cond)) {                                                                   \
            std::fprintf(stderr, "FAIL %s:%d: %s\n", __FILE__, __LINE__, #cond);         \
            std::exit(1);                                                                \
        }                                                                                \
        ++checks;                                                                        \
    } while (0)

using namespace advmk;

static double now_s() {
    using namespace std::chrono;
    return duration_cast<duration<double>>(steady_clock::now().time_since_epoch()).count();
}

int main() {
    data::SyntheticFaceSpec spec; // defaults: 20 identities x 10 images, 64px

    const double t0 = now_s();
    data::Dataset ds = data::synth_dataset(spec, 7);
    std::printf("synth: %zu images in %.1fs\n", ds.size(), now_s() - t0);
    CHECK(ds.size() == 200);
    CHECK(ds.n_identities == 20 && ds.makeup_from == 10);

    // determinism and seed sensitivity
    {
        data::Dataset ds2 = data::synth_dataset(spec, 7);
        data::Dataset ds3 = data::synth_dataset(spec, 8);
        double d_same = 0, d_other = 0;
        for (std::int64_t i = 0; i < ds.images[0].size(); ++i) {
            d_same = std::max(d_same, std::abs(ds.images[0][i] - ds2.images[0][i]));
            d_other = std::max(d_other, std::abs(ds.images[0][i] - ds3.images[0][i]));
        }
        CHECK(d_same == 0.0);
        CHECK(d_other > 0.0);
        CHECK(ds2.ids == ds.ids);
    }

    // pixels in range, landmarks inside the image and usable for masks
    for (size_t i = 0; i < ds.size(); i += 17) {
        const auto& img = ds.images[i];
        for (std::int64_t j = 0; j < img.size(); ++j) CHECK(img[j] >= 0.0 && img[j] <= 1.0);
        CHECK(ds.lms[i].pts.size() == 12);
        geo::OrbitalMask m = geo::build_orbital_mask(ds.lms[i], 64, 64, 2.0);
        CHECK(m.area() > 0);
    }

    // alignment to the canonical template keeps eye landmarks put
    {
        const geo::Landmarks canon = data::canonical_landmarks(64);
        geo::AlignTemplate tpl{canon, 64, 64};
        auto [aligned, alm] = geo::align_face(ds.images[5], ds.lms[5], tpl);
        double lm_err = 0;
        for (size_t k = 0; k < canon.pts.size(); ++k) {
            lm_err = std::max(lm_err, std::abs(alm.pts[k][0] - canon.pts[k][0]));
            lm_err = std::max(lm_err, std::abs(alm.pts[k][1] - canon.pts[k][1]));
        }
        CHECK(lm_err < 1e-6); // similarity fit on consistent rigid motion is exact
        CHECK(all_finite(aligned));
    }

    // disk round-trip: 8-bit quantization is the only loss
    {
        const char* dir = "tmp_ds_roundtrip";
        data::SyntheticFaceSpec tiny;
        tiny.n_identities = 4;
        tiny.images_per_identity = 2;
        data::Dataset small = data::synth_dataset(tiny, 3);
        data::save_dataset(dir, small);
        data::Dataset back = data::load_dataset(dir);
        CHECK(back.size() == small.size());
        CHECK(back.n_identities == 4 && back.makeup_from == 2);
        double dmax = 0;
        for (size_t i = 0; i < small.size(); ++i) {
            size_t j = 0;
            while (back.ids[j] != small.ids[i]) ++j;
            CHECK(back.identity[j] == small.identity[i]);
            CHECK(back.lms[j].pts.size() == small.lms[i].pts.size());
            for (std::int64_t k = 0; k < small.images[i].size(); ++k)
                dmax = std::max(dmax, std::abs(back.images[j][k] - small.images[i][k]));
        }
        CHECK(dmax <= 0.5 / 255.0 + 1e-12);
        std::system("rm -rf tmp_ds_roundtrip");
    }

    // recognizers learn the identities: holdout separation clears the gate
    {
        auto archs = nn::embedder_presets();
        CHECK(archs.size() == 4);
        victims::TrainConfig cfg;
        const double t1 = now_s();
        auto vs = victims::train_toy_victims(ds, archs, 11, cfg);
        const double train_s = now_s() - t1;
        std::printf("victims: trained %zu models in %.1fs\n", vs.size(), train_s);
        for (const auto& vm : vs) {
            std::printf("  %s separation %.3f\n", vm.arch.name.c_str(), vm.separation);
            CHECK(vm.separation >= 0.3);
        }
        CHECK(train_s < 180.0);

        // same seed, same model, bitwise
        auto vs2 = victims::train_toy_victims(ds, {archs[0]}, 11, cfg);
        CHECK(nn::max_abs_diff(vs[0].params, vs2[0].params) == 0.0);

        // registry round-trip
        vs[0].tau = 0.31;
        vs[0].reference_tau = 0.167;
        victims::save_victims("tmp_victims", vs);
        auto back = victims::load_victims("tmp_victims");
        CHECK(back.size() == vs.size());
        CHECK(back[0].tau == 0.31 && back[0].reference_tau == 0.167);
        CHECK(nn::max_abs_diff(back[0].params, vs[0].params) == 0.0);
        CHECK(back[0].arch.name == "toyA" && back[0].arch.input_size == 32);
        const TensorD e1 = victims::embed_image(vs[0], ds.images[0]);
        const TensorD e2 = victims::embed_image(back[0], ds.images[0]);
        double d = 0;
        for (std::int64_t i = 0; i < e1.size(); ++i) d = std::max(d, std::abs(e1[i] - e2[i]));
        CHECK(d == 0.0);
        std::system("rm -rf tmp_victims");

        // cosine host oracle: (1,2,3)x(4,5,6)
        TensorD u(Shape{3}), v(Shape{3});
        u[0] = 1; u[1] = 2; u[2] = 3;
        v[0] = 4; v[1] = 5; v[2] = 6;
        CHECK(std::abs(victims::cosine_sim(u, v) - 32.0 / (std::sqrt(14.0) * std::sqrt(77.0))) <
              1e-12);
        bool threw = false;
        try {
            TensorD z(Shape{3});
            victims::cosine_sim(u, z);
        } catch (const Error&) {
            threw = true;
        }
        CHECK(threw);
    }

    std::printf("test_dataset_victims: %d checks passed\n", checks);
    return 0;
}
