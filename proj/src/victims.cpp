#include "advmk/victims.hpp"
#include "advmk/io.hpp"

#include <cmath>

namespace advmk::victims {

TensorD embed_image(const VictimModel& vm, const TensorD& img) {
    ad::Graph<double> g;
    auto b = nn::bind(g, vm.params, false);
    const int e = nn::embedder_forward(g, b, vm.arch, g.constant(TensorD(img)));
    return g.val(e);
}

double cosine_sim(const TensorD& u, const TensorD& v) {
    require(u.size() == v.size() && u.size() > 0, "cosine_sim: length mismatch");
    double uu = 0, vv = 0, uv = 0;
    for (std::int64_t i = 0; i < u.size(); ++i) {
        uu += u[i] * u[i];
        vv += v[i] * v[i];
        uv += u[i] * v[i];
    }
    require(uu > 0 && vv > 0, "cosine_sim: zero-norm embedding");
    return uv / (std::sqrt(uu) * std::sqrt(vv));
}

namespace {

void renormalize_rows(TensorD& w) {
    const int rows = w.shape[0], cols = w.shape[1];
    for (int r = 0; r < rows; ++r) {
        double s = 0;
        for (int c = 0; c < cols; ++c) s += w[(std::int64_t)r * cols + c] * w[(std::int64_t)r * cols + c];
        require(s > 0, "class head: zero row");
        const double inv = 1.0 / std::sqrt(s);
        for (int c = 0; c < cols; ++c) w[(std::int64_t)r * cols + c] *= inv;
    }
}

void split_pools(const data::Dataset& ds, int holdout, std::vector<int>& train_pool,
                 std::vector<int>& hold_pool) {
    for (int ident = 0; ident < ds.n_identities; ++ident) {
        const auto idx = ds.indices_of(ident);
        require((int)idx.size() > holdout, "train_toy_victims: identity has no training images");
        for (size_t k = 0; k < idx.size(); ++k)
            ((int)k < (int)idx.size() - holdout ? train_pool : hold_pool).push_back(idx[k]);
    }
}

} // namespace

double holdout_separation(const VictimModel& vm, const data::Dataset& ds,
                          int holdout_per_identity) {
    std::vector<int> train_pool, hold_pool;
    split_pools(ds, holdout_per_identity, train_pool, hold_pool);
    std::vector<TensorD> emb;
    for (int i : hold_pool) emb.push_back(embed_image(vm, ds.images[i]));
    double gen = 0, imp = 0;
    std::int64_t n_gen = 0, n_imp = 0;
    for (size_t a = 0; a < hold_pool.size(); ++a)
        for (size_t b = a + 1; b < hold_pool.size(); ++b) {
            const double c = cosine_sim(emb[a], emb[b]);
            if (ds.identity[hold_pool[a]] == ds.identity[hold_pool[b]]) {
                gen += c;
                ++n_gen;
            } else {
                imp += c;
                ++n_imp;
            }
        }
    require(n_gen > 0 && n_imp > 0, "holdout_separation: degenerate pair sets");
    return gen / n_gen - imp / n_imp;
}

std::vector<VictimModel> train_toy_victims(const data::Dataset& ds,
                                           const std::vector<nn::EmbedderArch>& archs,
                                           std::uint64_t seed, const TrainConfig& cfg) {
    require(!archs.empty(), "train_toy_victims: no architectures");
    std::vector<int> train_pool, hold_pool;
    split_pools(ds, cfg.holdout_per_identity, train_pool, hold_pool);

    std::vector<VictimModel> out;
    for (size_t ai = 0; ai < archs.size(); ++ai) {
        const auto& arch = archs[ai];
        Rng rng(seed * 0x9e3779b97f4a7c15ull + 0x5151 + ai);

        nn::ParamSet all = nn::embedder_init(arch, rng);
        TensorD head = nn::dense_init(ds.n_identities, arch.embed_dim, rng);
        renormalize_rows(head);
        all.add("head.w", std::move(head));

        nn::SgdMomentum opt;
        opt.lr = cfg.lr;
        opt.momentum = cfg.momentum;
        opt.init(all);
        nn::ParamSet grads = all.zeros_like();

        VictimModel vm;
        vm.arch = arch;

        auto extract = [&](VictimModel& dst) {
            dst.params = nn::ParamSet{};
            for (const auto& [k, v] : all.items)
                if (k != "head.w") dst.params.add(k, v);
        };

        for (int step = 0; step < cfg.max_steps; ++step) {
            ad::Graph<double> g;
            auto b = nn::bind(g, all, true);
            int loss = -1;
            for (int s = 0; s < cfg.batch; ++s) {
                const int img_i = train_pool[rng.randint(train_pool.size())];
                const int y = ds.identity[img_i];
                int e = nn::embedder_forward(g, b, arch, g.constant(TensorD(ds.images[img_i])));
                int cosv = g.matvec(b.id("head.w"), nn::normalize_vec(g, e));
                TensorD mvec(Shape{ds.n_identities});
                mvec[y] = -cfg.scale * cfg.margin;
                int logits = g.add(g.scale(cosv, cfg.scale), g.constant(std::move(mvec)));
                int xe = g.softmax_xent(logits, y);
                loss = loss < 0 ? xe : g.add(loss, xe);
            }
            g.backward(g.scale(loss, 1.0 / cfg.batch));
            nn::collect_grads(g, b, grads);
            require(grads.finite(), "train_toy_victims: non-finite gradient");
            opt.step(all, grads);
            renormalize_rows(all.at("head.w"));

            if ((step + 1) % cfg.eval_every == 0 || step + 1 == cfg.max_steps) {
                extract(vm);
                vm.separation = holdout_separation(vm, ds, cfg.holdout_per_identity);
                if (vm.separation >= cfg.stop_separation) break;
            }
        }
        if (vm.params.size() == 0) {
            extract(vm);
            vm.separation = holdout_separation(vm, ds, cfg.holdout_per_identity);
        }
        out.push_back(std::move(vm));
    }
    return out;
}

// ---------------------------------------------------------------------------
// registry
// ---------------------------------------------------------------------------

namespace {

io::json arch_to_json(const nn::EmbedderArch& a) {
    io::json j;
    j["name"] = a.name;
    j["input_size"] = a.input_size;
    j["embed_dim"] = a.embed_dim;
    j["lrelu"] = a.lrelu;
    j["norm_shift"] = a.norm_shift;
    j["norm_scale"] = a.norm_scale;
    io::json convs = io::json::array();
    for (const auto& c : a.convs) convs.push_back({c.out_c, c.k, c.stride, c.pad});
    j["convs"] = convs;
    return j;
}

nn::EmbedderArch arch_from_json(const io::json& j) {
    nn::EmbedderArch a;
    a.name = j.at("name").get<std::string>();
    a.input_size = j.at("input_size").get<int>();
    a.embed_dim = j.at("embed_dim").get<int>();
    a.lrelu = j.at("lrelu").get<double>();
    a.norm_shift = j.at("norm_shift").get<std::vector<double>>();
    a.norm_scale = j.at("norm_scale").get<std::vector<double>>();
    for (const auto& c : j.at("convs"))
        a.convs.push_back({c.at(0).get<int>(), c.at(1).get<int>(), c.at(2).get<int>(),
                           c.at(3).get<int>()});
    return a;
}

} // namespace

void save_victims(const std::string& dir, const std::vector<VictimModel>& victims) {
    io::ensure_dir(dir);
    io::json manifest;
    manifest["victims"] = io::json::array();
    for (const auto& vm : victims) {
        const std::string archive = vm.arch.name + ".victim";
        io::json meta;
        meta["arch"] = arch_to_json(vm.arch);
        meta["tau"] = vm.tau;
        meta["reference_tau"] = vm.reference_tau;
        meta["separation"] = vm.separation;
        io::save_archive(dir + "/" + archive, vm.params, meta);
        manifest["victims"].push_back({{"name", vm.arch.name},
                                       {"archive", archive},
                                       {"tau", vm.tau},
                                       {"reference_tau", vm.reference_tau},
                                       {"separation", vm.separation}});
    }
    io::save_json(dir + "/victims.json", manifest);
}

std::vector<VictimModel> load_victims(const std::string& dir) {
    require(io::file_exists(dir + "/victims.json"),
            "load_victims: missing " + dir + "/victims.json");
    const io::json manifest = io::load_json(dir + "/victims.json");
    std::vector<VictimModel> out;
    for (const auto& row : manifest.at("victims")) {
        const std::string path = dir + "/" + row.at("archive").get<std::string>();
        require(io::file_exists(path), "load_victims: missing archive " + path);
        auto [params, meta] = io::load_archive(path);
        VictimModel vm;
        vm.arch = arch_from_json(meta.at("arch"));
        vm.params = std::move(params);
        vm.tau = meta.at("tau").get<double>();
        vm.reference_tau = meta.at("reference_tau").get<double>();
        vm.separation = meta.at("separation").get<double>();
        out.push_back(std::move(vm));
    }
    return out;
}

} // namespace advmk::victims
