#include "advmk/pipeline.hpp"
#include "advmk/io.hpp"
#include "advmk/losses.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <tuple>

namespace advmk::pipe {

Workset build_workset(const cfg::ExperimentConfig& c, const data::Dataset& raw) {
    require(raw.size() > 0, "build_workset: empty dataset");
    const geo::BBox window{c.patch.top, c.patch.left, c.patch.height, c.patch.width};
    require(window.top >= 0 && window.left >= 0 &&
                window.top + window.height <= c.align_size &&
                window.left + window.width <= c.align_size,
            "build_workset: patch window outside the aligned image");

    const geo::AlignTemplate tpl{data::canonical_landmarks(c.align_size), c.align_size,
                                 c.align_size};
    Workset ws;
    ws.ds.n_identities = raw.n_identities;
    ws.ds.makeup_from = raw.makeup_from;
    for (size_t i = 0; i < raw.size(); ++i) {
        auto [img, lm] = geo::align_face(raw.images[i], raw.lms[i], tpl);
        const double margin =
            c.patch.mask_margin >= 0 ? c.patch.mask_margin : geo::default_margin(lm);
        geo::OrbitalMask m = geo::build_orbital_mask(lm, c.align_size, c.align_size, margin);
        try {
            m = geo::fit_mask_to_window(m, window);
        } catch (const Error& e) {
            throw Error("build_workset: image " + raw.ids[i] + ": " + e.what());
        }
        ws.ds.ids.push_back(raw.ids[i]);
        ws.ds.images.push_back(std::move(img));
        ws.ds.lms.push_back(std::move(lm));
        ws.ds.identity.push_back(raw.identity[i]);
        ws.masks.push_back(std::move(m));
        (raw.is_makeup(raw.identity[i]) ? ws.makeup : ws.sources).push_back((int)i);
    }
    return ws;
}

EmbedCache embed_all(const std::vector<victims::VictimModel>& vs, const data::Dataset& aligned) {
    EmbedCache cache(vs.size());
    for (size_t v = 0; v < vs.size(); ++v) {
        cache[v].reserve(aligned.size());
        for (size_t i = 0; i < aligned.size(); ++i)
            cache[v].push_back(victims::embed_image(vs[v], aligned.images[i]));
    }
    return cache;
}

// ---------------------------------------------------------------------------
// AttackBatchProblem
// ---------------------------------------------------------------------------

/// One re-runnable tape: generator forward per batch slot, then per covered
/// model the mean transfer loss over the slots. Leaves that change between
/// evaluations (crop, source, target embedding, composite mask) are kept by
/// id; victim parameters are baked in as constants since victims never move.
struct AttackBatchProblem::Tape {
    ad::Graph<double> g;
    nn::Bound<double> bg;
    std::vector<int> crops, srcs, comps; // per slot
    std::vector<int> embs;               // [model-major][slot]
    std::vector<int> model_loss;         // per covered model, mean over slots
    int total = -1;                      // sum of model_loss
    std::vector<int> models;             // problem model indices covered
    bool fresh = false;                  // batch values pushed since set_batch
};

AttackBatchProblem::AttackBatchProblem(const Workset& ws,
                                       const std::vector<const victims::VictimModel*>& models,
                                       const EmbedCache& target_embs,
                                       std::vector<BatchItem> batch)
    : ws_(ws), models_(models), embs_(target_embs) {
    require(!models_.empty(), "AttackBatchProblem: no models");
    require(models_.size() == embs_.size(), "AttackBatchProblem: cache/model count mismatch");
    check_items(batch);
    batch_ = std::move(batch);
    single_.resize(models_.size());
}

AttackBatchProblem::~AttackBatchProblem() = default;

void AttackBatchProblem::check_items(const std::vector<BatchItem>& batch) const {
    for (const auto& it : batch) {
        require(it.source >= 0 && it.source < (int)ws_.ds.size(), "bad source index");
        require(it.target >= 0 && it.target < (int)ws_.ds.size(), "bad target index");
    }
}

void AttackBatchProblem::set_batch(std::vector<BatchItem> batch) {
    check_items(batch);
    const bool resized = batch.size() != batch_.size();
    batch_ = std::move(batch);
    if (resized) {
        merged_.reset();
        for (auto& t : single_) t.reset();
    } else {
        if (merged_) merged_->fresh = false;
        for (auto& t : single_)
            if (t) t->fresh = false;
    }
}

std::unique_ptr<AttackBatchProblem::Tape>
AttackBatchProblem::build_tape(const std::vector<int>& models, const nn::ParamSet& theta) const {
    auto t = std::make_unique<Tape>();
    t->models = models;
    auto& g = t->g;
    t->bg = nn::bind(g, theta, true);
    for (const auto& it : batch_) {
        const geo::OrbitalMask& m = ws_.masks[it.source];
        int crop = g.constant(geo::crop_patch(ws_.ds.images[it.source], m.bbox));
        int srcn = g.constant(ws_.ds.images[it.source]);
        int patch = nn::generator_forward(g, t->bg, crop);
        std::vector<std::uint8_t> mv(m.mask.data.begin(), m.mask.data.end());
        t->crops.push_back(crop);
        t->srcs.push_back(srcn);
        t->comps.push_back(g.composite(patch, srcn, m.bbox.top, m.bbox.left, mv));
    }
    for (int mi : t->models) {
        const victims::VictimModel& vm = *models_[mi];
        auto bv = nn::bind(g, vm.params, false);
        int loss = -1;
        for (size_t b = 0; b < batch_.size(); ++b) {
            int e = g.constant(embs_[mi][batch_[b].target]);
            t->embs.push_back(e);
            int tl = losses::attack_loss_node(g, bv, vm.arch, e, t->comps[b]);
            loss = loss < 0 ? tl : g.add(loss, tl);
        }
        t->model_loss.push_back(g.scale(loss, 1.0 / (double)batch_.size()));
    }
    t->total = t->model_loss[0];
    for (size_t i = 1; i < t->model_loss.size(); ++i) t->total = g.add(t->total, t->model_loss[i]);
    t->fresh = true; // constants above came from the current batch
    return t;
}

void AttackBatchProblem::run_tape(Tape& t, const nn::ParamSet& theta) {
    if (!t.fresh) {
        for (size_t b = 0; b < batch_.size(); ++b) {
            const BatchItem& it = batch_[b];
            const geo::OrbitalMask& m = ws_.masks[it.source];
            t.g.set_leaf(t.crops[b], geo::crop_patch(ws_.ds.images[it.source], m.bbox));
            t.g.set_leaf(t.srcs[b], ws_.ds.images[it.source]);
            std::vector<std::uint8_t> mv(m.mask.data.begin(), m.mask.data.end());
            t.g.set_composite_mask(t.comps[b], mv);
        }
        for (size_t i = 0; i < t.models.size(); ++i)
            for (size_t b = 0; b < batch_.size(); ++b)
                t.g.set_leaf(t.embs[i * batch_.size() + b], embs_[t.models[i]][batch_[b].target]);
        t.fresh = true;
    }
    nn::refresh_bound(t.g, t.bg, theta);
    t.g.refresh();
}

double AttackBatchProblem::loss_grad(int model, const nn::ParamSet& theta, nn::ParamSet& grad) {
    require(model >= 0 && model < n_models(), "loss_grad: model out of range");
    require(!batch_.empty(), "loss_grad: empty batch");
    auto& slot = single_[model];
    if (!slot) slot = build_tape({model}, theta);
    run_tape(*slot, theta);
    slot->g.backward(slot->model_loss[0]);
    nn::collect_grads(slot->g, slot->bg, grad);
    return slot->g.val(slot->model_loss[0])[0];
}

void AttackBatchProblem::loss_grads(const std::vector<int>& models, const nn::ParamSet& theta,
                                    std::vector<nn::ParamSet>& grads,
                                    std::vector<double>& losses) {
    require(grads.size() == models.size(), "loss_grads: grads/models size mismatch");
    require(!batch_.empty(), "loss_grads: empty batch");
    std::vector<int> all(models_.size());
    std::iota(all.begin(), all.end(), 0);
    if (!merged_) merged_ = build_tape(all, theta);
    run_tape(*merged_, theta);
    losses.clear();
    for (size_t i = 0; i < models.size(); ++i) {
        const int m = models[i];
        require(m >= 0 && m < n_models(), "loss_grads: model out of range");
        merged_->g.backward(merged_->model_loss[m]);
        nn::collect_grads(merged_->g, merged_->bg, grads[i]);
        losses.push_back(merged_->g.val(merged_->model_loss[m])[0]);
    }
}

double AttackBatchProblem::sum_loss_grad(const std::vector<int>& models,
                                         const nn::ParamSet& theta, nn::ParamSet& grad,
                                         std::vector<double>& losses) {
    require(!models.empty(), "sum_loss_grad: no models");
    require(!batch_.empty(), "sum_loss_grad: empty batch");
    std::vector<int> all(models_.size());
    std::iota(all.begin(), all.end(), 0);
    if (models != all) // subset sums take the generic per-model path
        return meta::Problem::sum_loss_grad(models, theta, grad, losses);
    if (!merged_) merged_ = build_tape(all, theta);
    run_tape(*merged_, theta);
    merged_->g.backward(merged_->total);
    nn::collect_grads(merged_->g, merged_->bg, grad);
    losses.clear();
    for (int m : all) losses.push_back(merged_->g.val(merged_->model_loss[m])[0]);
    return merged_->g.val(merged_->total)[0];
}

namespace {

/// Mean transfer loss node over the batch for one victim, built from scratch.
/// Kept for curvature products, which replay the graph in dual arithmetic.
template <class T>
int batch_loss_node(ad::Graph<T>& g, const nn::Bound<T>& bg, const Workset& ws,
                    const victims::VictimModel& vm, const std::vector<TensorD>& embs,
                    const std::vector<BatchItem>& batch) {
    auto bv = nn::bind(g, vm.params, false);
    int loss = -1;
    for (const auto& it : batch) {
        const TensorD& src = ws.ds.images[it.source];
        const geo::OrbitalMask& m = ws.masks[it.source];
        int crop = g.constant(ad::lift<T>(geo::crop_patch(src, m.bbox)));
        int patch = nn::generator_forward(g, bg, crop);
        std::vector<std::uint8_t> mv(m.mask.data.begin(), m.mask.data.end());
        int comp = g.composite(patch, g.constant(ad::lift<T>(src)), m.bbox.top, m.bbox.left, mv);
        int t = losses::attack_loss_node(g, bv, vm.arch, embs[it.target], comp);
        loss = loss < 0 ? t : g.add(loss, t);
    }
    return g.scale(loss, 1.0 / (double)batch.size());
}

} // namespace

void AttackBatchProblem::hvp(int model, const nn::ParamSet& theta, const nn::ParamSet& v,
                             nn::ParamSet& hv) {
    require(model >= 0 && model < n_models(), "hvp: model out of range");
    require(!batch_.empty(), "hvp: empty batch");
    require(v.size() == theta.size() && hv.size() == theta.size(), "hvp: layout mismatch");
    ad::Graph<Dual> g;
    nn::Bound<Dual> bg;
    for (size_t i = 0; i < theta.items.size(); ++i) {
        const auto& [name, re] = theta.items[i];
        const auto& du = v.items[i].second;
        require(du.size() == re.size(), "hvp: direction shape mismatch");
        Tensor<Dual> t(re.shape);
        for (std::int64_t j = 0; j < re.size(); ++j) t[j] = Dual(re[j], du[j]);
        bg.ids.emplace_back(name, g.input(std::move(t)));
    }
    const int loss = batch_loss_node(g, bg, ws_, *models_[model], embs_[model], batch_);
    g.backward(loss);
    for (size_t i = 0; i < bg.ids.size(); ++i) {
        const auto& gt = g.grad(bg.ids[i].second);
        auto& dst = hv.items[i].second;
        if (gt.size() == 0) {
            dst.fill(0.0);
        } else {
            for (std::int64_t j = 0; j < dst.size(); ++j) dst[j] = gt[j].du;
        }
    }
}

// ---------------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------------

namespace {

/// Per-source constants every tape keeps swapping in: the window crop, the
/// composite mask bytes, the M*/1-M* weights, and the frozen-extractor side
/// of the blending losses (activations, Gram matrices, mask grids per level).
struct SrcConsts {
    TensorD crop, m1, m0;
    std::vector<std::uint8_t> maskvec;
    std::vector<TensorD> acts, grams, grids;
};

} // namespace

TrainArtifacts train_attack(const cfg::ExperimentConfig& c, const Workset& ws,
                            const std::vector<victims::VictimModel>& train_victims,
                            const std::string& mode, const std::string& out_dir) {
    require(mode == "meta" || mode == "ensemble", "train_attack: mode must be meta|ensemble");
    const int L = (int)train_victims.size();
    require(L >= 1, "train_attack: no training victims");
    require(mode != "meta" || L >= 2, "train_attack: the meta mode needs at least 2 victims");
    require(!ws.sources.empty(), "train_attack: no source (plain) images");
    require(!ws.makeup.empty(), "train_attack: no makeup images");
    io::ensure_dir(out_dir);

    const cfg::AttackCfg& A = c.attack;
    constexpr std::uint64_t M = 0x9e3779b97f4a7c15ull;
    Rng rng_init(c.seed * M + 21), rng_batch(c.seed * M + 22), rng_split(c.seed * M + 23);

    nn::ParamSet genP = nn::generator_init(c.generator_width, rng_init);
    nn::ParamSet disP = nn::discriminator_init(c.discriminator_width, rng_init);
    nn::ParamSet fxP = nn::extractor_init(c.extractor, rng_init);

    nn::SgdMomentum g_opt, d_opt;
    g_opt.lr = A.g_lr;
    g_opt.momentum = A.g_momentum;
    d_opt.lr = A.d_lr;
    d_opt.momentum = A.d_momentum;
    g_opt.init(genP);
    d_opt.init(disP);

    std::vector<const victims::VictimModel*> mptr;
    std::vector<std::string> vic_names;
    for (const auto& vm : train_victims) {
        mptr.push_back(&vm);
        vic_names.push_back(vm.arch.name);
    }
    const EmbedCache cache = embed_all(train_victims, ws.ds);

    io::CsvWriter hist(out_dir + "/history.csv");
    hist.row({"iter", "test_model", "train_loss", "test_loss", "gen_loss", "grad_loss",
              "content_loss", "style_loss", "dis_loss"});

    auto checkpoint = [&](const std::string& prefix, int iters_done) {
        io::json meta;
        meta["iterations"] = iters_done;
        meta["mode"] = mode;
        meta["seed"] = c.seed;
        meta["generator_width"] = c.generator_width;
        meta["discriminator_width"] = c.discriminator_width;
        meta["align_size"] = c.align_size;
        meta["patch"] = {{"top", c.patch.top},
                         {"left", c.patch.left},
                         {"height", c.patch.height},
                         {"width", c.patch.width}};
        meta["victims"] = vic_names;
        io::save_archive(out_dir + "/" + prefix + "generator.ckpt", genP, meta);
        io::save_archive(out_dir + "/" + prefix + "discriminator.ckpt", disP, meta);
    };

    // Frozen-extractor probe: level shapes for the blending tape, and per-source
    // activations/Grams as they are first needed.
    ad::Graph<double> pg;
    auto pbf = nn::bind(pg, fxP, false);
    const int pimg = pg.constant(TensorD(Shape{3, c.align_size, c.align_size}));
    const auto pacts = nn::extractor_forward(pg, pbf, c.extractor, pimg);
    std::vector<Shape> lvl_shapes;
    for (int an : pacts) lvl_shapes.push_back(pg.val(an).shape);

    std::vector<std::unique_ptr<SrcConsts>> consts(ws.ds.size());
    auto src_consts = [&](int idx) -> const SrcConsts& {
        auto& slot = consts[idx];
        if (!slot) {
            slot = std::make_unique<SrcConsts>();
            const TensorD& img = ws.ds.images[idx];
            const geo::OrbitalMask& m = ws.masks[idx];
            slot->crop = geo::crop_patch(img, m.bbox);
            std::tie(slot->m1, slot->m0) = losses::mask_weight_pair(m, 3);
            slot->maskvec.assign(m.mask.data.begin(), m.mask.data.end());
            pg.set_leaf(pimg, img);
            pg.refresh();
            const auto mstar = m.expanded();
            for (int an : pacts) {
                TensorD a = pg.val(an);
                const Shape& s = a.shape;
                TensorD flat(Shape{s[0], s[1] * s[2]});
                flat.data = a.data;
                slot->grams.push_back(losses::gram(flat));
                slot->grids.push_back(losses::mask_to_feature_grid(mstar, s[0], s[1], s[2]));
                slot->acts.push_back(std::move(a));
            }
        }
        return *slot;
    };

    // Discriminator tape: generator frozen, scores for generated and real
    // crops, one loss node. Crop leaves start as zero placeholders.
    struct DisTape {
        ad::Graph<double> g;
        nn::Bound<double> bg, bd;
        std::vector<int> fcrop, rcrop;
        int loss = -1;
    } dt;
    {
        dt.bg = nn::bind(dt.g, genP, false);
        dt.bd = nn::bind(dt.g, disP, true);
        const TensorD blank(Shape{3, c.patch.height, c.patch.width});
        std::vector<int> fake, real;
        for (int b = 0; b < A.batch; ++b) {
            dt.fcrop.push_back(dt.g.constant(blank));
            fake.push_back(nn::discriminator_forward(
                dt.g, dt.bd, nn::generator_forward(dt.g, dt.bg, dt.fcrop.back())));
        }
        for (int b = 0; b < A.batch; ++b) {
            dt.rcrop.push_back(dt.g.constant(blank));
            real.push_back(nn::discriminator_forward(dt.g, dt.bd, dt.rcrop.back()));
        }
        dt.loss = losses::dis_loss_node(dt.g, real, fake);
    }

    // Blending tape: realism score plus gradient/content/style terms, with the
    // source-dependent inputs as swappable leaves.
    struct AuxSlot {
        int crop = -1, src = -1, comp = -1, m1 = -1, m0 = -1;
        std::vector<int> asrc, agram, agrid;
    };
    struct AuxTape {
        ad::Graph<double> g;
        nn::Bound<double> bg, bd, bf;
        std::vector<AuxSlot> slots;
        int lgen = -1, lgr = -1, lco = -1, lst = -1, weighted = -1;
    } at;
    {
        auto& g = at.g;
        at.bg = nn::bind(g, genP, true);
        at.bd = nn::bind(g, disP, false);
        at.bf = nn::bind(g, fxP, false);
        const int H = c.align_size, ph = c.patch.height, pw = c.patch.width;
        const std::vector<std::uint8_t> mask0(ph * pw, 0);
        std::vector<int> fake;
        int lgr = -1, lco = -1, lst = -1;
        for (int b = 0; b < A.batch; ++b) {
            AuxSlot s;
            s.crop = g.constant(TensorD(Shape{3, ph, pw}));
            s.src = g.constant(TensorD(Shape{3, H, H}));
            const int patch = nn::generator_forward(g, at.bg, s.crop);
            fake.push_back(nn::discriminator_forward(g, at.bd, patch));
            s.comp = g.composite(patch, s.src, c.patch.top, c.patch.left, mask0);
            const int hc = g.embed(patch, c.patch.top, c.patch.left, H, H);
            s.m1 = g.constant(TensorD(Shape{3, H, H}));
            s.m0 = g.constant(TensorD(Shape{3, H, H}));
            const int a = losses::grad_loss_core(g, s.src, hc, s.comp, s.m1, s.m0);
            for (const Shape& ls : lvl_shapes) {
                s.asrc.push_back(g.constant(TensorD(ls)));
                s.agram.push_back(g.constant(TensorD(Shape{ls[0], ls[0]})));
                s.agrid.push_back(g.constant(TensorD(ls)));
            }
            auto [cn, sn] = losses::content_style_core(g, at.bf, c.extractor, s.comp, s.asrc,
                                                       s.agram, s.agrid, A.gatys_style_norm);
            lgr = lgr < 0 ? a : g.add(lgr, a);
            lco = lco < 0 ? cn : g.add(lco, cn);
            lst = lst < 0 ? sn : g.add(lst, sn);
            at.slots.push_back(std::move(s));
        }
        const double invb = 1.0 / (double)A.batch;
        at.lgen = losses::gen_loss_node(g, fake);
        at.lgr = g.scale(lgr, invb);
        at.lco = g.scale(lco, invb);
        at.lst = g.scale(lst, invb);
        at.weighted = g.add(g.add(g.scale(at.lgen, A.alpha2), g.scale(at.lgr, A.beta1)),
                            g.add(g.scale(at.lco, A.beta2), g.scale(at.lst, A.beta3)));
    }

    AttackBatchProblem prob(ws, mptr, cache, {});

    nn::ParamSet attack_grad = genP.zeros_like();
    nn::ParamSet aux_grad = genP.zeros_like();
    nn::ParamSet total = genP.zeros_like();
    nn::ParamSet d_grad = disP.zeros_like();

    const int report_every = A.iterations >= 20 ? A.iterations / 10 : A.iterations;

    for (int t = 0; t < A.iterations; ++t) {
        std::vector<BatchItem> batch;
        std::vector<int> reals;
        for (int b = 0; b < A.batch; ++b) {
            batch.push_back({ws.sources[rng_batch.randint(ws.sources.size())],
                             ws.makeup[rng_batch.randint(ws.makeup.size())]});
            reals.push_back((int)ws.makeup[rng_batch.randint(ws.makeup.size())]);
        }

        // discriminator first, once per iteration, generator frozen
        double v_dis;
        auto _t0 = std::chrono::steady_clock::now();
        {
            auto& g = dt.g;
            for (int b = 0; b < A.batch; ++b) {
                g.set_leaf(dt.fcrop[b], src_consts(batch[b].source).crop);
                g.set_leaf(dt.rcrop[b],
                           geo::crop_patch(ws.ds.images[reals[b]], ws.masks[reals[b]].bbox));
            }
            nn::refresh_bound(g, dt.bg, genP);
            nn::refresh_bound(g, dt.bd, disP);
            g.refresh();
            g.backward(dt.loss);
            nn::collect_grads(g, dt.bd, d_grad);
            require(d_grad.finite(), "train_attack: non-finite discriminator gradient");
            d_opt.step(disP, d_grad);
            v_dis = g.val(dt.loss)[0];
        }

        auto _t1 = std::chrono::steady_clock::now();
        // transfer objective gradient
        prob.set_batch(batch);
        meta::StepStats st;
        int test_model = -1;
        if (mode == "meta") {
            const meta::Split split = A.split == "uniform" ? meta::sample_split(L, rng_split)
                                                           : meta::round_robin_split(L, t);
            test_model = split.test;
            st = meta::fine_grained_step(prob, split, genP, A.alpha1, A.second_order, attack_grad);
        } else {
            std::vector<int> all(L);
            std::iota(all.begin(), all.end(), 0);
            st = meta::joint_step(prob, all, genP, attack_grad);
        }

        auto _t2 = std::chrono::steady_clock::now();
        // realism and blending terms at the current parameters
        double v_gen, v_grad, v_cont, v_sty;
        {
            auto& g = at.g;
            for (int b = 0; b < A.batch; ++b) {
                const SrcConsts& sc = src_consts(batch[b].source);
                AuxSlot& s = at.slots[b];
                g.set_leaf(s.crop, sc.crop);
                g.set_leaf(s.src, ws.ds.images[batch[b].source]);
                g.set_composite_mask(s.comp, sc.maskvec);
                g.set_leaf(s.m1, sc.m1);
                g.set_leaf(s.m0, sc.m0);
                for (size_t p = 0; p < sc.acts.size(); ++p) {
                    g.set_leaf(s.asrc[p], sc.acts[p]);
                    g.set_leaf(s.agram[p], sc.grams[p]);
                    g.set_leaf(s.agrid[p], sc.grids[p]);
                }
            }
            nn::refresh_bound(g, at.bg, genP);
            nn::refresh_bound(g, at.bd, disP);
            g.refresh();
            g.backward(at.weighted);
            nn::collect_grads(g, at.bg, aux_grad);
            require(aux_grad.finite(), "train_attack: non-finite blending gradient");
            v_gen = g.val(at.lgen)[0];
            v_grad = g.val(at.lgr)[0];
            v_cont = g.val(at.lco)[0];
            v_sty = g.val(at.lst)[0];
        }

        auto _t3 = std::chrono::steady_clock::now();
        if (t < 6) std::fprintf(stderr, "PROF dis=%.1fms attack=%.1fms aux=%.1fms\n", std::chrono::duration<double,std::milli>(_t1-_t0).count(), std::chrono::duration<double,std::milli>(_t2-_t1).count(), std::chrono::duration<double,std::milli>(_t3-_t2).count());
        for (auto& [k, v] : total.items) v.fill(0.0);
        nn::axpy(total, A.alpha1, attack_grad);
        nn::axpy(total, 1.0, aux_grad);
        g_opt.step(genP, total);
        if (!genP.finite()) {
            checkpoint("diverged_", t + 1);
            throw Error("train_attack: parameters diverged at iteration " + std::to_string(t + 1) +
                        "; state written to " + out_dir);
        }

        hist.row({io::CsvWriter::num(t + 1), io::CsvWriter::num(test_model),
                  io::CsvWriter::num(st.mean_train_loss), io::CsvWriter::num(st.mean_test_loss),
                  io::CsvWriter::num(v_gen), io::CsvWriter::num(v_grad), io::CsvWriter::num(v_cont),
                  io::CsvWriter::num(v_sty), io::CsvWriter::num(v_dis)});

        if ((t + 1) % report_every == 0 || t + 1 == A.iterations)
            std::fprintf(stderr, "  [%s] iter %d/%d  transfer %.4f/%.4f  gen %.4f  blend %.4f/%.4f/%.4f\n",
                        mode.c_str(), t + 1, A.iterations, st.mean_train_loss, st.mean_test_loss,
                        v_gen, v_grad, v_cont, v_sty);
        if (A.checkpoint_every > 0 && (t + 1) % A.checkpoint_every == 0 && t + 1 < A.iterations)
            checkpoint("ckpt_" + std::to_string(t + 1) + "_", t + 1);
    }
    checkpoint("", A.iterations);
    return {std::move(genP), std::move(disP), A.iterations};
}

TensorD apply_generator(const nn::ParamSet& gen, const TensorD& aligned_img,
                        const geo::OrbitalMask& m) {
    ad::Graph<double> g;
    auto bg = nn::bind(g, gen, false);
    const int crop = g.constant(geo::crop_patch(aligned_img, m.bbox));
    const int patch = nn::generator_forward(g, bg, crop);
    return geo::composite(aligned_img, g.val(patch), m);
}

} // namespace advmk::pipe
