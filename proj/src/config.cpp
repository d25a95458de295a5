#include "advmk/config.hpp"
#include "advmk/io.hpp"

#include <set>

namespace advmk::cfg {

using nlohmann::json;

namespace {

/// Pulls known keys out of an object and rejects the rest, so config typos
/// fail loudly instead of silently running defaults.
struct Section {
    const json& j;
    std::string where;
    std::set<std::string> known;

    Section(const json& j_, std::string where_) : j(j_), where(std::move(where_)) {
        require(j.is_object(), "config: " + where + " must be an object");
    }
    ~Section() = default;

    void done() const {
        for (auto it = j.begin(); it != j.end(); ++it)
            require(known.count(it.key()), "config: unknown key '" + it.key() + "' in " + where);
    }
    bool has(const std::string& k) {
        known.insert(k);
        return j.contains(k);
    }
    template <class T>
    void get(const std::string& k, T& dst) {
        if (has(k)) {
            try {
                dst = j.at(k).get<T>();
            } catch (const json::exception&) {
                throw Error("config: bad value for '" + k + "' in " + where);
            }
        }
    }
};

} // namespace

ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig c;
    Section root(j, "top level");
    root.get("seed", c.seed);
    root.get("align_size", c.align_size);
    root.get("generator_width", c.generator_width);
    root.get("discriminator_width", c.discriminator_width);

    if (root.has("data")) {
        Section s(j.at("data"), "data");
        s.get("n_identities", c.data.n_identities);
        s.get("images_per_identity", c.data.images_per_identity);
        s.get("image_size", c.data.image_size);
        s.get("makeup_fraction", c.data.makeup_fraction);
        s.get("illum_lo", c.data.illum_lo);
        s.get("illum_hi", c.data.illum_hi);
        s.get("max_rot_deg", c.data.max_rot_deg);
        s.get("pixel_noise", c.data.pixel_noise);
        s.done();
    }
    if (root.has("patch")) {
        Section s(j.at("patch"), "patch");
        s.get("top", c.patch.top);
        s.get("left", c.patch.left);
        s.get("height", c.patch.height);
        s.get("width", c.patch.width);
        s.get("mask_margin", c.patch.mask_margin);
        s.done();
    }
    if (root.has("victims")) {
        Section s(j.at("victims"), "victims");
        s.get("archs", c.victims.archs);
        s.get("far", c.victims.far);
        if (s.has("train")) {
            Section t(j.at("victims").at("train"), "victims.train");
            t.get("max_steps", c.victims.train.max_steps);
            t.get("batch", c.victims.train.batch);
            t.get("lr", c.victims.train.lr);
            t.get("momentum", c.victims.train.momentum);
            t.get("margin", c.victims.train.margin);
            t.get("scale", c.victims.train.scale);
            t.get("eval_every", c.victims.train.eval_every);
            t.get("stop_separation", c.victims.train.stop_separation);
            t.get("holdout_per_identity", c.victims.train.holdout_per_identity);
            t.done();
        }
        s.done();
    }
    if (root.has("extractor")) {
        Section s(j.at("extractor"), "extractor");
        s.get("input_size", c.extractor.input_size);
        s.get("allow_resize", c.extractor.allow_resize);
        s.get("widths", c.extractor.widths);
        s.get("alpha", c.extractor.alpha);
        s.get("beta", c.extractor.beta);
        s.done();
    }
    if (root.has("attack")) {
        Section s(j.at("attack"), "attack");
        s.get("iterations", c.attack.iterations);
        s.get("batch", c.attack.batch);
        s.get("alpha1", c.attack.alpha1);
        s.get("alpha2", c.attack.alpha2);
        s.get("beta1", c.attack.beta1);
        s.get("beta2", c.attack.beta2);
        s.get("beta3", c.attack.beta3);
        s.get("second_order", c.attack.second_order);
        s.get("split", c.attack.split);
        s.get("g_lr", c.attack.g_lr);
        s.get("g_momentum", c.attack.g_momentum);
        s.get("d_lr", c.attack.d_lr);
        s.get("d_momentum", c.attack.d_momentum);
        s.get("checkpoint_every", c.attack.checkpoint_every);
        s.get("gatys_style_norm", c.attack.gatys_style_norm);
        s.get("holdout_victim", c.attack.holdout_victim);
        s.done();
    }
    if (root.has("baselines")) {
        Section s(j.at("baselines"), "baselines");
        s.get("eps", c.baselines.eps);
        s.get("steps", c.baselines.steps);
        s.get("step", c.baselines.step);
        s.get("mu", c.baselines.mu);
        s.done();
    }
    if (root.has("eval")) {
        Section s(j.at("eval"), "eval");
        s.get("n_sources", c.eval.n_sources);
        s.get("n_targets", c.eval.n_targets);
        s.done();
    }
    root.done();

    // uniform layer weights unless the config names them
    const size_t p = c.extractor.widths.size();
    require(p > 0, "config: extractor needs at least one layer");
    if (c.extractor.alpha.empty()) c.extractor.alpha.assign(p, 1.0 / (double)p);
    if (c.extractor.beta.empty()) c.extractor.beta.assign(p, 1.0 / (double)p);
    require(c.extractor.alpha.size() == p && c.extractor.beta.size() == p,
            "config: extractor alpha/beta must match layer count");
    require(c.attack.split == "uniform" || c.attack.split == "round_robin",
            "config: attack.split must be 'uniform' or 'round_robin'");
    require(c.attack.iterations >= 1 && c.attack.batch >= 1, "config: bad attack sizes");
    require(c.patch.height >= 4 && c.patch.width >= 4, "config: patch window too small");
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    require(io::file_exists(path), "config file not found: " + path);
    return config_from_json(io::load_json(path));
}

json config_to_json(const ExperimentConfig& c) {
    json j;
    j["seed"] = c.seed;
    j["align_size"] = c.align_size;
    j["generator_width"] = c.generator_width;
    j["discriminator_width"] = c.discriminator_width;
    j["data"] = {{"n_identities", c.data.n_identities},
                 {"images_per_identity", c.data.images_per_identity},
                 {"image_size", c.data.image_size},
                 {"makeup_fraction", c.data.makeup_fraction},
                 {"illum_lo", c.data.illum_lo},
                 {"illum_hi", c.data.illum_hi},
                 {"max_rot_deg", c.data.max_rot_deg},
                 {"pixel_noise", c.data.pixel_noise}};
    j["patch"] = {{"top", c.patch.top},
                  {"left", c.patch.left},
                  {"height", c.patch.height},
                  {"width", c.patch.width},
                  {"mask_margin", c.patch.mask_margin}};
    j["victims"] = {{"archs", c.victims.archs},
                    {"far", c.victims.far},
                    {"train",
                     {{"max_steps", c.victims.train.max_steps},
                      {"batch", c.victims.train.batch},
                      {"lr", c.victims.train.lr},
                      {"momentum", c.victims.train.momentum},
                      {"margin", c.victims.train.margin},
                      {"scale", c.victims.train.scale},
                      {"eval_every", c.victims.train.eval_every},
                      {"stop_separation", c.victims.train.stop_separation},
                      {"holdout_per_identity", c.victims.train.holdout_per_identity}}}};
    j["extractor"] = {{"input_size", c.extractor.input_size},
                      {"allow_resize", c.extractor.allow_resize},
                      {"widths", c.extractor.widths},
                      {"alpha", c.extractor.alpha},
                      {"beta", c.extractor.beta}};
    j["attack"] = {{"iterations", c.attack.iterations},
                   {"batch", c.attack.batch},
                   {"alpha1", c.attack.alpha1},
                   {"alpha2", c.attack.alpha2},
                   {"beta1", c.attack.beta1},
                   {"beta2", c.attack.beta2},
                   {"beta3", c.attack.beta3},
                   {"second_order", c.attack.second_order},
                   {"split", c.attack.split},
                   {"g_lr", c.attack.g_lr},
                   {"g_momentum", c.attack.g_momentum},
                   {"d_lr", c.attack.d_lr},
                   {"d_momentum", c.attack.d_momentum},
                   {"checkpoint_every", c.attack.checkpoint_every},
                   {"gatys_style_norm", c.attack.gatys_style_norm},
                   {"holdout_victim", c.attack.holdout_victim}};
    j["baselines"] = {{"eps", c.baselines.eps},
                      {"steps", c.baselines.steps},
                      {"step", c.baselines.step},
                      {"mu", c.baselines.mu}};
    j["eval"] = {{"n_sources", c.eval.n_sources}, {"n_targets", c.eval.n_targets}};
    return j;
}

} // namespace advmk::cfg
