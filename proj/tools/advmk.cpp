// Flat subcommand CLI over the library stages. Artifacts land under --out,
// logs go to stderr; every command rewrites its outputs deterministically for
// a given config+seed and fails with a one-line error naming any missing
// prerequisite.
#include "advmk/config.hpp"
#include "advmk/io.hpp"
#include "advmk/pipeline.hpp"
#include "advmk/report.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <string>

using namespace advmk;

namespace {

struct Shared {
    std::string config;
    std::string out = "out";
    unsigned long long seed = 0;
    std::string mode = "meta";
    std::string method = "advmakeup";
};

void add_common(CLI::App* sub, Shared& x) {
    sub->add_option("--config", x.config, "experiment config JSON (defaults when omitted)");
    sub->add_option("--seed", x.seed, "override the config seed");
    sub->add_option("--out", x.out, "run directory for all artifacts")->capture_default_str();
}

cfg::ExperimentConfig resolve(const CLI::App* sub, const Shared& x) {
    cfg::ExperimentConfig c =
        x.config.empty() ? cfg::ExperimentConfig{} : cfg::load_config(x.config);
    if (sub->count("--seed")) c.seed = (std::uint64_t)x.seed;
    return c;
}

void need(const std::string& path, const std::string& producer) {
    require(io::file_exists(path),
            "missing artifact " + path + " (produce it with: " + producer + ")");
}

data::Dataset load_data(const Shared& x) {
    need(rep::data_dir(x.out) + "/dataset.json", "synth");
    return data::load_dataset(rep::data_dir(x.out));
}

std::vector<victims::VictimModel> load_registry(const Shared& x) {
    need(rep::victims_dir(x.out) + "/victims.json", "train-victims");
    return victims::load_victims(rep::victims_dir(x.out));
}

std::vector<nn::EmbedderArch> archs_from_names(const std::vector<std::string>& names) {
    const auto presets = nn::embedder_presets();
    std::vector<nn::EmbedderArch> out;
    for (const auto& n : names) {
        bool hit = false;
        for (const auto& p : presets)
            if (p.name == n) {
                out.push_back(p);
                hit = true;
                break;
            }
        require(hit, "unknown victim architecture '" + n + "'");
    }
    return out;
}

std::vector<victims::VictimModel> drop_holdout(const cfg::ExperimentConfig& c,
                                               const std::vector<victims::VictimModel>& all) {
    std::vector<victims::VictimModel> out;
    bool found = c.attack.holdout_victim.empty();
    for (const auto& vm : all) {
        if (vm.arch.name == c.attack.holdout_victim) {
            found = true;
            continue;
        }
        out.push_back(vm);
    }
    require(found, "holdout victim '" + c.attack.holdout_victim + "' is not in the registry");
    return out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"patch-constrained makeup attack toolkit"};
    app.require_subcommand(1);
    Shared x;

    auto* c_synth = app.add_subcommand("synth", "render the synthetic face corpus");
    auto* c_tv = app.add_subcommand("train-victims", "train the toy recognizer registry");
    auto* c_cal = app.add_subcommand("calibrate", "set each victim's decision threshold at FAR");
    auto* c_ta = app.add_subcommand("train-attack", "train the makeup patch generator");
    auto* c_atk = app.add_subcommand("attack", "write adversarial probe images for one method");
    auto* c_eval = app.add_subcommand("eval", "score every probe set against every victim");
    auto* c_rep = app.add_subcommand("report", "render the comparison table from eval artifacts");
    for (auto* sub : {c_synth, c_tv, c_cal, c_ta, c_atk, c_eval, c_rep}) add_common(sub, x);
    c_ta->add_option("--mode", x.mode, "meta | ensemble")->capture_default_str();
    c_atk->add_option("--mode", x.mode, "generator flavor for --method advmakeup")
        ->capture_default_str();
    c_atk->add_option("--method", x.method, "advmakeup | fgsm | pgd | mifgsm | none")
        ->capture_default_str();

    CLI11_PARSE(app, argc, argv);
    CLI::App* sub = app.get_subcommands().front();

    try {
        const cfg::ExperimentConfig c = resolve(sub, x);
        rep::write_resolved_config(c, x.out);

        if (sub == c_synth) {
            const data::Dataset ds = data::synth_dataset(c.data, c.seed);
            data::save_dataset(rep::data_dir(x.out), ds);
            std::fprintf(stderr, "synth: %zu images, %d identities -> %s\n", ds.size(),
                         ds.n_identities, rep::data_dir(x.out).c_str());
        } else if (sub == c_tv) {
            const data::Dataset ds = load_data(x);
            const auto archs = archs_from_names(c.victims.archs);
            const auto victims = victims::train_toy_victims(ds, archs, c.seed, c.victims.train);
            victims::save_victims(rep::victims_dir(x.out), victims);
            for (const auto& vm : victims)
                std::fprintf(stderr, "train-victims: %s holdout separation %.3f\n",
                             vm.arch.name.c_str(), vm.separation);
        } else if (sub == c_cal) {
            const data::Dataset ds = load_data(x);
            auto victims = load_registry(x);
            const pipe::Workset ws = pipe::build_workset(c, ds);
            rep::calibrate_stage(c, ws, victims, x.out);
            for (const auto& vm : victims)
                std::fprintf(stderr, "calibrate: %s tau=%.6f (FAR %g)\n", vm.arch.name.c_str(),
                             vm.tau, c.victims.far);
        } else if (sub == c_ta) {
            require(x.mode == "meta" || x.mode == "ensemble", "--mode must be meta or ensemble");
            const data::Dataset ds = load_data(x);
            const auto victims = load_registry(x);
            const pipe::Workset ws = pipe::build_workset(c, ds);
            const auto train = drop_holdout(c, victims);
            pipe::train_attack(c, ws, train, x.mode, rep::attack_dir(x.out, x.mode));
            std::fprintf(stderr, "train-attack: checkpoint in %s\n",
                         rep::attack_dir(x.out, x.mode).c_str());
        } else if (sub == c_atk) {
            const data::Dataset ds = load_data(x);
            const auto victims = load_registry(x);
            const pipe::Workset ws = pipe::build_workset(c, ds);
            rep::attack_stage(c, ws, victims, x.method, x.mode, x.out);
        } else if (sub == c_eval) {
            const data::Dataset ds = load_data(x);
            const auto victims = load_registry(x);
            const pipe::Workset ws = pipe::build_workset(c, ds);
            rep::eval_stage(c, ws, victims, x.out);
        } else if (sub == c_rep) {
            const std::string txt = rep::report_stage(c, x.out);
            std::fputs(txt.c_str(), stdout);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
