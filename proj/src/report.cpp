#include "advmk/report.hpp"
#include "advmk/baselines.hpp"
#include "advmk/evalkit.hpp"
#include "advmk/io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

namespace advmk::rep {

namespace fs = std::filesystem;
using io::json;

std::string data_dir(const std::string& r) { return r + "/data"; }
std::string victims_dir(const std::string& r) { return r + "/victims"; }
std::string attack_dir(const std::string& r, const std::string& mode) {
    return r + "/attack/" + mode;
}
std::string adv_dir(const std::string& r, const std::string& label) { return r + "/adv/" + label; }
std::string eval_dir(const std::string& r) { return r + "/eval"; }

TensorD quantize8(const TensorD& img) {
    TensorD out(img.shape);
    for (std::int64_t i = 0; i < img.size(); ++i) {
        const double v = img[i] < 0 ? 0 : (img[i] > 1 ? 1 : img[i]);
        out[i] = (double)std::lround(v * 255.0) / 255.0;
    }
    return out;
}

Protocol eval_protocol(const cfg::ExperimentConfig& c, const pipe::Workset& ws) {
    Protocol p;
    require((int)ws.sources.size() >= c.eval.n_sources,
            "eval protocol: dataset has " + std::to_string(ws.sources.size()) +
                " plain images, config asks for " + std::to_string(c.eval.n_sources));
    p.sources.assign(ws.sources.begin(), ws.sources.begin() + c.eval.n_sources);
    int found = 0;
    for (int ident = ws.ds.makeup_from; ident < ws.ds.n_identities && found < c.eval.n_targets;
         ++ident) {
        const auto idx = ws.ds.indices_of(ident);
        if (idx.empty()) continue;
        p.targets.push_back(idx[0]);
        ++found;
    }
    require(found == c.eval.n_targets,
            "eval protocol: only " + std::to_string(found) + " makeup identities, need " +
                std::to_string(c.eval.n_targets));
    return p;
}

std::vector<double> impostor_scores(const pipe::Workset& ws, const victims::VictimModel& vm) {
    std::vector<TensorD> embs;
    for (int i : ws.sources) embs.push_back(victims::embed_image(vm, ws.ds.images[i]));
    std::vector<double> out;
    for (size_t a = 0; a < ws.sources.size(); ++a)
        for (size_t b = a + 1; b < ws.sources.size(); ++b)
            if (ws.ds.identity[ws.sources[a]] != ws.ds.identity[ws.sources[b]])
                out.push_back(victims::cosine_sim(embs[a], embs[b]));
    require(!out.empty(), "impostor_scores: no cross-identity plain pairs");
    return out;
}

void calibrate_stage(const cfg::ExperimentConfig& c, const pipe::Workset& ws,
                     std::vector<victims::VictimModel>& victims, const std::string& out_root) {
    const auto& refs = eval::reference_thresholds();
    io::ensure_dir(victims_dir(out_root));
    io::CsvWriter csv(victims_dir(out_root) + "/calibration.csv");
    csv.row({"victim", "far", "tau", "n_impostor", "mean_impostor", "mean_genuine",
             "reference_name", "reference_tau"});
    for (size_t v = 0; v < victims.size(); ++v) {
        auto& vm = victims[v];
        const std::vector<double> imp = impostor_scores(ws, vm);
        vm.tau = eval::calibrate_threshold(imp, c.victims.far);
        vm.reference_tau = refs[v % refs.size()].tau;

        // genuine distribution over the same plain population, for the record
        std::vector<TensorD> embs;
        for (int i : ws.sources) embs.push_back(victims::embed_image(vm, ws.ds.images[i]));
        double gen = 0;
        std::int64_t n_gen = 0;
        for (size_t a = 0; a < ws.sources.size(); ++a)
            for (size_t b = a + 1; b < ws.sources.size(); ++b)
                if (ws.ds.identity[ws.sources[a]] == ws.ds.identity[ws.sources[b]]) {
                    gen += victims::cosine_sim(embs[a], embs[b]);
                    ++n_gen;
                }
        double imp_mean = 0;
        for (double s : imp) imp_mean += s;
        imp_mean /= (double)imp.size();
        csv.row({vm.arch.name, io::CsvWriter::num(c.victims.far), io::CsvWriter::num(vm.tau),
                 io::CsvWriter::num((double)imp.size()), io::CsvWriter::num(imp_mean),
                 io::CsvWriter::num(n_gen ? gen / (double)n_gen : 0.0),
                 refs[v % refs.size()].name, io::CsvWriter::num(vm.reference_tau)});
    }
    victims::save_victims(victims_dir(out_root), victims);
}

namespace {

std::vector<const victims::VictimModel*> non_holdout(
    const cfg::ExperimentConfig& c, const std::vector<victims::VictimModel>& victims) {
    std::vector<const victims::VictimModel*> out;
    bool found = c.attack.holdout_victim.empty();
    for (const auto& vm : victims) {
        if (vm.arch.name == c.attack.holdout_victim) {
            found = true;
            continue;
        }
        out.push_back(&vm);
    }
    require(found, "holdout victim '" + c.attack.holdout_victim + "' is not in the registry");
    require(!out.empty(), "all victims held out, nothing to attack");
    return out;
}

/// Mean of unit target embeddings: the class direction the target-agnostic
/// baselines steer toward.
TensorD gallery_prototype(const victims::VictimModel& vm, const pipe::Workset& ws,
                          const std::vector<int>& targets) {
    TensorD proto(Shape{vm.arch.embed_dim});
    for (int t : targets) {
        TensorD e = victims::embed_image(vm, ws.ds.images[t]);
        double n = 0;
        for (std::int64_t i = 0; i < e.size(); ++i) n += e[i] * e[i];
        require(n > 0, "gallery_prototype: zero-norm target embedding");
        const double inv = 1.0 / std::sqrt(n);
        for (std::int64_t i = 0; i < e.size(); ++i) proto[i] += inv * e[i];
    }
    for (std::int64_t i = 0; i < proto.size(); ++i) proto[i] /= (double)targets.size();
    return proto;
}

} // namespace

void attack_stage(const cfg::ExperimentConfig& c, const pipe::Workset& ws,
                  const std::vector<victims::VictimModel>& victims, const std::string& method,
                  const std::string& mode, const std::string& out_root) {
    const std::set<std::string> known{"none", "advmakeup", "fgsm", "pgd", "mifgsm"};
    require(known.count(method), "attack: unknown method '" + method + "'");
    const std::string label = method == "advmakeup" ? "advmakeup_" + mode : method;
    const Protocol proto = eval_protocol(c, ws);

    nn::ParamSet gen;
    if (method == "advmakeup") {
        require(mode == "meta" || mode == "ensemble", "attack: --mode must be meta or ensemble");
        const std::string ckpt = attack_dir(out_root, mode) + "/generator.ckpt";
        require(io::file_exists(ckpt), "attack: missing artifact " + ckpt +
                                           " (produce it with: train-attack --mode " + mode + ")");
        auto [params, meta] = io::load_archive(ckpt);
        gen = std::move(params);
        require(meta.at("align_size").get<int>() == c.align_size &&
                    meta.at("patch").at("height").get<int>() == c.patch.height &&
                    meta.at("patch").at("width").get<int>() == c.patch.width,
                "attack: generator checkpoint was trained under a different geometry; re-run "
                "train-attack");
    }

    std::vector<const victims::VictimModel*> train_models;
    std::vector<TensorD> protos;
    if (method == "fgsm" || method == "pgd" || method == "mifgsm") {
        train_models = non_holdout(c, victims);
        for (const auto* vm : train_models)
            protos.push_back(gallery_prototype(*vm, ws, proto.targets));
    }

    const std::string dir = adv_dir(out_root, label);
    io::ensure_dir(dir);
    const auto& B = c.baselines;
    for (int s : proto.sources) {
        const TensorD& src = ws.ds.images[s];
        const geo::OrbitalMask& m = ws.masks[s];
        TensorD adv;
        if (method == "none") {
            adv = src;
        } else if (method == "advmakeup") {
            adv = pipe::apply_generator(gen, src, m);
        } else {
            const Tensor<std::uint8_t> mask = m.expanded();
            if (method == "fgsm") {
                adv = baselines::fgsm(train_models, protos, src, mask, B.eps);
            } else if (method == "pgd") {
                adv = baselines::pgd(train_models, protos, src, mask, B.eps, B.steps, B.step);
            } else {
                adv = baselines::mifgsm(train_models, protos, src, mask, B.eps, B.steps, B.step,
                                        B.mu);
            }
        }
        io::png_write(dir + "/" + ws.ds.ids[s] + ".png", adv);
    }

    json manifest;
    manifest["label"] = label;
    manifest["method"] = method;
    if (method == "advmakeup") manifest["mode"] = mode;
    json src_ids = json::array(), tgt_ids = json::array();
    for (int s : proto.sources) src_ids.push_back(ws.ds.ids[s]);
    for (int t : proto.targets) tgt_ids.push_back(ws.ds.ids[t]);
    manifest["sources"] = src_ids;
    manifest["targets"] = tgt_ids;
    io::save_json(dir + "/manifest.json", manifest);
    std::fprintf(stderr, "  wrote %zu probes to %s\n", proto.sources.size(), dir.c_str());
}

namespace {

struct ScoreTable {
    // row-major over (source, target), matching the written CSV order
    std::vector<double> scores;
    double asr_at(double tau) const { return eval::asr(scores, tau); }
    double mean() const {
        double s = 0;
        for (double v : scores) s += v;
        return s / (double)scores.size();
    }
};

ScoreTable score_probe_set(const victims::VictimModel& vm, const std::vector<TensorD>& probes,
                           const std::vector<TensorD>& gallery) {
    ScoreTable t;
    for (const auto& p : probes) {
        const TensorD e = victims::embed_image(vm, p);
        for (const auto& g : gallery) t.scores.push_back(victims::cosine_sim(e, g));
    }
    return t;
}

void write_scores_csv(const std::string& path, const pipe::Workset& ws, const Protocol& proto,
                      const ScoreTable& t) {
    io::CsvWriter csv(path);
    csv.row({"source_id", "target_id", "score"});
    size_t k = 0;
    for (int s : proto.sources)
        for (int tg : proto.targets)
            csv.row({ws.ds.ids[s], ws.ds.ids[tg], io::CsvWriter::num(t.scores[k++])});
}

} // namespace

void eval_stage(const cfg::ExperimentConfig& c, const pipe::Workset& ws,
                const std::vector<victims::VictimModel>& victims, const std::string& out_root) {
    require(io::file_exists(victims_dir(out_root) + "/calibration.csv"),
            "eval: thresholds not calibrated yet (run calibrate first)");
    const Protocol proto = eval_protocol(c, ws);
    const std::string edir = eval_dir(out_root);
    io::ensure_dir(edir);

    // discover probe sets
    std::vector<std::string> labels;
    if (fs::exists(adv_dir(out_root, ""))) {
        for (const auto& ent : fs::directory_iterator(out_root + "/adv"))
            if (ent.is_directory() && io::file_exists(ent.path().string() + "/manifest.json"))
                labels.push_back(ent.path().filename().string());
    }
    std::sort(labels.begin(), labels.end());
    require(!labels.empty(), "eval: no probe sets under " + out_root + "/adv (run attack first)");

    // load probes, validating manifests against the current protocol
    std::vector<std::vector<TensorD>> probes(labels.size());
    for (size_t li = 0; li < labels.size(); ++li) {
        const std::string dir = adv_dir(out_root, labels[li]);
        const json m = io::load_json(dir + "/manifest.json");
        require((int)m.at("sources").size() == (int)proto.sources.size(),
                "eval: probe set '" + labels[li] + "' does not match the protocol; re-run attack");
        for (size_t k = 0; k < proto.sources.size(); ++k) {
            const std::string id = ws.ds.ids[proto.sources[k]];
            require(m.at("sources")[k].get<std::string>() == id,
                    "eval: probe set '" + labels[li] + "' is stale; re-run attack");
            probes[li].push_back(io::png_read(dir + "/" + id + ".png"));
        }
    }

    json summary;
    summary["far"] = c.victims.far;
    summary["protocol"] = {{"n_sources", (int)proto.sources.size()},
                           {"n_targets", (int)proto.targets.size()}};
    summary["victims"] = json::array();
    summary["clean"] = json::object();
    summary["methods"] = json::object();
    for (const auto& l : labels) summary["methods"][l] = json::object();

    const std::vector<double> fars{0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1};

    for (const auto& vm : victims) {
        summary["victims"].push_back({{"name", vm.arch.name},
                                      {"tau", vm.tau},
                                      {"reference_tau", vm.reference_tau},
                                      {"separation", vm.separation},
                                      {"holdout", vm.arch.name == c.attack.holdout_victim}});
        std::vector<TensorD> gallery;
        for (int t : proto.targets) gallery.push_back(victims::embed_image(vm, ws.ds.images[t]));

        std::vector<TensorD> clean_probes;
        for (int s : proto.sources) clean_probes.push_back(quantize8(ws.ds.images[s]));
        const ScoreTable clean = score_probe_set(vm, clean_probes, gallery);
        write_scores_csv(edir + "/scores_clean_" + vm.arch.name + ".csv", ws, proto, clean);
        summary["clean"][vm.arch.name] = {{"asr", clean.asr_at(vm.tau)}, {"mean_cos", clean.mean()}};

        std::vector<ScoreTable> tables;
        for (size_t li = 0; li < labels.size(); ++li) {
            ScoreTable t = score_probe_set(vm, probes[li], gallery);
            write_scores_csv(edir + "/scores_" + labels[li] + "_" + vm.arch.name + ".csv", ws,
                             proto, t);
            double delta = 0;
            for (size_t k = 0; k < t.scores.size(); ++k) delta += t.scores[k] - clean.scores[k];
            summary["methods"][labels[li]][vm.arch.name] = {
                {"asr", t.asr_at(vm.tau)},
                {"mean_cos", t.mean()},
                {"mean_delta_cos", delta / (double)t.scores.size()}};
            tables.push_back(std::move(t));
        }

        // threshold sweep: recalibrate tau per FAR on the impostor scores,
        // score every probe set at each operating point
        const std::vector<double> imp = impostor_scores(ws, vm);
        io::CsvWriter sweep(edir + "/sweep_" + vm.arch.name + ".csv");
        std::vector<std::string> head{"far", "tau", "clean"};
        for (const auto& l : labels) head.push_back(l);
        sweep.row(head);
        std::vector<eval::SeriesSpec> series;
        const double palette[6][3] = {{0.15, 0.35, 0.8}, {0.85, 0.3, 0.2},  {0.2, 0.65, 0.3},
                                      {0.7, 0.5, 0.1},   {0.55, 0.25, 0.7}, {0.1, 0.6, 0.65}};
        series.push_back({"clean", {}, {}, {0.4, 0.4, 0.4}});
        for (size_t li = 0; li < labels.size(); ++li) {
            eval::SeriesSpec sp;
            sp.label = labels[li];
            const double* col = palette[li % 6];
            sp.rgb[0] = col[0];
            sp.rgb[1] = col[1];
            sp.rgb[2] = col[2];
            series.push_back(sp);
        }
        for (double far : fars) {
            const double tau = eval::calibrate_threshold(imp, far);
            std::vector<std::string> row{io::CsvWriter::num(far), io::CsvWriter::num(tau),
                                         io::CsvWriter::num(clean.asr_at(tau))};
            series[0].x.push_back(far);
            series[0].y.push_back(clean.asr_at(tau));
            for (size_t li = 0; li < labels.size(); ++li) {
                const double a = tables[li].asr_at(tau);
                row.push_back(io::CsvWriter::num(a));
                series[li + 1].x.push_back(far);
                series[li + 1].y.push_back(a);
            }
            sweep.row(row);
        }
        eval::plot_series_png(edir + "/sweep_" + vm.arch.name + ".png", series, "FAR", "ASR");
    }
    io::save_json(edir + "/summary.json", summary);
    std::fprintf(stderr, "  eval artifacts in %s\n", edir.c_str());
}

std::string report_stage(const cfg::ExperimentConfig& c, const std::string& out_root) {
    const std::string edir = eval_dir(out_root);
    require(io::file_exists(edir + "/summary.json"), "report: missing " + edir +
                                                         "/summary.json (run eval first)");
    const json summary = io::load_json(edir + "/summary.json");

    std::vector<std::string> vic_names;
    for (const auto& v : summary.at("victims")) vic_names.push_back(v.at("name"));
    std::vector<std::string> labels;
    for (auto it = summary.at("methods").begin(); it != summary.at("methods").end(); ++it)
        labels.push_back(it.key());

    // Re-derive every headline number from the raw score tables; any drift
    // between artifacts means something was regenerated inconsistently.
    auto recompute = [&](const std::string& csv_name, double tau, double& asr_out,
                         double& mean_out) {
        const auto rows = io::csv_read(edir + "/" + csv_name);
        require(rows.size() > 1, "report: empty score table " + csv_name);
        std::vector<double> scores;
        for (size_t r = 1; r < rows.size(); ++r) scores.push_back(std::stod(rows[r].at(2)));
        asr_out = eval::asr(scores, tau);
        double s = 0;
        for (double v : scores) s += v;
        mean_out = s / (double)scores.size();
    };
    for (size_t vi = 0; vi < vic_names.size(); ++vi) {
        const double tau = summary.at("victims")[vi].at("tau").get<double>();
        double a, m;
        recompute("scores_clean_" + vic_names[vi] + ".csv", tau, a, m);
        require(a == summary.at("clean").at(vic_names[vi]).at("asr").get<double>() &&
                    m == summary.at("clean").at(vic_names[vi]).at("mean_cos").get<double>(),
                "report: clean scores disagree with summary for " + vic_names[vi]);
        for (const auto& l : labels) {
            recompute("scores_" + l + "_" + vic_names[vi] + ".csv", tau, a, m);
            const auto& cell = summary.at("methods").at(l).at(vic_names[vi]);
            require(a == cell.at("asr").get<double>() && m == cell.at("mean_cos").get<double>(),
                    "report: " + l + " scores disagree with summary for " + vic_names[vi]);
        }
    }

    // table text
    std::string txt;
    char buf[256];
    std::snprintf(buf, sizeof buf, "ASR %% at FAR=%g (impersonation)\n",
                  summary.at("far").get<double>());
    txt += buf;
    txt += "  method            ";
    for (size_t vi = 0; vi < vic_names.size(); ++vi) {
        const bool ho = summary.at("victims")[vi].at("holdout").get<bool>();
        std::snprintf(buf, sizeof buf, "%10s%s", vic_names[vi].c_str(), ho ? "*" : " ");
        txt += buf;
    }
    txt += "\n";
    auto row_txt = [&](const std::string& name, const json& cells, const char* key) {
        std::snprintf(buf, sizeof buf, "  %-18s", name.c_str());
        txt += buf;
        for (const auto& vn : vic_names) {
            std::snprintf(buf, sizeof buf, "%10.2f ", cells.at(vn).at(key).get<double>());
            txt += buf;
        }
        txt += "\n";
    };
    row_txt("clean", summary.at("clean"), "asr");
    for (const auto& l : labels) row_txt(l, summary.at("methods").at(l), "asr");
    txt += "  (*) holdout victim, excluded from attack training\n";

    // csv + json artifacts
    io::CsvWriter csv(out_root + "/report.csv");
    std::vector<std::string> head{"metric", "method"};
    for (const auto& v : vic_names) head.push_back(v);
    csv.row(head);
    auto emit = [&](const std::string& metric, const std::string& method, const json& cells,
                    const char* key) {
        std::vector<std::string> row{metric, method};
        for (const auto& vn : vic_names)
            row.push_back(io::CsvWriter::num(cells.at(vn).at(key).get<double>()));
        csv.row(row);
    };
    emit("asr", "clean", summary.at("clean"), "asr");
    for (const auto& l : labels) emit("asr", l, summary.at("methods").at(l), "asr");
    for (const auto& l : labels)
        emit("mean_delta_cos", l, summary.at("methods").at(l), "mean_delta_cos");
    {
        std::vector<std::string> row{"holdout",
                                     c.attack.holdout_victim.empty() ? "none"
                                                                     : c.attack.holdout_victim};
        for (size_t i = 0; i < vic_names.size(); ++i) row.push_back("");
        csv.row(row);
        for (const auto& rp : eval::reference_thresholds()) {
            std::vector<std::string> rrow{"reference_operating_point", rp.name,
                                          io::CsvWriter::num(rp.tau)};
            for (size_t i = 1; i < vic_names.size(); ++i) rrow.push_back("");
            csv.row(rrow);
        }
    }
    json rj;
    rj["summary"] = summary;
    rj["holdout"] = c.attack.holdout_victim;
    rj["reference_operating_points"] = json::array();
    for (const auto& rp : eval::reference_thresholds())
        rj["reference_operating_points"].push_back({{"name", rp.name}, {"tau", rp.tau}});
    io::save_json(out_root + "/report.json", rj);
    return txt;
}

void write_resolved_config(const cfg::ExperimentConfig& c, const std::string& out_root) {
    io::ensure_dir(out_root);
    io::save_json(out_root + "/config.resolved.json", cfg::config_to_json(c));
}

} // namespace advmk::rep
