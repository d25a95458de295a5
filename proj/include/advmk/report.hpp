#pragma once

#include "advmk/pipeline.hpp"

#include <string>
#include <vector>

namespace advmk::rep {

// Stage outputs live under a fixed layout inside the run directory:
//   data/            synthetic corpus
//   victims/         recognizer registry + calibration
//   attack/<mode>/   generator training artifacts
//   adv/<label>/     adversarial probe images per method
//   eval/            score tables, summary, sweep curves
//   report.csv/json  final comparison grid
std::string data_dir(const std::string& out_root);
std::string victims_dir(const std::string& out_root);
std::string attack_dir(const std::string& out_root, const std::string& mode);
std::string adv_dir(const std::string& out_root, const std::string& label);
std::string eval_dir(const std::string& out_root);

/// 8-bit round-trip identical to writing and re-reading a PNG; applied to the
/// clean references so probe and reference pass through the same quantizer.
TensorD quantize8(const TensorD& img);

/// Deterministic probe/gallery split: the first n_sources plain images and
/// the first image of each of the first n_targets makeup identities.
struct Protocol {
    std::vector<int> sources; // workset image indices
    std::vector<int> targets;
};
Protocol eval_protocol(const cfg::ExperimentConfig& c, const pipe::Workset& ws);

/// Cross-identity cosine scores over plain-identity images (the impostor
/// distribution the decision threshold is calibrated on).
std::vector<double> impostor_scores(const pipe::Workset& ws, const victims::VictimModel& vm);

/// Calibrate every victim's tau at the configured FAR, attach the published
/// reference operating points as metadata, rewrite the registry, and drop
/// calibration.csv next to it.
void calibrate_stage(const cfg::ExperimentConfig& c, const pipe::Workset& ws,
                     std::vector<victims::VictimModel>& victims, const std::string& out_root);

/// Produce adversarial probes for one method into adv/<label>/. Methods:
/// none | advmakeup (mode picks the trained generator) | fgsm | pgd | mifgsm.
/// Gradient baselines run against the same non-holdout victims the generator
/// trained on, toward the mean normalized gallery embedding.
void attack_stage(const cfg::ExperimentConfig& c, const pipe::Workset& ws,
                  const std::vector<victims::VictimModel>& victims, const std::string& method,
                  const std::string& mode, const std::string& out_root);

/// Score every adv/<label> against every victim, write per-pair score tables,
/// summary.json, and FAR-sweep curves (csv + png per victim).
void eval_stage(const cfg::ExperimentConfig& c, const pipe::Workset& ws,
                const std::vector<victims::VictimModel>& victims, const std::string& out_root);

/// Render report.csv / report.json from the eval artifacts, re-deriving every
/// headline number from the raw score tables and refusing to write on any
/// mismatch. Returns the text table it printed.
std::string report_stage(const cfg::ExperimentConfig& c, const std::string& out_root);

void write_resolved_config(const cfg::ExperimentConfig& c, const std::string& out_root);

} // namespace advmk::rep
