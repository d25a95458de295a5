#pragma once

#include "advmk/baselines.hpp"
#include "advmk/dataset.hpp"
#include "advmk/nn.hpp"
#include "advmk/victims.hpp"

#include <json.hpp>

#include <string>

namespace advmk::cfg {

struct PatchWindow {
    int top = 16, left = 0, height = 32, width = 64;
    double mask_margin = -1; // <0: proportional default from eye distance
};

struct VictimsCfg {
    std::vector<std::string> archs{"toyA", "toyB", "toyC", "toyD"};
    victims::TrainConfig train;
    double far = 0.01;
};

struct AttackCfg {
    int iterations = 2000;
    int batch = 4;
    double alpha1 = 1.0, alpha2 = 1.0;
    double beta1 = 0.1, beta2 = 0.1, beta3 = 0.1;
    bool second_order = false;
    std::string split = "uniform"; // or "round_robin"
    double g_lr = 0.001, g_momentum = 0.9;
    double d_lr = 0.001, d_momentum = 0.9;
    int checkpoint_every = 500;
    bool gatys_style_norm = false;
    std::string holdout_victim; // by name; empty trains on every victim
};

struct EvalCfg {
    int n_sources = 100;
    int n_targets = 10;
};

struct ExperimentConfig {
    std::uint64_t seed = 1;
    data::SyntheticFaceSpec data;
    int align_size = 64;
    PatchWindow patch;
    VictimsCfg victims;
    int generator_width = 16;
    int discriminator_width = 16;
    nn::ExtractorSpec extractor; // alpha/beta default to uniform 1/P
    AttackCfg attack;
    baselines::Config baselines;
    EvalCfg eval;
};

/// Strict parse: unknown keys anywhere are an error, all fields optional with
/// the defaults above. Empty json gives the default config.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);

/// Fully-resolved round-trip (every field explicit).
nlohmann::json config_to_json(const ExperimentConfig& c);

} // namespace advmk::cfg
