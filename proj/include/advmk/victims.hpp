#pragma once

#include "advmk/dataset.hpp"
#include "advmk/nn.hpp"

#include <string>
#include <vector>

namespace advmk::victims {

struct VictimModel {
    nn::EmbedderArch arch;
    nn::ParamSet params;
    double tau = 0.0;           // FAR-calibrated decision threshold
    double reference_tau = 0.0; // published full-scale operating point, 0 = none
    double separation = 0.0;    // holdout genuine-impostor cosine gap at train end
};

/// Host-side embedding of a [0,1] image; no gradients involved.
TensorD embed_image(const VictimModel& vm, const TensorD& img);

/// Cosine similarity of two embeddings. Zero-norm vectors are an error.
double cosine_sim(const TensorD& u, const TensorD& v);

struct TrainConfig {
    int max_steps = 600;
    int batch = 12;
    double lr = 0.02;
    double momentum = 0.9;
    double margin = 0.2; // additive cosine margin at the true class
    double scale = 12.0; // logit scale
    int eval_every = 25;
    double stop_separation = 0.35;
    int holdout_per_identity = 2; // last images of each identity, never trained on
};

/// Train one recognizer per architecture on the identity-classification task.
/// Margin-penalized cosine softmax over unit class directions; training stops
/// early once the holdout genuine/impostor cosine gap clears the target.
std::vector<VictimModel> train_toy_victims(const data::Dataset& ds,
                                           const std::vector<nn::EmbedderArch>& archs,
                                           std::uint64_t seed, const TrainConfig& cfg);

/// Genuine-impostor mean-cosine gap over the dataset's holdout images.
double holdout_separation(const VictimModel& vm, const data::Dataset& ds,
                          int holdout_per_identity);

// Registry on disk: a manifest JSON naming one parameter archive per victim.
void save_victims(const std::string& dir, const std::vector<VictimModel>& victims);
std::vector<VictimModel> load_victims(const std::string& dir);

} // namespace advmk::victims
