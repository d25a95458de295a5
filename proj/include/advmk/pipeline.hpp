#pragma once

#include "advmk/config.hpp"
#include "advmk/dataset.hpp"
#include "advmk/meta.hpp"
#include "advmk/victims.hpp"

#include <memory>
#include <string>
#include <vector>

namespace advmk::pipe {

/// Everything downstream of alignment works on this: images warped to the
/// canonical template, per-image orbital masks re-situated in the fixed patch
/// window, and the source/makeup index split.
struct Workset {
    data::Dataset ds;                    // aligned images and landmarks
    std::vector<geo::OrbitalMask> masks; // per image; bbox == patch window
    std::vector<int> sources;            // plain-identity image indices
    std::vector<int> makeup;             // makeup-identity image indices
};

Workset build_workset(const cfg::ExperimentConfig& c, const data::Dataset& raw);

/// target_embs[victim][image]: embeddings of aligned images, cached once.
using EmbedCache = std::vector<std::vector<TensorD>>;
EmbedCache embed_all(const std::vector<victims::VictimModel>& vs, const data::Dataset& aligned);

struct BatchItem {
    int source; // workset image index (plain identity)
    int target; // workset image index (makeup identity)
};

/// The transfer-loss family the adaptation engine runs over: one victim per
/// model index, mean impersonation loss over the current batch, differentiable
/// in the generator parameters.
///
/// Because the patch window is fixed, every batch has the same graph shape, so
/// the problem keeps one tape per victim plus one tape spanning all victims
/// and re-runs them with fresh leaves instead of rebuilding. The batched
/// entry points share a single generator forward across victims; curvature
/// products replay a throwaway graph in dual arithmetic.
class AttackBatchProblem : public meta::Problem {
public:
    AttackBatchProblem(const Workset& ws, const std::vector<const victims::VictimModel*>& models,
                       const EmbedCache& target_embs, std::vector<BatchItem> batch);
    ~AttackBatchProblem() override;

    /// Swap the batch the losses average over. Tapes are refreshed lazily on
    /// the next evaluation; a size change rebuilds them.
    void set_batch(std::vector<BatchItem> batch);

    int n_models() const override { return (int)models_.size(); }
    double loss_grad(int model, const nn::ParamSet& theta, nn::ParamSet& grad) override;
    void loss_grads(const std::vector<int>& models, const nn::ParamSet& theta,
                    std::vector<nn::ParamSet>& grads, std::vector<double>& losses) override;
    double sum_loss_grad(const std::vector<int>& models, const nn::ParamSet& theta,
                         nn::ParamSet& grad, std::vector<double>& losses) override;
    void hvp(int model, const nn::ParamSet& theta, const nn::ParamSet& v,
             nn::ParamSet& hv) override;

private:
    struct Tape;
    void check_items(const std::vector<BatchItem>& batch) const;
    std::unique_ptr<Tape> build_tape(const std::vector<int>& models,
                                     const nn::ParamSet& theta) const;
    /// Push pending batch leaves, then re-run the tape at theta.
    void run_tape(Tape& t, const nn::ParamSet& theta);

    const Workset& ws_;
    std::vector<const victims::VictimModel*> models_;
    const EmbedCache& embs_;
    std::vector<BatchItem> batch_;
    std::vector<std::unique_ptr<Tape>> single_; // [model], lazily built
    std::unique_ptr<Tape> merged_;              // all models, lazily built
};

struct TrainArtifacts {
    nn::ParamSet gen, dis;
    int iterations = 0;
};

/// Full attack-training loop (discriminator step first, then the generator
/// update). Writes generator.ckpt / discriminator.ckpt / history.csv under
/// out_dir, plus periodic ckpt_<iter> archives. `mode` is "meta" or
/// "ensemble".
TrainArtifacts train_attack(const cfg::ExperimentConfig& c, const Workset& ws,
                            const std::vector<victims::VictimModel>& train_victims,
                            const std::string& mode, const std::string& out_dir);

/// Run the trained generator on one aligned image: crop the window, generate,
/// composite under the mask. Pixels with mask==0 stay bit-for-bit.
TensorD apply_generator(const nn::ParamSet& gen, const TensorD& aligned_img,
                        const geo::OrbitalMask& m);

} // namespace advmk::pipe
