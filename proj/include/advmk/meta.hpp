#pragma once

#include "advmk/nn.hpp"
#include "advmk/rng.hpp"

#include <vector>

namespace advmk::meta {

/// One iteration's model split: every listed train model takes an inner
/// adaptation step, the held-out test model scores the adapted parameters.
struct Split {
    std::vector<int> train;
    int test = -1;
};

Split sample_split(int n_models, Rng& rng);
Split round_robin_split(int n_models, std::int64_t iteration);
void validate_split(const Split& s, int n_models);

/// The task family the optimizer adapts across: one transfer loss per victim
/// model, differentiable in the generator parameters. Implementations own the
/// batch; the engine only sees parameter vectors.
struct Problem {
    virtual ~Problem() = default;
    virtual int n_models() const = 0;
    /// loss value for one model at theta; grad gets the same layout as theta
    virtual double loss_grad(int model, const nn::ParamSet& theta, nn::ParamSet& grad) = 0;
    /// hv = H_model(theta) . v, for the curvature-corrected variant
    virtual void hvp(int model, const nn::ParamSet& theta, const nn::ParamSet& v,
                     nn::ParamSet& hv) = 0;

    /// Per-model losses and gradients at one shared theta; grads[i] pairs with
    /// models[i]. Base version loops over loss_grad; batch problems override
    /// it to reuse one forward pass across the models.
    virtual void loss_grads(const std::vector<int>& models, const nn::ParamSet& theta,
                            std::vector<nn::ParamSet>& grads, std::vector<double>& losses);

    /// Gradient of the summed loss over `models` at theta; returns the sum.
    /// Per-model loss values land in `losses`. Base version loops; batch
    /// problems override it with a single backward pass.
    virtual double sum_loss_grad(const std::vector<int>& models, const nn::ParamSet& theta,
                                 nn::ParamSet& grad, std::vector<double>& losses);
};

struct StepStats {
    double mean_train_loss = 0; // over the split's train models, at theta
    double mean_test_loss = 0;  // test model at the adapted parameters
};

/// Fine-grained adaptation pass. For each train model i:
///   theta_i' = theta - alpha1 * grad T_i(theta)
///   test model scored at theta_i'
/// Accumulates the *unweighted* objective gradient
///   sum_i grad[ T_i(theta) + T_test(theta_i') ]
/// into `attack_grad` (zeroed first). With `second_order` the test-model
/// term carries its curvature correction g_te - alpha1 * H_i(theta) g_te;
/// otherwise the adapted gradient is used as-is.
StepStats fine_grained_step(Problem& prob, const Split& split, const nn::ParamSet& theta,
                            double alpha1, bool second_order, nn::ParamSet& attack_grad);

/// Joint-average baseline: no inner step, no held-out scoring. Accumulates
/// sum_i grad T_i(theta) over the same train list into `attack_grad`.
StepStats joint_step(Problem& prob, const std::vector<int>& train_models,
                     const nn::ParamSet& theta, nn::ParamSet& attack_grad);

} // namespace advmk::meta
