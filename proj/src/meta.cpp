#include "advmk/meta.hpp"

#include <algorithm>

namespace advmk::meta {

Split sample_split(int n_models, Rng& rng) {
    require(n_models >= 2, "sample_split: need at least 2 models");
    Split s;
    s.test = (int)rng.randint((std::uint64_t)n_models);
    for (int i = 0; i < n_models; ++i)
        if (i != s.test) s.train.push_back(i);
    return s;
}

Split round_robin_split(int n_models, std::int64_t iteration) {
    require(n_models >= 2, "round_robin_split: need at least 2 models");
    Split s;
    s.test = (int)(iteration % n_models);
    for (int i = 0; i < n_models; ++i)
        if (i != s.test) s.train.push_back(i);
    return s;
}

void validate_split(const Split& s, int n_models) {
    require(s.test >= 0 && s.test < n_models, "split: test model out of range");
    require(!s.train.empty(), "split: no train models");
    std::vector<int> seen(n_models, 0);
    for (int i : s.train) {
        require(i >= 0 && i < n_models, "split: train model out of range");
        require(i != s.test, "split: test model also listed for training");
        require(!seen[i]++, "split: duplicate train model");
    }
}

void Problem::loss_grads(const std::vector<int>& models, const nn::ParamSet& theta,
                         std::vector<nn::ParamSet>& grads, std::vector<double>& losses) {
    require(grads.size() == models.size(), "loss_grads: grads/models size mismatch");
    losses.resize(models.size());
    for (size_t i = 0; i < models.size(); ++i)
        losses[i] = loss_grad(models[i], theta, grads[i]);
}

double Problem::sum_loss_grad(const std::vector<int>& models, const nn::ParamSet& theta,
                              nn::ParamSet& grad, std::vector<double>& losses) {
    require(!models.empty(), "sum_loss_grad: no models");
    losses.resize(models.size());
    for (auto& [k, v] : grad.items) v.fill(0.0);
    nn::ParamSet g = theta.zeros_like();
    double total = 0;
    for (size_t i = 0; i < models.size(); ++i) {
        losses[i] = loss_grad(models[i], theta, g);
        total += losses[i];
        nn::axpy(grad, 1.0, g);
    }
    return total;
}

StepStats fine_grained_step(Problem& prob, const Split& split, const nn::ParamSet& theta,
                            double alpha1, bool second_order, nn::ParamSet& attack_grad) {
    validate_split(split, prob.n_models());
    for (auto& [k, v] : attack_grad.items) v.fill(0.0);

    StepStats st;
    std::vector<nn::ParamSet> g_trs(split.train.size(), theta.zeros_like());
    std::vector<double> tr_losses;
    prob.loss_grads(split.train, theta, g_trs, tr_losses);

    nn::ParamSet g_te = theta.zeros_like();
    for (size_t i = 0; i < split.train.size(); ++i) {
        const nn::ParamSet& g_tr = g_trs[i];
        st.mean_train_loss += tr_losses[i];
        require(g_tr.finite(), "fine_grained_step: non-finite train gradient");
        nn::axpy(attack_grad, 1.0, g_tr);

        nn::ParamSet adapted = theta;
        nn::axpy(adapted, -alpha1, g_tr);

        st.mean_test_loss += prob.loss_grad(split.test, adapted, g_te);
        require(g_te.finite(), "fine_grained_step: non-finite test gradient");
        if (second_order && alpha1 != 0.0) {
            // d/dtheta T_te(theta - a1 g_tr(theta)) = (I - a1 H_tr) g_te
            nn::ParamSet hv = theta.zeros_like();
            prob.hvp(split.train[i], theta, g_te, hv);
            require(hv.finite(), "fine_grained_step: non-finite curvature term");
            nn::axpy(attack_grad, 1.0, g_te);
            nn::axpy(attack_grad, -alpha1, hv);
        } else {
            nn::axpy(attack_grad, 1.0, g_te);
        }
    }
    st.mean_train_loss /= (double)split.train.size();
    st.mean_test_loss /= (double)split.train.size();
    return st;
}

StepStats joint_step(Problem& prob, const std::vector<int>& train_models,
                     const nn::ParamSet& theta, nn::ParamSet& attack_grad) {
    require(!train_models.empty(), "joint_step: no train models");
    for (int mi : train_models)
        require(mi >= 0 && mi < prob.n_models(), "joint_step: model out of range");
    StepStats st;
    std::vector<double> losses;
    st.mean_train_loss = prob.sum_loss_grad(train_models, theta, attack_grad, losses);
    require(attack_grad.finite(), "joint_step: non-finite gradient");
    st.mean_train_loss /= (double)train_models.size();
    return st;
}

} // namespace advmk::meta
