#pragma once

#include "advmk/victims.hpp"

#include <vector>

namespace advmk::baselines {

struct Config {
    double eps = 8.0 / 255.0;
    int steps = 10;
    double step = 2.0 / 255.0;
    double mu = 1.0;
};

/// Gradient of the mean impersonation loss 1 - cos(target, F(x)) over the
/// listed victims, w.r.t. the image.
TensorD image_grad(const std::vector<const victims::VictimModel*>& models,
                   const std::vector<TensorD>& target_embs, const TensorD& img);

// All three attacks maximize target similarity inside the mask only; pixels
// where mask == 0 are returned bit-for-bit unchanged. Perturbations live in
// the eps-ball around `source` intersected with [0,1].

TensorD fgsm(const std::vector<const victims::VictimModel*>& models,
             const std::vector<TensorD>& target_embs, const TensorD& source,
             const Tensor<std::uint8_t>& mask, double eps);

TensorD pgd(const std::vector<const victims::VictimModel*>& models,
            const std::vector<TensorD>& target_embs, const TensorD& source,
            const Tensor<std::uint8_t>& mask, double eps, int steps, double step);

TensorD mifgsm(const std::vector<const victims::VictimModel*>& models,
               const std::vector<TensorD>& target_embs, const TensorD& source,
               const Tensor<std::uint8_t>& mask, double eps, int steps, double step, double mu);

} // namespace advmk::baselines
