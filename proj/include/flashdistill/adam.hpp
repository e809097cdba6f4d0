#pragma once

#include <vector>

#include "flashdistill/tensor.hpp"

namespace flashdistill {

struct AdamHyper {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Moment buffers are aligned index-for-index with the parameter list they
// were initialized from.
struct AdamState {
    AdamHyper hyper;
    long step_count = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;

    static AdamState init(const std::vector<Tensor*>& params, AdamHyper hyper);
};

// Standard bias-corrected Adam update. `grads` must carry one buffer per
// parameter, shape-matched; a missing or mis-sized entry is an error.
void adam_step(const std::vector<Tensor*>& params, const std::vector<std::vector<double>>& grads,
               AdamState& state);

}  // namespace flashdistill
