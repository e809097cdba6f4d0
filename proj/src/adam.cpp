#include "flashdistill/adam.hpp"

#include <cmath>
#include <string>

#include "flashdistill/error.hpp"

namespace flashdistill {

AdamState AdamState::init(const std::vector<Tensor*>& params, AdamHyper hyper) {
    AdamState s;
    s.hyper = hyper;
    s.m.reserve(params.size());
    s.v.reserve(params.size());
    for (const Tensor* p : params) {
        s.m.emplace_back(p->size(), 0.0);
        s.v.emplace_back(p->size(), 0.0);
    }
    return s;
}

void adam_step(const std::vector<Tensor*>& params, const std::vector<std::vector<double>>& grads,
               AdamState& state) {
    if (params.size() != state.m.size())
        throw Error("adam_step: state initialized for " + std::to_string(state.m.size()) +
                    " parameters, got " + std::to_string(params.size()));
    if (grads.size() != params.size())
        throw Error("adam_step: missing gradient entries: " + std::to_string(grads.size()) +
                    " of " + std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (grads[i].size() != params[i]->size())
            throw Error("adam_step: gradient " + std::to_string(i) + " has " +
                        std::to_string(grads[i].size()) + " elements, parameter has " +
                        std::to_string(params[i]->size()));
    }

    state.step_count += 1;
    const AdamHyper& h = state.hyper;
    double bc1 = 1.0 - std::pow(h.beta1, double(state.step_count));
    double bc2 = 1.0 - std::pow(h.beta2, double(state.step_count));
    for (std::size_t i = 0; i < params.size(); ++i) {
        std::vector<double>& m = state.m[i];
        std::vector<double>& v = state.v[i];
        std::vector<double>& p = params[i]->data;
        const std::vector<double>& g = grads[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = h.beta1 * m[j] + (1.0 - h.beta1) * g[j];
            v[j] = h.beta2 * v[j] + (1.0 - h.beta2) * g[j] * g[j];
            double m_hat = m[j] / bc1;
            double v_hat = v[j] / bc2;
            p[j] -= h.lr * m_hat / (std::sqrt(v_hat) + h.eps);
        }
    }
}

}  // namespace flashdistill
