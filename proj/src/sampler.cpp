#include "flashdistill/sampler.hpp"

#include <cmath>
#include <string>

#include "flashdistill/error.hpp"
#include "flashdistill/rng.hpp"

namespace flashdistill {

Tensor cfg_eps(const EpsSource& model, const Tensor& x, int t, std::span<const int> cond,
               double w) {
    if (w == 1.0) return model.eps(x, t, cond);
    std::vector<int> null_cond(x.rows(), model.null_class());
    Tensor uncond = model.eps(x, t, null_cond);
    if (w == 0.0) return uncond;
    Tensor c = model.eps(x, t, cond);
    // uncond + w * (cond - uncond); this form keeps the result exactly equal
    // to uncond when the two branches coincide.
    Tensor out = uncond;
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = uncond.data[i] + w * (c.data[i] - uncond.data[i]);
    return out;
}

void validate_step_set(std::span<const int> step_set, int T) {
    if (step_set.empty()) throw Error("step set: empty");
    if (step_set.front() != T - 1)
        throw Error("step set: must start at " + std::to_string(T - 1) + ", got " +
                    std::to_string(step_set.front()));
    for (std::size_t i = 0; i < step_set.size(); ++i) {
        if (step_set[i] < 0 || step_set[i] > T - 1)
            throw Error("step set: timestep " + std::to_string(step_set[i]) + " outside grid");
        if (i > 0 && step_set[i] >= step_set[i - 1])
            throw Error("step set: not strictly descending");
    }
}

SampleRun sample(const EpsSource& model, const NoiseSchedule& sched, const SamplerConfig& cfg,
                 std::span<const int> labels, int sample_dim) {
    validate_step_set(cfg.step_set, sched.T);
    std::size_t n = labels.size();
    if (n == 0) throw Error("sample: no labels given");

    Rng rng = Rng(cfg.seed).fork(0x73616d70);
    Tensor x = Tensor::gaussian({n, std::size_t(sample_dim)}, rng);
    const Tensor x_init = x;

    SampleRun run;
    for (std::size_t i = 0; i < cfg.step_set.size(); ++i) {
        int t = cfg.step_set[i];
        int t_next = (i + 1 < cfg.step_set.size()) ? cfg.step_set[i + 1] : 0;
        Tensor eps_hat = cfg_eps(model, x, t, labels, cfg.cfg_weight);
        Tensor x0 = x0_hat(x, eps_hat, t, sched);
        const Tensor& tail = (i == 0 && cfg.noise_correction) ? x_init : eps_hat;
        x = scale_add(sched.a(t_next), x0, sched.s(t_next), tail);
        run.latents.push_back(x);
    }
    run.samples = x;
    return run;
}

std::vector<int> balanced_labels(int n_classes, std::size_t n) {
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = int(i % std::size_t(n_classes));
    return labels;
}

std::vector<int> uniform_step_set(int T, int n_steps) {
    if (n_steps < 1 || n_steps > T) throw Error("uniform_step_set: bad step count");
    std::vector<int> out;
    out.reserve(std::size_t(n_steps));
    for (int i = 0; i < n_steps; ++i) {
        int t = int(std::lround(double(T - 1) * (1.0 - double(i) / n_steps)));
        if (out.empty() || t < out.back()) out.push_back(t);
    }
    return out;
}

std::vector<int> snr_step_set(const NoiseSchedule& sched, int n_steps) {
    if (n_steps < 1 || n_steps > sched.T) throw Error("snr_step_set: bad step count");
    int top = sched.T - 1;
    std::vector<int> out{top};
    if (n_steps == 1) return out;
    // Equal ratios in alpha from the top index down to the last grid point
    // before 0, greedy on the integer grid.
    double a_top = sched.a(top);
    double a_end = sched.a(std::max(1, sched.T / 25));
    double ratio = std::pow(a_end / a_top, 1.0 / double(n_steps - 1));
    int t = top;
    for (int k = 1; k < n_steps; ++k) {
        double target = a_top * std::pow(ratio, double(k));
        int next = t - 1;
        while (next > 1 && sched.a(next) < target) --next;
        if (next >= t) next = t - 1;
        if (next < 1) next = 1;
        out.push_back(next);
        t = next;
        if (t == 1) break;
    }
    return out;
}

}  // namespace flashdistill
