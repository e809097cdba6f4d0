#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "flashdistill/models.hpp"
#include "flashdistill/schedule.hpp"
#include "flashdistill/tensor.hpp"

namespace flashdistill {

// Noise predictor seen by samplers and rollouts: the trained MLPs implement
// it, and tests swap in closed-form predictors.
struct EpsSource {
    virtual ~EpsSource() = default;
    virtual Tensor eps(const Tensor& x, int t, std::span<const int> cond) const = 0;
    virtual int null_class() const = 0;
};

struct ModelEpsSource final : EpsSource {
    const EpsModel* model;
    explicit ModelEpsSource(const EpsModel& m) : model(&m) {}
    Tensor eps(const Tensor& x, int t, std::span<const int> cond) const override {
        std::vector<int> ts(x.rows(), t);
        return model->eval(x, ts, cond);
    }
    int null_class() const override { return model->null_class(); }
};

// eps_uncond + w * (eps_cond - eps_uncond); w==1 and w==0 short-circuit to a
// single evaluation.
Tensor cfg_eps(const EpsSource& model, const Tensor& x, int t, std::span<const int> cond,
               double w);

struct SamplerConfig {
    std::vector<int> step_set;  // strictly descending, front == T-1; implicit final target 0
    double cfg_weight = 1.0;
    bool noise_correction = true;
    std::uint64_t seed = 0;
};

void validate_step_set(std::span<const int> step_set, int T);

struct SampleRun {
    Tensor samples;               // final x0
    std::vector<Tensor> latents;  // x after each update, final included
};

// Deterministic DDIM sampling from seeded Gaussian noise. With
// noise_correction the first update keeps the drawn noise as its additive
// term instead of the model estimate.
SampleRun sample(const EpsSource& model, const NoiseSchedule& sched, const SamplerConfig& cfg,
                 std::span<const int> labels, int sample_dim);

// Balanced label vector 0..n_classes-1 repeating, n entries.
std::vector<int> balanced_labels(int n_classes, std::size_t n);

// Uniform inference grid: n_steps descending timesteps from T-1, for
// many-step reference sampling.
std::vector<int> uniform_step_set(int T, int n_steps);

// Inference grid with (approximately) equal per-step growth of the signal
// coefficient. Keeps the early updates short where alpha is near zero, which
// bounds how much a noise-prediction error can be amplified per step.
std::vector<int> snr_step_set(const NoiseSchedule& sched, int n_steps);

}  // namespace flashdistill
