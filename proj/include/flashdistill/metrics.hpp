#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "flashdistill/data.hpp"
#include "flashdistill/sampler.hpp"
#include "flashdistill/schedule.hpp"
#include "flashdistill/tensor.hpp"

namespace flashdistill {

// Average over seeded random unit directions of the exact 1-d Wasserstein-1
// distance between the projected empirical distributions. Symmetric and
// deterministic for a fixed seed.
double sliced_wasserstein(const Tensor& a, const Tensor& b, int n_proj, std::uint64_t seed);

struct ModeCoverage {
    std::vector<std::size_t> counts;  // per mode
    double recall;                    // fraction of modes holding >= 1% of samples
};

ModeCoverage mode_coverage(const Tensor& samples, const MixtureSpec& spec);

// Fraction of samples whose most likely class matches the requested label.
double condition_fidelity(const Tensor& samples, std::span<const int> requested,
                          const MixtureSpec& spec);

// Per-coordinate Pearson correlation between forward-noised latents and the
// clean samples they came from; approaches alpha_t for unit-variance data.
std::vector<double> forward_leakage_corr(const MixtureSpec& spec, const NoiseSchedule& sched,
                                         int t, std::size_t n, std::uint64_t seed);

struct FirstStepBias {
    double mean_shift_with;    // L2 norm of the sample mean vs data mean 0
    double mean_shift_without;
    double var_ratio_with;     // average per-coordinate variance vs data variance 1
    double var_ratio_without;
};

// Bias contributed by the first update's additive noise term. The model is
// run through a fixed two-point probe grid {T-1, 2T/3} twice with shared
// seeds, noise correction on and off, and the output moments are compared
// against the standardized data moments (mean 0, variance 1). Two points are
// the minimal sampler in which the first step's noise term matters at all.
FirstStepBias first_step_bias(const EpsSource& model, const NoiseSchedule& sched, int n_classes,
                              std::size_t n, std::uint64_t seed);

}  // namespace flashdistill
