#pragma once

#include <span>
#include <vector>

#include "flashdistill/tensor.hpp"

namespace flashdistill {

enum class ScheduleKind { cosine };

// Discrete variance-preserving noise schedule on the grid t = 0..T.
// alpha[t]^2 + sigma[t]^2 == 1 at every t; alpha is non-increasing, sigma
// non-decreasing. With zero_terminal_snr the table is linearly rescaled so
// alpha[T] == 0 and sigma[T] == 1 exactly while alpha[0] is preserved.
struct NoiseSchedule {
    int T = 1000;
    std::vector<double> alpha;
    std::vector<double> sigma;
    bool zero_terminal_snr = false;

    double a(int t) const { return alpha[std::size_t(t)]; }
    double s(int t) const { return sigma[std::size_t(t)]; }
};

NoiseSchedule build_schedule(int T, ScheduleKind kind, bool zero_terminal_snr);

// alpha_t * x0 + sigma_t * eps
Tensor forward_noise(const Tensor& x0, const Tensor& eps, int t, const NoiseSchedule& sched);
// Per-row timestep variant for training batches.
Tensor forward_noise(const Tensor& x0, const Tensor& eps, std::span<const int> t,
                     const NoiseSchedule& sched);

// (x_t - sigma_t * eps_hat) / alpha_t; errors where alpha_t == 0.
Tensor x0_hat(const Tensor& x_t, const Tensor& eps_hat, int t, const NoiseSchedule& sched);

// alpha_{t_prev} * x0_hat(x_t, eps_hat, t) + sigma_{t_prev} * eps_hat
Tensor ddim_step(const Tensor& x_t, const Tensor& eps_hat, int t, int t_prev,
                 const NoiseSchedule& sched);

}  // namespace flashdistill
