#include "flashdistill/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "flashdistill/error.hpp"

namespace flashdistill {

namespace {

// Terminal signal level of the raw squared-cosine law. Matches the residual
// signal of widely deployed discrete schedules, so the raw table genuinely
// fails zero terminal SNR and the rescaling flag has real work to do.
constexpr double kTerminalAlpha = 0.068;

void check_t(int t, const NoiseSchedule& sched, const char* who) {
    if (t < 0 || t > sched.T)
        throw Error(std::string(who) + ": timestep " + std::to_string(t) + " outside [0, " +
                    std::to_string(sched.T) + "]");
}

}  // namespace

NoiseSchedule build_schedule(int T, ScheduleKind kind, bool zero_terminal_snr) {
    if (T < 2) throw Error("build_schedule: T must be >= 2, got " + std::to_string(T));
    (void)kind;  // one kind for now

    NoiseSchedule sched;
    sched.T = T;
    sched.zero_terminal_snr = zero_terminal_snr;
    sched.alpha.resize(std::size_t(T) + 1);
    sched.sigma.resize(std::size_t(T) + 1);

    // Squared-cosine signal law on a compressed quarter period:
    // alpha(t)^2 = cos^2(theta_max * t/T) with cos(theta_max) = kTerminalAlpha.
    double theta_max = std::acos(kTerminalAlpha);
    for (int t = 0; t <= T; ++t) {
        double theta = theta_max * double(t) / double(T);
        sched.alpha[std::size_t(t)] = std::cos(theta);
        sched.sigma[std::size_t(t)] = std::sin(theta);
    }
    sched.alpha[0] = 1.0;
    sched.sigma[0] = 0.0;

    if (zero_terminal_snr) {
        // Affine rescale of alpha preserving alpha_0 and forcing alpha_T = 0,
        // sigma re-derived from variance preservation.
        double a0 = sched.alpha[0];
        double aT = sched.alpha[std::size_t(T)];
        double scale = a0 / (a0 - aT);
        for (double& a : sched.alpha) a = (a - aT) * scale;
        for (std::size_t t = 0; t < sched.alpha.size(); ++t) {
            double a = sched.alpha[t];
            sched.sigma[t] = std::sqrt(std::max(0.0, 1.0 - a * a));
        }
    }
    return sched;
}

Tensor forward_noise(const Tensor& x0, const Tensor& eps, int t, const NoiseSchedule& sched) {
    check_t(t, sched, "forward_noise");
    if (!x0.same_shape(eps))
        throw ShapeError("forward_noise: shapes " + x0.shape_str() + " vs " + eps.shape_str());
    return scale_add(sched.a(t), x0, sched.s(t), eps);
}

Tensor forward_noise(const Tensor& x0, const Tensor& eps, std::span<const int> t,
                     const NoiseSchedule& sched) {
    if (!x0.same_shape(eps))
        throw ShapeError("forward_noise: shapes " + x0.shape_str() + " vs " + eps.shape_str());
    std::size_t rows = x0.rows(), cols = x0.cols();
    if (t.size() != rows)
        throw ShapeError("forward_noise: " + std::to_string(t.size()) + " timesteps for " +
                         std::to_string(rows) + " rows");
    Tensor out = Tensor::zeros(x0.shape);
    for (std::size_t i = 0; i < rows; ++i) {
        check_t(t[i], sched, "forward_noise");
        double a = sched.a(t[i]), s = sched.s(t[i]);
        for (std::size_t j = 0; j < cols; ++j)
            out.data[i * cols + j] = a * x0.data[i * cols + j] + s * eps.data[i * cols + j];
    }
    return out;
}

Tensor x0_hat(const Tensor& x_t, const Tensor& eps_hat, int t, const NoiseSchedule& sched) {
    check_t(t, sched, "x0_hat");
    if (!x_t.same_shape(eps_hat))
        throw ShapeError("x0_hat: shapes " + x_t.shape_str() + " vs " + eps_hat.shape_str());
    double a = sched.a(t);
    if (a == 0.0)
        throw Error("x0_hat: alpha is zero at t=" + std::to_string(t) +
                    "; the first sampling step must use the noise-corrected path");
    return scale_add(1.0 / a, x_t, -sched.s(t) / a, eps_hat);
}

Tensor ddim_step(const Tensor& x_t, const Tensor& eps_hat, int t, int t_prev,
                 const NoiseSchedule& sched) {
    check_t(t_prev, sched, "ddim_step");
    if (t_prev >= t)
        throw Error("ddim_step: t_prev=" + std::to_string(t_prev) + " must be below t=" +
                    std::to_string(t));
    Tensor x0 = x0_hat(x_t, eps_hat, t, sched);
    return scale_add(sched.a(t_prev), x0, sched.s(t_prev), eps_hat);
}

}  // namespace flashdistill
