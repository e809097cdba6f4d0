#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "flashdistill/adam.hpp"
#include "flashdistill/data.hpp"
#include "flashdistill/models.hpp"
#include "flashdistill/sampler.hpp"
#include "flashdistill/schedule.hpp"
#include "flashdistill/tensor.hpp"

namespace flashdistill {

// Piecewise-constant remap of the student timestep to the timestep the
// teacher denoises from: gamma(t) = out of the first piece with t > t_above,
// scanning pieces in descending order.
struct SrlTable {
    struct Piece {
        int t_above;
        int out;
    };
    std::vector<Piece> pieces;

    int operator()(int t) const;
    void validate(int T) const;
    static SrlTable standard();  // t>900 -> 990, t>500 -> 950, else -> 200
};

enum class DistillMode { forward, backward };

struct DistillConfig {
    DistillMode mode = DistillMode::backward;
    bool srl = true;
    // Renoise the student prediction with the run's own input noise (the
    // trajectory start), keeping the target a deterministic function of the
    // input; when false a fresh draw is used instead.
    bool srl_reuse_noise = true;
    std::vector<int> step_set{999, 750, 500};
    SrlTable gamma = SrlTable::standard();
    int k = 8;
    double cfg_weight = 7.5;
    double adv_weight = 0.1;
    // Weight on the reconstruction term; 0 trains against the adversarial
    // signal alone (the reconstruction-free ablation).
    double recon_weight = 1.0;
    bool disc = true;
    // Instance noise added to real and fake samples before the critic sees
    // them; keeps the critic from sharpening into an unstable boundary.
    double disc_noise = 0.1;
    bool noise_correction = true;
    std::uint64_t seed = 0;

    void validate(int T) const;
};

// Student's own deterministic trajectory from pure noise down to t_target,
// following the step-set prefix above t_target (noise-corrected first update
// when enabled). Returns a detached value: gradients never flow through it.
Tensor student_backward_latent(const EpsSource& student, const NoiseSchedule& sched,
                               std::span<const int> step_set, int t_target, const Tensor& x_T,
                               std::span<const int> labels, bool noise_correction);

// k+1 uniformly spaced integer grid points from t_start down to
// round(t_start / k), deduplicated to stay strictly descending.
std::vector<int> rollout_grid(int t_start, int k);

// Guided k-step teacher denoising from (x_start, t_start), returning the
// clean-sample estimate at the grid endpoint. k == 1 degenerates to the
// direct estimate at t_start with no stepping. Gradient-free.
Tensor teacher_rollout(const EpsSource& teacher, const Tensor& x_start, int t_start, int k,
                       double cfg_weight, std::span<const int> labels, const NoiseSchedule& sched);

// Shifted-reconstruction target: renoise the (detached) student prediction
// to gamma(t) with the given noise and let the teacher denoise from there.
Tensor srl_target(const EpsSource& teacher, const Tensor& student_x0_pred, int t,
                  const SrlTable& gamma, int k, double cfg_weight, std::span<const int> labels,
                  const NoiseSchedule& sched, const Tensor& noise);

// The latent a training step starts from. Backward mode consumes only the
// rng (noise and labels); the ground-truth batch fixes nothing but the batch
// size. Forward mode noises the ground-truth batch itself. `noise` is the
// Gaussian draw behind the latent (the trajectory start in backward mode).
struct DistillInput {
    Tensor latent;
    Tensor noise;
    std::vector<int> labels;
};

DistillInput distill_input_latent(const EpsSource& student, const DistillConfig& cfg,
                                  const NoiseSchedule& sched, int t, const Tensor& data_x0,
                                  std::span<const int> data_labels, Rng& rng);

struct DistillLossParts {
    Tensor total;  // taped scalar: recon + adv_weight * g
    double recon = 0.0;
    double g_loss = 0.0;
    int t = 0;
    Tensor latent;      // value copies for diagnostics and probes
    Tensor student_x0;
    Tensor target;
    std::vector<int> labels;
};

DistillLossParts distill_loss(Tape& tape, const TapedEpsModel& student_reg,
                              const EpsSource& teacher, const Tensor& data_x0,
                              std::span<const int> data_labels, const DistillConfig& cfg,
                              const NoiseSchedule& sched, const DiscModel* disc, Rng& rng);

// Hinge pieces. relu is realized as mul by a 0/1 mask taken from the
// values, which matches relu in value and gradient almost everywhere.
Tensor generator_hinge(Tape& tape, const TapedDiscModel& disc, const Tensor& fake_taped,
                       std::span<const int> t);
Tensor discriminator_hinge(Tape& tape, const TapedDiscModel& disc, const Tensor& real_x0,
                           const Tensor& fake_detached, std::span<const int> t);

struct AdvLossValues {
    double d_loss;
    double g_loss;
};

// Value-level view of both hinge losses for one (real, fake) pair.
AdvLossValues adversarial_losses(const DiscModel& disc, const Tensor& real_x0,
                                 const Tensor& fake_x0, std::span<const int> t);

struct DistillHyper {
    long steps = 2000;
    int batch = 128;
    double lr = 3e-4;
    double disc_lr = 1e-3;
    long log_every = 25;
};

struct DistillMetricsRow {
    long step;
    double recon;
    double g_loss;
    double d_loss;
};

struct DistillRun {
    EpsModel student;
    DiscModel disc;
    AdamState student_opt;
    AdamState disc_opt;
    std::vector<DistillMetricsRow> rows;
    long step = 0;
};

// Distill a frozen teacher into a student initialized from its weights,
// alternating student/discriminator updates when the discriminator is on.
DistillRun distill_train(const EpsModel& teacher, const Dataset& data, const DistillConfig& cfg,
                         const DistillHyper& hyper, const NoiseSchedule& sched);

}  // namespace flashdistill
