#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "flashdistill/adam.hpp"
#include "flashdistill/data.hpp"
#include "flashdistill/models.hpp"
#include "flashdistill/schedule.hpp"
#include "flashdistill/tensor.hpp"

namespace flashdistill {

// Per-sample draws for one denoising-score-matching batch: a uniform
// timestep, fresh noise, and the label with condition dropout applied.
struct NoisedBatch {
    Tensor x_t;
    Tensor eps;
    std::vector<int> t;
    std::vector<int> cond;
};

NoisedBatch make_noised_batch(const Tensor& x0, std::span<const int> labels,
                              const NoiseSchedule& sched, double cond_drop_prob, int null_class,
                              Rng& rng);

// mean_i ||eps_hat_i - eps_i||^2 assembled on the tape.
Tensor eps_mse(Tape& tape, const Tensor& eps_hat, const Tensor& eps);

// Denoising loss of the model on one batch (timesteps, noise and condition
// dropout drawn from rng).
Tensor teacher_loss(Tape& tape, const TapedEpsModel& reg, const Tensor& x0,
                    std::span<const int> labels, const NoiseSchedule& sched, double cond_drop_prob,
                    Rng& rng);

struct TeacherHyper {
    long steps = 20000;
    int batch = 256;
    double lr = 1e-3;
    double cond_drop_prob = 0.1;
    long log_every = 25;
};

struct TrainLogRow {
    long step;
    double loss;
};

struct TeacherRun {
    EpsModel model;
    AdamState opt;
    std::vector<TrainLogRow> rows;
    long step = 0;
    std::uint64_t seed = 0;
};

// Deterministic training from scratch. Step k of a run consumes streams
// derived from (seed, k) only, so a resumed run replays identically.
TeacherRun train_teacher(const Dataset& data, const NoiseSchedule& sched,
                         const EpsMlpConfig& cfg, const TeacherHyper& hyper, std::uint64_t seed);

// Continue an existing run up to hyper.steps (no-op if already there).
void resume_teacher(TeacherRun& run, const Dataset& data, const NoiseSchedule& sched,
                    const TeacherHyper& hyper);

}  // namespace flashdistill
