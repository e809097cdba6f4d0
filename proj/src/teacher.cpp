#include "flashdistill/teacher.hpp"

#include <cmath>
#include <string>

#include "flashdistill/error.hpp"

namespace flashdistill {

NoisedBatch make_noised_batch(const Tensor& x0, std::span<const int> labels,
                              const NoiseSchedule& sched, double cond_drop_prob, int null_class,
                              Rng& rng) {
    std::size_t n = x0.rows(), dim = x0.cols();
    if (labels.size() != n)
        throw ShapeError("make_noised_batch: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(n) + " rows");
    NoisedBatch nb;
    nb.eps = Tensor::zeros(x0.shape);
    nb.t.resize(n);
    nb.cond.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        nb.t[i] = int(rng.below(std::uint64_t(sched.T)));  // uniform in [0, T-1]
        for (std::size_t j = 0; j < dim; ++j) nb.eps.data[i * dim + j] = rng.gaussian();
        bool drop = rng.uniform() < cond_drop_prob;
        nb.cond[i] = drop ? null_class : labels[i];
    }
    nb.x_t = forward_noise(x0, nb.eps, nb.t, sched);
    return nb;
}

Tensor eps_mse(Tape& tape, const Tensor& eps_hat, const Tensor& eps) {
    if (!eps_hat.same_shape(eps))
        throw ShapeError("eps_mse: shapes " + eps_hat.shape_str() + " vs " + eps.shape_str());
    Tensor diff = tape.sub(eps_hat, tape.leaf(eps));
    Tensor total = tape.sum(tape.square(diff));
    return tape.mul(total, tape.leaf(Tensor::scalar(1.0 / double(eps.rows()))));
}

Tensor teacher_loss(Tape& tape, const TapedEpsModel& reg, const Tensor& x0,
                    std::span<const int> labels, const NoiseSchedule& sched, double cond_drop_prob,
                    Rng& rng) {
    if (x0.rows() == 0) throw Error("teacher_loss: empty batch");
    NoisedBatch nb =
        make_noised_batch(x0, labels, sched, cond_drop_prob, reg.model->null_class(), rng);
    Tensor eps_hat = eps_forward(tape, reg, nb.x_t, nb.t, nb.cond);
    return eps_mse(tape, eps_hat, nb.eps);
}

namespace {

void run_steps(TeacherRun& run, const Dataset& data, const NoiseSchedule& sched,
               const TeacherHyper& hyper) {
    std::size_t n_data = data.samples.rows();
    std::size_t batch = std::size_t(hyper.batch);
    Rng base(run.seed);
    std::vector<Tensor*> params = run.model.params();

    for (; run.step < hyper.steps; ++run.step) {
        Rng step_rng = base.fork(std::uint64_t(run.step));
        Rng pick = step_rng.fork(1);
        Rng noise = step_rng.fork(2);

        Tensor bx = Tensor::zeros({batch, data.samples.cols()});
        std::vector<int> blab(batch);
        for (std::size_t i = 0; i < batch; ++i) {
            std::size_t idx = std::size_t(pick.below(n_data));
            for (std::size_t j = 0; j < data.samples.cols(); ++j)
                bx.data[i * bx.cols() + j] = data.samples.data[idx * bx.cols() + j];
            blab[i] = data.labels[idx];
        }

        Tape tape;
        TapedEpsModel reg = register_eps_model(tape, run.model);
        Tensor loss;
        try {
            loss = teacher_loss(tape, reg, bx, blab, sched, hyper.cond_drop_prob, noise);
        } catch (const NonFiniteError& e) {
            throw DivergenceError("teacher training diverged at step " +
                                  std::to_string(run.step) + ": " + e.what());
        }
        if (!std::isfinite(loss.data[0]))
            throw DivergenceError("teacher training diverged at step " + std::to_string(run.step));
        tape.backward(loss);

        std::vector<Tensor> leaves = reg.param_leaves();
        std::vector<std::vector<double>> grads;
        grads.reserve(leaves.size());
        for (const Tensor& leaf : leaves) grads.push_back(tape.grad(leaf));
        adam_step(params, grads, run.opt);

        if (run.step % hyper.log_every == 0) run.rows.push_back({run.step, loss.data[0]});
    }
}

}  // namespace

TeacherRun train_teacher(const Dataset& data, const NoiseSchedule& sched, const EpsMlpConfig& cfg,
                         const TeacherHyper& hyper, std::uint64_t seed) {
    if (hyper.steps < 0 || hyper.batch < 1) throw Error("train_teacher: bad hyperparameters");
    TeacherRun run;
    run.seed = seed;
    run.model = EpsModel::init(cfg, seed);
    run.opt = AdamState::init(run.model.params(), AdamHyper{hyper.lr, 0.9, 0.999, 1e-8});
    run_steps(run, data, sched, hyper);
    return run;
}

void resume_teacher(TeacherRun& run, const Dataset& data, const NoiseSchedule& sched,
                    const TeacherHyper& hyper) {
    run_steps(run, data, sched, hyper);
}

}  // namespace flashdistill
