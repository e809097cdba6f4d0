#include "flashdistill/distill.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "flashdistill/error.hpp"

namespace flashdistill {

int SrlTable::operator()(int t) const {
    for (const Piece& p : pieces)
        if (t > p.t_above) return p.out;
    throw Error("srl table: no piece covers t=" + std::to_string(t));
}

void SrlTable::validate(int T) const {
    if (pieces.empty()) throw Error("srl table: empty");
    if (pieces.back().t_above > -1) throw Error("srl table: does not cover t=0");
    int prev = T;
    for (const Piece& p : pieces) {
        if (p.t_above >= prev) throw Error("srl table: pieces not descending");
        if (p.out < 0 || p.out > T - 1)
            throw Error("srl table: output " + std::to_string(p.out) + " outside grid");
        prev = p.t_above;
    }
}

SrlTable SrlTable::standard() { return SrlTable{{{900, 990}, {500, 950}, {-1, 200}}}; }

void DistillConfig::validate(int T) const {
    validate_step_set(step_set, T);
    gamma.validate(T);
    if (k < 1) throw Error("distill config: k must be >= 1");
    if (cfg_weight < 0.0) throw Error("distill config: negative cfg weight");
    if (adv_weight < 0.0) throw Error("distill config: negative adversarial weight");
    if (recon_weight < 0.0) throw Error("distill config: negative reconstruction weight");
}

Tensor student_backward_latent(const EpsSource& student, const NoiseSchedule& sched,
                               std::span<const int> step_set, int t_target, const Tensor& x_T,
                               std::span<const int> labels, bool noise_correction) {
    validate_step_set(step_set, sched.T);
    if (t_target == step_set.front()) {
        Tensor out = x_T;
        out.node = -1;
        out.tape_uid = 0;
        return out;
    }
    Tensor x = x_T;
    for (std::size_t i = 0; i < step_set.size(); ++i) {
        int t = step_set[i];
        int t_next = (i + 1 < step_set.size()) ? step_set[i + 1] : 0;
        Tensor eps_hat = student.eps(x, t, labels);
        Tensor x0 = x0_hat(x, eps_hat, t, sched);
        const Tensor& tail = (i == 0 && noise_correction) ? x_T : eps_hat;
        x = scale_add(sched.a(t_next), x0, sched.s(t_next), tail);
        if (t_next == t_target) return x;
        if (t_next < t_target) break;
    }
    throw Error("student_backward_latent: t_target=" + std::to_string(t_target) +
                " not reachable from the step set");
}

std::vector<int> rollout_grid(int t_start, int k) {
    if (k < 1) throw Error("rollout_grid: k must be >= 1");
    if (t_start < k)
        throw Error("rollout_grid: t_start=" + std::to_string(t_start) +
                    " too small for k=" + std::to_string(k));
    int t_end = int(std::lround(double(t_start) / double(k)));
    std::vector<int> grid;
    grid.reserve(std::size_t(k) + 1);
    for (int i = 0; i <= k; ++i) {
        int t = int(std::lround(t_start - double(i) * (double(t_start) - t_end) / double(k)));
        if (grid.empty() || t < grid.back()) grid.push_back(t);
    }
    return grid;
}

Tensor teacher_rollout(const EpsSource& teacher, const Tensor& x_start, int t_start, int k,
                       double cfg_weight, std::span<const int> labels, const NoiseSchedule& sched) {
    if (k == 1) {
        // Degenerate rollout: the endpoint equals the start, so take the
        // direct estimate there.
        Tensor eps_hat = cfg_eps(teacher, x_start, t_start, labels, cfg_weight);
        return x0_hat(x_start, eps_hat, t_start, sched);
    }
    std::vector<int> grid = rollout_grid(t_start, k);
    Tensor x = x_start;
    for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
        Tensor eps_hat = cfg_eps(teacher, x, grid[i], labels, cfg_weight);
        x = ddim_step(x, eps_hat, grid[i], grid[i + 1], sched);
    }
    Tensor eps_hat = cfg_eps(teacher, x, grid.back(), labels, cfg_weight);
    return x0_hat(x, eps_hat, grid.back(), sched);
}

Tensor srl_target(const EpsSource& teacher, const Tensor& student_x0_pred, int t,
                  const SrlTable& gamma, int k, double cfg_weight, std::span<const int> labels,
                  const NoiseSchedule& sched, const Tensor& noise) {
    for (double v : student_x0_pred.data)
        if (!std::isfinite(v)) throw NonFiniteError("srl_target: non-finite student prediction");
    int t_phi = gamma(t);
    Tensor chi = forward_noise(student_x0_pred, noise, t_phi, sched);
    return teacher_rollout(teacher, chi, t_phi, k, cfg_weight, labels, sched);
}

DistillInput distill_input_latent(const EpsSource& student, const DistillConfig& cfg,
                                  const NoiseSchedule& sched, int t, const Tensor& data_x0,
                                  std::span<const int> data_labels, Rng& rng) {
    std::size_t n = data_x0.rows();
    DistillInput in;
    if (cfg.mode == DistillMode::backward) {
        in.noise = Tensor::gaussian(data_x0.shape, rng);
        in.labels.resize(n);
        int n_classes = student.null_class();
        for (std::size_t i = 0; i < n; ++i) in.labels[i] = int(rng.below(std::uint64_t(n_classes)));
        in.latent = student_backward_latent(student, sched, cfg.step_set, t, in.noise, in.labels,
                                            cfg.noise_correction);
    } else {
        in.noise = Tensor::gaussian(data_x0.shape, rng);
        in.latent = forward_noise(data_x0, in.noise, t, sched);
        in.labels.assign(data_labels.begin(), data_labels.end());
    }
    return in;
}

namespace {

Tensor relu_mask(Tape& tape, const Tensor& x_taped) {
    Tensor mask = Tensor::zeros(x_taped.shape);
    for (std::size_t i = 0; i < x_taped.size(); ++i)
        mask.data[i] = x_taped.data[i] > 0.0 ? 1.0 : 0.0;
    return tape.mul(x_taped, tape.leaf(mask));
}

}  // namespace

Tensor generator_hinge(Tape& tape, const TapedDiscModel& disc, const Tensor& fake_taped,
                       std::span<const int> t) {
    Tensor logits = disc_forward(tape, disc, fake_taped, t);
    return tape.mul(tape.mean(logits), tape.leaf(Tensor::scalar(-1.0)));
}

Tensor discriminator_hinge(Tape& tape, const TapedDiscModel& disc, const Tensor& real_x0,
                           const Tensor& fake_detached, std::span<const int> t) {
    if (real_x0.rows() != fake_detached.rows())
        throw ShapeError("discriminator_hinge: batch sizes " + std::to_string(real_x0.rows()) +
                         " vs " + std::to_string(fake_detached.rows()));
    Tensor real_logits = disc_forward(tape, disc, tape.leaf(real_x0), t);
    Tensor fake_logits = disc_forward(tape, disc, tape.leaf(fake_detached), t);
    Tensor one = tape.leaf(Tensor::scalar(1.0));
    Tensor real_term = relu_mask(tape, tape.sub(one, real_logits));
    Tensor fake_term = relu_mask(tape, tape.add(one, fake_logits));
    return tape.mean(tape.add(real_term, fake_term));
}

AdvLossValues adversarial_losses(const DiscModel& disc, const Tensor& real_x0,
                                 const Tensor& fake_x0, std::span<const int> t) {
    Tape g_tape;
    TapedDiscModel g_reg = register_disc_model(g_tape, disc);
    Tensor g = generator_hinge(g_tape, g_reg, g_tape.leaf(fake_x0), t);
    Tape d_tape;
    TapedDiscModel d_reg = register_disc_model(d_tape, disc);
    Tensor d = discriminator_hinge(d_tape, d_reg, real_x0, fake_x0, t);
    return AdvLossValues{d.data[0], g.data[0]};
}

DistillLossParts distill_loss(Tape& tape, const TapedEpsModel& student_reg,
                              const EpsSource& teacher, const Tensor& data_x0,
                              std::span<const int> data_labels, const DistillConfig& cfg,
                              const NoiseSchedule& sched, const DiscModel* disc, Rng& rng) {
    cfg.validate(sched.T);
    const EpsModel& student = *student_reg.model;
    ModelEpsSource student_src(student);

    DistillLossParts parts;
    parts.t = cfg.step_set[rng.below(cfg.step_set.size())];
    DistillInput input =
        distill_input_latent(student_src, cfg, sched, parts.t, data_x0, data_labels, rng);
    parts.latent = input.latent;
    parts.labels = input.labels;

    std::size_t n = input.latent.rows();
    std::vector<int> t_vec(n, parts.t);
    Tensor latent_leaf = tape.leaf(input.latent);
    Tensor eps_hat = eps_forward(tape, student_reg, latent_leaf, t_vec, input.labels);

    double a = sched.a(parts.t), s = sched.s(parts.t);
    if (a == 0.0) throw Error("distill_loss: alpha is zero at t=" + std::to_string(parts.t));
    Tensor x0_pred = tape.mul(tape.sub(latent_leaf, tape.mul(eps_hat, tape.leaf(Tensor::scalar(s)))),
                              tape.leaf(Tensor::scalar(1.0 / a)));
    Tensor x0_detached = tape.stop_gradient(x0_pred);
    parts.student_x0 = Tensor(x0_detached.shape, x0_detached.data);

    bool use_recon = cfg.recon_weight > 0.0;
    bool use_adv = disc != nullptr && cfg.adv_weight > 0.0;
    if (!use_recon && !use_adv) throw Error("distill_loss: no loss term enabled");

    Tensor recon;
    if (use_recon) {
        if (cfg.srl) {
            Tensor renoise =
                cfg.srl_reuse_noise ? input.noise : Tensor::gaussian(input.latent.shape, rng);
            parts.target = srl_target(teacher, parts.student_x0, parts.t, cfg.gamma, cfg.k,
                                      cfg.cfg_weight, input.labels, sched, renoise);
        } else {
            parts.target = teacher_rollout(teacher, input.latent, parts.t, cfg.k, cfg.cfg_weight,
                                           input.labels, sched);
        }
        Tensor diff = tape.sub(tape.leaf(parts.target), x0_pred);
        recon =
            tape.mul(tape.sum(tape.square(diff)), tape.leaf(Tensor::scalar(1.0 / double(n))));
        if (cfg.recon_weight != 1.0)
            recon = tape.mul(recon, tape.leaf(Tensor::scalar(cfg.recon_weight)));
        parts.recon = recon.data[0];
    }

    if (use_adv) {
        TapedDiscModel disc_reg = register_disc_model(tape, *disc);
        Tensor critic_in = x0_pred;
        if (cfg.disc_noise > 0.0) {
            Tensor jitter = scaled(cfg.disc_noise, Tensor::gaussian(x0_pred.shape, rng));
            critic_in = tape.add(x0_pred, tape.leaf(jitter));
        }
        Tensor g = generator_hinge(tape, disc_reg, critic_in, t_vec);
        parts.g_loss = g.data[0];
        Tensor adv = tape.mul(g, tape.leaf(Tensor::scalar(cfg.adv_weight)));
        parts.total = use_recon ? tape.add(recon, adv) : adv;
    } else {
        parts.total = recon;
    }
    return parts;
}

DistillRun distill_train(const EpsModel& teacher, const Dataset& data, const DistillConfig& cfg,
                         const DistillHyper& hyper, const NoiseSchedule& sched) {
    cfg.validate(sched.T);
    if (hyper.steps < 0 || hyper.batch < 1) throw Error("distill_train: bad hyperparameters");

    DistillRun run;
    run.student = teacher;  // student starts as an exact copy
    run.disc = DiscModel::init(DiscMlpConfig{teacher.cfg.sample_dim, 64, 2, 32},
                               cfg.seed ^ 0xd15cull);
    run.student_opt = AdamState::init(run.student.params(), AdamHyper{hyper.lr, 0.9, 0.999, 1e-8});
    run.disc_opt = AdamState::init(run.disc.params(), AdamHyper{hyper.disc_lr, 0.9, 0.999, 1e-8});

    ModelEpsSource teacher_src(teacher);
    std::size_t n_data = data.samples.rows();
    std::size_t batch = std::size_t(hyper.batch);
    Rng base(cfg.seed);
    std::vector<Tensor*> student_params = run.student.params();
    std::vector<Tensor*> disc_params = run.disc.params();

    for (; run.step < hyper.steps; ++run.step) {
        Rng step_rng = base.fork(std::uint64_t(run.step));
        Rng pick = step_rng.fork(1);
        Rng loss_rng = step_rng.fork(2);

        Tensor bx = Tensor::zeros({batch, data.samples.cols()});
        std::vector<int> blab(batch);
        for (std::size_t i = 0; i < batch; ++i) {
            std::size_t idx = std::size_t(pick.below(n_data));
            for (std::size_t j = 0; j < data.samples.cols(); ++j)
                bx.data[i * bx.cols() + j] = data.samples.data[idx * bx.cols() + j];
            blab[i] = data.labels[idx];
        }

        double d_val = 0.0;
        DistillLossParts parts;
        try {
            Tape tape;
            TapedEpsModel reg = register_eps_model(tape, run.student);
            parts = distill_loss(tape, reg, teacher_src, bx, blab, cfg, sched,
                                 cfg.disc ? &run.disc : nullptr, loss_rng);
            tape.backward(parts.total);
            std::vector<Tensor> leaves = reg.param_leaves();
            std::vector<std::vector<double>> grads;
            grads.reserve(leaves.size());
            for (const Tensor& leaf : leaves) grads.push_back(tape.grad(leaf));
            adam_step(student_params, grads, run.student_opt);

            if (cfg.disc) {
                Tape d_tape;
                TapedDiscModel d_reg = register_disc_model(d_tape, run.disc);
                std::vector<int> t_vec(batch, parts.t);
                Tensor real = bx;
                Tensor fake = parts.student_x0;
                if (cfg.disc_noise > 0.0) {
                    Rng jit = step_rng.fork(3);
                    real = scale_add(1.0, real, cfg.disc_noise, Tensor::gaussian(real.shape, jit));
                    fake = scale_add(1.0, fake, cfg.disc_noise, Tensor::gaussian(fake.shape, jit));
                }
                Tensor d = discriminator_hinge(d_tape, d_reg, real, fake, t_vec);
                d_val = d.data[0];
                d_tape.backward(d);
                std::vector<Tensor> d_leaves = d_reg.param_leaves();
                std::vector<std::vector<double>> d_grads;
                d_grads.reserve(d_leaves.size());
                for (const Tensor& leaf : d_leaves) d_grads.push_back(d_tape.grad(leaf));
                adam_step(disc_params, d_grads, run.disc_opt);
            }
        } catch (const NonFiniteError& e) {
            throw DivergenceError("distillation diverged at step " + std::to_string(run.step) +
                                  ": " + e.what());
        }
        if (!std::isfinite(parts.recon))
            throw DivergenceError("distillation diverged at step " + std::to_string(run.step));

        if (run.step % hyper.log_every == 0)
            run.rows.push_back({run.step, parts.recon, parts.g_loss, d_val});
    }
    return run;
}

}  // namespace flashdistill
