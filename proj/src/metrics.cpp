#include "flashdistill/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "flashdistill/error.hpp"
#include "flashdistill/rng.hpp"

namespace flashdistill {

namespace {

// Exact W1 between two 1-d empirical distributions of (possibly unequal)
// sizes: integrate |Qa - Qb| over the merged quantile breakpoints.
double wasserstein1(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double na = double(a.size()), nb = double(b.size());
    std::size_t i = 0, j = 0;
    double q = 0.0, total = 0.0;
    while (i < a.size() && j < b.size()) {
        double qa = double(i + 1) / na;
        double qb = double(j + 1) / nb;
        double q_next = std::min(qa, qb);
        total += (q_next - q) * std::fabs(a[i] - b[j]);
        q = q_next;
        if (qa <= qb) ++i;
        if (qb <= qa) ++j;
    }
    return total;
}

}  // namespace

double sliced_wasserstein(const Tensor& a, const Tensor& b, int n_proj, std::uint64_t seed) {
    if (a.rows() == 0 || b.rows() == 0) throw Error("sliced_wasserstein: empty sample set");
    if (a.cols() != b.cols())
        throw ShapeError("sliced_wasserstein: dims " + a.shape_str() + " vs " + b.shape_str());
    std::size_t dim = a.cols();
    Rng rng = Rng(seed).fork(0x73776431);
    double acc = 0.0;
    std::vector<double> dir(dim), pa(a.rows()), pb(b.rows());
    for (int p = 0; p < n_proj; ++p) {
        double norm = 0.0;
        do {
            norm = 0.0;
            for (std::size_t d = 0; d < dim; ++d) {
                dir[d] = rng.gaussian();
                norm += dir[d] * dir[d];
            }
        } while (norm == 0.0);
        norm = std::sqrt(norm);
        for (std::size_t d = 0; d < dim; ++d) dir[d] /= norm;
        for (std::size_t i = 0; i < a.rows(); ++i) {
            double s = 0.0;
            for (std::size_t d = 0; d < dim; ++d) s += a.data[i * dim + d] * dir[d];
            pa[i] = s;
        }
        for (std::size_t i = 0; i < b.rows(); ++i) {
            double s = 0.0;
            for (std::size_t d = 0; d < dim; ++d) s += b.data[i * dim + d] * dir[d];
            pb[i] = s;
        }
        acc += wasserstein1(pa, pb);
    }
    return acc / double(n_proj);
}

ModeCoverage mode_coverage(const Tensor& samples, const MixtureSpec& spec) {
    spec.validate();
    ModeCoverage cov;
    cov.counts.assign(std::size_t(spec.n_modes()), 0);
    std::size_t n = samples.rows();
    for (std::size_t i = 0; i < n; ++i) {
        ModeAssignment m = posterior_mode(samples.data[2 * i], samples.data[2 * i + 1], spec);
        cov.counts[std::size_t(m.mode)] += 1;
    }
    std::size_t hit = 0;
    for (std::size_t c : cov.counts)
        if (double(c) >= 0.01 * double(n)) ++hit;
    cov.recall = double(hit) / double(spec.n_modes());
    return cov;
}

double condition_fidelity(const Tensor& samples, std::span<const int> requested,
                          const MixtureSpec& spec) {
    std::size_t n = samples.rows();
    if (requested.size() != n)
        throw Error("condition_fidelity: " + std::to_string(requested.size()) + " labels for " +
                    std::to_string(n) + " samples");
    std::size_t ok = 0;
    for (std::size_t i = 0; i < n; ++i) {
        ModeAssignment m = posterior_mode(samples.data[2 * i], samples.data[2 * i + 1], spec);
        if (m.cls == requested[i]) ++ok;
    }
    return double(ok) / double(n);
}

std::vector<double> forward_leakage_corr(const MixtureSpec& spec, const NoiseSchedule& sched,
                                         int t, std::size_t n, std::uint64_t seed) {
    if (t < 0 || t > sched.T) throw Error("forward_leakage_corr: t outside grid");
    Dataset ds = gen_dataset(spec, n, seed);
    Rng rng = Rng(seed).fork(0x6c65616b);
    Tensor eps = Tensor::gaussian({n, 2}, rng);
    Tensor x_t = forward_noise(ds.samples, eps, t, sched);

    std::vector<double> corr(2, 0.0);
    for (std::size_t d = 0; d < 2; ++d) {
        double mx = 0.0, my = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            mx += ds.samples.data[2 * i + d];
            my += x_t.data[2 * i + d];
        }
        mx /= double(n);
        my /= double(n);
        double sxx = 0.0, syy = 0.0, sxy = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double dx = ds.samples.data[2 * i + d] - mx;
            double dy = x_t.data[2 * i + d] - my;
            sxx += dx * dx;
            syy += dy * dy;
            sxy += dx * dy;
        }
        corr[d] = (sxx > 0.0 && syy > 0.0) ? sxy / std::sqrt(sxx * syy) : 0.0;
    }
    return corr;
}

FirstStepBias first_step_bias(const EpsSource& model, const NoiseSchedule& sched, int n_classes,
                              std::size_t n, std::uint64_t seed) {
    if (n == 0) throw Error("first_step_bias: n must be positive");
    SamplerConfig cfg;
    cfg.step_set = {sched.T - 1, 2 * sched.T / 3};
    cfg.cfg_weight = 1.0;
    cfg.seed = seed;
    std::vector<int> labels = balanced_labels(n_classes, n);

    auto moments = [&](bool correction) {
        cfg.noise_correction = correction;
        Tensor s = sample(model, sched, cfg, labels, 2).samples;
        double mean[2] = {0.0, 0.0};
        for (std::size_t i = 0; i < n; ++i) {
            mean[0] += s.data[2 * i];
            mean[1] += s.data[2 * i + 1];
        }
        mean[0] /= double(n);
        mean[1] /= double(n);
        double var = 0.0;
        if (n > 1) {
            for (std::size_t i = 0; i < n; ++i) {
                double dx = s.data[2 * i] - mean[0];
                double dy = s.data[2 * i + 1] - mean[1];
                var += dx * dx + dy * dy;
            }
            var /= 2.0 * double(n - 1);
        }
        double shift = std::sqrt(mean[0] * mean[0] + mean[1] * mean[1]);
        return std::pair<double, double>(shift, var);
    };

    auto [shift_on, var_on] = moments(true);
    auto [shift_off, var_off] = moments(false);
    return FirstStepBias{shift_on, shift_off, var_on, var_off};
}

}  // namespace flashdistill
