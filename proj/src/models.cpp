#include "flashdistill/models.hpp"

#include <cmath>
#include <string>

#include "flashdistill/error.hpp"

namespace flashdistill {

namespace {

Tensor uniform_fan_in(std::size_t rows, std::size_t cols, Rng& rng) {
    double bound = 1.0 / std::sqrt(double(rows));
    Tensor t = Tensor::zeros({rows, cols});
    for (double& v : t.data) v = rng.uniform(-bound, bound);
    return t;
}

std::vector<double> int_to_double(std::span<const int> t) {
    std::vector<double> out(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) out[i] = double(t[i]);
    return out;
}

void check_cond(std::span<const int> cond, int n_classes, std::size_t rows) {
    if (cond.size() != rows)
        throw ShapeError("eps model: " + std::to_string(cond.size()) + " labels for " +
                         std::to_string(rows) + " rows");
    for (int c : cond)
        if (c < 0 || c > n_classes)
            throw Error("eps model: unknown class id " + std::to_string(c));
}

}  // namespace

std::size_t EpsModel::param_count() const {
    std::size_t n = cond_table.size();
    for (const Tensor& t : w) n += t.size();
    for (const Tensor& t : b) n += t.size();
    return n;
}

std::vector<Tensor*> EpsModel::params() {
    std::vector<Tensor*> out;
    for (std::size_t i = 0; i < w.size(); ++i) {
        out.push_back(&w[i]);
        out.push_back(&b[i]);
    }
    out.push_back(&cond_table);
    return out;
}

std::vector<const Tensor*> EpsModel::params() const {
    std::vector<const Tensor*> out;
    for (std::size_t i = 0; i < w.size(); ++i) {
        out.push_back(&w[i]);
        out.push_back(&b[i]);
    }
    out.push_back(&cond_table);
    return out;
}

std::vector<std::string> EpsModel::param_names() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < w.size(); ++i) {
        out.push_back("w" + std::to_string(i));
        out.push_back("b" + std::to_string(i));
    }
    out.push_back("cond_table");
    return out;
}

EpsModel EpsModel::init(const EpsMlpConfig& cfg, std::uint64_t seed) {
    if (cfg.sample_dim < 1 || cfg.n_classes < 1 || cfg.width < 1 || cfg.depth < 1 ||
        cfg.time_dim < 2 || cfg.time_dim % 2 != 0 || cfg.cond_dim < 1)
        throw Error("eps model: invalid dimensions");
    EpsModel m;
    m.cfg = cfg;
    Rng rng = Rng(seed).fork(0x65707340);
    std::size_t in = std::size_t(cfg.sample_dim + cfg.time_dim + cfg.cond_dim);
    std::size_t width = std::size_t(cfg.width);
    for (int layer = 0; layer <= cfg.depth; ++layer) {
        std::size_t rows = (layer == 0) ? in : width;
        std::size_t cols = (layer == cfg.depth) ? std::size_t(cfg.sample_dim) : width;
        m.w.push_back(uniform_fan_in(rows, cols, rng));
        m.b.push_back(Tensor::zeros({1, cols}));
    }
    m.cond_table = Tensor::zeros({std::size_t(cfg.n_classes) + 1, std::size_t(cfg.cond_dim)});
    for (double& v : m.cond_table.data) v = rng.uniform(-1.0, 1.0);
    return m;
}

Tensor EpsModel::eval(const Tensor& x, std::span<const int> t, std::span<const int> cond) const {
    std::size_t n = x.rows();
    if (int(x.cols()) != cfg.sample_dim)
        throw ShapeError("eps model: input " + x.shape_str() + ", want [n," +
                         std::to_string(cfg.sample_dim) + "]");
    if (t.size() != n)
        throw ShapeError("eps model: " + std::to_string(t.size()) + " timesteps for " +
                         std::to_string(n) + " rows");
    check_cond(cond, cfg.n_classes, n);

    std::size_t time_dim = std::size_t(cfg.time_dim), cond_dim = std::size_t(cfg.cond_dim);
    std::vector<double> td = int_to_double(t);
    std::vector<double> emb(n * time_dim);
    kernels::time_embed(td.data(), n, time_dim, emb.data());

    std::size_t in_dim = std::size_t(cfg.sample_dim) + time_dim + cond_dim;
    std::vector<double> h(n * in_dim);
    for (std::size_t i = 0; i < n; ++i) {
        double* row = h.data() + i * in_dim;
        for (int j = 0; j < cfg.sample_dim; ++j) row[j] = x.data[i * x.cols() + std::size_t(j)];
        std::copy_n(emb.data() + i * time_dim, time_dim, row + cfg.sample_dim);
        const double* crow = cond_table.data.data() + std::size_t(cond[i]) * cond_dim;
        std::copy_n(crow, cond_dim, row + cfg.sample_dim + time_dim);
    }

    std::size_t cur = in_dim;
    std::vector<double> next;
    for (std::size_t layer = 0; layer < w.size(); ++layer) {
        std::size_t out_dim = w[layer].cols();
        next.assign(n * out_dim, 0.0);
        kernels::matmul(h.data(), n, cur, w[layer].data.data(), out_dim, next.data());
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < out_dim; ++j) next[i * out_dim + j] += b[layer].data[j];
        if (layer + 1 < w.size()) kernels::silu(next.data(), next.size(), next.data());
        h.swap(next);
        cur = out_dim;
    }
    return Tensor({n, cur}, std::move(h));
}

std::vector<Tensor> TapedEpsModel::param_leaves() const {
    std::vector<Tensor> out;
    for (std::size_t i = 0; i < w.size(); ++i) {
        out.push_back(w[i]);
        out.push_back(b[i]);
    }
    out.push_back(cond_table);
    return out;
}

TapedEpsModel register_eps_model(Tape& tape, const EpsModel& model) {
    TapedEpsModel reg;
    reg.model = &model;
    for (std::size_t i = 0; i < model.w.size(); ++i) {
        reg.w.push_back(tape.leaf(model.w[i]));
        reg.b.push_back(tape.leaf(model.b[i]));
    }
    reg.cond_table = tape.leaf(model.cond_table);
    return reg;
}

Tensor eps_forward(Tape& tape, const TapedEpsModel& reg, const Tensor& x, std::span<const int> t,
                   std::span<const int> cond) {
    const EpsModel& m = *reg.model;
    std::size_t n = x.rows();
    if (int(x.cols()) != m.cfg.sample_dim)
        throw ShapeError("eps model: input " + x.shape_str() + ", want [n," +
                         std::to_string(m.cfg.sample_dim) + "]");
    if (t.size() != n)
        throw ShapeError("eps model: " + std::to_string(t.size()) + " timesteps for " +
                         std::to_string(n) + " rows");
    check_cond(cond, m.cfg.n_classes, n);

    Tensor x_in = (x.node >= 0 && x.tape_uid == tape.uid()) ? x : tape.leaf(x);
    Tensor t_in = tape.leaf(Tensor({n}, int_to_double(t)));
    Tensor emb = tape.affine_time_embed(t_in, std::size_t(m.cfg.time_dim));

    // Row selection from the class table as a one-hot matmul, so the table
    // rows pick up gradients through the standard matmul rule.
    Tensor onehot = Tensor::zeros({n, std::size_t(m.cfg.n_classes) + 1});
    for (std::size_t i = 0; i < n; ++i) onehot.at(i, std::size_t(cond[i])) = 1.0;
    Tensor ce = tape.matmul(tape.leaf(onehot), reg.cond_table);

    Tensor parts[3] = {x_in, emb, ce};
    Tensor h = tape.concat(parts);

    Tensor ones = tape.leaf(Tensor::full({n, 1}, 1.0));
    for (std::size_t layer = 0; layer < reg.w.size(); ++layer) {
        Tensor z = tape.add(tape.matmul(h, reg.w[layer]), tape.matmul(ones, reg.b[layer]));
        h = (layer + 1 < reg.w.size()) ? tape.silu(z) : z;
    }
    return h;
}

std::size_t DiscModel::param_count() const {
    std::size_t n = 0;
    for (const Tensor& t : w) n += t.size();
    for (const Tensor& t : b) n += t.size();
    return n;
}

std::vector<Tensor*> DiscModel::params() {
    std::vector<Tensor*> out;
    for (std::size_t i = 0; i < w.size(); ++i) {
        out.push_back(&w[i]);
        out.push_back(&b[i]);
    }
    return out;
}

std::vector<const Tensor*> DiscModel::params() const {
    std::vector<const Tensor*> out;
    for (std::size_t i = 0; i < w.size(); ++i) {
        out.push_back(&w[i]);
        out.push_back(&b[i]);
    }
    return out;
}

std::vector<std::string> DiscModel::param_names() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < w.size(); ++i) {
        out.push_back("w" + std::to_string(i));
        out.push_back("b" + std::to_string(i));
    }
    return out;
}

DiscModel DiscModel::init(const DiscMlpConfig& cfg, std::uint64_t seed) {
    if (cfg.sample_dim < 1 || cfg.width < 1 || cfg.depth < 1 || cfg.time_dim < 2 ||
        cfg.time_dim % 2 != 0)
        throw Error("disc model: invalid dimensions");
    DiscModel m;
    m.cfg = cfg;
    Rng rng = Rng(seed).fork(0x64697363);
    std::size_t in = std::size_t(cfg.sample_dim + cfg.time_dim);
    std::size_t width = std::size_t(cfg.width);
    for (int layer = 0; layer <= cfg.depth; ++layer) {
        std::size_t rows = (layer == 0) ? in : width;
        std::size_t cols = (layer == cfg.depth) ? 1 : width;
        m.w.push_back(uniform_fan_in(rows, cols, rng));
        m.b.push_back(Tensor::zeros({1, cols}));
    }
    return m;
}

Tensor DiscModel::eval(const Tensor& x, std::span<const int> t) const {
    std::size_t n = x.rows();
    if (int(x.cols()) != cfg.sample_dim)
        throw ShapeError("disc model: input " + x.shape_str() + ", want [n," +
                         std::to_string(cfg.sample_dim) + "]");
    if (t.size() != n)
        throw ShapeError("disc model: " + std::to_string(t.size()) + " timesteps for " +
                         std::to_string(n) + " rows");
    std::size_t time_dim = std::size_t(cfg.time_dim);
    std::vector<double> td = int_to_double(t);
    std::vector<double> emb(n * time_dim);
    kernels::time_embed(td.data(), n, time_dim, emb.data());
    std::size_t in_dim = std::size_t(cfg.sample_dim) + time_dim;
    std::vector<double> h(n * in_dim);
    for (std::size_t i = 0; i < n; ++i) {
        double* row = h.data() + i * in_dim;
        for (int j = 0; j < cfg.sample_dim; ++j) row[j] = x.data[i * x.cols() + std::size_t(j)];
        std::copy_n(emb.data() + i * time_dim, time_dim, row + cfg.sample_dim);
    }
    std::size_t cur = in_dim;
    std::vector<double> next;
    for (std::size_t layer = 0; layer < w.size(); ++layer) {
        std::size_t out_dim = w[layer].cols();
        next.assign(n * out_dim, 0.0);
        kernels::matmul(h.data(), n, cur, w[layer].data.data(), out_dim, next.data());
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < out_dim; ++j) next[i * out_dim + j] += b[layer].data[j];
        if (layer + 1 < w.size()) kernels::silu(next.data(), next.size(), next.data());
        h.swap(next);
        cur = out_dim;
    }
    return Tensor({n, cur}, std::move(h));
}

std::vector<Tensor> TapedDiscModel::param_leaves() const {
    std::vector<Tensor> out;
    for (std::size_t i = 0; i < w.size(); ++i) {
        out.push_back(w[i]);
        out.push_back(b[i]);
    }
    return out;
}

TapedDiscModel register_disc_model(Tape& tape, const DiscModel& model) {
    TapedDiscModel reg;
    reg.model = &model;
    for (std::size_t i = 0; i < model.w.size(); ++i) {
        reg.w.push_back(tape.leaf(model.w[i]));
        reg.b.push_back(tape.leaf(model.b[i]));
    }
    return reg;
}

Tensor disc_forward(Tape& tape, const TapedDiscModel& reg, const Tensor& x,
                    std::span<const int> t) {
    const DiscModel& m = *reg.model;
    std::size_t n = x.rows();
    if (int(x.cols()) != m.cfg.sample_dim)
        throw ShapeError("disc model: input " + x.shape_str() + ", want [n," +
                         std::to_string(m.cfg.sample_dim) + "]");
    if (t.size() != n)
        throw ShapeError("disc model: " + std::to_string(t.size()) + " timesteps for " +
                         std::to_string(n) + " rows");

    Tensor x_in = (x.node >= 0 && x.tape_uid == tape.uid()) ? x : tape.leaf(x);
    Tensor t_in = tape.leaf(Tensor({n}, [&] {
        std::vector<double> td(t.size());
        for (std::size_t i = 0; i < t.size(); ++i) td[i] = double(t[i]);
        return td;
    }()));
    Tensor emb = tape.affine_time_embed(t_in, std::size_t(m.cfg.time_dim));
    Tensor parts[2] = {x_in, emb};
    Tensor h = tape.concat(parts);
    Tensor ones = tape.leaf(Tensor::full({n, 1}, 1.0));
    for (std::size_t layer = 0; layer < reg.w.size(); ++layer) {
        Tensor z = tape.add(tape.matmul(h, reg.w[layer]), tape.matmul(ones, reg.b[layer]));
        h = (layer + 1 < reg.w.size()) ? tape.silu(z) : z;
    }
    return h;
}

}  // namespace flashdistill
