#include "flashdistill/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>

#include "flashdistill/error.hpp"

namespace flashdistill {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::atomic<std::uint32_t> g_tape_uid{1};

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape_, std::vector<double> data_)
    : shape(std::move(shape_)), data(std::move(data_)) {
    if (shape_product(shape) != data.size())
        throw ShapeError("tensor: shape " + shape_str() + " does not match buffer of " +
                         std::to_string(data.size()) + " elements");
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
    std::size_t n = shape_product(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double v) {
    std::size_t n = shape_product(shape);
    return Tensor(std::move(shape), std::vector<double>(n, v));
}

Tensor Tensor::scalar(double v) { return Tensor({}, {v}); }

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
    return Tensor({rows, cols}, std::move(v));
}

Tensor Tensor::gaussian(std::vector<std::size_t> shape, Rng& rng) {
    std::size_t n = shape_product(shape);
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = rng.gaussian();
    return Tensor(std::move(shape), std::move(v));
}

std::size_t Tensor::rows() const {
    if (shape.size() != 2) throw ShapeError("rows(): tensor " + shape_str() + " is not 2-d");
    return shape[0];
}

std::size_t Tensor::cols() const {
    if (shape.size() != 2) throw ShapeError("cols(): tensor " + shape_str() + " is not 2-d");
    return shape[1];
}

double& Tensor::at(std::size_t i, std::size_t j) { return data[i * cols() + j]; }
double Tensor::at(std::size_t i, std::size_t j) const { return data[i * cols() + j]; }

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << "]";
    return os.str();
}

Tensor scale_add(double a, const Tensor& x, double b, const Tensor& y) {
    if (!x.same_shape(y))
        throw ShapeError("scale_add: shapes " + x.shape_str() + " vs " + y.shape_str());
    Tensor out = x;
    out.node = -1;
    out.tape_uid = 0;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = a * x.data[i] + b * y.data[i];
    return out;
}

Tensor scaled(double a, const Tensor& x) {
    Tensor out = x;
    out.node = -1;
    out.tape_uid = 0;
    for (double& v : out.data) v *= a;
    return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw ShapeError("max_abs_diff: shapes " + a.shape_str() + " vs " + b.shape_str());
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        m = std::max(m, std::fabs(a.data[i] - b.data[i]));
    return m;
}

const char* op_name(OpKind k) {
    switch (k) {
        case OpKind::leaf: return "leaf";
        case OpKind::add: return "add";
        case OpKind::sub: return "sub";
        case OpKind::mul: return "mul";
        case OpKind::matmul: return "matmul";
        case OpKind::silu: return "silu";
        case OpKind::sum: return "sum";
        case OpKind::mean: return "mean";
        case OpKind::square: return "square";
        case OpKind::concat: return "concat";
        case OpKind::affine_time_embed: return "affine_time_embed";
        case OpKind::stop_gradient: return "stop_gradient";
    }
    return "?";
}

namespace kernels {

void matmul(const double* a, std::size_t m, std::size_t k, const double* b, std::size_t n,
            double* out) {
    std::fill(out, out + m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* orow = out + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            double av = arow[p];
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
}

void silu(const double* x, std::size_t n, double* out) {
    for (std::size_t i = 0; i < n; ++i) {
        double s = 1.0 / (1.0 + std::exp(-x[i]));
        out[i] = x[i] * s;
    }
}

double time_embed_freq(std::size_t j, std::size_t half) {
    return std::exp(-std::log(10000.0) * double(j) / double(half));
}

void time_embed(const double* t, std::size_t n, std::size_t dim, double* out) {
    std::size_t half = dim / 2;
    for (std::size_t i = 0; i < n; ++i) {
        double* row = out + i * dim;
        for (std::size_t j = 0; j < half; ++j) {
            double w = time_embed_freq(j, half);
            row[j] = std::sin(w * t[i]);
            row[half + j] = std::cos(w * t[i]);
        }
    }
}

}  // namespace kernels

Tape::Tape() : uid_(g_tape_uid.fetch_add(1)) {}

int Tape::require(const Tensor& t) {
    if (t.node >= 0 && t.tape_uid == uid_) return t.node;
    nodes_.push_back(Node{OpKind::leaf, {}, t.shape, t.data, 0});
    return int(nodes_.size()) - 1;
}

Tensor Tape::leaf(const Tensor& t) {
    Tensor out = t;
    out.node = require(t);
    out.tape_uid = uid_;
    return out;
}

Tensor Tape::record(OpKind kind, std::vector<int> inputs, std::vector<std::size_t> shape,
                    std::vector<double> value, std::size_t embed_dim) {
    for (double v : value) {
        if (!std::isfinite(v))
            throw NonFiniteError(std::string("op ") + op_name(kind) + " produced a non-finite value");
    }
    nodes_.push_back(Node{kind, std::move(inputs), shape, value, embed_dim});
    Tensor out(std::move(shape), std::move(value));
    out.node = int(nodes_.size()) - 1;
    out.tape_uid = uid_;
    return out;
}

namespace {

// add/sub/mul permit equal shapes or a single-element operand against any
// tensor; nothing else broadcasts.
enum class Pairing { elementwise, scalar_left, scalar_right };

Pairing classify(const Tensor& a, const Tensor& b, const char* op) {
    if (a.same_shape(b)) return Pairing::elementwise;
    if (a.is_scalar()) return Pairing::scalar_left;
    if (b.is_scalar()) return Pairing::scalar_right;
    throw ShapeError(std::string(op) + ": shapes " + a.shape_str() + " vs " + b.shape_str());
}

}  // namespace

Tensor Tape::add(const Tensor& a, const Tensor& b) {
    Pairing p = classify(a, b, "add");
    int ia = require(a), ib = require(b);
    std::vector<double> out;
    std::vector<std::size_t> shape;
    if (p == Pairing::elementwise) {
        shape = a.shape;
        out.resize(a.size());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data[i] + b.data[i];
    } else if (p == Pairing::scalar_left) {
        shape = b.shape;
        out.resize(b.size());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data[0] + b.data[i];
    } else {
        shape = a.shape;
        out.resize(a.size());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data[i] + b.data[0];
    }
    return record(OpKind::add, {ia, ib}, std::move(shape), std::move(out));
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
    Pairing p = classify(a, b, "sub");
    int ia = require(a), ib = require(b);
    std::vector<double> out;
    std::vector<std::size_t> shape;
    if (p == Pairing::elementwise) {
        shape = a.shape;
        out.resize(a.size());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data[i] - b.data[i];
    } else if (p == Pairing::scalar_left) {
        shape = b.shape;
        out.resize(b.size());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data[0] - b.data[i];
    } else {
        shape = a.shape;
        out.resize(a.size());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data[i] - b.data[0];
    }
    return record(OpKind::sub, {ia, ib}, std::move(shape), std::move(out));
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
    Pairing p = classify(a, b, "mul");
    int ia = require(a), ib = require(b);
    std::vector<double> out;
    std::vector<std::size_t> shape;
    if (p == Pairing::elementwise) {
        shape = a.shape;
        out.resize(a.size());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data[i] * b.data[i];
    } else if (p == Pairing::scalar_left) {
        shape = b.shape;
        out.resize(b.size());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data[0] * b.data[i];
    } else {
        shape = a.shape;
        out.resize(a.size());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data[i] * b.data[0];
    }
    return record(OpKind::mul, {ia, ib}, std::move(shape), std::move(out));
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
    if (a.shape.size() != 2 || b.shape.size() != 2 || a.shape[1] != b.shape[0])
        throw ShapeError("matmul: shapes " + a.shape_str() + " vs " + b.shape_str());
    int ia = require(a), ib = require(b);
    std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
    std::vector<double> out(m * n);
    kernels::matmul(a.data.data(), m, k, b.data.data(), n, out.data());
    return record(OpKind::matmul, {ia, ib}, {m, n}, std::move(out));
}

Tensor Tape::silu(const Tensor& a) {
    int ia = require(a);
    std::vector<double> out(a.size());
    kernels::silu(a.data.data(), a.size(), out.data());
    return record(OpKind::silu, {ia}, a.shape, std::move(out));
}

Tensor Tape::square(const Tensor& a) {
    int ia = require(a);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data[i] * a.data[i];
    return record(OpKind::square, {ia}, a.shape, std::move(out));
}

Tensor Tape::sum(const Tensor& a) {
    int ia = require(a);
    double s = 0.0;
    for (double v : a.data) s += v;
    return record(OpKind::sum, {ia}, {}, {s});
}

Tensor Tape::mean(const Tensor& a) {
    if (a.size() == 0) throw ShapeError("mean: empty tensor");
    int ia = require(a);
    double s = 0.0;
    for (double v : a.data) s += v;
    return record(OpKind::mean, {ia}, {}, {s / double(a.size())});
}

Tensor Tape::concat(std::span<const Tensor> parts) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    std::size_t rows = 0, total_cols = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        if (parts[p].shape.size() != 2)
            throw ShapeError("concat: input " + std::to_string(p) + " has shape " +
                             parts[p].shape_str() + ", want 2-d");
        if (p == 0)
            rows = parts[p].shape[0];
        else if (parts[p].shape[0] != rows)
            throw ShapeError("concat: row mismatch " + parts[0].shape_str() + " vs " +
                             parts[p].shape_str());
        total_cols += parts[p].shape[1];
    }
    std::vector<int> ids;
    ids.reserve(parts.size());
    for (const Tensor& t : parts) ids.push_back(require(t));
    std::vector<double> out(rows * total_cols);
    std::size_t col0 = 0;
    for (const Tensor& t : parts) {
        std::size_t c = t.shape[1];
        for (std::size_t i = 0; i < rows; ++i)
            std::copy_n(t.data.data() + i * c, c, out.data() + i * total_cols + col0);
        col0 += c;
    }
    return record(OpKind::concat, std::move(ids), {rows, total_cols}, std::move(out));
}

Tensor Tape::affine_time_embed(const Tensor& t, std::size_t dim) {
    if (t.shape.size() != 1)
        throw ShapeError("affine_time_embed: input shape " + t.shape_str() + ", want 1-d");
    if (dim == 0 || dim % 2 != 0)
        throw ShapeError("affine_time_embed: dim must be positive and even");
    int it = require(t);
    std::size_t n = t.shape[0];
    std::vector<double> out(n * dim);
    kernels::time_embed(t.data.data(), n, dim, out.data());
    return record(OpKind::affine_time_embed, {it}, {n, dim}, std::move(out), dim);
}

Tensor Tape::stop_gradient(const Tensor& a) {
    int ia = require(a);
    return record(OpKind::stop_gradient, {ia}, a.shape, a.data);
}

Tensor Tape::apply(OpKind kind, std::span<const Tensor> inputs, std::size_t embed_dim) {
    auto arity = [&](std::size_t want) {
        if (inputs.size() != want)
            throw ShapeError(std::string(op_name(kind)) + ": expected " + std::to_string(want) +
                             " inputs, got " + std::to_string(inputs.size()));
    };
    switch (kind) {
        case OpKind::add: arity(2); return add(inputs[0], inputs[1]);
        case OpKind::sub: arity(2); return sub(inputs[0], inputs[1]);
        case OpKind::mul: arity(2); return mul(inputs[0], inputs[1]);
        case OpKind::matmul: arity(2); return matmul(inputs[0], inputs[1]);
        case OpKind::silu: arity(1); return silu(inputs[0]);
        case OpKind::sum: arity(1); return sum(inputs[0]);
        case OpKind::mean: arity(1); return mean(inputs[0]);
        case OpKind::square: arity(1); return square(inputs[0]);
        case OpKind::concat: return concat(inputs);
        case OpKind::affine_time_embed: arity(1); return affine_time_embed(inputs[0], embed_dim);
        case OpKind::stop_gradient: arity(1); return stop_gradient(inputs[0]);
        case OpKind::leaf: arity(1); return leaf(inputs[0]);
    }
    throw Error("apply: unknown op kind");
}

void Tape::accumulate(int node, const std::vector<double>& g) {
    std::vector<double>& dst = grads_[node];
    if (dst.empty()) dst.assign(nodes_[node].value.size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

void Tape::backprop_node(int id) {
    const Node& node = nodes_[id];
    const std::vector<double>& g = grads_[id];
    auto& in = node.inputs;
    auto input_val = [&](int k) -> const std::vector<double>& { return nodes_[in[k]].value; };
    auto input_size = [&](int k) { return nodes_[in[k]].value.size(); };

    switch (node.kind) {
        case OpKind::leaf:
            break;
        case OpKind::stop_gradient:
            break;
        case OpKind::add: {
            for (int k = 0; k < 2; ++k) {
                double sign = 1.0;
                std::vector<double> gi(input_size(k), 0.0);
                if (input_size(k) == g.size()) {
                    for (std::size_t i = 0; i < g.size(); ++i) gi[i] = sign * g[i];
                } else {
                    double s = 0.0;
                    for (double v : g) s += v;
                    gi[0] = sign * s;
                }
                accumulate(in[k], gi);
            }
            break;
        }
        case OpKind::sub: {
            for (int k = 0; k < 2; ++k) {
                double sign = (k == 0) ? 1.0 : -1.0;
                std::vector<double> gi(input_size(k), 0.0);
                if (input_size(k) == g.size()) {
                    for (std::size_t i = 0; i < g.size(); ++i) gi[i] = sign * g[i];
                } else {
                    double s = 0.0;
                    for (double v : g) s += v;
                    gi[0] = sign * s;
                }
                accumulate(in[k], gi);
            }
            break;
        }
        case OpKind::mul: {
            const auto& a = input_val(0);
            const auto& b = input_val(1);
            for (int k = 0; k < 2; ++k) {
                const auto& other = (k == 0) ? b : a;
                std::vector<double> gi(input_size(k), 0.0);
                if (input_size(k) == g.size()) {
                    if (other.size() == g.size())
                        for (std::size_t i = 0; i < g.size(); ++i) gi[i] = g[i] * other[i];
                    else
                        for (std::size_t i = 0; i < g.size(); ++i) gi[i] = g[i] * other[0];
                } else {
                    double s = 0.0;
                    for (std::size_t i = 0; i < g.size(); ++i) s += g[i] * other[i];
                    gi[0] = s;
                }
                accumulate(in[k], gi);
            }
            break;
        }
        case OpKind::matmul: {
            const auto& a = input_val(0);
            const auto& b = input_val(1);
            std::size_t m = nodes_[in[0]].shape[0], k = nodes_[in[0]].shape[1],
                        n = nodes_[in[1]].shape[1];
            std::vector<double> ga(m * k, 0.0), gb(k * n, 0.0);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double s = 0.0;
                    const double* grow = g.data() + i * n;
                    const double* brow = b.data() + p * n;
                    for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
                    ga[i * k + p] = s;
                }
            for (std::size_t i = 0; i < m; ++i) {
                const double* arow = a.data() + i * k;
                const double* grow = g.data() + i * n;
                for (std::size_t p = 0; p < k; ++p) {
                    double av = arow[p];
                    double* gbrow = gb.data() + p * n;
                    for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
                }
            }
            accumulate(in[0], ga);
            accumulate(in[1], gb);
            break;
        }
        case OpKind::silu: {
            const auto& x = input_val(0);
            std::vector<double> gi(x.size());
            for (std::size_t i = 0; i < x.size(); ++i) {
                double s = 1.0 / (1.0 + std::exp(-x[i]));
                gi[i] = g[i] * (s * (1.0 + x[i] * (1.0 - s)));
            }
            accumulate(in[0], gi);
            break;
        }
        case OpKind::square: {
            const auto& x = input_val(0);
            std::vector<double> gi(x.size());
            for (std::size_t i = 0; i < x.size(); ++i) gi[i] = g[i] * 2.0 * x[i];
            accumulate(in[0], gi);
            break;
        }
        case OpKind::sum: {
            std::vector<double> gi(input_size(0), g[0]);
            accumulate(in[0], gi);
            break;
        }
        case OpKind::mean: {
            std::vector<double> gi(input_size(0), g[0] / double(input_size(0)));
            accumulate(in[0], gi);
            break;
        }
        case OpKind::concat: {
            std::size_t rows = node.shape[0], total_cols = node.shape[1];
            std::size_t col0 = 0;
            for (int idx : in) {
                std::size_t c = nodes_[idx].shape[1];
                std::vector<double> gi(rows * c);
                for (std::size_t i = 0; i < rows; ++i)
                    std::copy_n(g.data() + i * total_cols + col0, c, gi.data() + i * c);
                accumulate(idx, gi);
                col0 += c;
            }
            break;
        }
        case OpKind::affine_time_embed: {
            const auto& t = input_val(0);
            std::size_t dim = node.embed_dim, half = dim / 2;
            std::vector<double> gi(t.size(), 0.0);
            for (std::size_t i = 0; i < t.size(); ++i) {
                const double* grow = g.data() + i * dim;
                double s = 0.0;
                for (std::size_t j = 0; j < half; ++j) {
                    double w = kernels::time_embed_freq(j, half);
                    s += grow[j] * w * std::cos(w * t[i]);
                    s -= grow[half + j] * w * std::sin(w * t[i]);
                }
                gi[i] = s;
            }
            accumulate(in[0], gi);
            break;
        }
    }
}

void Tape::backward(const Tensor& root) {
    if (root.node < 0 || root.tape_uid != uid_)
        throw Error("backward: root is not recorded on this tape");
    if (root.size() != 1)
        throw ShapeError("backward: root must be scalar, got shape " + root.shape_str());
    grads_.assign(nodes_.size(), {});
    grads_[root.node] = {1.0};
    for (int id = root.node; id >= 0; --id) {
        if (grads_[id].empty()) continue;
        backprop_node(id);
    }
}

std::vector<double> Tape::grad(const Tensor& t) const {
    if (t.node < 0 || t.tape_uid != uid_)
        throw Error("grad: tensor is not recorded on this tape");
    if (grads_.empty()) throw Error("grad: backward() has not run");
    if (std::size_t(t.node) < grads_.size() && !grads_[t.node].empty()) return grads_[t.node];
    return std::vector<double>(nodes_[t.node].value.size(), 0.0);
}

}  // namespace flashdistill
