#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "flashdistill/rng.hpp"

namespace flashdistill {

// Dense row-major tensor of doubles. `node` ties the value to an entry of
// the tape identified by `tape_uid`; -1 means the tensor is a free value.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;
    int node = -1;
    std::uint32_t tape_uid = 0;

    Tensor() = default;
    Tensor(std::vector<std::size_t> shape_, std::vector<double> data_);

    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor full(std::vector<std::size_t> shape, double v);
    static Tensor scalar(double v);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v);
    static Tensor gaussian(std::vector<std::size_t> shape, Rng& rng);

    std::size_t size() const { return data.size(); }
    bool is_scalar() const { return data.size() == 1; }
    std::size_t rows() const;
    std::size_t cols() const;
    double& at(std::size_t i, std::size_t j);
    double at(std::size_t i, std::size_t j) const;
    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    std::string shape_str() const;
};

// Value-space helpers (no tape involvement).
Tensor scale_add(double a, const Tensor& x, double b, const Tensor& y);  // a*x + b*y
Tensor scaled(double a, const Tensor& x);
double max_abs_diff(const Tensor& a, const Tensor& b);

enum class OpKind {
    leaf,
    add,
    sub,
    mul,
    matmul,
    silu,
    sum,
    mean,
    square,
    concat,
    affine_time_embed,
    stop_gradient,
};

const char* op_name(OpKind k);

// Shared low-level kernels; the taped ops and the tape-free model forwards
// both call these so the two paths stay bitwise identical.
namespace kernels {
void matmul(const double* a, std::size_t m, std::size_t k, const double* b, std::size_t n, double* out);
void silu(const double* x, std::size_t n, double* out);
// out[i][j] = sin(w_j t_i), out[i][half+j] = cos(w_j t_i): a sinusoid over an
// affine ramp of frequencies, dim even.
void time_embed(const double* t, std::size_t n, std::size_t dim, double* out);
double time_embed_freq(std::size_t j, std::size_t half);
}  // namespace kernels

// Reverse-mode autodiff tape. Nodes are recorded in topological order
// (inputs always precede outputs); the tape is rebuilt per training step.
// Single-writer: one thread records and runs backward.
class Tape {
public:
    Tape();

    // Register a value on the tape. Inputs without a node id are registered
    // implicitly by the ops.
    Tensor leaf(const Tensor& t);

    Tensor add(const Tensor& a, const Tensor& b);
    Tensor sub(const Tensor& a, const Tensor& b);
    Tensor mul(const Tensor& a, const Tensor& b);
    Tensor matmul(const Tensor& a, const Tensor& b);
    Tensor silu(const Tensor& a);
    Tensor square(const Tensor& a);
    Tensor sum(const Tensor& a);
    Tensor mean(const Tensor& a);
    Tensor concat(std::span<const Tensor> parts);
    Tensor affine_time_embed(const Tensor& t, std::size_t dim);
    Tensor stop_gradient(const Tensor& a);

    // Generic entry point; embed_dim is only read for affine_time_embed.
    Tensor apply(OpKind kind, std::span<const Tensor> inputs, std::size_t embed_dim = 0);

    // Populates gradients for every node reachable from the scalar root.
    void backward(const Tensor& root);

    // Gradient buffer of a recorded tensor; zeros if the node was not
    // reached by the last backward().
    std::vector<double> grad(const Tensor& t) const;

    std::size_t node_count() const { return nodes_.size(); }
    std::uint32_t uid() const { return uid_; }

private:
    struct Node {
        OpKind kind;
        std::vector<int> inputs;
        std::vector<std::size_t> shape;
        std::vector<double> value;
        std::size_t embed_dim = 0;
    };

    std::vector<Node> nodes_;
    std::vector<std::vector<double>> grads_;
    std::uint32_t uid_;

    int require(const Tensor& t);  // node id, registering a leaf if needed
    Tensor record(OpKind kind, std::vector<int> inputs, std::vector<std::size_t> shape,
                  std::vector<double> value, std::size_t embed_dim = 0);
    void accumulate(int node, const std::vector<double>& g);
    void backprop_node(int id);
};

}  // namespace flashdistill
