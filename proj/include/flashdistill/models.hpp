#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "flashdistill/tensor.hpp"

namespace flashdistill {

struct EpsMlpConfig {
    int sample_dim = 2;
    int n_classes = 8;
    int width = 64;
    int depth = 3;  // hidden layers
    int time_dim = 32;
    int cond_dim = 16;
};

// Conditional noise-prediction MLP over concat(x, time embedding, class
// embedding). The class table carries one extra row reserved as the learned
// null condition; that id is never a real class.
struct EpsModel {
    EpsMlpConfig cfg;
    std::vector<Tensor> w;  // depth+1 linear layers
    std::vector<Tensor> b;
    Tensor cond_table;      // [n_classes+1, cond_dim]

    int null_class() const { return cfg.n_classes; }
    std::size_t param_count() const;
    std::vector<Tensor*> params();
    std::vector<const Tensor*> params() const;
    std::vector<std::string> param_names() const;

    static EpsModel init(const EpsMlpConfig& cfg, std::uint64_t seed);

    // Tape-free forward; bitwise identical to the taped path.
    Tensor eval(const Tensor& x, std::span<const int> t, std::span<const int> cond) const;
};

// Parameter leaves of a model registered on one tape, so gradients can be
// queried after backward().
struct TapedEpsModel {
    const EpsModel* model = nullptr;
    std::vector<Tensor> w, b;
    Tensor cond_table;

    std::vector<Tensor> param_leaves() const;
};

TapedEpsModel register_eps_model(Tape& tape, const EpsModel& model);
Tensor eps_forward(Tape& tape, const TapedEpsModel& reg, const Tensor& x, std::span<const int> t,
                   std::span<const int> cond);

struct DiscMlpConfig {
    int sample_dim = 2;
    int width = 64;
    int depth = 2;
    int time_dim = 32;
};

// Time-conditioned MLP mapping a clean-space sample to one real-valued logit
// per row.
struct DiscModel {
    DiscMlpConfig cfg;
    std::vector<Tensor> w;
    std::vector<Tensor> b;

    std::size_t param_count() const;
    std::vector<Tensor*> params();
    std::vector<const Tensor*> params() const;
    std::vector<std::string> param_names() const;

    static DiscModel init(const DiscMlpConfig& cfg, std::uint64_t seed);

    Tensor eval(const Tensor& x, std::span<const int> t) const;  // [n,1] logits
};

struct TapedDiscModel {
    const DiscModel* model = nullptr;
    std::vector<Tensor> w, b;

    std::vector<Tensor> param_leaves() const;
};

TapedDiscModel register_disc_model(Tape& tape, const DiscModel& model);
Tensor disc_forward(Tape& tape, const TapedDiscModel& reg, const Tensor& x,
                    std::span<const int> t);

}  // namespace flashdistill
