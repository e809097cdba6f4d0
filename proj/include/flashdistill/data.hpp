#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "flashdistill/tensor.hpp"

namespace flashdistill {

// Isotropic 2-d Gaussian mixture with a class label per mode. Factory specs
// come pre-standardized: the population is shifted/scaled so the mixture has
// zero mean and unit average per-coordinate variance, with the constants
// kept for mapping samples back to raw coordinates.
struct MixtureSpec {
    std::vector<std::array<double, 2>> centers;
    std::vector<double> scales;
    std::vector<int> class_of_mode;
    std::vector<double> weights;

    std::array<double, 2> shift{0.0, 0.0};  // raw = sample * scale_norm + shift
    double scale_norm = 1.0;

    int n_modes() const { return int(centers.size()); }
    int n_classes() const;
    void validate() const;
};

// Shift/scale a raw spec to zero mean and unit variance using the analytic
// mixture moments (independent of any sample draw).
MixtureSpec standardized(MixtureSpec raw);

MixtureSpec make_ring8();         // 8 modes on a ring, one class per mode
MixtureSpec make_rings();         // two concentric rings, class = ring
MixtureSpec make_checkerboard();  // 8 cells of a 4x4 board, two classes
MixtureSpec make_by_name(const std::string& name);

struct Dataset {
    Tensor samples;           // [n, 2]
    std::vector<int> labels;  // class per row
};

Dataset gen_dataset(const MixtureSpec& spec, std::size_t n, std::uint64_t seed);

struct ModeAssignment {
    int mode;
    int cls;
};

// Most likely generating mode by Gaussian responsibilities; ties go to the
// lowest mode index.
ModeAssignment posterior_mode(double x, double y, const MixtureSpec& spec);

}  // namespace flashdistill
