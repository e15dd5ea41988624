#pragma once

#include <cstdint>
#include <random>

#include "resset/conv_schemes.hpp"
#include "resset/tensor.hpp"

namespace resset {

// Relative gap |a - n| / max(|a|, |n|, floor) between analytic and numeric values.
double relative_gap(double analytic, double numeric, double floor);

// Finite-difference suites for DA-Reg and the full denoiser.
struct GradCheckOptions {
    std::uint64_t seed = 0;
    int reg_trials = 100;
    int reg_max_rows = 16;
    int reg_max_cols = 64;
    double reg_min_gap = 0.1;
    double reg_step = 1e-5;
    double reg_floor = 1e-3;

    KernelScheme scheme = KernelScheme::make(Variant::ReS3_1D);
    int M = 4;
    int blocks = 2;
    int bands = 6;
    int height = 8;
    int width = 8;
    double lambda = 1e-2;  // DA-Reg weight inside the network objective
    int net_samples = 20;
    double net_step = 1e-4;
    double net_floor = 1e-6;

    bool wrong_sign = false;  // negates analytic gradients to exercise failure paths
};

struct GradCheckReport {
    double reg_max_error = 0.0;
    double net_max_error = 0.0;
    long reg_entries = 0;
    int net_samples = 0;
    int net_skipped = 0;  // candidates whose perturbation crossed a rectifier kink
    std::size_t net_parameters = 0;
};

// Random matrix whose singular values are pairwise at least `min_gap` apart
// and no smaller than `min_gap`.
UnfoldedMatrix gap_separated_matrix(std::mt19937_64& rng, int rows, int cols, double min_gap);

GradCheckReport check_reg_gradient(const GradCheckOptions& opts);
GradCheckReport check_network_gradient(const GradCheckOptions& opts);
GradCheckReport run_grad_check(const GradCheckOptions& opts);

}  // namespace resset
