#pragma once

#include "resset/rank_analysis.hpp"
#include "resset/tensor.hpp"

namespace resset {

// Negative nuclear norm of a feature matrix and its subgradient -U V^T.
struct RegResult {
    double value = 0.0;
    UnfoldedMatrix gradient;
    Spectrum spectrum;
};

// Singular values below this fraction of sigma_max are left out of -U V^T.
inline constexpr double kRegGradientCutoff = 1e-12;

double da_reg_value(const UnfoldedMatrix& f);
UnfoldedMatrix da_reg_grad(const UnfoldedMatrix& f);

// Value, gradient and spectrum from a single decomposition. Very wide,
// well-conditioned inputs go through the Gram matrix instead of a thin SVD.
RegResult da_reg(const UnfoldedMatrix& f);

}  // namespace resset
