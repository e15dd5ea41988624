#pragma once

#include <vector>

#include "resset/tensor.hpp"

namespace resset {

inline constexpr double kDefaultRankTolerance = 1e-9;

// Thin SVD: m = left * diag(singular_values) * right^T, r = min(rows, cols).
struct SVDResult {
    std::vector<double> singular_values;  // non-increasing, >= 0
    UnfoldedMatrix left;                  // rows x r, orthonormal columns
    UnfoldedMatrix right;                 // cols x r, orthonormal columns
};

// Throws NumericError on non-finite input.
SVDResult svd(const UnfoldedMatrix& m);

// Singular values only; cheaper than svd() when factors are not needed.
std::vector<double> singular_values(const UnfoldedMatrix& m);

// Number of singular values above rel_tol * sigma_max; 0 for a zero matrix.
int numeric_rank(const UnfoldedMatrix& m, double rel_tol = kDefaultRankTolerance);

}  // namespace resset
