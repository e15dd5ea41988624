#include "resset/diversity_reg.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <optional>

#include "resset/linalg.hpp"

namespace resset {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// -U V^T over the singular triplets above the cutoff.
UnfoldedMatrix negative_polar(const UnfoldedMatrix& f, const SVDResult& d) {
    UnfoldedMatrix g(f.rows, f.cols, MatrixOrigin::feature);
    if (d.singular_values.empty() || d.singular_values.front() == 0.0) return g;
    const double cutoff = kRegGradientCutoff * d.singular_values.front();
    Eigen::Index r = 0;
    while (r < static_cast<Eigen::Index>(d.singular_values.size()) &&
           d.singular_values[r] > cutoff)
        ++r;
    const int full = static_cast<int>(d.singular_values.size());
    Eigen::Map<const RowMajor> u(d.left.data.data(), d.left.rows, full);
    Eigen::Map<const RowMajor> v(d.right.data.data(), d.right.rows, full);
    Eigen::Map<RowMajor>(g.data.data(), g.rows, g.cols).noalias() =
        -u.leftCols(r) * v.leftCols(r).transpose();
    return g;
}

double negative_sum(const std::vector<double>& s) {
    double total = 0.0;
    for (double v : s) total += v;
    return -total;
}

}  // namespace

double da_reg_value(const UnfoldedMatrix& f) { return negative_sum(singular_values(f)); }

UnfoldedMatrix da_reg_grad(const UnfoldedMatrix& f) { return negative_polar(f, svd(f)); }

namespace {

// Very wide, well-conditioned feature matrices: eigen-decompose the rows x rows
// Gram matrix instead of running a thin SVD. -U V^T = -(U S^-1 U^T) F.
// Declines (returns nullopt) when sigma_min / sigma_max < kGramConditionFloor,
// where squaring the condition number would cost accuracy.
constexpr int kGramAspect = 32;
constexpr double kGramConditionFloor = 1e-4;

std::optional<RegResult> da_reg_gram(const UnfoldedMatrix& f) {
    if (f.rows < 1 || f.cols < kGramAspect * f.rows) return std::nullopt;
    for (double v : f.data)
        if (!std::isfinite(v)) return std::nullopt;
    Eigen::Map<const RowMajor> a(f.data.data(), f.rows, f.cols);
    const Eigen::MatrixXd gram = a * a.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
    if (es.info() != Eigen::Success) return std::nullopt;
    const Eigen::VectorXd& lam = es.eigenvalues();  // ascending
    const Eigen::Index n = lam.size();
    const double top = std::sqrt(std::max(lam(n - 1), 0.0));
    if (!(top > 0.0) || std::sqrt(std::max(lam(0), 0.0)) < kGramConditionFloor * top)
        return std::nullopt;

    RegResult out;
    Eigen::VectorXd inv(n);
    double total = 0.0;
    for (Eigen::Index i = n; i-- > 0;) {
        const double s = std::sqrt(lam(i));
        total += s;
        inv(i) = 1.0 / s;
        out.spectrum.values.push_back(s / top);
    }
    out.spectrum.values.front() = 1.0;
    out.value = -total;
    const Eigen::MatrixXd& u = es.eigenvectors();
    const Eigen::MatrixXd p = u * inv.asDiagonal() * u.transpose();
    out.gradient = UnfoldedMatrix(f.rows, f.cols, MatrixOrigin::feature);
    Eigen::Map<RowMajor>(out.gradient.data.data(), f.rows, f.cols).noalias() = -p * a;
    return out;
}

}  // namespace

RegResult da_reg(const UnfoldedMatrix& f) {
    if (auto fast = da_reg_gram(f)) return std::move(*fast);
    const SVDResult d = svd(f);
    RegResult out;
    out.value = negative_sum(d.singular_values);
    out.gradient = negative_polar(f, d);
    if (!d.singular_values.empty() && d.singular_values.front() > 0.0) {
        for (double v : d.singular_values) out.spectrum.values.push_back(v / d.singular_values.front());
        out.spectrum.values.front() = 1.0;
    }
    return out;
}

}  // namespace resset
