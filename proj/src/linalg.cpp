#include "resset/linalg.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

#include "resset/errors.hpp"

namespace resset {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMajor> as_eigen(const UnfoldedMatrix& m) {
    return Eigen::Map<const RowMajor>(m.data.data(), m.rows, m.cols);
}

void require_finite(const UnfoldedMatrix& m) {
    for (double v : m.data)
        if (!std::isfinite(v)) throw NumericError("svd: input contains NaN or Inf");
}

template <typename Derived>
UnfoldedMatrix from_eigen(const Eigen::MatrixBase<Derived>& e) {
    UnfoldedMatrix out(static_cast<int>(e.rows()), static_cast<int>(e.cols()));
    Eigen::Map<RowMajor>(out.data.data(), out.rows, out.cols) = e;
    return out;
}

struct Factors {
    Eigen::VectorXd s;
    Eigen::MatrixXd u;  // tall side
    Eigen::MatrixXd v;  // short side
};

// SVD of a tall matrix (rows >= cols). Strongly tall inputs are first reduced by
// an unpivoted Householder QR so the Jacobi sweep only sees the cols x cols factor.
Factors tall_svd(const Eigen::MatrixXd& a, bool want_factors) {
    const Eigen::Index n = a.cols();
    Factors f;
    if (a.rows() >= 2 * n) {
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
        const Eigen::MatrixXd r = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
        if (!want_factors) {
            f.s = Eigen::JacobiSVD<Eigen::MatrixXd>(r).singularValues();
            return f;
        }
        Eigen::JacobiSVD<Eigen::MatrixXd> small(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
        f.s = small.singularValues();
        f.u = Eigen::MatrixXd::Zero(a.rows(), n);
        f.u.topRows(n) = small.matrixU();
        f.u.applyOnTheLeft(qr.householderQ());
        f.v = small.matrixV();
        return f;
    }
    if (!want_factors) {
        f.s = Eigen::JacobiSVD<Eigen::MatrixXd>(a).singularValues();
        return f;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> solver(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    f.s = solver.singularValues();
    f.u = solver.matrixU();
    f.v = solver.matrixV();
    return f;
}

std::vector<double> to_vector(const Eigen::VectorXd& s) {
    std::vector<double> out(s.data(), s.data() + s.size());
    for (double& v : out) v = std::max(v, 0.0);
    return out;
}

}  // namespace

SVDResult svd(const UnfoldedMatrix& m) {
    require_finite(m);
    SVDResult result;
    if (m.rows == 0 || m.cols == 0) {
        result.left = UnfoldedMatrix(m.rows, 0);
        result.right = UnfoldedMatrix(m.cols, 0);
        return result;
    }
    const bool wide = m.cols > m.rows;
    const Eigen::MatrixXd a = wide ? Eigen::MatrixXd(as_eigen(m).transpose())
                                   : Eigen::MatrixXd(as_eigen(m));
    const Factors f = tall_svd(a, true);
    result.singular_values = to_vector(f.s);
    result.left = from_eigen(wide ? f.v : f.u);
    result.right = from_eigen(wide ? f.u : f.v);
    return result;
}

std::vector<double> singular_values(const UnfoldedMatrix& m) {
    require_finite(m);
    if (m.rows == 0 || m.cols == 0) return {};
    const bool wide = m.cols > m.rows;
    const Eigen::MatrixXd a = wide ? Eigen::MatrixXd(as_eigen(m).transpose())
                                   : Eigen::MatrixXd(as_eigen(m));
    return to_vector(tall_svd(a, false).s);
}

int numeric_rank(const UnfoldedMatrix& m, double rel_tol) {
    const std::vector<double> s = singular_values(m);
    if (s.empty() || s.front() == 0.0) return 0;
    const double cutoff = rel_tol * s.front();
    return static_cast<int>(std::count_if(s.begin(), s.end(), [&](double v) { return v > cutoff; }));
}

}  // namespace resset
