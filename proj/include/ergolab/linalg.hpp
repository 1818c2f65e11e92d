// linalg.hpp
// Dense complex linear algebra helpers on top of Eigen. Everything in the
// library works with column-major Eigen matrices; "ComplexMatrix" is the
// storage type for operators and unitaries.

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <span>
#include <vector>

#include "ergolab/errors.hpp"

namespace ergolab {

using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;
using cdouble = std::complex<double>;

// Largest supported operator dimension (dense storage throughout).
inline constexpr Eigen::Index kMaxDim = 4096;

inline bool all_finite(const ComplexMatrix& a) {
    return a.allFinite();
}

inline double max_abs(const ComplexMatrix& a) {
    if (a.size() == 0) return 0.0;
    return a.cwiseAbs().maxCoeff();
}

// max-norm distance, used by most tolerance checks
inline double max_abs_diff(const ComplexMatrix& a, const ComplexMatrix& b) {
    return max_abs(a - b);
}

inline double hermiticity_defect(const ComplexMatrix& a) {
    return max_abs_diff(a, a.adjoint());
}

inline bool is_hermitian(const ComplexMatrix& a, double tol) {
    return a.rows() == a.cols() && hermiticity_defect(a) <= tol;
}

inline ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b) {
    ComplexMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

inline void require_square(const ComplexMatrix& a, const char* who) {
    if (a.rows() != a.cols())
        throw InvalidDimensionError(std::string(who) + ": matrix is not square");
}

inline void require_same_dim(const ComplexMatrix& a, const ComplexMatrix& b, const char* who) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw InvalidDimensionError(std::string(who) + ": dimension mismatch");
}

// Fix the global phase of a column vector so that its largest-magnitude
// entry is real and positive (ties broken by the smallest index). Used to
// make eigenbases reproducible.
inline void fix_column_phase(Eigen::Ref<ComplexVector> v) {
    Eigen::Index best = 0;
    double best_mag = 0.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        const double m = std::abs(v[i]);
        if (m > best_mag + 1e-14) {
            best_mag = m;
            best = i;
        }
    }
    if (best_mag > 0.0) v *= std::conj(v[best]) / best_mag;
}

// Deterministic pairwise (cascade) summation; the reduction used for all
// shot aggregates so results do not depend on the number of workers.
inline double pairwise_sum(std::span<const double> xs) {
    if (xs.size() <= 32) {
        double s = 0.0;
        for (double x : xs) s += x;
        return s;
    }
    const size_t half = xs.size() / 2;
    return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

inline double pairwise_sum(const std::vector<double>& xs) {
    return pairwise_sum(std::span<const double>(xs));
}

} // namespace ergolab
