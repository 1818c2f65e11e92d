// ergodyn.hpp
// Exact ergotropy, passive states, block coarse-graining, the global basis
// change U_gl, and observational ergotropy.

#pragma once

#include <algorithm>
#include <numeric>

#include "ergolab/qcore.hpp"

namespace ergolab {

// ---------------------------------------------------------------------------
// MeasurementSetting
// ---------------------------------------------------------------------------

// A projective measurement {P_i} with M equal blocks of dimension 2^r and an
// explicit ordered orthonormal basis per block. The basis ordering matters:
// it defines how U_gl maps block vectors onto energy eigenvectors.
class MeasurementSetting {
public:
    static MeasurementSetting from_block_bases(std::vector<ComplexMatrix> bases) {
        return MeasurementSetting(std::move(bases));
    }

    // Derive per-block bases from projectors: the eigenvectors of P_i with
    // eigenvalue ~1, in solver order with fixed phases (deterministic).
    static MeasurementSetting from_projectors(const std::vector<ComplexMatrix>& projectors) {
        if (projectors.empty())
            throw InvalidDimensionError("MeasurementSetting: no projectors");
        std::vector<ComplexMatrix> bases;
        bases.reserve(projectors.size());
        for (const auto& p : projectors) {
            require_square(p, "MeasurementSetting");
            if (hermiticity_defect(p) > 1e-10 || max_abs_diff(p * p, p) > 1e-10)
                throw ContractViolationError("MeasurementSetting: input is not a projector");
            const EigResult eig = eig_hermitian(p);
            std::vector<Eigen::Index> keep;
            for (Eigen::Index k = 0; k < eig.values.size(); ++k)
                if (eig.values[k] > 0.5) keep.push_back(k);
            if (keep.empty())
                throw ContractViolationError("MeasurementSetting: projector has empty support");
            ComplexMatrix b(p.rows(), static_cast<Eigen::Index>(keep.size()));
            for (std::size_t c = 0; c < keep.size(); ++c) b.col(static_cast<Eigen::Index>(c)) = eig.vectors.col(keep[c]);
            bases.push_back(std::move(b));
        }
        return MeasurementSetting(std::move(bases));
    }

    int block_count() const { return static_cast<int>(bases_.size()); }
    Eigen::Index block_dim() const { return bases_[0].cols(); }
    int block_qubits() const { return r_; }
    Eigen::Index dim() const { return bases_[0].rows(); }

    const ComplexMatrix& block_basis(int i) const { return bases_.at(static_cast<std::size_t>(i)); }
    const ComplexMatrix& projector(int i) const { return projectors_.at(static_cast<std::size_t>(i)); }
    const std::vector<ComplexMatrix>& projectors() const { return projectors_; }

private:
    explicit MeasurementSetting(std::vector<ComplexMatrix> bases) : bases_(std::move(bases)) {
        if (bases_.empty())
            throw InvalidDimensionError("MeasurementSetting: no blocks");
        const Eigen::Index n = bases_[0].rows();
        const Eigen::Index bd = bases_[0].cols();
        if (bd < 1 || (bd & (bd - 1)) != 0)
            throw ContractViolationError("MeasurementSetting: block dimension must be a power of two");
        r_ = std::countr_zero(static_cast<std::uint64_t>(bd));
        ComplexMatrix sum = ComplexMatrix::Zero(n, n);
        for (const auto& b : bases_) {
            if (b.rows() != n || b.cols() != bd)
                throw InvalidDimensionError("MeasurementSetting: blocks have unequal shape");
            if (!all_finite(b))
                throw ContractViolationError("MeasurementSetting: non-finite basis entries");
            if (max_abs_diff(b.adjoint() * b, ComplexMatrix::Identity(bd, bd)) > 1e-10)
                throw ContractViolationError("MeasurementSetting: block basis is not orthonormal");
            projectors_.push_back(b * b.adjoint());
            sum += projectors_.back();
        }
        if (max_abs_diff(sum, ComplexMatrix::Identity(n, n)) > 1e-10)
            throw ContractViolationError("MeasurementSetting: projectors do not resolve the identity");
    }

    std::vector<ComplexMatrix> bases_;
    std::vector<ComplexMatrix> projectors_;
    int r_ = 0;
};

// ---------------------------------------------------------------------------
// Ergotropy
// ---------------------------------------------------------------------------

struct ErgotropyResult {
    double value = 0.0;
    ComplexMatrix v_gl;     // optimal extraction unitary
    DensityMatrix passive;  // V rho V^dagger
};

namespace detail {

// Indices sorting xs in nonincreasing order; ties keep the original order.
inline std::vector<Eigen::Index> stable_descending_order(const std::vector<double>& xs) {
    std::vector<Eigen::Index> order(xs.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return xs[static_cast<std::size_t>(a)] > xs[static_cast<std::size_t>(b)]; });
    return order;
}

} // namespace detail

// Ergotropy value only: Tr[H rho] minus the passive energy (descending
// populations paired with ascending energies). Cheap path for sampling loops.
inline double ergotropy_value(const DensityMatrix& rho, const HamiltonianSpec& h) {
    if (rho.dim() != h.dim())
        throw InvalidDimensionError("ergotropy_value: dimension mismatch");
    RealVector lam = eigvals_hermitian(rho.matrix());  // ascending
    const Eigen::Index n = lam.size();
    double passive_energy = 0.0;
    for (Eigen::Index k = 0; k < n; ++k)
        passive_energy += h.eigenvalues()[k] * lam[n - 1 - k];
    return expectation(h.matrix(), rho) - passive_energy;
}

// Full ergotropy computation. V_gl maps the descending-eigenvalue basis of
// rho onto the canonical ascending-energy eigenbasis of H; ties in the rho
// spectrum are broken stably by the solver's original ordering.
inline ErgotropyResult ergotropy_exact(const DensityMatrix& rho, const HamiltonianSpec& h) {
    if (rho.dim() != h.dim())
        throw InvalidDimensionError("ergotropy_exact: dimension mismatch");
    const EigResult eig = eig_hermitian(rho.matrix());
    const Eigen::Index n = rho.dim();
    std::vector<double> lam(static_cast<std::size_t>(n));
    for (Eigen::Index k = 0; k < n; ++k) lam[static_cast<std::size_t>(k)] = eig.values[k];
    const auto order = detail::stable_descending_order(lam);

    ComplexMatrix v = ComplexMatrix::Zero(n, n);
    for (Eigen::Index k = 0; k < n; ++k)
        v += h.eigenvectors().col(k) * eig.vectors.col(order[static_cast<std::size_t>(k)]).adjoint();

    ComplexMatrix passive = v * rho.matrix() * v.adjoint();
    passive = (passive + passive.adjoint()) / 2.0;
    passive /= passive.trace().real();
    DensityMatrix passive_state(passive);
    const double value = expectation(h.matrix(), rho) - expectation(h.matrix(), passive_state);
    return {value, std::move(v), std::move(passive_state)};
}

// ---------------------------------------------------------------------------
// Coarse-graining channels
// ---------------------------------------------------------------------------

inline std::vector<double> block_probabilities(const DensityMatrix& rho, const MeasurementSetting& ms) {
    if (rho.dim() != ms.dim())
        throw InvalidDimensionError("block_probabilities: dimension mismatch");
    std::vector<double> p(static_cast<std::size_t>(ms.block_count()));
    for (int i = 0; i < ms.block_count(); ++i) {
        const auto& b = ms.block_basis(i);
        double v = (b.adjoint() * rho.matrix() * b).trace().real();
        p[static_cast<std::size_t>(i)] = std::clamp(v, 0.0, 1.0);
    }
    return p;
}

// rho_bar = sum_i P_i rho P_i  (removes inter-block coherences).
inline DensityMatrix block_dephase(const DensityMatrix& rho, const MeasurementSetting& ms) {
    if (rho.dim() != ms.dim())
        throw InvalidDimensionError("block_dephase: dimension mismatch");
    ComplexMatrix out = ComplexMatrix::Zero(rho.dim(), rho.dim());
    for (const auto& p : ms.projectors()) out += p * rho.matrix() * p;
    out = (out + out.adjoint()) / 2.0;
    out /= out.trace().real();
    return DensityMatrix(out);
}

// rho_tilde = sum_i p_i P_i / Tr[P_i]  (each block fully randomized).
inline DensityMatrix block_randomize(const DensityMatrix& rho, const MeasurementSetting& ms) {
    const auto p = block_probabilities(rho, ms);
    ComplexMatrix out = ComplexMatrix::Zero(rho.dim(), rho.dim());
    const double bd = static_cast<double>(ms.block_dim());
    for (int i = 0; i < ms.block_count(); ++i)
        out += (p[static_cast<std::size_t>(i)] / bd) * ms.projector(i);
    out /= out.trace().real();
    return DensityMatrix(out);
}

// ---------------------------------------------------------------------------
// Global unitary
// ---------------------------------------------------------------------------

struct GlobalUnitaryRecord {
    ComplexMatrix matrix;
    std::vector<int> permutation;           // permutation[rank] = block index
    std::vector<double> probabilities_used; // the p values that fixed the order
};

// U_gl Sigma: block pi(rank) (in its stated basis order) is mapped onto the
// rank-th slice of the ascending-energy eigenbasis, where pi sorts `probs`
// nonincreasing with stable tie-breaking.
inline GlobalUnitaryRecord build_global_unitary(const MeasurementSetting& ms,
                                                const HamiltonianSpec& h,
                                                const std::vector<double>& probs) {
    if (static_cast<int>(probs.size()) != ms.block_count())
        throw InvalidDimensionError("build_global_unitary: probability count mismatch");
    if (h.dim() != ms.dim())
        throw InvalidDimensionError("build_global_unitary: dimension mismatch");
    for (double p : probs)
        if (!(p >= -1e-12 && p <= 1.0 + 1e-12))
            throw ContractViolationError("build_global_unitary: probability outside [0,1]");

    const auto order = detail::stable_descending_order(probs);
    const Eigen::Index bd = ms.block_dim();
    ComplexMatrix u = ComplexMatrix::Zero(ms.dim(), ms.dim());
    std::vector<int> perm(order.size());
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        const int i = static_cast<int>(order[rank]);
        perm[rank] = i;
        u += h.eigenvectors().middleCols(static_cast<Eigen::Index>(rank) * bd, bd) *
             ms.block_basis(i).adjoint();
    }
    if (max_abs_diff(u * u.adjoint(), ComplexMatrix::Identity(ms.dim(), ms.dim())) > 1e-10)
        throw ContractViolationError("build_global_unitary: result is not unitary");
    return {std::move(u), std::move(perm), probs};
}

// Tr[H (rho - U_gl rho_tilde U_gl^+)] with exact block probabilities.
// A lower bound on ergotropy_exact; may be negative for unfavourable
// measurement choices, so no sign is asserted here.
inline double observational_ergotropy_exact(const DensityMatrix& rho,
                                            const HamiltonianSpec& h,
                                            const MeasurementSetting& ms) {
    const auto p = block_probabilities(rho, ms);
    const DensityMatrix rho_tilde = block_randomize(rho, ms);
    const auto ugl = build_global_unitary(ms, h, p);
    const ComplexMatrix rotated = ugl.matrix * rho_tilde.matrix() * ugl.matrix.adjoint();
    return expectation(h.matrix(), rho) - (h.matrix() * rotated).trace().real();
}

} // namespace ergolab
