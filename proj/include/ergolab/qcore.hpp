// qcore.hpp
// Quantum-state primitives: Pauli strings in symplectic form, validated
// density matrices, Hamiltonians with cached spectral data, and the dense
// Hermitian eigensolver shared by every other module.

#pragma once

#include <Eigen/Eigenvalues>
#include <bit>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ergolab/linalg.hpp"

namespace ergolab {

// ---------------------------------------------------------------------------
// PauliString
// ---------------------------------------------------------------------------

// An n-qubit Pauli string stored as X/Z bitmasks. Bit b of the masks acts on
// bit b of the computational-basis index (bit 0 = rightmost ket label).
// The dense form uses the Hermitian representative on each qubit:
//   (x,z) = (0,0) -> I, (1,0) -> X, (0,1) -> Z, (1,1) -> Y,
// so every string is unitary, Hermitian, and squares to the identity.
// Group phases are intentionally not represented: the string is only ever
// used through conjugation, which is phase-invariant.
struct PauliString {
    int n = 0;
    std::uint64_t x_bits = 0;
    std::uint64_t z_bits = 0;

    PauliString() = default;
    PauliString(int n_qubits, std::uint64_t x, std::uint64_t z)
        : n(n_qubits), x_bits(x), z_bits(z) {
        if (n < 0 || n > 62)
            throw InvalidDimensionError("PauliString: qubit count out of range");
        const std::uint64_t mask = n == 0 ? 0 : ((std::uint64_t{1} << n) - 1);
        if ((x_bits & ~mask) != 0 || (z_bits & ~mask) != 0)
            throw ContractViolationError("PauliString: bits outside the qubit range");
    }

    bool is_identity() const { return x_bits == 0 && z_bits == 0; }

    // True iff this string commutes with other (symplectic inner product 0).
    bool commutes_with(const PauliString& other) const {
        const int s = std::popcount(x_bits & other.z_bits) +
                      std::popcount(z_bits & other.x_bits);
        return (s & 1) == 0;
    }

    // Amplitude of column k: P|k> = phase(k)|k ^ x_bits>.
    cdouble column_phase(std::uint64_t k) const {
        static constexpr cdouble i_pow[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
        const int y_count = std::popcount(x_bits & z_bits);
        const int sign = std::popcount(k & z_bits) & 1;
        cdouble ph = i_pow[y_count & 3];
        return sign ? -ph : ph;
    }

    ComplexMatrix dense() const {
        const Eigen::Index dim = Eigen::Index{1} << n;
        ComplexMatrix m = ComplexMatrix::Zero(dim, dim);
        for (std::uint64_t k = 0; k < static_cast<std::uint64_t>(dim); ++k)
            m(static_cast<Eigen::Index>(k ^ x_bits), static_cast<Eigen::Index>(k)) = column_phase(k);
        return m;
    }

    std::string label() const {
        std::string s;
        for (int b = n - 1; b >= 0; --b) {
            const int xb = static_cast<int>((x_bits >> b) & 1);
            const int zb = static_cast<int>((z_bits >> b) & 1);
            s += "IXZY"[xb + 2 * zb];
        }
        return s.empty() ? "I" : s;
    }

    bool operator==(const PauliString& other) const = default;
};

// P A Q^dagger for Pauli strings P, Q and a dense matrix A of matching size.
// Exploits the monomial structure, O(dim^2).
inline ComplexMatrix pauli_sandwich(const PauliString& p, const ComplexMatrix& a,
                                    const PauliString& q) {
    const Eigen::Index dim = Eigen::Index{1} << p.n;
    if (a.rows() != dim || a.cols() != dim || q.n != p.n)
        throw InvalidDimensionError("pauli_sandwich: dimension mismatch");
    ComplexMatrix out(dim, dim);
    for (Eigen::Index v = 0; v < dim; ++v) {
        const std::uint64_t vq = static_cast<std::uint64_t>(v) ^ q.x_bits;
        const cdouble cq = std::conj(q.column_phase(vq));
        for (Eigen::Index u = 0; u < dim; ++u) {
            const std::uint64_t up = static_cast<std::uint64_t>(u) ^ p.x_bits;
            out(u, v) = p.column_phase(up) * cq * a(static_cast<Eigen::Index>(up), static_cast<Eigen::Index>(vq));
        }
    }
    return out;
}

inline ComplexMatrix pauli_conjugate(const PauliString& p, const ComplexMatrix& a) {
    return pauli_sandwich(p, a, p);
}

// ---------------------------------------------------------------------------
// DensityMatrix
// ---------------------------------------------------------------------------

inline constexpr double kHermTol = 1e-12;
inline constexpr double kTraceTol = 1e-12;
inline constexpr double kPsdTol = -1e-10;

// A validated quantum state: Hermitian, unit trace, PSD within tolerance.
class DensityMatrix {
public:
    explicit DensityMatrix(ComplexMatrix m) : mat_(std::move(m)) {
        require_square(mat_, "DensityMatrix");
        if (mat_.rows() < 1 || mat_.rows() > kMaxDim)
            throw InvalidDimensionError("DensityMatrix: dimension out of range");
        if (!all_finite(mat_))
            throw ContractViolationError("DensityMatrix: non-finite entries");
        if (hermiticity_defect(mat_) > kHermTol)
            throw ContractViolationError("DensityMatrix: not Hermitian");
        if (std::abs(mat_.trace().real() - 1.0) > kTraceTol ||
            std::abs(mat_.trace().imag()) > kTraceTol)
            throw ContractViolationError("DensityMatrix: trace is not 1");
        Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(mat_, Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() < kPsdTol)
            throw ContractViolationError("DensityMatrix: not positive semidefinite");
    }

    Eigen::Index dim() const { return mat_.rows(); }
    const ComplexMatrix& matrix() const { return mat_; }

private:
    ComplexMatrix mat_;
};

// ---------------------------------------------------------------------------
// Hermitian eigendecomposition
// ---------------------------------------------------------------------------

struct EigResult {
    RealVector values;      // ascending
    ComplexMatrix vectors;  // orthonormal columns, phase-fixed
};

// A = V diag(values) V^dagger with ascending eigenvalues. Eigenvector phases
// are fixed deterministically (largest-magnitude entry real positive).
inline EigResult eig_hermitian(const ComplexMatrix& a) {
    require_square(a, "eig_hermitian");
    if (!all_finite(a))
        throw ContractViolationError("eig_hermitian: non-finite entries");
    if (hermiticity_defect(a) > 1e-10)
        throw ContractViolationError("eig_hermitian: input is not Hermitian");
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(a);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("eig_hermitian: eigensolver failed");
    EigResult out{es.eigenvalues(), es.eigenvectors()};
    for (Eigen::Index k = 0; k < out.vectors.cols(); ++k)
        fix_column_phase(out.vectors.col(k));
    return out;
}

// Eigenvalues only (ascending); cheaper when vectors are not needed.
inline RealVector eigvals_hermitian(const ComplexMatrix& a) {
    require_square(a, "eigvals_hermitian");
    if (hermiticity_defect(a) > 1e-10)
        throw ContractViolationError("eigvals_hermitian: input is not Hermitian");
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(a, Eigen::EigenvaluesOnly);
    return es.eigenvalues();
}

// ---------------------------------------------------------------------------
// HamiltonianSpec
// ---------------------------------------------------------------------------

struct PauliTerm {
    double coeff = 0.0;
    PauliString op;
};

struct EnergyLevel {
    double energy = 0.0;
    int degeneracy = 0;
    int offset = 0;  // first column of this level in the eigenvector matrix
};

// A dense Hermitian Hamiltonian with its sorted spectrum, degenerate levels
// grouped, and (optionally) a Pauli-sum form. Immutable after construction.
class HamiltonianSpec {
public:
    static HamiltonianSpec from_dense(ComplexMatrix h,
                                      std::optional<std::vector<PauliTerm>> terms = std::nullopt) {
        return HamiltonianSpec(std::move(h), std::move(terms));
    }

    static HamiltonianSpec from_pauli_terms(int n_qubits, std::vector<PauliTerm> terms) {
        const Eigen::Index dim = Eigen::Index{1} << n_qubits;
        ComplexMatrix h = ComplexMatrix::Zero(dim, dim);
        for (const auto& t : terms) {
            if (t.op.n != n_qubits)
                throw InvalidDimensionError("HamiltonianSpec: Pauli term qubit count mismatch");
            for (std::uint64_t k = 0; k < static_cast<std::uint64_t>(dim); ++k)
                h(static_cast<Eigen::Index>(k ^ t.op.x_bits), static_cast<Eigen::Index>(k)) +=
                    t.coeff * t.op.column_phase(k);
        }
        return HamiltonianSpec(std::move(h), std::move(terms));
    }

    Eigen::Index dim() const { return matrix_.rows(); }
    const ComplexMatrix& matrix() const { return matrix_; }
    const RealVector& eigenvalues() const { return eig_.values; }
    const ComplexMatrix& eigenvectors() const { return eig_.vectors; }
    const std::vector<EnergyLevel>& levels() const { return levels_; }
    double operator_norm() const { return operator_norm_; }
    const std::optional<std::vector<PauliTerm>>& pauli_terms() const { return pauli_terms_; }

    // Projector onto the eigensubspace of level a (computed on demand).
    ComplexMatrix level_projector(std::size_t a) const {
        const auto& lv = levels_.at(a);
        const auto cols = eig_.vectors.middleCols(lv.offset, lv.degeneracy);
        return cols * cols.adjoint();
    }

    // Tr[Q_a rho] without forming the projector.
    double level_population(std::size_t a, const ComplexMatrix& rho) const {
        const auto& lv = levels_.at(a);
        const auto cols = eig_.vectors.middleCols(lv.offset, lv.degeneracy);
        return (cols.adjoint() * rho * cols).trace().real();
    }

private:
    HamiltonianSpec(ComplexMatrix h, std::optional<std::vector<PauliTerm>> terms)
        : matrix_(std::move(h)), pauli_terms_(std::move(terms)) {
        require_square(matrix_, "HamiltonianSpec");
        if (matrix_.rows() < 1 || matrix_.rows() > kMaxDim)
            throw InvalidDimensionError("HamiltonianSpec: dimension out of range");
        if (hermiticity_defect(matrix_) > 1e-10)
            throw ContractViolationError("HamiltonianSpec: not Hermitian");
        eig_ = eig_hermitian(matrix_);
        const Eigen::Index n = matrix_.rows();
        operator_norm_ = std::max(std::abs(eig_.values[0]), std::abs(eig_.values[n - 1]));

        // Group degenerate levels with absolute tolerance 1e-9 * ||H||.
        const double tol = 1e-9 * operator_norm_;
        for (Eigen::Index k = 0; k < n; ++k) {
            if (!levels_.empty() && eig_.values[k] - levels_.back().energy <= tol) {
                auto& lv = levels_.back();
                lv.energy = (lv.energy * lv.degeneracy + eig_.values[k]) / (lv.degeneracy + 1);
                ++lv.degeneracy;
            } else {
                levels_.push_back({eig_.values[k], 1, static_cast<int>(k)});
            }
        }
        if (pauli_terms_) {
            // The stated Pauli sum must reproduce the dense matrix.
            ComplexMatrix rebuilt = ComplexMatrix::Zero(n, n);
            for (const auto& t : *pauli_terms_)
                for (std::uint64_t k = 0; k < static_cast<std::uint64_t>(n); ++k)
                    rebuilt(static_cast<Eigen::Index>(k ^ t.op.x_bits), static_cast<Eigen::Index>(k)) +=
                        t.coeff * t.op.column_phase(k);
            if (max_abs_diff(rebuilt, matrix_) > 1e-10)
                throw ContractViolationError("HamiltonianSpec: Pauli terms do not match the matrix");
        }
    }

    ComplexMatrix matrix_;
    EigResult eig_;
    std::vector<EnergyLevel> levels_;
    double operator_norm_ = 0.0;
    std::optional<std::vector<PauliTerm>> pauli_terms_;
};

// ---------------------------------------------------------------------------
// Hamiltonian builders
// ---------------------------------------------------------------------------

// Heisenberg ring  H_n = -J sum_j Z_j Z_{j+1} - h sum_j X_j  with periodic
// boundary (qubit n+1 identified with qubit 1). Pauli terms are kept in the
// order they are generated: all ZZ couplings, then all X fields.
inline HamiltonianSpec build_heisenberg_xxx(int n, double J, double h) {
    if (n < 2)
        throw InvalidDimensionError("build_heisenberg_xxx: need at least 2 qubits");
    std::vector<PauliTerm> terms;
    terms.reserve(static_cast<std::size_t>(2 * n));
    for (int j = 0; j < n; ++j) {
        const std::uint64_t z = (std::uint64_t{1} << j) | (std::uint64_t{1} << ((j + 1) % n));
        terms.push_back({-J, PauliString(n, 0, z)});
    }
    for (int j = 0; j < n; ++j)
        terms.push_back({-h, PauliString(n, std::uint64_t{1} << j, 0)});
    return HamiltonianSpec::from_pauli_terms(n, terms);
}

// Excitation-number Hamiltonian  H = sum_j (I - Z_j)/2; counts set bits of
// the basis index.
inline HamiltonianSpec build_number_hamiltonian(int n) {
    if (n < 1)
        throw InvalidDimensionError("build_number_hamiltonian: need at least 1 qubit");
    std::vector<PauliTerm> terms;
    terms.push_back({n / 2.0, PauliString(n, 0, 0)});
    for (int j = 0; j < n; ++j)
        terms.push_back({-0.5, PauliString(n, 0, std::uint64_t{1} << j)});
    return HamiltonianSpec::from_pauli_terms(n, terms);
}

// ---------------------------------------------------------------------------
// Misc state operations
// ---------------------------------------------------------------------------

// Reduced state on the first factor of an N x N' bipartition of a normalized
// pure state (index = i * N' + j with i on system A).
inline DensityMatrix partial_trace_b(const ComplexVector& psi, Eigen::Index n_a, Eigen::Index n_b) {
    if (n_a < 1 || n_b < 1 || psi.size() != n_a * n_b)
        throw InvalidDimensionError("partial_trace_b: dimension mismatch");
    if (std::abs(psi.norm() - 1.0) > 1e-12)
        throw ContractViolationError("partial_trace_b: state is not normalized");
    Eigen::Map<const Eigen::Matrix<cdouble, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
        m(psi.data(), n_a, n_b);
    ComplexMatrix rho = m * m.adjoint();
    rho = (rho + rho.adjoint()) / 2.0;  // clean rounding asymmetry
    rho /= rho.trace().real();
    return DensityMatrix(rho);
}

// Tr[O rho] for Hermitian O; the (tiny) imaginary residue is discarded.
inline double expectation(const ComplexMatrix& o, const DensityMatrix& rho) {
    require_square(o, "expectation");
    if (o.rows() != rho.dim())
        throw InvalidDimensionError("expectation: dimension mismatch");
    if (hermiticity_defect(o) > 1e-10)
        throw ContractViolationError("expectation: observable is not Hermitian");
    const cdouble tr = (o * rho.matrix()).trace();
    return tr.real();
}

} // namespace ergolab
