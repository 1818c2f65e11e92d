// fixtures.hpp
// Named reference states and measurement settings used by the experiment
// runner and the regression suite.

#pragma once

#include <functional>
#include <map>
#include <string>

#include "ergolab/ergodyn.hpp"

namespace ergolab::fixtures {

namespace detail {

inline ComplexVector basis_vector(Eigen::Index dim, Eigen::Index k) {
    ComplexVector v = ComplexVector::Zero(dim);
    v[k] = 1.0;
    return v;
}

// Eigenvectors of the 3-qubit excitation-number Hamiltonian in canonical
// ascending-energy order: |000>, |001>, |010>, |100>, |011>, |101>, |110>, |111>.
inline std::vector<ComplexVector> number3_eigenbasis() {
    const Eigen::Index order[8] = {0, 1, 2, 4, 3, 5, 6, 7};
    std::vector<ComplexVector> phi;
    phi.reserve(8);
    for (Eigen::Index k : order) phi.push_back(basis_vector(8, k));
    return phi;
}

} // namespace detail

// ---------------------------------------------------------------------------
// States
// ---------------------------------------------------------------------------

// 3-qubit benchmark state: equal mixture of a coherent superposition over the
// three lowest levels, an alternating-sign superposition over the middle
// levels, and a classical mixture of the two highest levels. Energy 29/18,
// ergotropy 17/18 under the excitation-number Hamiltonian.
inline DensityMatrix appendix_d_rho() {
    const auto phi = detail::number3_eigenbasis();
    ComplexMatrix rho = ComplexMatrix::Zero(8, 8);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            rho += (1.0 / 9.0) * phi[static_cast<std::size_t>(i)] * phi[static_cast<std::size_t>(j)].adjoint();
    for (int i = 3; i < 6; ++i)
        for (int j = 3; j < 6; ++j)
            rho += (((i + j) % 2 == 0) ? 1.0 : -1.0) / 9.0 *
                   phi[static_cast<std::size_t>(i)] * phi[static_cast<std::size_t>(j)].adjoint();
    for (int i = 6; i < 8; ++i)
        rho += (1.0 / 6.0) * phi[static_cast<std::size_t>(i)] * phi[static_cast<std::size_t>(i)].adjoint();
    return DensityMatrix(rho);
}

// 3-qubit state for the Heisenberg-ring benchmark:
//   |11><11| (x) I_2 / 4 + |psi><psi| / 2,  psi = (-|011> + |100> + |101>)/sqrt(3).
inline DensityMatrix fig2_rho() {
    ComplexMatrix rho = ComplexMatrix::Zero(8, 8);
    rho(6, 6) = 0.25;
    rho(7, 7) = 0.25;
    ComplexVector psi = ComplexVector::Zero(8);
    psi[3] = -1.0 / std::sqrt(3.0);
    psi[4] = 1.0 / std::sqrt(3.0);
    psi[5] = 1.0 / std::sqrt(3.0);
    rho += 0.5 * psi * psi.adjoint();
    return DensityMatrix(rho);
}

// 4-qubit state for the Heisenberg-ring benchmark: mixture of |0010>, |0111>
// and a GHZ-like 4-term superposition.
inline DensityMatrix eta4() {
    ComplexMatrix rho = ComplexMatrix::Zero(16, 16);
    rho(0b0010, 0b0010) = 0.25;
    rho(0b0111, 0b0111) = 0.25;
    ComplexVector psi = ComplexVector::Zero(16);
    psi[0b0000] = 0.5;
    psi[0b0001] = 0.5;
    psi[0b1110] = 0.5;
    psi[0b1111] = 0.5;
    rho += 0.5 * psi * psi.adjoint();
    return DensityMatrix(rho);
}

// ---------------------------------------------------------------------------
// Measurement settings
// ---------------------------------------------------------------------------

// Four Bell-type blocks on the first two qubits of a 3-qubit system; the
// stated basis ordering fixes how U_gl maps block vectors to energy levels.
inline MeasurementSetting appendix_d_entangled() {
    const auto phi = detail::number3_eigenbasis();
    const double s2 = 1.0 / std::sqrt(2.0);
    auto pair_basis = [&](int a, int b, double sign) {
        ComplexMatrix m(8, 2);
        m.col(0) = s2 * (phi[static_cast<std::size_t>(a)] + sign * phi[6]);
        m.col(1) = s2 * (phi[static_cast<std::size_t>(b)] + sign * phi[7]);
        return m;
    };
    std::vector<ComplexMatrix> bases;
    bases.push_back(pair_basis(0, 1, 1.0));   // (phi1 + phi7, phi2 + phi8)/sqrt2
    bases.push_back(pair_basis(0, 1, -1.0));  // (phi1 - phi7, phi2 - phi8)/sqrt2
    ComplexMatrix b3(8, 2), b4(8, 2);
    b3.col(0) = s2 * (phi[2] + phi[3]);
    b3.col(1) = s2 * (phi[4] + phi[5]);
    b4.col(0) = s2 * (phi[2] - phi[3]);
    b4.col(1) = s2 * (phi[4] - phi[5]);
    bases.push_back(b3);
    bases.push_back(b4);
    return MeasurementSetting::from_block_bases(std::move(bases));
}

// Computational-basis readout of the first two qubits: M = 4 blocks
// |b><b| (x) I_{N/4} with the natural within-block ordering. Works for any
// n >= 2 qubits.
inline MeasurementSetting two_qubit_blocks(int n_qubits) {
    if (n_qubits < 2)
        throw InvalidDimensionError("two_qubit_blocks: need at least 2 qubits");
    const Eigen::Index dim = Eigen::Index{1} << n_qubits;
    const Eigen::Index sub = dim / 4;
    std::vector<ComplexMatrix> bases;
    for (Eigen::Index b = 0; b < 4; ++b) {
        ComplexMatrix cols = ComplexMatrix::Zero(dim, sub);
        for (Eigen::Index t = 0; t < sub; ++t) cols(b * sub + t, t) = 1.0;
        bases.push_back(std::move(cols));
    }
    return MeasurementSetting::from_block_bases(std::move(bases));
}

inline MeasurementSetting appendix_d_product() { return two_qubit_blocks(3); }

// ---------------------------------------------------------------------------
// Catalog
// ---------------------------------------------------------------------------

struct StateEntry {
    std::string description;
    std::function<DensityMatrix()> build;
};

struct MeasurementEntry {
    std::string description;
    // Builds the setting for an n-qubit system; throws if incompatible.
    std::function<MeasurementSetting(int)> build;
};

inline const std::map<std::string, StateEntry>& state_catalog() {
    static const std::map<std::string, StateEntry> catalog = {
        {"appendixD_rho",
         {"3-qubit mixture with coherences across the excitation-number levels "
          "(energy 29/18, ergotropy 17/18)",
          [] { return appendix_d_rho(); }}},
        {"fig2_rho",
         {"3-qubit state |11><11| (x) I/4 + |psi><psi|/2 for the Heisenberg-ring "
          "benchmark (ergotropy ~2.53)",
          [] { return fig2_rho(); }}},
        {"eta4",
         {"4-qubit mixture of two basis states and a GHZ-like superposition "
          "(ergotropy ~2.86 on the 4-spin Heisenberg ring)",
          [] { return eta4(); }}},
    };
    return catalog;
}

inline const std::map<std::string, MeasurementEntry>& measurement_catalog() {
    static const std::map<std::string, MeasurementEntry> catalog = {
        {"appendixD_entangled",
         {"four Bell-type 2-dimensional blocks on the first two qubits (3-qubit "
          "systems only)",
          [](int n) {
              if (n != 3)
                  throw InvalidDimensionError("appendixD_entangled: defined for 3 qubits");
              return appendix_d_entangled();
          }}},
        {"appendixD_product",
         {"computational readout of the first two qubits of a 3-qubit system",
          [](int n) {
              if (n != 3)
                  throw InvalidDimensionError("appendixD_product: defined for 3 qubits");
              return appendix_d_product();
          }}},
        {"two_qubit_blocks",
         {"computational readout of the first two qubits; blocks |b><b| (x) I "
          "for any n >= 2",
          [](int n) { return two_qubit_blocks(n); }}},
    };
    return catalog;
}

inline int qubit_count_for_dim(Eigen::Index dim) {
    int n = 0;
    while ((Eigen::Index{1} << n) < dim) ++n;
    if ((Eigen::Index{1} << n) != dim)
        throw InvalidDimensionError("fixture: dimension is not a power of two");
    return n;
}

} // namespace ergolab::fixtures
