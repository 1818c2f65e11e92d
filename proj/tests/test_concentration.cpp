#include <gtest/gtest.h>

#include "ergolab/concentration.hpp"

using namespace ergolab;

namespace {

HamiltonianSpec single_qubit_z() {
    ComplexMatrix z(2, 2);
    z << 1, 0, 0, -1;
    return HamiltonianSpec::from_dense(z);
}

HamiltonianSpec random_unit_norm_hamiltonian(Eigen::Index n, std::uint64_t tag) {
    RngStream g(SeedSpec{24601, tag});
    ComplexMatrix a = ginibre(n, n, g);
    ComplexMatrix herm = (a + a.adjoint()) / 2.0;
    herm /= eigvals_hermitian(herm).cwiseAbs().maxCoeff();
    return HamiltonianSpec::from_dense(herm);
}

} // namespace

TEST(TailBound, ClosedFormAndClipping) {
    // denominator constant: 72 pi^3 ln 2 = 1547.4177547640206...
    const double denom = 72.0 * std::pow(std::numbers::pi, 3) * std::numbers::ln2;
    EXPECT_NEAR(denom, 1547.4177547640206, 1e-9);
    // small dimensions leave the bound vacuous (clipped at 1)
    EXPECT_EQ(concentration_tail_bound(1.0, 2, 2, 1.0), 1.0);
    // unclipped regime matches the explicit formula
    const double g = 0.8, hn = 0.5;
    const double expected = 2.0 * std::exp(-64.0 * 128.0 * g * g / (denom * hn * hn));
    EXPECT_NEAR(concentration_tail_bound(g, 64, 128, hn), expected, 1e-15);
    // decay at large gamma
    EXPECT_LT(concentration_tail_bound(50.0, 8, 8, 1.0), 1e-6);
}

TEST(TailBound, Monotonicity) {
    double prev = 2.0;
    for (double g = 0.5; g < 30.0; g *= 1.7) {
        const double b = concentration_tail_bound(g, 4, 64, 1.0);
        EXPECT_LE(b, prev);
        prev = b;
    }
    EXPECT_LE(concentration_tail_bound(3.0, 4, 128, 1.0), concentration_tail_bound(3.0, 4, 64, 1.0));
    EXPECT_THROW(concentration_tail_bound(-1.0, 2, 2, 1.0), ContractViolationError);
    EXPECT_THROW(concentration_tail_bound(1.0, 2, 2, 0.0), ContractViolationError);
}

TEST(ErgotropyStatistics, ZeroHamiltonianHasZeroErgotropy) {
    const auto h = HamiltonianSpec::from_dense(ComplexMatrix::Zero(2, 2));
    const auto rep = ergotropy_statistics(h, 4, 500, SeedSpec{1, 0});
    EXPECT_NEAR(rep.mean_ergotropy, 0.0, 1e-12);
    for (const auto& row : rep.tail_table) {
        EXPECT_EQ(row.empirical, 0.0);
        EXPECT_LE(row.empirical, row.bound);
    }
}

TEST(ErgotropyStatistics, TailBoundAndNonnegativity) {
    const auto h = single_qubit_z();
    for (const Eigen::Index nprime : {2, 8}) {
        const auto rep = ergotropy_statistics(h, nprime, 4000,
                                              SeedSpec{2, static_cast<std::uint64_t>(nprime)});
        EXPECT_GE(rep.mean_ergotropy, -1e-10);
        EXPECT_GE(rep.quantiles.front().second, -1e-10);
        double prev_gamma = 0.0;
        for (const auto& row : rep.tail_table) {
            EXPECT_GT(row.gamma, prev_gamma);
            prev_gamma = row.gamma;
            EXPECT_LE(row.empirical, row.bound);
            EXPECT_GE(row.empirical, 0.0);
            EXPECT_LE(row.empirical, 1.0);
        }
    }
}

TEST(ErgotropyStatistics, MeanDecreasesWithEnvironmentSize) {
    const auto h = single_qubit_z();
    double prev_mean = std::numeric_limits<double>::infinity();
    double prev_se = 0.0;
    for (const Eigen::Index nprime : {2, 8, 32, 128}) {
        const auto rep = ergotropy_statistics(h, nprime, 3000,
                                              SeedSpec{3, static_cast<std::uint64_t>(nprime)}, 2);
        const double se = rep.stddev_ergotropy / std::sqrt(static_cast<double>(rep.samples));
        EXPECT_LT(rep.mean_ergotropy + 3.0 * se, prev_mean - 3.0 * prev_se)
            << "mean not decreasing at N' = " << nprime;
        prev_mean = rep.mean_ergotropy;
        prev_se = se;
    }
}

TEST(ErgotropyStatistics, DeterministicAcrossThreadCounts) {
    const auto h = single_qubit_z();
    const auto serial = ergotropy_statistics(h, 8, 2000, SeedSpec{4, 0}, 1);
    const auto parallel = ergotropy_statistics(h, 8, 2000, SeedSpec{4, 0}, 8);
    EXPECT_EQ(serial.mean_ergotropy, parallel.mean_ergotropy);
    for (std::size_t k = 0; k < serial.tail_table.size(); ++k)
        EXPECT_EQ(serial.tail_table[k].empirical, parallel.tail_table[k].empirical);
    EXPECT_THROW(ergotropy_statistics(h, 1, 100, SeedSpec{}), ContractViolationError);
}

TEST(LipschitzCheck, RatioStaysBelowFourHNorm) {
    const auto h = single_qubit_z();
    const double ratio = lipschitz_check(h, 2, 10000, SeedSpec{5, 0}, 2);
    EXPECT_GT(ratio, 0.0);
    EXPECT_LE(ratio, 4.0 * h.operator_norm() + 1e-6);
}

TEST(LipschitzCheck, HoldsForRandomHamiltoniansUpToDimensionFour) {
    for (const Eigen::Index n : {2, 3, 4}) {
        const auto h = random_unit_norm_hamiltonian(n, static_cast<std::uint64_t>(n));
        const double ratio =
            lipschitz_check(h, n, 3000, SeedSpec{6, static_cast<std::uint64_t>(n)}, 2);
        EXPECT_LE(ratio, 4.0 * h.operator_norm() + 1e-6) << "dimension " << n;
    }
    EXPECT_THROW(lipschitz_check(single_qubit_z(), 2, 0, SeedSpec{}), ContractViolationError);
}
