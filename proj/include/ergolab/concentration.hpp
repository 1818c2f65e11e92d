// concentration.hpp
// Empirical probes of the concentration-of-ergotropy results: statistics of
// induced-measure random states, the tail bound, and the Lipschitz constant.

#pragma once

#include <numbers>

#include "ergolab/ergodyn.hpp"
#include "ergolab/protocols.hpp"
#include "ergolab/randomness.hpp"

namespace ergolab {

struct TailRow {
    double gamma = 0.0;
    double empirical = 0.0;
    double bound = 0.0;
};

struct ConcentrationReport {
    Eigen::Index n = 0;
    Eigen::Index n_prime = 0;
    std::uint64_t samples = 0;
    double mean_ergotropy = 0.0;
    double stddev_ergotropy = 0.0;
    std::vector<std::pair<double, double>> quantiles;  // (level, value)
    std::vector<TailRow> tail_table;                   // gamma strictly increasing
};

// Tail bound for the ergotropy of an induced-measure random state:
//   min(1, 2 exp(-N N' gamma^2 / (72 pi^3 ln2 ||H||^2))).
inline double concentration_tail_bound(double gamma, Eigen::Index n, Eigen::Index n_prime, double h_norm) {
    if (!(gamma > 0.0))
        throw ContractViolationError("concentration_tail_bound: gamma must be positive");
    if (!(h_norm > 0.0))
        throw ContractViolationError("concentration_tail_bound: ||H|| must be positive");
    if (n < 1 || n_prime < 1)
        throw InvalidDimensionError("concentration_tail_bound: dimensions must be positive");
    const double denom = 72.0 * std::pow(std::numbers::pi, 3) * std::numbers::ln2 * h_norm * h_norm;
    const double exponent = -static_cast<double>(n) * static_cast<double>(n_prime) * gamma * gamma / denom;
    return std::min(1.0, 2.0 * std::exp(exponent));
}

// Draw `samples` induced-measure states, compute the exact ergotropy of each,
// and report mean, quantiles and the 20-point tail table checked against the
// bound. Sample k consumes derive_stream(seed, k) only, so the report is
// deterministic for any thread count.
inline ConcentrationReport ergotropy_statistics(const HamiltonianSpec& h, Eigen::Index n_prime,
                                                std::uint64_t samples, SeedSpec seed,
                                                int threads = 1) {
    if (n_prime < h.dim())
        throw ContractViolationError("ergotropy_statistics: requires N' >= N");
    if (samples == 0)
        throw ContractViolationError("ergotropy_statistics: need at least one sample");

    std::vector<double> ergs(static_cast<std::size_t>(samples));
    detail::parallel_shots(samples, threads, [&](std::uint64_t begin, std::uint64_t end) {
        for (std::uint64_t k = begin; k < end; ++k) {
            const DensityMatrix rho = induced_random_state(h.dim(), n_prime, derive_stream(seed, k));
            ergs[static_cast<std::size_t>(k)] = ergotropy_value(rho, h);
        }
    });

    ConcentrationReport rep;
    rep.n = h.dim();
    rep.n_prime = n_prime;
    rep.samples = samples;
    rep.mean_ergotropy = pairwise_sum(ergs) / static_cast<double>(samples);
    double var = 0.0;
    for (double e : ergs) var += (e - rep.mean_ergotropy) * (e - rep.mean_ergotropy);
    rep.stddev_ergotropy = std::sqrt(var / static_cast<double>(samples));

    std::vector<double> sorted = ergs;
    std::sort(sorted.begin(), sorted.end());
    for (double q : {0.25, 0.5, 0.75, 0.9, 0.99}) {
        const auto idx = std::min<std::size_t>(sorted.size() - 1,
                                               static_cast<std::size_t>(q * static_cast<double>(sorted.size())));
        rep.quantiles.emplace_back(q, sorted[idx]);
    }

    // 20-point gamma grid up to twice the spectral norm (the ergotropy range);
    // a unit grid stands in when H = 0 and every sample is exactly zero.
    const double gamma_max = h.operator_norm() > 0.0 ? 2.0 * h.operator_norm() : 1.0;
    const double h_norm_for_bound = h.operator_norm() > 0.0 ? h.operator_norm() : 1.0;
    for (int k = 1; k <= 20; ++k) {
        TailRow row;
        row.gamma = gamma_max * static_cast<double>(k) / 20.0;
        const auto above = sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), row.gamma);
        row.empirical = static_cast<double>(above) / static_cast<double>(samples);
        row.bound = concentration_tail_bound(row.gamma, rep.n, n_prime, h_norm_for_bound);
        rep.tail_table.push_back(row);
    }
    return rep;
}

// Largest observed ratio |Erg(Tr_B psi) - Erg(Tr_B phi)| / ||psi - phi||_2
// over purification pairs. Pairs cycle through independent draws and
// perturbed pairs at 1e-2 and 1e-4 to stress the small-distance regime.
inline double lipschitz_check(const HamiltonianSpec& h, Eigen::Index n_prime,
                              std::uint64_t pairs, SeedSpec seed, int threads = 1) {
    if (pairs < 1)
        throw ContractViolationError("lipschitz_check: need at least one pair");
    if (n_prime < 1)
        throw InvalidDimensionError("lipschitz_check: N' must be positive");
    const Eigen::Index dim = h.dim() * n_prime;

    std::vector<double> ratios(static_cast<std::size_t>(pairs), 0.0);
    detail::parallel_shots(pairs, threads, [&](std::uint64_t begin, std::uint64_t end) {
        for (std::uint64_t k = begin; k < end; ++k) {
            RngStream g(derive_stream(seed, k));
            const ComplexVector psi = haar_state(dim, g);
            ComplexVector phi;
            switch (k % 3) {
                case 0: phi = haar_state(dim, g); break;
                case 1:
                case 2: {
                    const double eps = k % 3 == 1 ? 1e-2 : 1e-4;
                    ComplexVector eta(dim);
                    for (Eigen::Index i = 0; i < dim; ++i) eta[i] = g.next_complex_normal();
                    phi = psi + eps * eta;
                    phi.normalize();
                    break;
                }
            }
            const double dist = (psi - phi).norm();
            if (dist < 1e-14) continue;  // identical pair: 0/0 excluded
            const double ea = ergotropy_value(partial_trace_b(psi, h.dim(), n_prime), h);
            const double eb = ergotropy_value(partial_trace_b(phi, h.dim(), n_prime), h);
            ratios[static_cast<std::size_t>(k)] = std::abs(ea - eb) / dist;
        }
    });
    double best = 0.0;
    for (double r : ratios) best = std::max(best, r);
    return best;
}

} // namespace ergolab
