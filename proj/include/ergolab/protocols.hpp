// protocols.hpp
// Shot-level simulation of the three black-box work-extraction protocols,
// the probability-estimation stage, and the closed-form sample-complexity
// calculators.
//
// Per-shot randomness contract: shot j consumes only the stream
// derive_stream(cfg.seed, j), so per-shot records are bit-identical for any
// worker count. Draw order within a shot is fixed per protocol:
//   protocol 1: coin u, [heads] level u | [tails] block u, Pauli (x,z) u64s
//               when r > 0, level u
//   protocol 2: coin u, [heads] term u, outcome u | [tails] block u,
//               Pauli (x,z), term u, outcome u
//   protocol 3: coin u, [heads] level u | [tails] M Pauli draws (block order),
//               w1 index u, w2 index u, joint outcome u
// Aggregation uses deterministic pairwise summation.

#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <thread>

#include "ergolab/ergodyn.hpp"
#include "ergolab/randomness.hpp"

namespace ergolab {

enum class ProtocolVariant { protocol1, protocol2, protocol3 };

struct ProtocolConfig {
    double epsilon = 1e-2;                      // target additive accuracy
    double delta = 1e-3;                        // failure probability
    SeedSpec seed;
    std::optional<std::uint64_t> shots_override;
    ProtocolVariant variant = ProtocolVariant::protocol1;
};

struct RunResult {
    std::uint64_t shots = 0;
    std::vector<double> per_shot;
    double estimate = 0.0;
    std::optional<double> exact_reference;  // E[estimate] for the U_gl in use
    std::vector<std::pair<std::uint64_t, double>> running_means;
    ProtocolConfig config;
    double elapsed_seconds = 0.0;
};

// ---------------------------------------------------------------------------
// Sample-complexity calculators (explicit Hoeffding constants)
// ---------------------------------------------------------------------------

namespace detail {
inline void check_eps_delta(double epsilon, double delta, const char* who) {
    if (!(epsilon > 0.0))
        throw ContractViolationError(std::string(who) + ": epsilon must be positive");
    if (!(delta > 0.0 && delta < 1.0))
        throw ContractViolationError(std::string(who) + ": delta must be in (0,1)");
}

inline std::uint64_t ceil_to_count(double x, const char* who) {
    const double c = std::ceil(x);
    if (!(c >= 0.0) || c > 9e18)
        throw ContractViolationError(std::string(who) + ": shot count out of range");
    return static_cast<std::uint64_t>(c);
}
} // namespace detail

// T~ = ceil(ln(2M/delta) / (2 eps^2))
inline std::uint64_t shots_for_probabilities(int m, double epsilon, double delta) {
    if (m < 1)
        throw ContractViolationError("shots_for_probabilities: need at least one block");
    detail::check_eps_delta(epsilon, delta, "shots_for_probabilities");
    return detail::ceil_to_count(std::log(2.0 * m / delta) / (2.0 * epsilon * epsilon),
                                 "shots_for_probabilities");
}

// T = ceil(8 b^2 ln(2/delta) / eps^2); b is ||H|| for protocol 1 and the
// total Pauli weight h for protocol 2.
inline std::uint64_t shots_for_work(double bound, double epsilon, double delta) {
    if (!(bound > 0.0))
        throw ContractViolationError("shots_for_work: range bound must be positive");
    detail::check_eps_delta(epsilon, delta, "shots_for_work");
    return detail::ceil_to_count(8.0 * bound * bound * std::log(2.0 / delta) / (epsilon * epsilon),
                                 "shots_for_work");
}

// T = ceil(8 (1+M^2)^2 ||H||^2 ln(2/delta) / eps^2)  (single-ancilla LCU).
inline std::uint64_t shots_for_work_lcu(int m, double h_norm, double epsilon, double delta) {
    if (m < 1)
        throw ContractViolationError("shots_for_work_lcu: need at least one block");
    if (!(h_norm > 0.0))
        throw ContractViolationError("shots_for_work_lcu: ||H|| must be positive");
    detail::check_eps_delta(epsilon, delta, "shots_for_work_lcu");
    const double f = 1.0 + static_cast<double>(m) * static_cast<double>(m);
    return detail::ceil_to_count(8.0 * f * f * h_norm * h_norm * std::log(2.0 / delta) /
                                     (epsilon * epsilon),
                                 "shots_for_work_lcu");
}

// Delta/3 rule: a stage-1 accuracy that provably preserves the probability
// ordering. Returns nullopt when all probabilities are equal (ordering-free:
// any epsilon is admissible). Probabilities closer than 1e-12 are treated as
// equal.
inline std::optional<double> gap_epsilon(const std::vector<double>& probs) {
    if (probs.empty())
        throw ContractViolationError("gap_epsilon: empty probability list");
    double sum = 0.0;
    for (double p : probs) sum += p;
    if (std::abs(sum - 1.0) > 1e-9)
        throw ContractViolationError("gap_epsilon: probabilities do not sum to 1");
    double gap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < probs.size(); ++i)
        for (std::size_t j = i + 1; j < probs.size(); ++j) {
            const double d = std::abs(probs[i] - probs[j]);
            if (d > 1e-12) gap = std::min(gap, d);
        }
    if (!std::isfinite(gap)) return std::nullopt;
    return gap / 3.0;
}

// ---------------------------------------------------------------------------
// Shared sampling machinery
// ---------------------------------------------------------------------------

namespace detail {

// Walk the cumulative distribution; u in [0,1). Zero-weight categories are
// never selected (the trailing fallback scans back to a positive weight).
inline std::size_t sample_categorical(std::span<const double> w, double total, double u) {
    const double target = u * total;
    double acc = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
        acc += w[k];
        if (target < acc) return k;
    }
    for (std::size_t k = w.size(); k-- > 0;)
        if (w[k] > 0.0) return k;
    return 0;
}

template <class Fn>
void parallel_shots(std::uint64_t shots, int threads, Fn&& body) {
    const auto hw = static_cast<int>(std::thread::hardware_concurrency());
    threads = std::clamp(threads, 1, std::max(1, hw > 0 ? 4 * hw : 64));
    if (threads == 1 || shots < 4096) {
        body(std::uint64_t{0}, shots);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    const std::uint64_t chunk = (shots + static_cast<std::uint64_t>(threads) - 1) /
                                static_cast<std::uint64_t>(threads);
    for (int t = 0; t < threads; ++t) {
        const std::uint64_t b = std::min(shots, static_cast<std::uint64_t>(t) * chunk);
        const std::uint64_t e = std::min(shots, b + chunk);
        if (b >= e) break;
        pool.emplace_back([&body, b, e] { body(b, e); });
    }
    for (auto& th : pool) th.join();
}

// <= max_rows shot indices, geometrically thinned, always including 1 and t.
inline std::vector<std::uint64_t> thinning_grid(std::uint64_t t, std::size_t max_rows = 10000) {
    std::vector<std::uint64_t> grid;
    if (t == 0) return grid;
    if (t <= max_rows) {
        grid.resize(static_cast<std::size_t>(t));
        for (std::uint64_t j = 0; j < t; ++j) grid[static_cast<std::size_t>(j)] = j + 1;
        return grid;
    }
    grid.reserve(max_rows);
    const double logt = std::log(static_cast<double>(t));
    for (std::size_t k = 0; k < max_rows; ++k) {
        const double fraction = static_cast<double>(k) / static_cast<double>(max_rows - 1);
        auto idx = static_cast<std::uint64_t>(std::llround(std::exp(logt * fraction)));
        idx = std::clamp<std::uint64_t>(idx, 1, t);
        if (grid.empty() || idx > grid.back()) grid.push_back(idx);
    }
    if (grid.back() != t) grid.push_back(t);
    return grid;
}

// Kahan-compensated prefix walk emitting scale * prefix / m at grid points.
inline std::vector<std::pair<std::uint64_t, double>> running_series(
    const std::vector<double>& per_shot, double scale) {
    const auto grid = thinning_grid(per_shot.size());
    std::vector<std::pair<std::uint64_t, double>> out;
    out.reserve(grid.size());
    double sum = 0.0, comp = 0.0;
    std::size_t g = 0;
    for (std::uint64_t m = 1; m <= per_shot.size() && g < grid.size(); ++m) {
        const double y = per_shot[static_cast<std::size_t>(m - 1)] - comp;
        const double t = sum + y;
        comp = (t - sum) - y;
        sum = t;
        if (m == grid[g]) {
            out.emplace_back(m, scale * sum / static_cast<double>(m));
            ++g;
        }
    }
    return out;
}

// Column -> distinct-level index lookup for a HamiltonianSpec.
inline std::vector<int> level_of_column(const HamiltonianSpec& h) {
    std::vector<int> lut(static_cast<std::size_t>(h.dim()));
    for (std::size_t a = 0; a < h.levels().size(); ++a) {
        const auto& lv = h.levels()[a];
        for (int k = 0; k < lv.degeneracy; ++k)
            lut[static_cast<std::size_t>(lv.offset + k)] = static_cast<int>(a);
    }
    return lut;
}

struct WorkStageContext {
    std::vector<double> level_energies;
    std::vector<double> heads_level_probs;  // Tr[Q_a rho]
    double heads_total = 0.0;
    std::vector<double> block_probs;        // Tr[P_i rho]
    double block_total = 0.0;
    std::vector<int> rank_of_block;         // slice index of block i under U_gl
    std::vector<int> col_level;             // level of eigenvector column
    GlobalUnitaryRecord ugl;
    double exact_reference = 0.0;           // Tr[H(rho - U_gl rho~ U_gl^+)]
};

inline WorkStageContext make_work_context(const DensityMatrix& rho, const HamiltonianSpec& h,
                                          const MeasurementSetting& ms,
                                          const std::vector<double>& probs_for_ugl,
                                          const ProtocolConfig& cfg) {
    check_eps_delta(cfg.epsilon, cfg.delta, "protocol run");
    if (rho.dim() != h.dim() || rho.dim() != ms.dim())
        throw InvalidDimensionError("protocol run: dimension mismatch");
    WorkStageContext ctx;
    ctx.ugl = build_global_unitary(ms, h, probs_for_ugl);
    const std::size_t s = h.levels().size();
    ctx.level_energies.resize(s);
    ctx.heads_level_probs.resize(s);
    for (std::size_t a = 0; a < s; ++a) {
        ctx.level_energies[a] = h.levels()[a].energy;
        ctx.heads_level_probs[a] = std::max(0.0, h.level_population(a, rho.matrix()));
        ctx.heads_total += ctx.heads_level_probs[a];
    }
    ctx.block_probs = block_probabilities(rho, ms);
    for (double p : ctx.block_probs) ctx.block_total += p;
    ctx.rank_of_block.resize(ctx.ugl.permutation.size());
    for (std::size_t rank = 0; rank < ctx.ugl.permutation.size(); ++rank)
        ctx.rank_of_block[static_cast<std::size_t>(ctx.ugl.permutation[rank])] = static_cast<int>(rank);
    ctx.col_level = level_of_column(h);

    const DensityMatrix rho_tilde = block_randomize(rho, ms);
    const ComplexMatrix rotated = ctx.ugl.matrix * rho_tilde.matrix() * ctx.ugl.matrix.adjoint();
    ctx.exact_reference = expectation(h.matrix(), rho) - (h.matrix() * rotated).trace().real();
    return ctx;
}

// Level distribution of measuring H on  Phi_slice(rank) sigma Phi_slice(rank)^+,
// for a block-local sigma expressed in the block's own ordered basis.
inline std::vector<double> slice_level_distribution(const ComplexMatrix& sigma, int rank,
                                                    const WorkStageContext& ctx) {
    std::vector<double> w(ctx.level_energies.size(), 0.0);
    const Eigen::Index bd = sigma.rows();
    for (Eigen::Index b = 0; b < bd; ++b) {
        const auto col = static_cast<std::size_t>(rank * bd + b);
        w[static_cast<std::size_t>(ctx.col_level[col])] += std::max(0.0, sigma(b, b).real());
    }
    return w;
}

inline RunResult finish_run(std::vector<double> per_shot, double scale,
                            const WorkStageContext& ctx, const ProtocolConfig& cfg,
                            std::chrono::steady_clock::time_point t0) {
    RunResult res;
    res.shots = per_shot.size();
    res.estimate = scale * pairwise_sum(per_shot) / static_cast<double>(per_shot.size());
    res.running_means = running_series(per_shot, scale);
    res.per_shot = std::move(per_shot);
    res.exact_reference = ctx.exact_reference;
    res.config = cfg;
    res.elapsed_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Probability-estimation stage
// ---------------------------------------------------------------------------

struct ProbabilityEstimate {
    std::vector<double> p_hat;
    std::uint64_t shots = 0;
};

// T~ projective measurements on fresh copies; p_hat is the empirical outcome
// frequency. Shot j draws one uniform from derive_stream(cfg.seed, j).
inline ProbabilityEstimate estimate_probabilities(const DensityMatrix& rho,
                                                  const MeasurementSetting& ms,
                                                  const ProtocolConfig& cfg) {
    detail::check_eps_delta(cfg.epsilon, cfg.delta, "estimate_probabilities");
    const auto p = block_probabilities(rho, ms);
    double total = 0.0;
    for (double v : p) total += v;
    const std::uint64_t shots =
        cfg.shots_override ? *cfg.shots_override
                           : shots_for_probabilities(ms.block_count(), cfg.epsilon, cfg.delta);
    if (shots == 0)
        throw ConfigError("estimate_probabilities: zero shots requested");
    std::vector<std::uint64_t> counts(p.size(), 0);
    for (std::uint64_t j = 0; j < shots; ++j) {
        RngStream g(derive_stream(cfg.seed, j));
        ++counts[detail::sample_categorical(p, total, g.next_double())];
    }
    ProbabilityEstimate est;
    est.shots = shots;
    est.p_hat.resize(p.size());
    for (std::size_t i = 0; i < p.size(); ++i)
        est.p_hat[i] = static_cast<double>(counts[i]) / static_cast<double>(shots);
    return est;
}

// ---------------------------------------------------------------------------
// Protocol 1: direct energy measurements
// ---------------------------------------------------------------------------

// Each shot: fair coin; heads measures H on rho (outcome E_a with probability
// Tr[Q_a rho]); tails measures the block index (collapse), applies a uniform
// r-qubit Pauli inside the block followed by U_gl, then measures -H.
// Output estimate (2/T) sum mu_j is an unbiased estimator of
// Tr[H(rho - U_gl rho~ U_gl^+)].
inline RunResult protocol1_run(const DensityMatrix& rho, const HamiltonianSpec& h,
                               const MeasurementSetting& ms,
                               const std::vector<double>& probs_for_ugl,
                               const ProtocolConfig& cfg, int threads = 1) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto ctx = detail::make_work_context(rho, h, ms, probs_for_ugl, cfg);
    const std::uint64_t shots =
        cfg.shots_override ? *cfg.shots_override
                           : shots_for_work(h.operator_norm(), cfg.epsilon, cfg.delta);
    if (shots == 0) throw ConfigError("protocol1_run: zero shots requested");

    const int m = ms.block_count();
    const int r = ms.block_qubits();
    const std::size_t n_paulis = std::size_t{1} << (2 * r);
    const std::size_t s = ctx.level_energies.size();
    const std::uint64_t x_mask = (std::uint64_t{1} << r) - 1;

    // tails table: level distribution after (block i, Pauli t), flattened
    std::vector<double> tails(static_cast<std::size_t>(m) * n_paulis * s, 0.0);
    std::vector<double> tails_total(static_cast<std::size_t>(m) * n_paulis, 0.0);
    for (int i = 0; i < m; ++i) {
        if (ctx.block_probs[static_cast<std::size_t>(i)] <= 0.0) continue;
        const auto& b = ms.block_basis(i);
        const ComplexMatrix tau = (b.adjoint() * rho.matrix() * b) /
                                  ctx.block_probs[static_cast<std::size_t>(i)];
        for (std::size_t t = 0; t < n_paulis; ++t) {
            const PauliString p(r, t & x_mask, t >> r);
            const ComplexMatrix sigma = r > 0 ? pauli_conjugate(p, tau) : tau;
            const auto w = detail::slice_level_distribution(
                sigma, ctx.rank_of_block[static_cast<std::size_t>(i)], ctx);
            const std::size_t row = (static_cast<std::size_t>(i) * n_paulis + t) * s;
            double tot = 0.0;
            for (std::size_t a = 0; a < s; ++a) {
                tails[row + a] = w[a];
                tot += w[a];
            }
            tails_total[static_cast<std::size_t>(i) * n_paulis + t] = tot;
        }
    }

    std::vector<double> per_shot(static_cast<std::size_t>(shots));
    const double norm_bound = h.operator_norm() + 1e-9;
    std::atomic<bool> range_ok{true};
    detail::parallel_shots(shots, threads, [&](std::uint64_t begin, std::uint64_t end) {
        for (std::uint64_t j = begin; j < end; ++j) {
            RngStream g(derive_stream(cfg.seed, j));
            double mu;
            if (g.next_double() < 0.5) {
                const std::size_t a = detail::sample_categorical(ctx.heads_level_probs,
                                                                 ctx.heads_total, g.next_double());
                mu = ctx.level_energies[a];
            } else {
                const std::size_t i = detail::sample_categorical(ctx.block_probs, ctx.block_total,
                                                                 g.next_double());
                std::size_t t = 0;
                if (r > 0) {
                    const PauliString p = sample_pauli(r, g);
                    t = static_cast<std::size_t>(p.x_bits | (p.z_bits << r));
                }
                const std::size_t row = (i * n_paulis + t) * s;
                const std::size_t a = detail::sample_categorical(
                    std::span<const double>(tails.data() + row, s), tails_total[i * n_paulis + t],
                    g.next_double());
                mu = -ctx.level_energies[a];
            }
            if (std::abs(mu) > norm_bound) range_ok.store(false, std::memory_order_relaxed);
            per_shot[static_cast<std::size_t>(j)] = mu;
        }
    });
    if (!range_ok.load())
        throw std::logic_error("protocol1_run: per-shot value escaped [-||H||, ||H||]");
    return detail::finish_run(std::move(per_shot), 2.0, ctx, cfg, t0);
}

// ---------------------------------------------------------------------------
// Protocol 2: randomized Pauli measurements for local Hamiltonians
// ---------------------------------------------------------------------------

// Same structure as protocol 1 but every energy measurement is replaced by
// measuring a Pauli term sampled from {|h_j|/h}; outcomes are +-1 and the
// estimate carries the 2h/T scale. Negative coefficients are absorbed by
// flipping the recorded outcome sign.
inline RunResult protocol2_run(const DensityMatrix& rho, const HamiltonianSpec& h,
                               const MeasurementSetting& ms,
                               const std::vector<double>& probs_for_ugl,
                               const ProtocolConfig& cfg, int threads = 1) {
    const auto t0 = std::chrono::steady_clock::now();
    if (!h.pauli_terms())
        throw ConfigError("protocol2_run: Hamiltonian has no Pauli-sum form");
    const auto& terms = *h.pauli_terms();
    double weight = 0.0;
    for (const auto& t : terms) weight += std::abs(t.coeff);
    if (!(weight > 0.0))
        throw ConfigError("protocol2_run: total Pauli weight is zero");

    const auto ctx = detail::make_work_context(rho, h, ms, probs_for_ugl, cfg);
    const std::uint64_t shots = cfg.shots_override
                                    ? *cfg.shots_override
                                    : shots_for_work(weight, cfg.epsilon, cfg.delta);
    if (shots == 0) throw ConfigError("protocol2_run: zero shots requested");

    const int m = ms.block_count();
    const int r = ms.block_qubits();
    const std::size_t n_paulis = std::size_t{1} << (2 * r);
    const Eigen::Index bd = ms.block_dim();
    const std::size_t k_terms = terms.size();
    const std::uint64_t x_mask = (std::uint64_t{1} << r) - 1;

    std::vector<double> term_probs(k_terms);
    std::vector<double> term_sign(k_terms);
    std::vector<double> heads_expect(k_terms);  // Tr[Lambda_j rho]
    for (std::size_t j = 0; j < k_terms; ++j) {
        term_probs[j] = std::abs(terms[j].coeff) / weight;
        term_sign[j] = terms[j].coeff >= 0.0 ? 1.0 : -1.0;
        cdouble acc = 0.0;
        for (Eigen::Index k = 0; k < rho.dim(); ++k)
            acc += terms[j].op.column_phase(static_cast<std::uint64_t>(k)) *
                   rho.matrix()(static_cast<Eigen::Index>(static_cast<std::uint64_t>(k) ^ terms[j].op.x_bits), k);
        heads_expect[j] = std::clamp(acc.real(), -1.0, 1.0);
    }

    // slice-restricted Pauli terms: Lambda~[j][rank] = Phi_rank^+ Lambda_j Phi_rank
    std::vector<ComplexMatrix> restricted(k_terms * static_cast<std::size_t>(m));
    for (std::size_t j = 0; j < k_terms; ++j) {
        ComplexMatrix lp(rho.dim(), rho.dim());  // Lambda_j * Phi (columns)
        for (Eigen::Index c = 0; c < rho.dim(); ++c)
            for (Eigen::Index u = 0; u < rho.dim(); ++u) {
                const std::uint64_t up = static_cast<std::uint64_t>(u) ^ terms[j].op.x_bits;
                lp(u, c) = terms[j].op.column_phase(up) *
                           h.eigenvectors()(static_cast<Eigen::Index>(up), c);
            }
        for (int rank = 0; rank < m; ++rank)
            restricted[j * static_cast<std::size_t>(m) + static_cast<std::size_t>(rank)] =
                h.eigenvectors().middleCols(rank * bd, bd).adjoint() * lp.middleCols(rank * bd, bd);
    }

    // tails table: Tr[Lambda_j sigma_{i,t}] for sigma after block i, Pauli t
    std::vector<double> tails(static_cast<std::size_t>(m) * n_paulis * k_terms, 0.0);
    for (int i = 0; i < m; ++i) {
        if (ctx.block_probs[static_cast<std::size_t>(i)] <= 0.0) continue;
        const auto& b = ms.block_basis(i);
        const ComplexMatrix tau = (b.adjoint() * rho.matrix() * b) /
                                  ctx.block_probs[static_cast<std::size_t>(i)];
        const int rank = ctx.rank_of_block[static_cast<std::size_t>(i)];
        for (std::size_t t = 0; t < n_paulis; ++t) {
            const PauliString p(r, t & x_mask, t >> r);
            const ComplexMatrix sigma = r > 0 ? pauli_conjugate(p, tau) : tau;
            for (std::size_t j = 0; j < k_terms; ++j) {
                const double v =
                    (restricted[j * static_cast<std::size_t>(m) + static_cast<std::size_t>(rank)] * sigma)
                        .trace()
                        .real();
                tails[(static_cast<std::size_t>(i) * n_paulis + t) * k_terms + j] =
                    std::clamp(v, -1.0, 1.0);
            }
        }
    }

    std::vector<double> per_shot(static_cast<std::size_t>(shots));
    detail::parallel_shots(shots, threads, [&](std::uint64_t begin, std::uint64_t end) {
        for (std::uint64_t jj = begin; jj < end; ++jj) {
            RngStream g(derive_stream(cfg.seed, jj));
            double mu;
            if (g.next_double() < 0.5) {
                const std::size_t j = detail::sample_categorical(term_probs, 1.0, g.next_double());
                const double plus = (1.0 + heads_expect[j]) / 2.0;
                const double outcome = g.next_double() < plus ? 1.0 : -1.0;
                mu = term_sign[j] * outcome;
            } else {
                const std::size_t i = detail::sample_categorical(ctx.block_probs, ctx.block_total,
                                                                 g.next_double());
                std::size_t t = 0;
                if (r > 0) {
                    const PauliString p = sample_pauli(r, g);
                    t = static_cast<std::size_t>(p.x_bits | (p.z_bits << r));
                }
                const std::size_t j = detail::sample_categorical(term_probs, 1.0, g.next_double());
                const double plus = (1.0 + tails[(i * n_paulis + t) * k_terms + j]) / 2.0;
                const double outcome = g.next_double() < plus ? 1.0 : -1.0;
                mu = -term_sign[j] * outcome;
            }
            per_shot[static_cast<std::size_t>(jj)] = mu;  // |mu| == 1 by construction
        }
    });
    return detail::finish_run(std::move(per_shot), 2.0 * weight, ctx, cfg, t0);
}

// ---------------------------------------------------------------------------
// Protocol 3: single-ancilla LCU variant
// ---------------------------------------------------------------------------

// Tails branch prepares |+><+| (x) rho, draws one Pauli per block (the
// direct-sum 1-design), picks W1, W2 i.i.d. from the induced 2M-element LCU
// set, applies the two controlled forms and U_gl, measures -X (x) H, and
// scales the outcome by M^2.
inline RunResult protocol3_run(const DensityMatrix& rho, const HamiltonianSpec& h,
                               const MeasurementSetting& ms,
                               const std::vector<double>& probs_for_ugl,
                               const ProtocolConfig& cfg, int threads = 1) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto ctx = detail::make_work_context(rho, h, ms, probs_for_ugl, cfg);
    const std::uint64_t shots =
        cfg.shots_override
            ? *cfg.shots_override
            : shots_for_work_lcu(ms.block_count(), h.operator_norm(), cfg.epsilon, cfg.delta);
    if (shots == 0) throw ConfigError("protocol3_run: zero shots requested");

    const int m = ms.block_count();
    const int r = ms.block_qubits();
    const std::size_t s = ctx.level_energies.size();
    const double m2 = static_cast<double>(m) * static_cast<double>(m);

    // unnormalized block-restricted states rho_ii in each block's own basis
    std::vector<ComplexMatrix> rho_blocks;
    rho_blocks.reserve(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
        const auto& b = ms.block_basis(i);
        rho_blocks.push_back(b.adjoint() * rho.matrix() * b);
    }

    std::vector<double> per_shot(static_cast<std::size_t>(shots));
    const double bound = std::max(1.0, m2) * h.operator_norm() + 1e-9;
    std::atomic<bool> range_ok{true};
    detail::parallel_shots(shots, threads, [&](std::uint64_t begin, std::uint64_t end) {
        std::vector<PauliString> vs(static_cast<std::size_t>(m), PauliString(r, 0, 0));
        std::vector<double> joint(2 * s);
        for (std::uint64_t j = begin; j < end; ++j) {
            RngStream g(derive_stream(cfg.seed, j));
            double zeta;
            if (g.next_double() < 0.5) {
                const std::size_t a = detail::sample_categorical(ctx.heads_level_probs,
                                                                 ctx.heads_total, g.next_double());
                zeta = ctx.level_energies[a];
            } else {
                if (r > 0)
                    for (int i = 0; i < m; ++i) vs[static_cast<std::size_t>(i)] = sample_pauli(r, g);
                const std::size_t j1 = g.next_index(2 * static_cast<std::size_t>(m));
                const std::size_t j2 = g.next_index(2 * static_cast<std::size_t>(m));
                const auto& v1 = vs[j1 % static_cast<std::size_t>(m)];
                const auto& v2 = vs[j2 % static_cast<std::size_t>(m)];

                // joint distribution over (ancilla sign, energy level)
                std::fill(joint.begin(), joint.end(), 0.0);
                double total = 0.0;
                for (int i = 0; i < m; ++i) {
                    const double c1 = j1 < static_cast<std::size_t>(m)
                                          ? 1.0
                                          : (static_cast<std::size_t>(i) == j1 - static_cast<std::size_t>(m) ? 1.0 : -1.0);
                    const double c2 = j2 < static_cast<std::size_t>(m)
                                          ? 1.0
                                          : (static_cast<std::size_t>(i) == j2 - static_cast<std::size_t>(m) ? 1.0 : -1.0);
                    const ComplexMatrix s11 = pauli_sandwich(v1, rho_blocks[static_cast<std::size_t>(i)], v1);
                    const ComplexMatrix s22 = pauli_sandwich(v2, rho_blocks[static_cast<std::size_t>(i)], v2);
                    const ComplexMatrix s21 = pauli_sandwich(v2, rho_blocks[static_cast<std::size_t>(i)], v1);
                    const ComplexMatrix diag_part = (s11 + s22) / 2.0;
                    const ComplexMatrix cross_part = (c1 * c2) * (s21 + s21.adjoint()) / 2.0;
                    const int rank = ctx.rank_of_block[static_cast<std::size_t>(i)];
                    const Eigen::Index bd = ms.block_dim();
                    for (Eigen::Index b = 0; b < bd; ++b) {
                        const auto lvl = static_cast<std::size_t>(
                            ctx.col_level[static_cast<std::size_t>(rank * bd + b)]);
                        const double alpha = diag_part(b, b).real();
                        const double beta = cross_part(b, b).real();
                        joint[lvl] += std::max(0.0, (alpha + beta) / 2.0);          // sign +1
                        joint[s + lvl] += std::max(0.0, (alpha - beta) / 2.0);      // sign -1
                    }
                }
                for (double w : joint) total += w;
                const std::size_t pick = detail::sample_categorical(joint, total, g.next_double());
                const double sign = pick < s ? 1.0 : -1.0;
                const double energy = ctx.level_energies[pick % s];
                zeta = -m2 * sign * energy;
            }
            if (std::abs(zeta) > bound) range_ok.store(false, std::memory_order_relaxed);
            per_shot[static_cast<std::size_t>(j)] = zeta;
        }
    });
    if (!range_ok.load())
        throw std::logic_error("protocol3_run: per-shot value escaped the declared range");
    return detail::finish_run(std::move(per_shot), 2.0, ctx, cfg, t0);
}

// ---------------------------------------------------------------------------
// Two-stage pipeline
// ---------------------------------------------------------------------------

struct PipelineResult {
    std::vector<double> p_hat;
    std::uint64_t stage1_shots = 0;
    RunResult run;
    std::uint64_t total_samples = 0;
};

inline RunResult run_protocol(ProtocolVariant variant, const DensityMatrix& rho,
                              const HamiltonianSpec& h, const MeasurementSetting& ms,
                              const std::vector<double>& probs_for_ugl, const ProtocolConfig& cfg,
                              int threads = 1) {
    switch (variant) {
        case ProtocolVariant::protocol1: return protocol1_run(rho, h, ms, probs_for_ugl, cfg, threads);
        case ProtocolVariant::protocol2: return protocol2_run(rho, h, ms, probs_for_ugl, cfg, threads);
        case ProtocolVariant::protocol3: return protocol3_run(rho, h, ms, probs_for_ugl, cfg, threads);
    }
    throw ConfigError("run_protocol: unknown variant");
}

// Stage 1 estimates the block probabilities; stage 2 runs the selected
// protocol with U_gl fixed by those estimates. When calibration probabilities
// are supplied, stage 1 adopts the Delta/3 accuracy derived from them (unless
// they are all equal, in which case any accuracy preserves the ordering).
inline PipelineResult full_pipeline(const DensityMatrix& rho, const HamiltonianSpec& h,
                                    const MeasurementSetting& ms, const ProtocolConfig& stage1,
                                    const ProtocolConfig& stage2,
                                    const std::optional<std::vector<double>>& calibration_probs =
                                        std::nullopt,
                                    int threads = 1) {
    ProtocolConfig cfg1 = stage1;
    if (calibration_probs) {
        if (const auto eps = gap_epsilon(*calibration_probs)) cfg1.epsilon = *eps;
    }
    PipelineResult out;
    const auto est = estimate_probabilities(rho, ms, cfg1);
    out.p_hat = est.p_hat;
    out.stage1_shots = est.shots;
    out.run = run_protocol(stage2.variant, rho, h, ms, est.p_hat, stage2, threads);
    out.total_samples = out.stage1_shots + out.run.shots;
    return out;
}

} // namespace ergolab
