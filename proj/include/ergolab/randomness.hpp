// randomness.hpp
// Seeded, splittable random sources. Every stochastic routine in the library
// consumes an explicit SeedSpec so that results are bit-identical across runs
// and across worker counts.
//
// Stream contract (bit-exact):
//   mix64(z): SplitMix64 finalizer
//       z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
//       z ^= z >> 27; z *= 0x94D049BB133111EB;
//       z ^= z >> 31;
//   derive_stream({m, s}, c) = { mix64(m + 0x9E3779B97F4A7C15 * s),
//                                mix64(s ^ mix64(c + 0x9E3779B97F4A7C15)) }
//   RngStream({m, s}): state = mix64(mix64(m + 0x9E3779B97F4A7C15) ^ s);
//       next_u64(): state += 0x9E3779B97F4A7C15; return mix64(state)
//   next_double():      (next_u64() >> 11) * 2^-53          in [0, 1)
//   next_double_open(): ((next_u64() >> 11) + 1) * 2^-53    in (0, 1]
//   next_complex_normal(): u1 = next_double_open(), u2 = next_double();
//       sqrt(-ln u1) * exp(2*pi*i*u2)   -- standard complex normal CN(0,1)
//   Ginibre matrices fill row by row (row-major entry order).

#pragma once

#include <Eigen/QR>
#include <cstdint>
#include <numbers>

#include "ergolab/qcore.hpp"

namespace ergolab {

struct SeedSpec {
    std::uint64_t master_seed = 0;
    std::uint64_t stream_id = 0;

    bool operator==(const SeedSpec&) const = default;
};

namespace detail {
inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
} // namespace detail

inline constexpr std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
}

// Child stream derivation. For a fixed parent the map child -> SeedSpec is
// injective (composition of bijections on 64-bit words).
inline SeedSpec derive_stream(SeedSpec s, std::uint64_t child_index) {
    return {mix64(s.master_seed + detail::kGolden * s.stream_id),
            mix64(s.stream_id ^ mix64(child_index + detail::kGolden))};
}

class RngStream {
public:
    explicit RngStream(SeedSpec s)
        : state_(mix64(mix64(s.master_seed + detail::kGolden) ^ s.stream_id)) {}

    std::uint64_t next_u64() {
        state_ += detail::kGolden;
        return mix64(state_);
    }

    double next_double() {  // [0, 1), 53-bit resolution
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double next_double_open() {  // (0, 1]
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    }

    cdouble next_complex_normal() {
        const double u1 = next_double_open();
        const double u2 = next_double();
        const double radius = std::sqrt(-std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        return {radius * std::cos(angle), radius * std::sin(angle)};
    }

    // Uniform index in [0, n); one next_double() draw.
    std::size_t next_index(std::size_t n) {
        const auto k = static_cast<std::size_t>(next_double() * static_cast<double>(n));
        return k >= n ? n - 1 : k;
    }

private:
    std::uint64_t state_;
};

// N x M matrix of i.i.d. CN(0,1) entries, filled row by row.
inline ComplexMatrix ginibre(Eigen::Index rows, Eigen::Index cols, RngStream& g) {
    if (rows < 1 || cols < 1)
        throw InvalidDimensionError("ginibre: dimensions must be positive");
    ComplexMatrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j)
            m(i, j) = g.next_complex_normal();
    return m;
}

// Haar-distributed unitary via QR of a Ginibre matrix with the R-diagonal
// phase correction (Mezzadri construction).
inline ComplexMatrix haar_unitary(Eigen::Index n, SeedSpec seed) {
    if (n < 1)
        throw InvalidDimensionError("haar_unitary: dimension must be positive");
    RngStream g(seed);
    const ComplexMatrix gin = ginibre(n, n, g);
    Eigen::HouseholderQR<ComplexMatrix> qr(gin);
    ComplexMatrix q = qr.householderQ();
    const ComplexMatrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Eigen::Index k = 0; k < n; ++k) {
        const double mag = std::abs(r(k, k));
        q.col(k) *= mag > 0.0 ? r(k, k) / mag : cdouble{1.0, 0.0};
    }
    return q;
}

// Haar-random pure state on `dim` dimensions (normalized Ginibre vector).
inline ComplexVector haar_state(Eigen::Index dim, RngStream& g) {
    ComplexVector v(dim);
    for (Eigen::Index i = 0; i < dim; ++i) v[i] = g.next_complex_normal();
    v.normalize();
    return v;
}

// Random density matrix from the partial-trace induced measure: rho = G G^+
// normalized, G an N x N' Ginibre matrix. This is distributed exactly as
// tracing out the N'-dimensional environment of a Haar pure state.
inline DensityMatrix induced_random_state(Eigen::Index n, Eigen::Index n_prime, SeedSpec seed) {
    if (n < 1)
        throw InvalidDimensionError("induced_random_state: N must be positive");
    if (n_prime < n)
        throw ContractViolationError("induced_random_state: requires N' >= N");
    RngStream g(seed);
    const ComplexMatrix gin = ginibre(n, n_prime, g);
    ComplexMatrix rho = gin * gin.adjoint();
    rho = (rho + rho.adjoint()) / 2.0;
    rho /= rho.trace().real();
    return DensityMatrix(rho);
}

// Uniform draw over the 4^r unphased r-qubit Pauli strings.
// Consumes two next_u64() draws: x bits, then z bits.
inline PauliString sample_pauli(int r, RngStream& g) {
    if (r < 1)
        throw InvalidDimensionError("sample_pauli: need at least 1 qubit");
    const std::uint64_t mask = (std::uint64_t{1} << r) - 1;
    const std::uint64_t x = g.next_u64() & mask;
    const std::uint64_t z = g.next_u64() & mask;
    return PauliString(r, x, z);
}

inline PauliString sample_pauli(int r, SeedSpec seed) {
    RngStream g(seed);
    return sample_pauli(r, g);
}

} // namespace ergolab
