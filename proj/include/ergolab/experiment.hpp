// experiment.hpp
// Config-driven experiment runner behind the ergolab CLI. Loads a JSON
// experiment description, validates it, dispatches to the library, and
// persists a result document plus plot-ready CSV series.
//
// Error taxonomy (mapped to CLI exit codes):
//   ParseError      -> 2: malformed JSON, missing/unknown/ill-typed fields
//   ValidationError -> 3: semantic problems (unknown fixture, invalid matrix,
//                         incompatible dimensions, zero shot counts)
//   anything else   -> 4: runtime failure
//
// Seed streams: with master M = {seed, 0} the runner uses
//   derive_stream(M, 101) to draw an induced-random input state,
//   derive_stream(M, 1)   for the probability-estimation stage,
//   derive_stream(M, 2)   for the work-estimation stage,
//   derive_stream(M, 3)   for concentration/lipschitz sampling.

#pragma once

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "ergolab/concentration.hpp"
#include "ergolab/fixtures.hpp"
#include "ergolab/protocols.hpp"

namespace ergolab {

class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

enum class ExperimentKind {
    exact,
    probe,
    protocol1,
    protocol2,
    protocol3,
    pipeline,
    concentration,
    lipschitz,
};

struct RunOptions {
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::optional<std::string> output_dir;
};

namespace detail_cfg {

using nlohmann::json;

inline ExperimentKind parse_kind(const std::string& s) {
    if (s == "exact") return ExperimentKind::exact;
    if (s == "probe") return ExperimentKind::probe;
    if (s == "protocol1") return ExperimentKind::protocol1;
    if (s == "protocol2") return ExperimentKind::protocol2;
    if (s == "protocol3") return ExperimentKind::protocol3;
    if (s == "pipeline") return ExperimentKind::pipeline;
    if (s == "concentration") return ExperimentKind::concentration;
    if (s == "lipschitz") return ExperimentKind::lipschitz;
    throw ParseError("field 'kind': unknown experiment kind '" + s + "'");
}

inline void require_keys(const json& obj, const std::string& where,
                         const std::set<std::string>& required,
                         const std::set<std::string>& optional) {
    if (!obj.is_object()) throw ParseError(where + ": expected an object");
    for (const auto& k : required)
        if (!obj.contains(k)) throw ParseError(where + ": missing required field '" + k + "'");
    for (const auto& [k, v] : obj.items())
        if (!required.contains(k) && !optional.contains(k))
            throw ParseError(where + ": unknown field '" + k + "'");
}

template <class T>
T get_field(const json& obj, const std::string& where, const std::string& key) {
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ParseError(where + ": field '" + key + "': " + e.what());
    }
}

template <class T>
T get_field_or(const json& obj, const std::string& where, const std::string& key, T fallback) {
    if (!obj.contains(key)) return fallback;
    return get_field<T>(obj, where, key);
}

// Complex matrices are serialized as row-major arrays of [re, im] pairs.
inline ComplexMatrix parse_complex_matrix(const json& j, const std::string& where) {
    if (!j.is_array() || j.empty()) throw ParseError(where + ": expected a non-empty array of rows");
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = static_cast<Eigen::Index>(j[0].size());
    ComplexMatrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto& row = j[static_cast<std::size_t>(r)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
            throw ParseError(where + ": ragged rows");
        for (Eigen::Index c = 0; c < cols; ++c) {
            const auto& cell = row[static_cast<std::size_t>(c)];
            if (!cell.is_array() || cell.size() != 2)
                throw ParseError(where + ": entries must be [re, im] pairs");
            m(r, c) = cdouble(cell[0].get<double>(), cell[1].get<double>());
        }
    }
    return m;
}

inline json dump_complex_matrix(const ComplexMatrix& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            row.push_back({m(r, c).real(), m(r, c).imag()});
        rows.push_back(std::move(row));
    }
    return rows;
}

inline std::string format17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void atomic_write(const std::filesystem::path& path, const std::string& contents) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        out << contents;
        if (!out.good()) throw std::runtime_error("short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

} // namespace detail_cfg

// ---------------------------------------------------------------------------
// Experiment
// ---------------------------------------------------------------------------

class Experiment {
public:
    // Parse a config file into a JSON document. Throws ParseError with the
    // parser's position diagnostics on malformed input.
    static nlohmann::json parse_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ParseError("cannot open config file: " + path);
        try {
            return nlohmann::json::parse(in);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(std::string("config parse failure: ") + e.what());
        }
    }

    static void apply_overrides(nlohmann::json& cfg, const RunOptions& opts) {
        if (!cfg.is_object()) throw ParseError("config root must be an object");
        if (opts.seed) cfg["seed"] = *opts.seed;
        if (opts.threads) cfg["threads"] = *opts.threads;
        if (opts.output_dir) cfg["output_dir"] = *opts.output_dir;
    }

    // Structural (field-level) parse followed by semantic validation.
    static Experiment build(const nlohmann::json& cfg) {
        Experiment e;
        e.raw_ = cfg;
        e.parse_structure(cfg);
        try {
            e.resolve();
        } catch (const ParseError&) {
            throw;
        } catch (const ValidationError&) {
            throw;
        } catch (const std::exception& ex) {
            throw ValidationError(ex.what());
        }
        return e;
    }

    // Executes the experiment and writes result.json (+ CSV artifacts) into
    // the output directory. Returns the result document.
    nlohmann::json run() const;

    ExperimentKind kind() const { return kind_; }
    const nlohmann::json& config() const { return raw_; }

private:
    void parse_structure(const nlohmann::json& cfg);
    void resolve();

    nlohmann::json run_exact() const;
    nlohmann::json run_probe() const;
    nlohmann::json run_protocol(ProtocolVariant variant) const;
    nlohmann::json run_pipeline() const;
    nlohmann::json run_concentration() const;
    nlohmann::json run_lipschitz() const;

    void write_convergence_csv(const RunResult& res) const;
    void write_tail_csv(const ConcentrationReport& rep) const;

    SeedSpec master_seed() const { return SeedSpec{seed_, 0}; }

    nlohmann::json raw_;
    ExperimentKind kind_ = ExperimentKind::exact;
    std::uint64_t seed_ = 0;
    int threads_ = 1;
    double epsilon_ = 1e-2;
    double delta_ = 1e-3;
    std::optional<std::uint64_t> shots_override_;
    std::uint64_t samples_ = 10000;
    std::uint64_t pairs_ = 10000;
    Eigen::Index nprime_ = 0;
    std::string output_dir_ = ".";
    double stage1_epsilon_ = 0.0;
    double stage1_delta_ = 0.0;
    std::optional<std::uint64_t> stage1_shots_override_;
    bool stage1_use_gap_epsilon_ = false;

    std::optional<HamiltonianSpec> ham_;
    std::optional<DensityMatrix> state_;
    std::vector<std::pair<std::string, MeasurementSetting>> measurements_;
};

// ---------------------------------------------------------------------------
// implementation
// ---------------------------------------------------------------------------

inline void Experiment::parse_structure(const nlohmann::json& cfg) {
    using detail_cfg::get_field;
    using detail_cfg::get_field_or;
    using detail_cfg::require_keys;

    if (!cfg.is_object()) throw ParseError("config root must be an object");
    require_keys(cfg, "config",
                 {"kind", "hamiltonian"},
                 {"state", "measurement", "epsilon", "delta", "seed", "shots_override", "stage1",
                  "samples", "pairs", "nprime", "threads", "output_dir"});
    kind_ = detail_cfg::parse_kind(get_field<std::string>(cfg, "config", "kind"));
    seed_ = get_field_or<std::uint64_t>(cfg, "config", "seed", 0);
    threads_ = get_field_or<int>(cfg, "config", "threads", 1);
    epsilon_ = get_field_or<double>(cfg, "config", "epsilon", 1e-2);
    delta_ = get_field_or<double>(cfg, "config", "delta", 1e-3);
    output_dir_ = get_field_or<std::string>(cfg, "config", "output_dir", ".");
    samples_ = get_field_or<std::uint64_t>(cfg, "config", "samples", 10000);
    pairs_ = get_field_or<std::uint64_t>(cfg, "config", "pairs", 10000);
    nprime_ = get_field_or<Eigen::Index>(cfg, "config", "nprime", 0);
    if (cfg.contains("shots_override"))
        shots_override_ = get_field<std::uint64_t>(cfg, "config", "shots_override");

    stage1_epsilon_ = epsilon_;
    stage1_delta_ = delta_;
    if (cfg.contains("stage1")) {
        const auto& s1 = cfg.at("stage1");
        require_keys(s1, "stage1", {}, {"epsilon", "delta", "shots_override", "use_gap_epsilon"});
        stage1_epsilon_ = get_field_or<double>(s1, "stage1", "epsilon", epsilon_);
        stage1_delta_ = get_field_or<double>(s1, "stage1", "delta", delta_);
        stage1_use_gap_epsilon_ = get_field_or<bool>(s1, "stage1", "use_gap_epsilon", false);
        if (s1.contains("shots_override"))
            stage1_shots_override_ = get_field<std::uint64_t>(s1, "stage1", "shots_override");
    }

    const bool needs_state = kind_ != ExperimentKind::concentration && kind_ != ExperimentKind::lipschitz;
    if (needs_state && !cfg.contains("state"))
        throw ParseError("config: missing required field 'state' for this kind");
    const bool needs_measurement = kind_ != ExperimentKind::exact &&
                                   kind_ != ExperimentKind::concentration &&
                                   kind_ != ExperimentKind::lipschitz;
    if (needs_measurement && !cfg.contains("measurement"))
        throw ParseError("config: missing required field 'measurement' for this kind");
    if ((kind_ == ExperimentKind::concentration || kind_ == ExperimentKind::lipschitz) && nprime_ < 1)
        throw ParseError("config: field 'nprime' is required for this kind");
}

inline void Experiment::resolve() {
    using detail_cfg::get_field;
    using detail_cfg::get_field_or;
    using detail_cfg::require_keys;
    using nlohmann::json;

    // Hamiltonian
    const json& hj = raw_.at("hamiltonian");
    if (hj.contains("builder")) {
        require_keys(hj, "hamiltonian", {"builder"}, {"n", "J", "h"});
        const auto name = get_field<std::string>(hj, "hamiltonian", "builder");
        const int n = get_field_or<int>(hj, "hamiltonian", "n", 3);
        if (name == "heisenberg_xxx") {
            ham_ = build_heisenberg_xxx(n, get_field_or<double>(hj, "hamiltonian", "J", 1.0),
                                        get_field_or<double>(hj, "hamiltonian", "h", 1.0));
        } else if (name == "number") {
            ham_ = build_number_hamiltonian(n);
        } else {
            throw ValidationError("hamiltonian: unknown builder '" + name + "'");
        }
    } else if (hj.contains("matrix")) {
        require_keys(hj, "hamiltonian", {"matrix"}, {});
        ham_ = HamiltonianSpec::from_dense(
            detail_cfg::parse_complex_matrix(hj.at("matrix"), "hamiltonian.matrix"));
    } else {
        throw ParseError("hamiltonian: expected 'builder' or 'matrix'");
    }

    // State
    if (raw_.contains("state")) {
        const json& sj = raw_.at("state");
        if (sj.contains("fixture")) {
            require_keys(sj, "state", {"fixture"}, {});
            const auto name = get_field<std::string>(sj, "state", "fixture");
            const auto& catalog = fixtures::state_catalog();
            const auto it = catalog.find(name);
            if (it == catalog.end()) throw ValidationError("state: unknown fixture '" + name + "'");
            state_ = it->second.build();
        } else if (sj.contains("matrix")) {
            require_keys(sj, "state", {"matrix"}, {});
            state_ = DensityMatrix(detail_cfg::parse_complex_matrix(sj.at("matrix"), "state.matrix"));
        } else if (sj.contains("induced")) {
            require_keys(sj, "state", {"induced"}, {});
            const json& ij = sj.at("induced");
            require_keys(ij, "state.induced", {"N", "Nprime"}, {});
            state_ = induced_random_state(get_field<Eigen::Index>(ij, "state.induced", "N"),
                                          get_field<Eigen::Index>(ij, "state.induced", "Nprime"),
                                          derive_stream(master_seed(), 101));
        } else {
            throw ParseError("state: expected 'fixture', 'matrix' or 'induced'");
        }
        if (state_->dim() != ham_->dim())
            throw ValidationError("state and hamiltonian dimensions differ");
    }

    // Measurement(s)
    if (raw_.contains("measurement")) {
        const json& mj = raw_.at("measurement");
        const auto parse_one = [&](const json& one) {
            if (one.contains("fixture")) {
                require_keys(one, "measurement", {"fixture"}, {});
                const auto name = get_field<std::string>(one, "measurement", "fixture");
                const auto& catalog = fixtures::measurement_catalog();
                const auto it = catalog.find(name);
                if (it == catalog.end())
                    throw ValidationError("measurement: unknown fixture '" + name + "'");
                measurements_.emplace_back(name,
                                           it->second.build(fixtures::qubit_count_for_dim(ham_->dim())));
            } else if (one.contains("block_bases")) {
                require_keys(one, "measurement", {"block_bases"}, {});
                std::vector<ComplexMatrix> bases;
                for (const auto& b : one.at("block_bases"))
                    bases.push_back(detail_cfg::parse_complex_matrix(b, "measurement.block_bases"));
                measurements_.emplace_back("inline", MeasurementSetting::from_block_bases(std::move(bases)));
            } else if (one.contains("projectors")) {
                require_keys(one, "measurement", {"projectors"}, {});
                std::vector<ComplexMatrix> projectors;
                for (const auto& p : one.at("projectors"))
                    projectors.push_back(detail_cfg::parse_complex_matrix(p, "measurement.projectors"));
                measurements_.emplace_back("inline", MeasurementSetting::from_projectors(projectors));
            } else {
                throw ParseError("measurement: expected 'fixture', 'block_bases' or 'projectors'");
            }
        };
        if (mj.is_array()) {
            if (kind_ != ExperimentKind::exact)
                throw ParseError("measurement: a list is only allowed for kind 'exact'");
            for (const auto& one : mj) parse_one(one);
        } else {
            parse_one(mj);
        }
        for (const auto& [name, ms] : measurements_)
            if (ms.dim() != ham_->dim())
                throw ValidationError("measurement '" + name + "' dimension differs from hamiltonian");
    }

    if (kind_ == ExperimentKind::protocol2 && !ham_->pauli_terms())
        throw ValidationError("protocol2 requires a Hamiltonian with a Pauli-sum form");
    if (shots_override_ && *shots_override_ == 0)
        throw ValidationError("shots_override must be positive");
    if (stage1_shots_override_ && *stage1_shots_override_ == 0)
        throw ValidationError("stage1.shots_override must be positive");
    if ((kind_ == ExperimentKind::concentration || kind_ == ExperimentKind::lipschitz) &&
        nprime_ < ham_->dim())
        throw ValidationError("nprime must be at least the system dimension");
}

inline nlohmann::json Experiment::run_exact() const {
    nlohmann::json summary;
    const auto erg = ergotropy_exact(*state_, *ham_);
    summary["energy"] = expectation(ham_->matrix(), *state_);
    summary["ergotropy"] = erg.value;
    summary["passive_energy"] = expectation(ham_->matrix(), erg.passive);
    nlohmann::json obs = nlohmann::json::object();
    for (const auto& [name, ms] : measurements_)
        obs[name] = observational_ergotropy_exact(*state_, *ham_, ms);
    if (!obs.empty()) summary["observational_ergotropy"] = obs;
    return summary;
}

inline nlohmann::json Experiment::run_probe() const {
    const auto& ms = measurements_.front().second;
    ProtocolConfig cfg{epsilon_, delta_, derive_stream(master_seed(), 1), shots_override_,
                       ProtocolVariant::protocol1};
    const auto est = estimate_probabilities(*state_, ms, cfg);
    const auto exact = block_probabilities(*state_, ms);
    double worst = 0.0;
    for (std::size_t i = 0; i < exact.size(); ++i)
        worst = std::max(worst, std::abs(exact[i] - est.p_hat[i]));
    nlohmann::json summary;
    summary["p_exact"] = exact;
    summary["p_hat"] = est.p_hat;
    summary["shots"] = est.shots;
    summary["max_abs_error"] = worst;
    return summary;
}

inline void Experiment::write_convergence_csv(const RunResult& res) const {
    std::string csv = "shot_index,running_estimate,exact_reference,abs_error\n";
    const double exact = res.exact_reference.value_or(0.0);
    for (const auto& [idx, est] : res.running_means) {
        csv += std::to_string(idx);
        csv += ',';
        csv += detail_cfg::format17(est);
        csv += ',';
        csv += detail_cfg::format17(exact);
        csv += ',';
        csv += detail_cfg::format17(std::abs(est - exact));
        csv += '\n';
    }
    detail_cfg::atomic_write(std::filesystem::path(output_dir_) / "convergence.csv", csv);
}

inline void Experiment::write_tail_csv(const ConcentrationReport& rep) const {
    std::string csv = "gamma,empirical,bound\n";
    for (const auto& row : rep.tail_table) {
        csv += detail_cfg::format17(row.gamma);
        csv += ',';
        csv += detail_cfg::format17(row.empirical);
        csv += ',';
        csv += detail_cfg::format17(row.bound);
        csv += '\n';
    }
    detail_cfg::atomic_write(std::filesystem::path(output_dir_) / "tail.csv", csv);
}

inline nlohmann::json Experiment::run_protocol(ProtocolVariant variant) const {
    const auto& ms = measurements_.front().second;
    ProtocolConfig cfg{epsilon_, delta_, derive_stream(master_seed(), 2), shots_override_, variant};
    const auto probs = block_probabilities(*state_, ms);
    const RunResult res = ergolab::run_protocol(variant, *state_, *ham_, ms, probs, cfg, threads_);
    write_convergence_csv(res);
    nlohmann::json summary;
    summary["estimate"] = res.estimate;
    summary["exact_reference"] = *res.exact_reference;
    summary["abs_error"] = std::abs(res.estimate - *res.exact_reference);
    summary["shots"] = res.shots;
    summary["elapsed_seconds"] = res.elapsed_seconds;
    return summary;
}

inline nlohmann::json Experiment::run_pipeline() const {
    const auto& ms = measurements_.front().second;
    ProtocolConfig cfg1{stage1_epsilon_, stage1_delta_, derive_stream(master_seed(), 1),
                        stage1_shots_override_, ProtocolVariant::protocol1};
    ProtocolConfig cfg2{epsilon_, delta_, derive_stream(master_seed(), 2), shots_override_,
                        ProtocolVariant::protocol1};
    std::optional<std::vector<double>> calibration;
    if (stage1_use_gap_epsilon_) calibration = block_probabilities(*state_, ms);
    const auto out = full_pipeline(*state_, *ham_, ms, cfg1, cfg2, calibration, threads_);
    write_convergence_csv(out.run);
    nlohmann::json summary;
    summary["p_hat"] = out.p_hat;
    summary["stage1_shots"] = out.stage1_shots;
    summary["estimate"] = out.run.estimate;
    summary["exact_reference"] = *out.run.exact_reference;
    summary["exact_observational_ergotropy"] =
        observational_ergotropy_exact(*state_, *ham_, ms);
    summary["stage2_shots"] = out.run.shots;
    summary["total_samples"] = out.total_samples;
    return summary;
}

inline nlohmann::json Experiment::run_concentration() const {
    const auto rep = ergotropy_statistics(*ham_, nprime_, samples_, derive_stream(master_seed(), 3),
                                          threads_);
    write_tail_csv(rep);
    nlohmann::json summary;
    summary["samples"] = rep.samples;
    summary["nprime"] = static_cast<std::int64_t>(rep.n_prime);
    summary["mean_ergotropy"] = rep.mean_ergotropy;
    summary["stddev_ergotropy"] = rep.stddev_ergotropy;
    nlohmann::json q = nlohmann::json::object();
    for (const auto& [level, value] : rep.quantiles) q[detail_cfg::format17(level)] = value;
    summary["quantiles"] = q;
    double worst = 0.0;
    for (const auto& row : rep.tail_table) worst = std::max(worst, row.empirical - row.bound);
    summary["max_tail_excess"] = worst;  // positive would violate the bound
    return summary;
}

inline nlohmann::json Experiment::run_lipschitz() const {
    const double ratio = lipschitz_check(*ham_, nprime_, pairs_, derive_stream(master_seed(), 3),
                                         threads_);
    nlohmann::json summary;
    summary["pairs"] = pairs_;
    summary["max_ratio"] = ratio;
    summary["lipschitz_bound"] = 4.0 * ham_->operator_norm();
    return summary;
}

inline nlohmann::json Experiment::run() const {
    std::filesystem::create_directories(output_dir_);
    nlohmann::json summary;
    switch (kind_) {
        case ExperimentKind::exact: summary = run_exact(); break;
        case ExperimentKind::probe: summary = run_probe(); break;
        case ExperimentKind::protocol1: summary = run_protocol(ProtocolVariant::protocol1); break;
        case ExperimentKind::protocol2: summary = run_protocol(ProtocolVariant::protocol2); break;
        case ExperimentKind::protocol3: summary = run_protocol(ProtocolVariant::protocol3); break;
        case ExperimentKind::pipeline: summary = run_pipeline(); break;
        case ExperimentKind::concentration: summary = run_concentration(); break;
        case ExperimentKind::lipschitz: summary = run_lipschitz(); break;
    }
    nlohmann::json result;
    result["config"] = raw_;
    result["summary"] = summary;
    detail_cfg::atomic_write(std::filesystem::path(output_dir_) / "result.json",
                             result.dump(2) + "\n");
    return result;
}

// Human-readable catalog for `ergolab fixtures`.
inline std::string fixture_catalog_text() {
    std::string out;
    out += "states:\n";
    for (const auto& [name, entry] : fixtures::state_catalog())
        out += "  " + name + " - " + entry.description + "\n";
    out += "measurements:\n";
    for (const auto& [name, entry] : fixtures::measurement_catalog())
        out += "  " + name + " - " + entry.description + "\n";
    out += "hamiltonian builders:\n";
    out += "  heisenberg_xxx - ring H = -J sum Z_j Z_{j+1} - h sum X_j (params n, J, h)\n";
    out += "  number - excitation counter H = sum_j (I - Z_j)/2 (param n)\n";
    return out;
}

} // namespace ergolab
