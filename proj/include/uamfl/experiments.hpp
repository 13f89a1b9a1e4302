#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "uamfl/afl.hpp"
#include "uamfl/analysis.hpp"
#include "uamfl/burgers.hpp"
#include "uamfl/config.hpp"
#include "uamfl/fno.hpp"
#include "uamfl/mcsim.hpp"

/// The CLI subcommands as library calls: each writes CSV artifacts under
/// cfg.out_dir and returns what it computed.
namespace uamfl::experiments {

namespace fs = std::filesystem;

/// Federated FNO regression over per-client Burgers datasets.
class FnoProblem {
public:
    using Params = fno::FnoParams;

    FnoProblem(burgers::FederatedDataset train, std::vector<burgers::TurbulenceSample> test)
        : train_(std::move(train)), test_(std::move(test)) {
        require(!train_.clients.empty(), "training needs at least one client");
        for (const auto& c : train_.clients) {
            require(!c.empty(), "every client needs a non-empty dataset");
        }
        require(!test_.empty(), "the held-out set must not be empty");
    }

    [[nodiscard]] std::size_t client_count() const { return train_.clients.size(); }
    [[nodiscard]] double client_size(std::size_t k) const { return static_cast<double>(train_.clients[k].size()); }
    [[nodiscard]] Params gradient(std::size_t k, const Params& w) const { return fno::gradient(w, train_.clients[k]); }
    [[nodiscard]] double test_loss(const Params& w) const { return fno::loss(w, test_); }
    [[nodiscard]] const burgers::FederatedDataset& dataset() const { return train_; }

private:
    burgers::FederatedDataset train_;
    std::vector<burgers::TurbulenceSample> test_;
};

inline std::string header(const std::string& command, const config::ExperimentConfig& cfg) {
    std::ostringstream os;
    os << "# uamfl " << command << " config_hash=" << config::hash_hex(cfg) << " seed=" << cfg.seed << '\n';
    return os.str();
}

inline std::ofstream open_output(const config::ExperimentConfig& cfg, const std::string& name) {
    fs::create_directories(cfg.out_dir);
    const fs::path path = fs::path(cfg.out_dir) / name;
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw config::ConfigError("cannot write output file '" + path.string() + "'");
    }
    os << std::setprecision(10);
    return os;
}

// ---------------------------------------------------------------------------

struct ConnectivityRow {
    std::string radius_model;
    std::string sweep;
    double sweep_value = 0.0;
    double gamma_db = 0.0;
    double analytic = 0.0;
    double mc = 0.0;
    double mc_stderr = 0.0;
};

inline ModelParams with_sweep(ModelParams p, const std::string& sweep, double v) {
    if (sweep == "lambda_l") {
        p.lambda_l = v;
    } else if (sweep == "lambda_c") {
        p.lambda_c = units::per_km2(v);
    } else if (sweep == "lambda_b") {
        p.lambda_b = units::per_km2(v);
    } else if (sweep == "lambda_t") {
        p.lambda_t = units::per_km(v);
    }
    return p;
}

inline double sweep_base(const config::ExperimentConfig& cfg) {
    const auto& m = cfg.model;
    const auto& s = cfg.connectivity.sweep;
    return s == "lambda_l" ? m.lambda_l : s == "lambda_c" ? m.lambda_c : s == "lambda_b" ? m.lambda_b : m.lambda_t;
}

/// Analytical and MC connectivity for every radius model, sweep value and threshold.
inline std::vector<ConnectivityRow> cmd_connectivity(const config::ExperimentConfig& cfg) {
    const auto& cc = cfg.connectivity;
    std::vector<double> values = cc.sweep_values;
    if (cc.sweep == "none" || values.empty()) {
        values = {cc.sweep == "none" ? 0.0 : sweep_base(cfg)};
    }
    std::vector<ConnectivityRow> rows;
    for (const auto& model : cc.radius_models) {
        ModelParams base = cfg.model_params();
        base.radius_model = config::radius_model_named(cfg.model, model);
        for (double v : values) {
            const ModelParams p = with_sweep(base, cc.sweep, v);
            const analysis::TabulatedLaplace tab{analysis::LaplaceEvaluator{p, cfg.quadrature_spec()}};
            const auto samples = mcsim::mc_sir_samples(p, cfg.trials, cfg.seed);
            for (double g : cc.gamma_db) {
                const double gamma = units::db_to_linear(g);
                const auto mc = mcsim::connectivity_from_samples(samples, gamma);
                rows.push_back({model, cc.sweep, v, g, analysis::connectivity_probability(gamma, tab), mc.estimate,
                                mc.stderr_});
            }
        }
    }
    auto os = open_output(cfg, "connectivity.csv");
    os << header("connectivity", cfg);
    os << "radius_model,sweep,sweep_value,gamma_db,p_conn_analytic,p_conn_mc,mc_stderr\n";
    for (const auto& r : rows) {
        os << r.radius_model << ',' << r.sweep << ',' << r.sweep_value << ',' << r.gamma_db << ',' << r.analytic << ','
           << r.mc << ',' << r.mc_stderr << '\n';
    }
    return rows;
}

// ---------------------------------------------------------------------------

inline analysis::ParticipantEstimate participants(const config::ExperimentConfig& cfg) {
    const ModelParams p = cfg.model_params();
    return analysis::expected_participants(p, analysis::expected_chord_length(p, cfg.quadrature_spec()));
}

struct StalenessRow {
    double tau = 0.0;
    double analytic = 0.0;
    double empirical = 0.0;
};

struct StalenessResult {
    double t_comp = 0.0;
    long K = 0;
    std::vector<StalenessRow> rows;
};

inline std::vector<double> staleness_grid(const config::ExperimentConfig& cfg, double t_comp) {
    const auto& s = cfg.staleness;
    std::vector<double> tau;
    const double ratio = std::log(s.slack_max_s / s.slack_min_s) / static_cast<double>(s.points - 1);
    for (long i = 0; i < s.points; ++i) {
        tau.push_back(t_comp + s.slack_min_s * std::exp(ratio * static_cast<double>(i)));
    }
    return tau;
}

inline StalenessResult cmd_staleness(const config::ExperimentConfig& cfg) {
    const ModelParams p = cfg.model_params();
    const analysis::TabulatedLaplace tab{analysis::LaplaceEvaluator{p, cfg.quadrature_spec()}};
    auto samples = mcsim::mc_staleness(p, cfg.trials, cfg.seed);
    std::vector<double> deltas;
    deltas.reserve(samples.size());
    for (const auto& s : samples) {
        deltas.push_back(s.delta);
    }
    std::sort(deltas.begin(), deltas.end());
    StalenessResult out;
    out.t_comp = p.compute_delay();
    out.K = participants(cfg).count;
    for (double tau : staleness_grid(cfg, out.t_comp)) {
        const auto below = std::upper_bound(deltas.begin(), deltas.end(), tau) - deltas.begin();
        out.rows.push_back({tau, analysis::staleness_cdf(tau, tab),
                            static_cast<double>(below) / static_cast<double>(deltas.size())});
    }
    auto os = open_output(cfg, "staleness.csv");
    os << header("staleness", cfg);
    os << "# t_comp_s=" << out.t_comp << " K=" << out.K << '\n';
    os << "tau_s,cdf_analytic,cdf_empirical\n";
    for (const auto& r : out.rows) {
        os << r.tau << ',' << r.analytic << ',' << r.empirical << '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------

struct TrainSetup {
    long K_formula = 0;
    std::size_t clients = 0;
    FnoProblem problem;
    fno::FnoParams init;
    afl::StalenessSource staleness;
};

inline fno::FnoConfig fno_config(const config::ExperimentConfig& cfg) {
    fno::FnoConfig f = cfg.fno;
    f.n_grid = cfg.burgers.n_grid;
    return f;
}

inline afl::StalenessSource staleness_source(const config::ExperimentConfig& cfg) {
    const ModelParams p = cfg.model_params();
    if (cfg.train.staleness == "constant") {
        return afl::constant_staleness(cfg.train.constant_delta_s);
    }
    if (cfg.train.staleness == "mc") {
        return afl::mc_staleness_source(p);
    }
    const analysis::TabulatedLaplace tab{analysis::LaplaceEvaluator{p, cfg.quadrature_spec()}};
    auto sampler = std::make_shared<afl::AnalyticalStalenessSampler>(tab);
    return [sampler](std::size_t k, Rng& rng) { return (*sampler)(k, rng); };
}

/// Client count from the participant formula, capped by the config; the data
/// and the initial model depend on the seed only, never on the runner.
inline TrainSetup train_setup(const config::ExperimentConfig& cfg) {
    const long K = participants(cfg).count;
    if (K < 1) {
        throw config::ConfigError("the network yields K = " + std::to_string(K) +
                                  " participants; lower model.lambda_b_per_km2 or raise the aircraft density");
    }
    const auto clients = static_cast<std::size_t>(std::min(K, cfg.train.max_clients));
    auto data = burgers::make_federated_dataset(clients, static_cast<std::size_t>(cfg.train.samples_per_client),
                                                cfg.burgers, cfg.seed, cfg.train.heterogeneity);
    auto test = burgers::make_federated_dataset(1, static_cast<std::size_t>(cfg.train.test_samples), cfg.burgers,
                                                cfg.seed ^ 0x5eed7e57ULL, 0.0);
    Rng init_rng = make_rng(cfg.seed, Stream::FnoInit);
    auto init = fno::init_params(fno_config(cfg), init_rng);
    return {K, clients, FnoProblem(std::move(data), std::move(test.clients[0])), std::move(init),
            staleness_source(cfg)};
}

struct TrainResult {
    long K_formula = 0;
    std::size_t clients = 0;
    afl::AflTrace trace;
};

inline afl::RunResult<fno::FnoParams> run_runner(const config::ExperimentConfig& cfg, const TrainSetup& setup,
                                                 const std::string& runner) {
    afl::ServerConfig server;
    server.lr = cfg.train.lr;
    afl::StopCriteria stop;
    stop.max_rounds = cfg.train.max_rounds;
    stop.target_loss = cfg.train.target_loss;
    stop.max_sim_time = cfg.train.max_sim_time_s;
    if (runner == "afl") {
        return afl::run_afl(setup.problem, setup.init, server, setup.staleness, stop, cfg.seed);
    }
    if (runner == "afl-stale-free") {
        server.g1 = afl::g1_unit;
        return afl::run_afl(setup.problem, setup.init, server, setup.staleness, stop, cfg.seed);
    }
    if (runner == "fedavg") {
        return afl::run_fedavg(setup.problem, setup.init, server, setup.staleness, stop, cfg.seed);
    }
    if (runner == "scalable") {
        return afl::run_scalable(setup.problem, setup.init, server, cfg.train.cohort_fraction, setup.staleness, stop,
                                 cfg.seed);
    }
    throw config::ConfigError("unknown runner '" + runner + "'");
}

/// Trains with cfg.train.runner; writes trace_<runner>.csv and checkpoint_<runner>.bin.
inline TrainResult cmd_train(const config::ExperimentConfig& cfg, const TrainSetup& setup) {
    const std::string& runner = cfg.train.runner;
    const auto run = run_runner(cfg, setup, runner);
    auto os = open_output(cfg, "trace_" + runner + ".csv");
    os << header("train", cfg);
    os << "# runner=" << runner << " K_formula=" << setup.K_formula << " clients=" << setup.clients
       << " reached_target=" << (run.trace.reached_target ? 1 : 0) << " rounds_to_target=" << run.trace.rounds_to_target
       << '\n';
    afl::write_trace_csv(os, run.trace);
    fno::save_checkpoint((fs::path(cfg.out_dir) / ("checkpoint_" + runner + ".bin")).string(), run.params);
    return {setup.K_formula, setup.clients, run.trace};
}

inline TrainResult cmd_train(const config::ExperimentConfig& cfg) { return cmd_train(cfg, train_setup(cfg)); }

// ---------------------------------------------------------------------------

struct BoundsRow {
    long round = 0;
    double mean_gap = 0.0;
    double bound = 0.0;
};

struct BoundsResult {
    afl::ConvergenceInputs inputs;
    afl::ConditionResult condition;
    double f0_gap = 0.0;
    double gap_term = 0.0;
    std::vector<BoundsRow> rows;  // rows[i] is the state after i aggregations
};

class ConditionViolated : public config::ConfigError {
public:
    explicit ConditionViolated(double margin)
        : config::ConfigError(message(margin)), margin_(margin) {}
    [[nodiscard]] double margin() const { return margin_; }

private:
    static std::string message(double margin) {
        std::ostringstream os;
        os << std::setprecision(6) << "convergence condition violated: max over delta of L*eta*(g2 + g1) - K = "
           << margin << " > 0";
        return os.str();
    }
    double margin_;
};

/// Averages the optimality gap of AFL on the quadratic toy over bounds.seeds
/// staleness draws and compares it with the contraction bound.
inline BoundsResult cmd_bounds(const config::ExperimentConfig& cfg) {
    const auto& b = cfg.bounds;
    const ModelParams p = cfg.model_params();
    const analysis::TabulatedLaplace tab{analysis::LaplaceEvaluator{p, cfg.quadrature_spec()}};
    const afl::AnalyticalStalenessSampler sampler(tab);
    const afl::QuadraticToy toy(static_cast<std::size_t>(b.clients), static_cast<std::size_t>(b.dim), b.c, b.L,
                                b.spread, static_cast<std::uint64_t>(b.toy_seed));
    const afl::WeightFn g1 = b.g1 == "unit" ? afl::WeightFn(afl::g1_unit) : afl::WeightFn(afl::g1_default);

    BoundsResult out;
    auto& in = out.inputs;
    in.L = toy.L();
    in.c = toy.c();
    in.phi_sq = toy.phi_sq();
    in.K = static_cast<double>(b.clients);
    in.eta = b.eta;
    in.g1 = g1;
    const auto mom = afl::estimate_g1_moments([&](double t) { return sampler.cdf(t); }, g1,
                                              afl::StieltjesGrid{p.compute_delay(), 1e4, 2000});
    in.E_g1 = mom.mean;
    in.V_g1 = mom.variance;

    std::vector<double> grid;
    for (int i = 0; i < 1000; ++i) {
        grid.push_back(p.compute_delay() * std::pow(10.0, 8.0 * i / 999.0));
    }
    grid.insert(grid.begin(), 0.0);
    out.condition = afl::check_convergence_condition(in, grid);
    if (!out.condition.satisfied) {
        throw ConditionViolated(out.condition.margin);
    }

    const afl::VecParams w0{std::vector<double>(static_cast<std::size_t>(b.dim), 0.0)};
    out.f0_gap = toy.gap(w0);
    out.gap_term = afl::bound_gap_term(in);
    std::vector<double> mean(static_cast<std::size_t>(b.rounds) + 1, 0.0);
    afl::ServerConfig server;
    server.lr = b.eta;
    server.g1 = g1;
    afl::StopCriteria stop;
    stop.max_rounds = b.rounds;
    for (long s = 0; s < b.seeds; ++s) {
        const auto run = afl::run_afl(toy, w0, server, sampler, stop, cfg.seed + static_cast<std::uint64_t>(s));
        for (const auto& row : run.trace.rows) {
            // offsets from f0 keep round 0 exact
            mean[static_cast<std::size_t>(row.round)] += row.test_loss - toy.optimum_loss() - out.f0_gap;
        }
    }
    for (long i = 0; i <= b.rounds; ++i) {
        const double bound = i == 0 ? out.f0_gap : afl::unrolled_bound(in, out.f0_gap, i - 1);
        const double m = out.f0_gap + mean[static_cast<std::size_t>(i)] / static_cast<double>(b.seeds);
        out.rows.push_back({i, m, bound});
    }

    auto os = open_output(cfg, "bounds.csv");
    os << header("bounds", cfg);
    os << "# L=" << in.L << " c=" << in.c << " phi_sq=" << in.phi_sq << " K=" << in.K << " eta=" << in.eta
       << " E_g1=" << in.E_g1 << " V_g1=" << in.V_g1 << " condition_margin=" << out.condition.margin
       << " gap_term=" << out.gap_term << '\n';
    os << "round,mean_gap," << (b.g1 == "unit" ? "unit_weight_bound" : "unrolled_bound") << '\n';
    for (const auto& r : out.rows) {
        os << r.round << ',' << r.mean_gap << ',' << r.bound << '\n';
    }
    return out;
}

}  // namespace uamfl::experiments
