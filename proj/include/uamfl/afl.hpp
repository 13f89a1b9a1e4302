#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <limits>
#include <ostream>
#include <queue>
#include <sstream>
#include <string>
#include <vector>

#include "uamfl/analysis.hpp"
#include "uamfl/error.hpp"
#include "uamfl/mcsim.hpp"
#include "uamfl/params.hpp"
#include "uamfl/rng.hpp"

/// Event-driven asynchronous federated learning in virtual time, synchronous
/// baselines, and the convergence-bound evaluators for the aggregation rule
///   w_{i+1} = w_i - eta g1(delta) (s_k / s_K) grad f_k(w_snapshot).
namespace uamfl::afl {

/// A federated objective: per-client gradients and a held-out loss over a
/// parameter type exposing a flat `values` vector.
template <class P>
concept FederatedProblem = requires(const P& p, const typename P::Params& w, std::size_t k) {
    { p.client_count() } -> std::convertible_to<std::size_t>;
    { p.client_size(k) } -> std::convertible_to<double>;
    { p.gradient(k, w) } -> std::same_as<typename P::Params>;
    { p.test_loss(w) } -> std::convertible_to<double>;
    { w.values } -> std::convertible_to<const std::vector<double>&>;
};

using WeightFn = std::function<double(double)>;

inline double g1_default(double delta) { return 1.0 + std::exp(-delta); }
inline double g1_unit(double) { return 1.0; }
inline double g2_default(double delta) { return -std::expm1(-delta); }

/// Draws the staleness of one uplink update for a given client.
using StalenessSource = std::function<double(std::size_t client, Rng& rng)>;

inline StalenessSource constant_staleness(double delta) {
    require(delta > 0.0, "staleness must be positive");
    return [delta](std::size_t, Rng&) { return delta; };
}

/// Inverse-CDF sampler for the analytical staleness law. The CDF is
/// tabulated on a log grid of the slack tau - t_comp; mass at or below the
/// first grid point (interference-free links) maps to delta = t_comp and the
/// tail beyond the last grid point is extended with the 1/tau decay of the
/// Rayleigh-limited SIR tail.
class AnalyticalStalenessSampler {
public:
    template <analysis::LaplaceSource L>
    explicit AnalyticalStalenessSampler(const L& laplace, double slack_min = 1e-9, double slack_max = 1e4,
                                        int per_decade = 16) {
        t_comp_ = laplace.params().compute_delay();
        const auto n = static_cast<std::size_t>(std::ceil(std::log10(slack_max / slack_min) * per_decade)) + 1;
        double last = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double slack = slack_min * std::pow(10.0, static_cast<double>(i) / per_decade);
            const double f = std::max(last, analysis::staleness_cdf(t_comp_ + slack, laplace));
            log_slack_.push_back(std::log(slack));
            cdf_.push_back(f);
            last = f;
        }
    }

    [[nodiscard]] double t_comp() const { return t_comp_; }
    [[nodiscard]] const std::vector<double>& cdf_table() const { return cdf_; }

    [[nodiscard]] double cdf(double tau) const {
        if (tau <= t_comp_) {
            return 0.0;
        }
        const double x = std::log(tau - t_comp_);
        if (x <= log_slack_.front()) {
            return cdf_.front();
        }
        if (x >= log_slack_.back()) {
            return 1.0 - (1.0 - cdf_.back()) * std::exp(log_slack_.back() - x);
        }
        const auto it = std::upper_bound(log_slack_.begin(), log_slack_.end(), x);
        const auto i = static_cast<std::size_t>(it - log_slack_.begin()) - 1;
        const double w = (x - log_slack_[i]) / (log_slack_[i + 1] - log_slack_[i]);
        return cdf_[i] + w * (cdf_[i + 1] - cdf_[i]);
    }

    [[nodiscard]] double quantile(double u) const {
        if (u <= cdf_.front()) {
            return t_comp_;
        }
        if (u >= cdf_.back()) {
            const double tail = (1.0 - cdf_.back()) / std::max(1.0 - u, 1e-300);
            return t_comp_ + std::exp(log_slack_.back()) * tail;
        }
        const auto it = std::lower_bound(cdf_.begin(), cdf_.end(), u);
        const auto i = static_cast<std::size_t>(it - cdf_.begin());
        const double df = cdf_[i] - cdf_[i - 1];
        const double w = df > 0.0 ? (u - cdf_[i - 1]) / df : 1.0;
        return t_comp_ + std::exp(log_slack_[i - 1] + w * (log_slack_[i] - log_slack_[i - 1]));
    }

    double operator()(std::size_t, Rng& rng) const { return quantile(uniform01(rng)); }

private:
    double t_comp_ = 0.0;
    std::vector<double> log_slack_;
    std::vector<double> cdf_;
};

/// Fresh network realization per update: SIR of the typical link -> delta.
inline StalenessSource mc_staleness_source(ModelParams params) {
    params.validate();
    return [params](std::size_t, Rng& rng) {
        for (int attempt = 0; attempt < 1000; ++attempt) {
            bool ok = false;
            const double sir = mcsim::sir_independent(params, rng, ok);
            if (ok) {
                return mcsim::staleness_from_sir(sir, params).delta;
            }
        }
        throw NumericalError("staleness source: no serving link in 1000 realizations");
    };
}

struct ServerConfig {
    double lr = 0.1;
    WeightFn g1 = g1_default;
    /// Local SGD steps per update; 1 sends the plain gradient at the snapshot.
    int local_steps = 1;
    double local_lr = 0.0;
};

struct StopCriteria {
    long max_rounds = 1000;
    double target_loss = 0.0;  // <= 0 disables
    double max_sim_time = std::numeric_limits<double>::infinity();
};

struct TraceRow {
    long round = 0;
    double sim_clock = 0.0;
    long client = -1;  // -1 for synchronous rounds
    double staleness = 0.0;
    double g1_weight = 1.0;
    double test_loss = 0.0;
};

struct AflTrace {
    std::vector<TraceRow> rows;
    long rounds = 0;
    long events = 0;  // client updates consumed (incl. discarded late ones)
    bool reached_target = false;
    long rounds_to_target = -1;
    double time_to_target = std::numeric_limits<double>::infinity();
};

template <class Params>
struct RunResult {
    AflTrace trace;
    Params params;
};

inline void write_trace_csv(std::ostream& os, const AflTrace& trace) {
    os << "round,sim_clock_s,client_id,staleness_s,g1_weight,global_test_loss\n";
    os.precision(17);
    for (const auto& r : trace.rows) {
        os << r.round << ',' << r.sim_clock << ',' << r.client << ',' << r.staleness << ',' << r.g1_weight << ','
           << r.test_loss << '\n';
    }
}

class DivergenceError : public NumericalError {
public:
    DivergenceError(const std::string& what, AflTrace trace) : NumericalError(what), trace_(std::move(trace)) {}
    [[nodiscard]] const AflTrace& trace() const { return trace_; }

private:
    AflTrace trace_;
};

namespace detail {

inline void axpy(double a, const std::vector<double>& x, std::vector<double>& y) {
    for (std::size_t i = 0; i < y.size(); ++i) {
        y[i] += a * x[i];
    }
}

template <FederatedProblem P>
double total_size(const P& problem) {
    double s = 0.0;
    for (std::size_t k = 0; k < problem.client_count(); ++k) {
        const double sk = problem.client_size(k);
        require(sk >= 1.0, "every client needs at least one sample");
        s += sk;
    }
    return s;
}

/// The update a client sends back for snapshot w: the gradient, or the
/// pseudo-gradient (w - w_local) / local_lr after several local steps.
template <FederatedProblem P>
typename P::Params client_update(const P& problem, std::size_t k, const typename P::Params& w,
                                 const ServerConfig& server) {
    if (server.local_steps <= 1) {
        return problem.gradient(k, w);
    }
    require(server.local_lr > 0.0, "local_lr must be positive for multi-step local training");
    typename P::Params local = w;
    for (int s = 0; s < server.local_steps; ++s) {
        axpy(-server.local_lr, problem.gradient(k, local).values, local.values);
    }
    typename P::Params out = w;
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        out.values[i] = (w.values[i] - local.values[i]) / server.local_lr;
    }
    return out;
}

inline void record(AflTrace& trace, const TraceRow& row, const StopCriteria& stop) {
    if (!std::isfinite(row.test_loss)) {
        trace.rows.push_back(row);
        std::ostringstream dump;
        dump << "training diverged at round " << row.round << " (non-finite test loss); trace:\n";
        write_trace_csv(dump, trace);
        throw DivergenceError(dump.str(), trace);
    }
    trace.rows.push_back(row);
    trace.rounds = row.round;
    if (!trace.reached_target && stop.target_loss > 0.0 && row.test_loss <= stop.target_loss) {
        trace.reached_target = true;
        trace.rounds_to_target = row.round;
        trace.time_to_target = row.sim_clock;
    }
}

inline bool should_stop(const AflTrace& trace, const StopCriteria& stop, double clock) {
    return trace.rounds >= stop.max_rounds || trace.reached_target || clock >= stop.max_sim_time;
}

struct Pending {
    double arrival;
    std::size_t client;
    double staleness;
    std::size_t slot;
};

struct Later {
    bool operator()(const Pending& a, const Pending& b) const {
        return a.arrival != b.arrival ? a.arrival > b.arrival : a.client > b.client;
    }
};

}  // namespace detail

/// Asynchronous aggregation: every arrival is applied on its own.
template <FederatedProblem P>
RunResult<typename P::Params> run_afl(const P& problem, typename P::Params w0, const ServerConfig& server,
                                      const StalenessSource& staleness, const StopCriteria& stop,
                                      std::uint64_t seed) {
    using Params = typename P::Params;
    const std::size_t K = problem.client_count();
    require(K >= 1, "AFL needs at least one client");
    require(server.lr >= 0.0, "learning rate must be non-negative");
    const double s_total = detail::total_size(problem);
    Rng rng = make_rng(seed, Stream::Staleness);
    RunResult<Params> out{{}, std::move(w0)};
    AflTrace& trace = out.trace;
    double clock = 0.0;
    detail::record(trace, {0, 0.0, -1, 0.0, 1.0, problem.test_loss(out.params)}, stop);

    std::vector<Params> in_flight(K);
    std::priority_queue<detail::Pending, std::vector<detail::Pending>, detail::Later> queue;
    const auto dispatch = [&](std::size_t k) {
        in_flight[k] = detail::client_update(problem, k, out.params, server);
        const double delta = staleness(k, rng);
        if (!(delta > 0.0) || !std::isfinite(delta)) {
            throw NumericalError("staleness source returned a non-positive or non-finite delay");
        }
        queue.push({clock + delta, k, delta, k});
    };
    for (std::size_t k = 0; k < K; ++k) {
        dispatch(k);
    }
    while (!detail::should_stop(trace, stop, clock)) {
        if (queue.empty()) {
            throw NumericalError("AFL event queue is empty");
        }
        const detail::Pending ev = queue.top();
        queue.pop();
        clock = ev.arrival;
        const double weight = server.g1(ev.staleness);
        const double share = problem.client_size(ev.client) / s_total;
        detail::axpy(-server.lr * weight * share, in_flight[ev.slot].values, out.params.values);
        ++trace.events;
        detail::record(trace,
                       {trace.rounds + 1, clock, static_cast<long>(ev.client), ev.staleness, weight,
                        problem.test_loss(out.params)},
                       stop);
        dispatch(ev.client);
    }
    return out;
}

/// Barrier-synchronized rounds that aggregate the earliest ceil(fraction*K)
/// arrivals; fraction = 1 is FedAvg.
template <FederatedProblem P>
RunResult<typename P::Params> run_scalable(const P& problem, typename P::Params w0, const ServerConfig& server,
                                           double cohort_fraction, const StalenessSource& staleness,
                                           const StopCriteria& stop, std::uint64_t seed) {
    using Params = typename P::Params;
    const std::size_t K = problem.client_count();
    require(K >= 1, "federated training needs at least one client");
    require(cohort_fraction > 0.0 && cohort_fraction <= 1.0, "cohort fraction must lie in (0, 1]");
    const double s_total = detail::total_size(problem);
    const auto cohort = static_cast<std::size_t>(
        std::clamp<double>(std::ceil(cohort_fraction * static_cast<double>(K) - 1e-12), 1.0, static_cast<double>(K)));
    Rng rng = make_rng(seed, Stream::Staleness);
    RunResult<Params> out{{}, std::move(w0)};
    AflTrace& trace = out.trace;
    double clock = 0.0;
    detail::record(trace, {0, 0.0, -1, 0.0, 1.0, problem.test_loss(out.params)}, stop);
    std::vector<std::pair<double, std::size_t>> arrivals(K);
    while (!detail::should_stop(trace, stop, clock)) {
        for (std::size_t k = 0; k < K; ++k) {
            const double delta = staleness(k, rng);
            if (!(delta > 0.0) || !std::isfinite(delta)) {
                throw NumericalError("staleness source returned a non-positive or non-finite delay");
            }
            arrivals[k] = {delta, k};
        }
        std::sort(arrivals.begin(), arrivals.end());
        Params step = out.params;
        std::fill(step.values.begin(), step.values.end(), 0.0);
        for (std::size_t c = 0; c < cohort; ++c) {
            const std::size_t k = arrivals[c].second;
            const Params g = detail::client_update(problem, k, out.params, server);
            detail::axpy(problem.client_size(k) / s_total, g.values, step.values);
        }
        detail::axpy(-server.lr, step.values, out.params.values);
        const double duration = arrivals[cohort - 1].first;
        clock += duration;
        trace.events += static_cast<long>(K);
        detail::record(trace, {trace.rounds + 1, clock, -1, duration, 1.0, problem.test_loss(out.params)}, stop);
    }
    return out;
}

template <FederatedProblem P>
RunResult<typename P::Params> run_fedavg(const P& problem, typename P::Params w0, const ServerConfig& server,
                                         const StalenessSource& staleness, const StopCriteria& stop,
                                         std::uint64_t seed) {
    return run_scalable(problem, std::move(w0), server, 1.0, staleness, stop, seed);
}

// ---------------------------------------------------------------------------
// Convergence analysis

struct ConvergenceInputs {
    double L = 1.0;
    double c = 0.0;
    double phi_sq = 0.0;
    double K = 1.0;
    double eta = 0.1;
    double E_g1 = 1.0;
    double V_g1 = 0.0;
    WeightFn g1 = g1_default;
    WeightFn g2 = g2_default;

    void validate(bool need_convexity) const {
        require(L > 0.0, "Lipschitz constant L must be positive");
        require(!need_convexity || c > 0.0, "strong convexity constant c must be positive");
        require(phi_sq >= 0.0, "phi^2 must be non-negative");
        require(K >= 1.0, "K must be at least 1");
        require(eta > 0.0, "learning rate must be positive");
        require(E_g1 > 0.0 && V_g1 >= 0.0, "invalid g1 moments");
    }
};

struct ConditionResult {
    bool satisfied = false;
    double margin = 0.0;  // max over delta of L eta (g2 + g1) - K
    double worst_delta = 0.0;
};

/// Worst case of L eta g2(delta) + L eta g1(delta) - K over the grid and delta -> inf.
inline ConditionResult check_convergence_condition(const ConvergenceInputs& in, const std::vector<double>& delta_grid) {
    in.validate(false);
    ConditionResult r;
    r.margin = -std::numeric_limits<double>::infinity();
    std::vector<double> grid = delta_grid;
    grid.push_back(std::numeric_limits<double>::infinity());
    for (double d : grid) {
        const double m = in.L * in.eta * (in.g2(d) + in.g1(d)) - in.K;
        if (m > r.margin) {
            r.margin = m;
            r.worst_delta = d;
        }
    }
    r.satisfied = r.margin <= 0.0;
    return r;
}

/// One-round bound: expected loss after one round given f(w_i)
/// and ||grad f(w_i)||^2.
inline double step_bound(const ConvergenceInputs& in, double f_i, double grad_norm_sq) {
    in.validate(false);
    return f_i - in.eta * in.E_g1 / (2.0 * in.K) * grad_norm_sq +
           in.L * in.eta * in.eta * (in.V_g1 + in.E_g1 * in.E_g1) * in.phi_sq / (2.0 * in.K * in.K);
}

/// Staleness-unaware specialisation of the one-round bound (g1 = 1).
inline double unit_weight_step_bound(const ConvergenceInputs& in, double f_i, double grad_norm_sq) {
    ConvergenceInputs unit = in;
    unit.E_g1 = 1.0;
    unit.V_g1 = 0.0;
    unit.g1 = g1_unit;
    return step_bound(unit, f_i, grad_norm_sq);
}

inline double bound_gap_term(const ConvergenceInputs& in) {
    in.validate(true);
    return in.L * in.eta * (in.V_g1 + in.E_g1 * in.E_g1) * in.phi_sq / (2.0 * in.K * in.E_g1 * in.c);
}

/// Unrolled bound on E f(w_{i+1}) - f(w*).
inline double unrolled_bound(const ConvergenceInputs& in, double f0_gap, long i) {
    in.validate(true);
    const double rho = 1.0 - in.eta * in.E_g1 * in.c / in.K;
    require(rho >= 0.0 && rho < 1.0, "the unrolled bound needs 0 < eta E(g1) c / K <= 1");
    const double geo = std::pow(rho, static_cast<double>(i));
    return geo * rho * f0_gap + bound_gap_term(in) * (1.0 - geo);
}

struct G1Moments {
    double mean = 0.0;
    double variance = 0.0;
};

struct StieltjesGrid {
    double tau_min = 1e-3;  // first node; the CDF value there is treated as an atom
    double tau_max = 1e4;
    std::size_t points = 2000;  // log-spaced in tau - tau_min
};

/// Moments of g1(delta) from the staleness CDF: the density is the finite
/// difference of the CDF on a log grid, g1 is taken at cell midpoints, and the
/// mass beyond tau_max is assigned g1(inf).
inline G1Moments estimate_g1_moments(const std::function<double(double)>& cdf, const WeightFn& g1,
                                     const StieltjesGrid& grid) {
    require(grid.points >= 2 && grid.tau_max > grid.tau_min, "invalid moment grid");
    const double lo = grid.tau_min;
    const double span = grid.tau_max - grid.tau_min;
    const double first = span * 1e-12;
    const double ratio = std::pow(span / first, 1.0 / static_cast<double>(grid.points - 1));
    CompensatedSum m1, m2;
    double prev_tau = lo;
    double prev_f = cdf(lo);
    const auto add = [&](double mass, double g) {
        m1.add(mass * g);
        m2.add(mass * g * g);
    };
    add(prev_f, g1(lo));
    for (std::size_t i = 0; i < grid.points; ++i) {
        const double tau = lo + first * std::pow(ratio, static_cast<double>(i));
        const double f = cdf(tau);
        if (f < prev_f - 1e-9 || f > 1.0 + 1e-9) {
            std::ostringstream msg;
            msg << "staleness CDF is not monotone near tau=" << tau << " (" << prev_f << " -> " << f << ")";
            throw NumericalError(msg.str());
        }
        add(std::max(0.0, f - prev_f), g1(0.5 * (tau + prev_tau)));
        prev_tau = tau;
        prev_f = std::max(f, prev_f);
    }
    add(std::max(0.0, 1.0 - prev_f), g1(std::numeric_limits<double>::infinity()));
    G1Moments out;
    out.mean = m1.value();
    out.variance = std::max(0.0, m2.value() - out.mean * out.mean);
    return out;
}

// ---------------------------------------------------------------------------
// Strongly convex quadratic toy: f_k(w) = 1/2 (w - a_k)^T A (w - a_k) with a
// shared diagonal A, so grad f = A (w - a_bar), w* = a_bar (size-weighted).

struct VecParams {
    std::vector<double> values;
};

class QuadraticToy {
public:
    using Params = VecParams;

    /// Eigenvalues spread evenly in [c, L]; client centers a_k ~ N(0, spread^2 I).
    QuadraticToy(std::size_t clients, std::size_t dim, double c, double L, double spread, std::uint64_t seed)
        : curvature_(dim), centers_(clients, std::vector<double>(dim)), sizes_(clients, 1.0) {
        require(clients >= 1 && dim >= 1, "toy needs at least one client and one dimension");
        require(c > 0.0 && L >= c, "toy needs 0 < c <= L");
        for (std::size_t d = 0; d < dim; ++d) {
            curvature_[d] = dim == 1 ? L : c + (L - c) * static_cast<double>(d) / static_cast<double>(dim - 1);
        }
        Rng rng = make_rng(seed, Stream::Toy);
        std::normal_distribution<double> normal(0.0, spread);
        for (auto& a : centers_) {
            for (double& v : a) {
                v = normal(rng);
            }
        }
        optimum_.assign(dim, 0.0);
        for (const auto& a : centers_) {
            for (std::size_t d = 0; d < dim; ++d) {
                optimum_[d] += a[d] / static_cast<double>(clients);
            }
        }
    }

    [[nodiscard]] std::size_t client_count() const { return centers_.size(); }
    [[nodiscard]] double client_size(std::size_t k) const { return sizes_[k]; }
    [[nodiscard]] std::size_t dim() const { return curvature_.size(); }
    [[nodiscard]] const std::vector<double>& optimum() const { return optimum_; }
    [[nodiscard]] double L() const { return *std::max_element(curvature_.begin(), curvature_.end()); }
    [[nodiscard]] double c() const { return *std::min_element(curvature_.begin(), curvature_.end()); }

    [[nodiscard]] Params gradient(std::size_t k, const Params& w) const {
        Params g{std::vector<double>(dim())};
        for (std::size_t d = 0; d < dim(); ++d) {
            g.values[d] = curvature_[d] * (w.values[d] - centers_[k][d]);
        }
        return g;
    }

    /// Global objective sum_k (s_k/s_K) f_k(w).
    [[nodiscard]] double test_loss(const Params& w) const {
        double f = 0.0;
        for (const auto& a : centers_) {
            for (std::size_t d = 0; d < dim(); ++d) {
                const double r = w.values[d] - a[d];
                f += 0.5 * curvature_[d] * r * r;
            }
        }
        return f / static_cast<double>(client_count());
    }

    [[nodiscard]] double optimum_loss() const { return test_loss(Params{optimum_}); }

    [[nodiscard]] double gap(const Params& w) const { return test_loss(w) - optimum_loss(); }

    /// phi^2 = sum_k (s_k/s_K) ||grad f(w) - grad f_k(w)||^2, independent of w.
    [[nodiscard]] double phi_sq() const {
        double s = 0.0;
        for (const auto& a : centers_) {
            for (std::size_t d = 0; d < dim(); ++d) {
                const double r = curvature_[d] * (a[d] - optimum_[d]);
                s += r * r;
            }
        }
        return s / static_cast<double>(client_count());
    }

private:
    std::vector<double> curvature_;
    std::vector<std::vector<double>> centers_;
    std::vector<double> sizes_;
    std::vector<double> optimum_;
};

}  // namespace uamfl::afl
