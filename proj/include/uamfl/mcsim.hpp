#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "uamfl/channel.hpp"
#include "uamfl/error.hpp"
#include "uamfl/params.hpp"
#include "uamfl/pointproc.hpp"
#include "uamfl/rng.hpp"

/// Monte Carlo counterpart of the analysis module. Trial t draws all of its
/// randomness from make_rng(seed, stream, t), so estimates do not depend on
/// evaluation order.
namespace uamfl::mcsim {

struct McResult {
    double estimate = 0.0;
    double stderr_ = 0.0;
    long trials = 0;
    long discarded = 0;
};

struct StalenessSample {
    double t_comp = 0.0;
    double t_tran = 0.0;
    double delta = 0.0;
};

/// How the serving aircraft of the typical GBS (placed at the origin) is chosen.
enum class ServingSelection {
    /// The serving link geometry is drawn independently of the interfering
    /// aircraft: the planar offset from an arbitrary location to its nearest
    /// GBS. This is the model the Laplace-transform analysis evaluates.
    Independent,
    /// The nearest in-realization aircraft among those whose closest GBS is the
    /// typical one; its corridor neighbours stay in the interferer field.
    NearestAssociated,
};

struct SirSamples {
    std::vector<double> sir;  // +inf for interference-free trials
    long discarded = 0;
};

/// Radius of the window in which GBSs are sampled around a reference point so
/// that its nearest GBS lies inside with probability 1 - e^{-40}.
inline double nearest_gbs_window(double lambda_b) { return std::sqrt(40.0 / (kPi * lambda_b)); }

inline double sir_independent(const ModelParams& params, Rng& rng, bool& ok) {
    const auto clusters = sample_clusters(params, rng);
    const auto local_gbs = sample_ppp_disc(params.lambda_b, nearest_gbs_window(params.lambda_b), rng);
    if (local_gbs.empty()) {
        ok = false;
        return 0.0;
    }
    const Point2 serving_gbs = local_gbs[nearest_gbs(local_gbs, Point2{})];
    const double beta = norm(serving_gbs);
    std::vector<Point2> aircraft;
    for (const auto& c : clusters) {
        for (const auto& a : c.aircraft) {
            aircraft.push_back(a.pos);
        }
    }
    const double signal =
        received_power({params.tx_power, params.height, params.alpha, beta}, sample_gain(params.nakagami_m, rng));
    const double interference = interference_at(aircraft, Point2{}, params, std::nullopt, rng);
    ok = true;
    return interference > 0.0 ? signal / interference : std::numeric_limits<double>::infinity();
}

inline double sir_nearest_associated(const ModelParams& params, Rng& rng, bool& ok) {
    NetworkRealization real = sample_realization(params, rng);
    // Slivnyak: the typical GBS is an extra point at the origin
    real.gbs.insert(real.gbs.begin(), Point2{});
    try {
        const auto link = sir_of_typical_link(real, params, rng);
        ok = true;
        return link.sir;
    } catch (const NoServingLink&) {
        ok = false;
        return 0.0;
    }
}

/// `trials` valid SIR draws of the typical link; discarded attempts are counted.
inline SirSamples mc_sir_samples(const ModelParams& params, long trials, std::uint64_t seed,
                                 ServingSelection serving = ServingSelection::Independent) {
    params.validate();
    require(trials >= 1, "trials must be >= 1");
    require(params.lambda_b > 0.0, "GBS density must be positive");
    SirSamples out;
    out.sir.reserve(static_cast<std::size_t>(trials));
    const long max_attempts = 1000 * trials + 1000;
    for (std::uint64_t attempt = 0; static_cast<long>(out.sir.size()) < trials; ++attempt) {
        if (static_cast<long>(attempt) >= max_attempts) {
            throw NumericalError("Monte Carlo: almost every trial was discarded (no serving link)");
        }
        Rng rng = make_rng(seed, Stream::Realization, attempt);
        bool ok = false;
        const double sir = serving == ServingSelection::Independent ? sir_independent(params, rng, ok)
                                                                     : sir_nearest_associated(params, rng, ok);
        if (ok) {
            out.sir.push_back(sir);
        } else {
            ++out.discarded;
        }
    }
    return out;
}

/// Fraction of samples with SIR >= gamma and its binomial standard error.
inline McResult connectivity_from_samples(const SirSamples& samples, double gamma) {
    McResult r;
    r.trials = static_cast<long>(samples.sir.size());
    r.discarded = samples.discarded;
    require(r.trials > 0, "no valid Monte Carlo trials");
    long hits = 0;
    for (double s : samples.sir) {
        hits += s >= gamma ? 1 : 0;
    }
    const double n = static_cast<double>(r.trials);
    r.estimate = static_cast<double>(hits) / n;
    r.stderr_ = std::sqrt(r.estimate * (1.0 - r.estimate) / n);
    return r;
}

inline McResult mc_connectivity(const ModelParams& params, double gamma, long trials, std::uint64_t seed,
                                ServingSelection serving = ServingSelection::Independent) {
    return connectivity_from_samples(mc_sir_samples(params, trials, seed, serving), gamma);
}

/// Transmission delay V / (W log2(1 + SIR)); zero for an interference-free link.
inline double transmission_delay(double sir, const ModelParams& params) {
    if (std::isinf(sir)) {
        return 0.0;
    }
    return params.packet_bits / (params.bandwidth * std::log2(1.0 + sir));
}

inline StalenessSample staleness_from_sir(double sir, const ModelParams& params) {
    StalenessSample s;
    s.t_comp = params.compute_delay();
    s.t_tran = transmission_delay(sir, params);
    s.delta = s.t_comp + s.t_tran;
    return s;
}

inline std::vector<StalenessSample> mc_staleness(const ModelParams& params, long trials, std::uint64_t seed,
                                                 ServingSelection serving = ServingSelection::Independent) {
    const auto samples = mc_sir_samples(params, trials, seed, serving);
    std::vector<StalenessSample> out;
    out.reserve(samples.sir.size());
    for (double sir : samples.sir) {
        out.push_back(staleness_from_sir(sir, params));
    }
    return out;
}

/// Mean number of aircraft associated with the typical GBS. Palm averages over
/// a finite window are ratios of means: associations summed over all GBSs and
/// realizations, divided by the GBS total. Averaging one GBS per realization
/// instead estimates E[A/N], which Jensen pushes above E[A]/E[N] when the
/// window holds few GBSs. Realizations without GBSs are discarded.
inline McResult mc_participants(const ModelParams& params, long trials, std::uint64_t seed) {
    params.validate();
    require(trials >= 1, "trials must be >= 1");
    McResult r;
    double sa = 0.0, sn = 0.0, saa = 0.0, snn = 0.0, san = 0.0;
    for (std::uint64_t t = 0; r.trials < trials; ++t) {
        Rng rng = make_rng(seed, Stream::Participants, t);
        const auto real = sample_realization(params, rng);
        if (real.gbs.empty()) {
            ++r.discarded;
            continue;
        }
        std::vector<double> per_gbs(real.gbs.size(), 0.0);
        for (const auto& c : real.clusters) {
            for (const auto& a : c.aircraft) {
                per_gbs[nearest_gbs(real.gbs, a.pos)] += 1.0;
            }
        }
        double a = 0.0;
        for (double v : per_gbs) {
            a += v;
        }
        const double n = static_cast<double>(real.gbs.size());
        sa += a;
        sn += n;
        saa += a * a;
        snn += n * n;
        san += a * n;
        ++r.trials;
    }
    const double m = static_cast<double>(r.trials);
    r.estimate = sa / sn;
    if (m > 1) {
        // delta method for a ratio of means
        const double ma = sa / m, mn = sn / m;
        const double va = (saa - m * ma * ma) / (m - 1.0);
        const double vn = (snn - m * mn * mn) / (m - 1.0);
        const double cov = (san - m * ma * mn) / (m - 1.0);
        const double q = r.estimate;
        r.stderr_ = std::sqrt(std::max(0.0, (va - 2.0 * q * cov + q * q * vn) / (m * mn * mn)));
    }
    return r;
}

/// Empirical E[exp(-s I / p)] of the interference at the origin.
inline McResult mc_laplace_functional(const ModelParams& params, double s, long trials, std::uint64_t seed) {
    params.validate();
    McResult r;
    double sum = 0.0;
    double sum2 = 0.0;
    for (long t = 0; t < trials; ++t) {
        Rng rng = make_rng(seed, Stream::Laplace, static_cast<std::uint64_t>(t));
        const auto clusters = sample_clusters(params, rng);
        std::vector<Point2> aircraft;
        for (const auto& c : clusters) {
            for (const auto& a : c.aircraft) {
                aircraft.push_back(a.pos);
            }
        }
        const double i = interference_at(aircraft, Point2{}, params, std::nullopt, rng) / params.tx_power;
        const double v = std::exp(-s * i);
        sum += v;
        sum2 += v * v;
    }
    r.trials = trials;
    const double n = static_cast<double>(trials);
    r.estimate = sum / n;
    r.stderr_ = std::sqrt(std::max(0.0, sum2 / n - r.estimate * r.estimate) / n);
    return r;
}

}  // namespace uamfl::mcsim
