#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <cstddef>
#include <vector>

#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>

#include "uamfl/error.hpp"
#include "uamfl/params.hpp"
#include "uamfl/pointproc.hpp"
#include "uamfl/quadrature.hpp"

/// Closed-form connectivity results evaluated by nested quadrature.
///
/// All integrals over cluster-center positions and corridor offsets are taken
/// over the origin-centered window of radius QuadratureSpec::truncation_radius
/// (the simulation disc by default). On the unbounded plane the corridor
/// integral diverges: lines through a cluster at distance l pass near the
/// origin with probability ~1/l, which cancels the l dl area element.
namespace uamfl::analysis {

/// Density of the planar distance between an aircraft and its nearest GBS.
inline double distance_pdf(double beta, double lambda_b) {
    if (beta <= 0.0) {
        return 0.0;
    }
    return 2.0 * kPi * lambda_b * beta * std::exp(-lambda_b * kPi * beta * beta);
}

/// eta = m (m!)^{-1/m}
inline double nakagami_eta(int m) {
    require(m >= 1, "Nakagami m must be >= 1");
    return m * std::exp(-std::lgamma(m + 1.0) / m);
}

/// (-1)^{k+1} C(m, k) for k = 1..m.
inline std::vector<double> alternating_coefficients(int m) {
    std::vector<double> c;
    double binom = 1.0;
    for (int k = 1; k <= m; ++k) {
        binom = binom * (m - k + 1) / k;
        c.push_back((k % 2 == 1 ? 1.0 : -1.0) * binom);
    }
    return c;
}

/// 1 - (1 + x/m)^{-m}, accurate for small x.
inline double nakagami_lt_complement(double x, int m) {
    return -std::expm1(-m * std::log1p(x / m));
}

/// Integral over the in-window part of a corridor at distance d from the
/// origin of 1 - (1 + s (d^2 + t^2 + h^2)^{-alpha/2} / m)^{-m} dt.
inline double corridor_integral(double d, double s, const ModelParams& params, double window,
                                const QuadratureSpec& quad) {
    d = std::abs(d);
    if (s <= 0.0 || d >= window) {
        return 0.0;
    }
    const double half = std::sqrt(window * window - d * d);
    const double a2 = d * d + params.height * params.height;
    const auto f = [&](double t) {
        return nakagami_lt_complement(s * std::pow(a2 + t * t, -params.alpha / 2.0), params.nakagami_m);
    };
    // the integrand decays on the scale max(a, s^{1/alpha}); split there
    const double scale = std::max(std::sqrt(a2), std::pow(s, 1.0 / params.alpha));
    double total = 0.0;
    double lo = 0.0;
    for (double cut : {scale, 10.0 * scale, 100.0 * scale}) {
        if (cut >= half) {
            break;
        }
        total += integrate(f, lo, cut, quad, "corridor integral");
        lo = cut;
    }
    total += integrate(f, lo, half, quad, "corridor integral");
    return 2.0 * total;
}

/// K1: probability-generating factor of one corridor's aircraft.
inline double k1_inner(double x1, double x2, double r, double theta, double s, const ModelParams& params,
                       const QuadratureSpec& quad) {
    const double window = quad.truncation_radius > 0.0 ? quad.truncation_radius : params.disc_radius;
    const double d = x1 * std::cos(theta) + x2 * std::sin(theta) + r;
    return std::exp(-params.lambda_t * corridor_integral(d, s, params, window, quad));
}

/// corridor_integral(d, s) tabulated over d in [0, window] for one s.
class CorridorTable {
public:
    CorridorTable(double s, const ModelParams& params, double window, const QuadratureSpec& quad,
                  std::size_t points = 513)
        : window_(window), zero_(s <= 0.0) {
        if (zero_) {
            return;
        }
        // d = window * q^2 puts nodes densely near the origin
        std::vector<double> values(points);
        const double step = 1.0 / static_cast<double>(points - 1);
        for (std::size_t i = 0; i < points; ++i) {
            const double q = static_cast<double>(i) * step;
            values[i] = corridor_integral(window * q * q, s, params, window, quad);
        }
        spline_ = boost::math::interpolators::cardinal_cubic_b_spline<double>(values.begin(), values.end(), 0.0,
                                                                              step);
    }

    double operator()(double d) const {
        d = std::abs(d);
        if (zero_ || d >= window_) {
            return 0.0;
        }
        return std::max(0.0, spline_(std::sqrt(d / window_)));
    }

private:
    double window_;
    bool zero_;
    boost::math::interpolators::cardinal_cubic_b_spline<double> spline_;
};

/// Laplace transform of the aggregate interference (normalized by the
/// transmit power) at the typical GBS.
class LaplaceEvaluator {
public:
    explicit LaplaceEvaluator(ModelParams params, QuadratureSpec quad = {})
        : params_(std::move(params)), quad_(quad) {
        params_.validate();
        require(quad_.rel_tol > 0.0 && quad_.abs_tol > 0.0, "quadrature tolerances must be positive");
        require(quad_.truncation_radius >= 0.0, "truncation radius must be non-negative");
        mass_ = corridor_count_mass(params_.lambda_l, params_.max_corridors);
    }

    [[nodiscard]] const ModelParams& params() const { return params_; }
    [[nodiscard]] const QuadratureSpec& quad() const { return quad_; }
    [[nodiscard]] const std::vector<double>& corridor_mass() const { return mass_; }
    [[nodiscard]] double window() const {
        return quad_.truncation_radius > 0.0 ? quad_.truncation_radius : params_.disc_radius;
    }

    /// 1 - K2 for a cluster at distance l: the probability-weighted loss from
    /// one corridor averaged over its offset r and angle theta.
    [[nodiscard]] double k2_complement(double l, const CorridorTable& table) const {
        const double lt = params_.lambda_t;
        const auto over_angle = [&](double r) {
            // K1 only depends on |l cos(psi) + r|, symmetric in psi about 0
            const auto g = [&](double psi) { return -std::expm1(-lt * table(l * std::cos(psi) + r)); };
            double acc = 0.0;
            if (r < l) {
                const double crossing = std::acos(-r / l);
                acc = integrate(g, 0.0, crossing, quad_, "K2 angle") + integrate(g, crossing, kPi, quad_, "K2 angle");
            } else {
                acc = integrate(g, 0.0, kPi, quad_, "K2 angle");
            }
            return acc / kPi * radius_pdf(params_.radius_model, r);
        };
        return integrate(over_angle, 0.0, radius_support(params_.radius_model), quad_, "K2 radius");
    }

    [[nodiscard]] double k2(double l, double s) const {
        const CorridorTable table(s, params_, window(), quad_);
        return 1.0 - k2_complement(l, table);
    }

    /// 1 - sum_n K2^n P(n | n <= N), given q = 1 - K2.
    [[nodiscard]] double cluster_complement(double q) const {
        CompensatedSum acc;
        if (q >= 1.0) {
            for (std::size_t n = 1; n < mass_.size(); ++n) {
                acc.add(mass_[n]);
            }
            return acc.value();
        }
        const double log_keep = std::log1p(-q);
        for (std::size_t n = 1; n < mass_.size(); ++n) {
            acc.add(mass_[n] * -std::expm1(static_cast<double>(n) * log_keep));
        }
        return acc.value();
    }

    /// -log L(s)
    [[nodiscard]] double neg_log_laplace(double s) const {
        require(s >= 0.0, "Laplace argument must be non-negative");
        if (s == 0.0 || params_.lambda_c == 0.0 || params_.lambda_t == 0.0) {
            return 0.0;
        }
        const CorridorTable table(s, params_, window(), quad_);
        const auto radial = [&](double l) { return cluster_complement(k2_complement(l, table)) * l; };
        // by rotational symmetry the polar angle integral contributes 2 pi
        return 2.0 * kPi * params_.lambda_c * integrate(radial, 0.0, window(), quad_, "Laplace radial");
    }

    [[nodiscard]] double laplace(double s) const { return std::exp(-neg_log_laplace(s)); }

private:
    ModelParams params_;
    QuadratureSpec quad_;
    std::vector<double> mass_;
};

inline double laplace_interference(double s, const LaplaceEvaluator& ev) { return ev.laplace(s); }

/// Cubic-spline table of log(-log L) against log s, for sweeps that need many
/// Laplace evaluations (staleness CDF, moment estimates). Falls back to direct
/// evaluation outside [s_min, s_max].
class TabulatedLaplace {
public:
    explicit TabulatedLaplace(LaplaceEvaluator ev, double s_min = 1e2, double s_max = 1e40, int per_decade = 12)
        : ev_(std::move(ev)), log_min_(std::log(s_min)), log_max_(std::log(s_max)) {
        require(s_min > 0.0 && s_max > s_min && per_decade >= 2, "invalid Laplace table range");
        const auto n = static_cast<std::size_t>(std::ceil(std::log10(s_max / s_min) * per_decade)) + 1;
        step_ = (log_max_ - log_min_) / static_cast<double>(n - 1);
        std::vector<double> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double v = ev_.neg_log_laplace(std::exp(log_min_ + step_ * static_cast<double>(i)));
            if (!(v > 0.0)) {
                direct_only_ = true;
                return;
            }
            y[i] = std::log(v);
        }
        spline_ = boost::math::interpolators::cardinal_cubic_b_spline<double>(y.begin(), y.end(), log_min_, step_);
    }

    [[nodiscard]] const ModelParams& params() const { return ev_.params(); }
    [[nodiscard]] const QuadratureSpec& quad() const { return ev_.quad(); }
    [[nodiscard]] const LaplaceEvaluator& evaluator() const { return ev_; }

    [[nodiscard]] double neg_log_laplace(double s) const {
        if (direct_only_ || s <= 0.0) {
            return ev_.neg_log_laplace(std::max(s, 0.0));
        }
        const double x = std::log(s);
        if (x < log_min_ || x > log_max_) {
            return ev_.neg_log_laplace(s);
        }
        return std::exp(spline_(x));
    }

    [[nodiscard]] double laplace(double s) const { return std::exp(-neg_log_laplace(s)); }

private:
    LaplaceEvaluator ev_;
    double log_min_;
    double log_max_;
    double step_ = 1.0;
    bool direct_only_ = false;
    boost::math::interpolators::cardinal_cubic_b_spline<double> spline_;
};

/// Anything with params(), quad() and laplace(s).
template <class L>
concept LaplaceSource = requires(const L& l, double s) {
    { l.params() } -> std::convertible_to<const ModelParams&>;
    { l.quad() } -> std::convertible_to<const QuadratureSpec&>;
    { l.laplace(s) } -> std::convertible_to<double>;
};

/// P(SIR >= gamma) for the typical link. Exact for m = 1; for m > 1 it uses
/// the Gamma tail approximation P(g >= x) ~ 1 - (1 - e^{-eta x})^m.
template <LaplaceSource L>
inline double connectivity_probability(double gamma, const L& ev) {
    require(gamma > 0.0, "SIR threshold must be positive");
    const auto& p = ev.params();
    const double eta = nakagami_eta(p.nakagami_m);
    const auto coeffs = alternating_coefficients(p.nakagami_m);
    // substitute x = lambda_b pi beta^2 so the distance law becomes e^{-x} dx
    const auto integrand = [&](double x) {
        const double beta2 = x / (p.lambda_b * kPi);
        const double base = gamma * eta * std::pow(p.height * p.height + beta2, p.alpha / 2.0);
        CompensatedSum acc;
        for (std::size_t k = 0; k < coeffs.size(); ++k) {
            acc.add(coeffs[k] * ev.laplace(static_cast<double>(k + 1) * base));
        }
        return acc.value() * std::exp(-x);
    };
    QuadratureSpec outer = ev.quad();
    const double value = integrate(integrand, 0.0, 40.0, outer, "connectivity");
    return std::clamp(value, 0.0, 1.0);
}

/// SIR threshold that makes the transmission delay equal tau - t_comp.
inline double staleness_threshold(double tau, const ModelParams& p) {
    const double slack = tau - p.compute_delay();
    if (slack <= 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    return std::exp2(p.packet_bits / (p.bandwidth * slack)) - 1.0;
}

/// P(delta <= tau) for the staleness of one uplink update.
template <LaplaceSource L>
inline double staleness_cdf(double tau, const L& ev) {
    const auto& p = ev.params();
    if (tau <= p.compute_delay()) {
        return 0.0;
    }
    const double gamma = staleness_threshold(tau, p);
    if (!(gamma > 0.0)) {
        return 1.0;
    }
    if (!std::isfinite(gamma)) {
        // only interference-free links meet an infinite threshold
        return ev.laplace(std::numeric_limits<double>::max());
    }
    return connectivity_probability(gamma, ev);
}

enum class ClusterPlacement { Origin, UniformInDisc };

/// Expected in-disc length of a corridor, averaged over its offset and angle
/// and (for UniformInDisc) over the position of its cluster center.
inline double expected_chord_length(const ModelParams& params, const QuadratureSpec& quad,
                                    ClusterPlacement placement = ClusterPlacement::UniformInDisc) {
    params.validate();
    const double R = params.disc_radius;
    const auto chord = [R](double d) {
        const double rad = R * R - d * d;
        return rad > 0.0 ? 2.0 * std::sqrt(rad) : 0.0;
    };
    const auto at_distance = [&](double l) {
        const auto over_radius = [&](double r) {
            const auto over_angle = [&](double psi) { return chord(l * std::cos(psi) + r); };
            return integrate(over_angle, 0.0, kPi, quad, "chord angle") / kPi *
                   radius_pdf(params.radius_model, r);
        };
        return integrate(over_radius, 0.0, radius_support(params.radius_model), quad, "chord radius");
    };
    if (placement == ClusterPlacement::Origin) {
        return at_distance(0.0);
    }
    const auto weighted = [&](double l) { return at_distance(l) * 2.0 * l / (R * R); };
    return integrate(weighted, 0.0, R, quad, "chord center");
}

struct ParticipantEstimate {
    double expected = 0.0;  // before the floor
    long count = 0;         // K
};

/// Expected number K of aircraft associated with one GBS.
inline ParticipantEstimate expected_participants(const ModelParams& params, double e_chord) {
    require(e_chord >= 0.0, "expected chord length must be non-negative");
    require(params.lambda_b > 0.0, "GBS density must be positive");
    const double mean_corridors = corridor_count_mean(params.lambda_l, params.max_corridors);
    ParticipantEstimate out;
    out.expected = params.lambda_c * params.lambda_t * e_chord * mean_corridors / params.lambda_b;
    out.count = static_cast<long>(std::floor(out.expected));
    return out;
}

}  // namespace uamfl::analysis
