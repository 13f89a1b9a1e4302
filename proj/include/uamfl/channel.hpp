#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "uamfl/error.hpp"
#include "uamfl/params.hpp"
#include "uamfl/pointproc.hpp"
#include "uamfl/rng.hpp"

namespace uamfl {

struct ChannelDraw {
    double g = 1.0;
};

struct LinkBudget {
    double p = 1.0;      // watts
    double h = 0.0;      // meters
    double alpha = 4.0;
    double beta = 0.0;   // planar distance, meters
};

/// Nakagami-m power gain: Gamma(shape m, scale 1/m).
inline ChannelDraw sample_gain(int m, Rng& rng) {
    require(m >= 1, "Nakagami m must be >= 1");
    std::gamma_distribution<double> dist(static_cast<double>(m), 1.0 / m);
    double g = dist(rng);
    while (g <= 0.0) {
        g = dist(rng);
    }
    return {g};
}

inline double path_gain(double planar_dist2, double h, double alpha) {
    return std::pow(planar_dist2 + h * h, -alpha / 2.0);
}

inline double received_power(const LinkBudget& link, ChannelDraw g) {
    return link.p * g.g * path_gain(link.beta * link.beta, link.h, link.alpha);
}

/// Aggregate interference at `receiver` from every aircraft except `exclude`,
/// each with a fresh fading gain.
inline double interference_at(std::span<const Point2> aircraft, Point2 receiver, const ModelParams& params,
                              std::optional<std::size_t> exclude, Rng& rng) {
    double total = 0.0;
    for (std::size_t k = 0; k < aircraft.size(); ++k) {
        if (exclude && *exclude == k) {
            continue;
        }
        const double g = sample_gain(params.nakagami_m, rng).g;
        total += params.tx_power * g * path_gain(norm2(aircraft[k] - receiver), params.height, params.alpha);
    }
    return total;
}

inline double interference_at_origin(const NetworkRealization& real, const ModelParams& params,
                                     std::optional<std::size_t> exclude, Rng& rng) {
    const auto pos = real.aircraft_positions();
    return interference_at(pos, Point2{}, params, exclude, rng);
}

/// Index of the GBS nearest to `p`; gbs must be non-empty.
inline std::size_t nearest_gbs(std::span<const Point2> gbs, Point2 p) {
    std::size_t best = 0;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < gbs.size(); ++i) {
        const double d2 = norm2(gbs[i] - p);
        if (d2 < best_d2) {
            best_d2 = d2;
            best = i;
        }
    }
    return best;
}

/// True when no GBS other than `self` is strictly closer to `p` than gbs[self].
inline bool is_associated(std::span<const Point2> gbs, std::size_t self, Point2 p) {
    const double d2 = norm2(gbs[self] - p);
    for (std::size_t i = 0; i < gbs.size(); ++i) {
        if (i != self && norm2(gbs[i] - p) < d2) {
            return false;
        }
    }
    return true;
}

struct TypicalLink {
    std::size_t typical_gbs = 0;
    std::size_t serving_aircraft = 0;
    double beta = 0.0;
    double signal = 0.0;
    double interference = 0.0;
    double sir = 0.0;  // +inf when there is no interference
};

/// SIR of the link between the GBS nearest the origin and the nearest aircraft
/// associated with it. Interference is summed at that GBS over all other
/// aircraft. Throws NoServingLink when the GBS has no associated aircraft.
inline TypicalLink sir_of_typical_link(const NetworkRealization& real, const ModelParams& params, Rng& rng) {
    if (real.gbs.empty()) {
        throw NoServingLink();
    }
    const auto aircraft = real.aircraft_positions();
    TypicalLink link;
    link.typical_gbs = nearest_gbs(real.gbs, Point2{});
    const Point2 bs = real.gbs[link.typical_gbs];
    double best_d2 = std::numeric_limits<double>::infinity();
    std::optional<std::size_t> serving;
    for (std::size_t k = 0; k < aircraft.size(); ++k) {
        const double d2 = norm2(aircraft[k] - bs);
        if (d2 < best_d2 && is_associated(real.gbs, link.typical_gbs, aircraft[k])) {
            best_d2 = d2;
            serving = k;
        }
    }
    if (!serving) {
        throw NoServingLink();
    }
    link.serving_aircraft = *serving;
    link.beta = std::sqrt(best_d2);
    const LinkBudget budget{params.tx_power, params.height, params.alpha, link.beta};
    link.signal = received_power(budget, sample_gain(params.nakagami_m, rng));
    link.interference = interference_at(aircraft, bs, params, serving, rng);
    link.sir = link.interference > 0.0 ? link.signal / link.interference : std::numeric_limits<double>::infinity();
    return link;
}

}  // namespace uamfl
