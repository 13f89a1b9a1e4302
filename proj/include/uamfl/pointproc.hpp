#pragma once

#include <cmath>
#include <cstddef>
#include <ostream>
#include <random>
#include <vector>

#include "uamfl/error.hpp"
#include "uamfl/params.hpp"
#include "uamfl/rng.hpp"

namespace uamfl {

struct Point2 {
    double x = 0.0;
    double y = 0.0;

    friend Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
    friend Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
    friend bool operator==(Point2 a, Point2 b) = default;
};

inline double norm(Point2 p) { return std::hypot(p.x, p.y); }
inline double norm2(Point2 p) { return p.x * p.x + p.y * p.y; }

/// A corridor line at perpendicular offset r from its cluster center, with
/// theta the angle of that perpendicular against the x-axis.
struct Corridor {
    double r = 0.0;
    double theta = 0.0;
    Point2 cp;
};

struct Aircraft {
    std::size_t corridor = 0;
    double u = 0.0;  // signed offset along the corridor from the foot point z
    Point2 pos;
};

struct Cluster {
    Point2 cp;
    std::vector<Corridor> corridors;
    std::vector<Aircraft> aircraft;
};

struct NetworkRealization {
    std::vector<Point2> gbs;
    std::vector<Cluster> clusters;
    double disc_radius = 0.0;
    double height = 0.0;

    [[nodiscard]] std::size_t aircraft_count() const {
        std::size_t n = 0;
        for (const auto& c : clusters) {
            n += c.aircraft.size();
        }
        return n;
    }

    /// Planar aircraft positions in cluster order; the index is the aircraft id.
    [[nodiscard]] std::vector<Point2> aircraft_positions() const {
        std::vector<Point2> out;
        out.reserve(aircraft_count());
        for (const auto& c : clusters) {
            for (const auto& a : c.aircraft) {
                out.push_back(a.pos);
            }
        }
        return out;
    }
};

// ---------------------------------------------------------------------------
// Truncated Poisson corridor count

/// P(n | n <= N) for n = 0..N with Poisson rate lambda_l - 1.
inline std::vector<double> corridor_count_mass(double lambda_l, int max_corridors) {
    require(lambda_l > 1.0, "lambda_l must exceed 1 (corridor-count rate is lambda_l - 1)");
    require(max_corridors >= 0, "max_corridors must be non-negative");
    const double rate = lambda_l - 1.0;
    std::vector<double> mass(static_cast<std::size_t>(max_corridors) + 1);
    double term = 1.0;
    double omega = 0.0;
    for (int n = 0; n <= max_corridors; ++n) {
        if (n > 0) {
            term *= rate / n;
        }
        mass[static_cast<std::size_t>(n)] = term;
        omega += term;
    }
    // e^{-rate} cancels in the normalization
    for (auto& v : mass) {
        v /= omega;
    }
    return mass;
}

inline double corridor_count_mean(double lambda_l, int max_corridors) {
    const auto mass = corridor_count_mass(lambda_l, max_corridors);
    double mean = 0.0;
    for (std::size_t n = 0; n < mass.size(); ++n) {
        mean += static_cast<double>(n) * mass[n];
    }
    return mean;
}

// ---------------------------------------------------------------------------
// Samplers

inline std::vector<Point2> sample_ppp_disc(double density, double disc_radius, Rng& rng) {
    require(density >= 0.0, "PPP density must be non-negative");
    require(disc_radius > 0.0, "disc radius must be positive");
    const double mean = density * kPi * disc_radius * disc_radius;
    std::vector<Point2> pts;
    if (mean <= 0.0) {
        return pts;
    }
    const auto n = std::poisson_distribution<long>(mean)(rng);
    pts.reserve(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) {
        const double rho = disc_radius * std::sqrt(uniform01(rng));
        const double phi = 2.0 * kPi * uniform01(rng);
        pts.push_back({rho * std::cos(phi), rho * std::sin(phi)});
    }
    return pts;
}

inline int sample_corridor_count(double lambda_l, int max_corridors, Rng& rng) {
    const auto mass = corridor_count_mass(lambda_l, max_corridors);
    double u = uniform01(rng);
    for (std::size_t n = 0; n < mass.size(); ++n) {
        u -= mass[n];
        if (u < 0.0) {
            return static_cast<int>(n);
        }
    }
    return max_corridors;
}

inline double sample_radius(const RadiusModel& model, Rng& rng) {
    if (const auto* g = std::get_if<TruncatedGaussian>(&model)) {
        return std::abs(std::normal_distribution<double>(0.0, g->sigma)(rng));
    }
    return std::get<UniformRadius>(model).r_hat * uniform01(rng);
}

// ---------------------------------------------------------------------------
// Corridor geometry

namespace detail {

/// Piecewise placement of the aircraft and foot point, one branch per quadrant of theta.
inline Point2 place_aircraft_four_case(Point2 cp, const Corridor& c, double u) {
    const double r = c.r;
    const double th = c.theta;
    constexpr double half_pi = kPi / 2.0;
    Point2 z;
    if (th < half_pi) {
        z = {cp.x + r * std::cos(th), cp.y + r * std::sin(th)};
        return {z.x + u * std::cos(half_pi - th), z.y - u * std::sin(half_pi - th)};
    }
    if (th < kPi) {
        z = {cp.x - r * std::sin(th - half_pi), cp.y + r * std::cos(th - half_pi)};
        return {z.x + u * std::cos(th - half_pi), z.y + u * std::sin(th - half_pi)};
    }
    if (th < 3.0 * half_pi) {
        z = {cp.x - r * std::sin(3.0 * half_pi - th), cp.y - r * std::cos(3.0 * half_pi - th)};
        return {z.x - u * std::cos(3.0 * half_pi - th), z.y + u * std::sin(3.0 * half_pi - th)};
    }
    z = {cp.x + r * std::cos(2.0 * kPi - th), cp.y - r * std::sin(2.0 * kPi - th)};
    return {z.x - u * std::cos(th - 3.0 * half_pi), z.y - u * std::sin(th - 3.0 * half_pi)};
}

}  // namespace detail

/// cp + (u sin(theta) + r cos(theta), -u cos(theta) + r sin(theta))
inline Point2 place_aircraft(Point2 cp, const Corridor& c, double u) {
    const double s = std::sin(c.theta);
    const double co = std::cos(c.theta);
    return {cp.x + u * s + c.r * co, cp.y - u * co + c.r * s};
}

/// Signed distance from the origin to the corridor line.
inline double corridor_offset_from_origin(Point2 cp, const Corridor& c) {
    return cp.x * std::cos(c.theta) + cp.y * std::sin(c.theta) + c.r;
}

/// Length of the corridor inside the origin-centered disc; 0 if it misses.
inline double chord_length(Point2 cp, const Corridor& c, double disc_radius) {
    const double d = corridor_offset_from_origin(cp, c);
    const double rad = disc_radius * disc_radius - d * d;
    return rad > 0.0 ? 2.0 * std::sqrt(rad) : 0.0;
}

/// Range of offsets u for which place_aircraft lands inside the disc.
/// Returns {lo, hi} with lo > hi when the corridor misses the disc.
inline std::pair<double, double> chord_offset_range(Point2 cp, const Corridor& c, double disc_radius) {
    const double half = 0.5 * chord_length(cp, c, disc_radius);
    // component of the cluster center along the corridor direction (sin, -cos)
    const double along = cp.x * std::sin(c.theta) - cp.y * std::cos(c.theta);
    if (half <= 0.0) {
        return {1.0, -1.0};
    }
    return {-along - half, -along + half};
}

// ---------------------------------------------------------------------------
// Realizations

inline Cluster sample_cluster(Point2 cp, const ModelParams& params, Rng& rng) {
    Cluster cl;
    cl.cp = cp;
    const int n = sample_corridor_count(params.lambda_l, params.max_corridors, rng);
    cl.corridors.reserve(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
        Corridor c;
        c.r = sample_radius(params.radius_model, rng);
        c.theta = 2.0 * kPi * uniform01(rng);
        if (c.theta >= 2.0 * kPi) {
            c.theta = 0.0;
        }
        c.cp = cp;
        cl.corridors.push_back(c);
    }
    for (std::size_t j = 0; j < cl.corridors.size(); ++j) {
        const auto& c = cl.corridors[j];
        const auto [lo, hi] = chord_offset_range(cp, c, params.disc_radius);
        if (lo > hi || params.lambda_t <= 0.0) {
            continue;
        }
        const auto count = std::poisson_distribution<long>(params.lambda_t * (hi - lo))(rng);
        for (long k = 0; k < count; ++k) {
            const double u = lo + (hi - lo) * uniform01(rng);
            cl.aircraft.push_back({j, u, place_aircraft(cp, c, u)});
        }
    }
    return cl;
}

/// Cluster centers, corridors and aircraft; no GBSs.
inline std::vector<Cluster> sample_clusters(const ModelParams& params, Rng& rng) {
    std::vector<Cluster> out;
    for (const auto& cp : sample_ppp_disc(params.lambda_c, params.disc_radius, rng)) {
        out.push_back(sample_cluster(cp, params, rng));
    }
    return out;
}

inline NetworkRealization sample_realization(const ModelParams& params, Rng& rng) {
    params.validate();
    NetworkRealization real;
    real.disc_radius = params.disc_radius;
    real.height = params.height;
    real.gbs = sample_ppp_disc(params.lambda_b, params.disc_radius, rng);
    real.clusters = sample_clusters(params, rng);
    return real;
}

/// One row per entity: kind,cluster,corridor,x,y,r,theta,u
inline void write_realization_csv(std::ostream& os, const NetworkRealization& real) {
    os << "kind,cluster,corridor,x,y,r,theta,u\n";
    for (const auto& g : real.gbs) {
        os << "gbs,,," << g.x << ',' << g.y << ",,,\n";
    }
    for (std::size_t i = 0; i < real.clusters.size(); ++i) {
        const auto& cl = real.clusters[i];
        os << "cp," << i << ",," << cl.cp.x << ',' << cl.cp.y << ",,,\n";
        for (std::size_t j = 0; j < cl.corridors.size(); ++j) {
            const auto& c = cl.corridors[j];
            os << "corridor," << i << ',' << j << ',' << cl.cp.x << ',' << cl.cp.y << ',' << c.r << ','
               << c.theta << ",\n";
        }
        for (const auto& a : cl.aircraft) {
            const auto& c = cl.corridors[a.corridor];
            os << "aircraft," << i << ',' << a.corridor << ',' << a.pos.x << ',' << a.pos.y << ',' << c.r
               << ',' << c.theta << ',' << a.u << '\n';
        }
    }
}

}  // namespace uamfl
