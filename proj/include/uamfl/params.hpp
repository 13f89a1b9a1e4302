#pragma once

#include <cmath>
#include <variant>

#include "uamfl/error.hpp"

namespace uamfl {

inline constexpr double kPi = 3.14159265358979323846;

namespace units {
inline constexpr double per_km2(double v) { return v * 1e-6; }
inline constexpr double per_km(double v) { return v * 1e-3; }
inline constexpr double km(double v) { return v * 1e3; }
inline double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }
inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double x) { return 10.0 * std::log10(x); }
}  // namespace units

struct TruncatedGaussian {
    double sigma;  // meters
};

struct UniformRadius {
    double r_hat;  // meters
};

/// Distance between a cluster center and one of its corridors.
using RadiusModel = std::variant<TruncatedGaussian, UniformRadius>;

inline void validate(const RadiusModel& model) {
    if (const auto* g = std::get_if<TruncatedGaussian>(&model)) {
        require(g->sigma > 0.0, "truncated Gaussian radius model needs sigma > 0");
    } else {
        require(std::get<UniformRadius>(model).r_hat > 0.0, "uniform radius model needs r_hat > 0");
    }
}

/// Largest corridor offset that carries non-negligible probability mass.
inline double radius_support(const RadiusModel& model) {
    if (const auto* g = std::get_if<TruncatedGaussian>(&model)) {
        return 8.0 * g->sigma;
    }
    return std::get<UniformRadius>(model).r_hat;
}

inline double radius_pdf(const RadiusModel& model, double r) {
    if (r < 0.0) {
        return 0.0;
    }
    if (const auto* g = std::get_if<TruncatedGaussian>(&model)) {
        const double s = g->sigma;
        return std::sqrt(2.0 / (kPi * s * s)) * std::exp(-r * r / (2.0 * s * s));
    }
    const double r_hat = std::get<UniformRadius>(model).r_hat;
    return r <= r_hat ? 1.0 / r_hat : 0.0;
}

/// All lengths in meters, densities per m or per m^2, powers in watts.
struct ModelParams {
    double lambda_b = units::per_km2(1.0);    // GBS density
    double lambda_c = units::per_km2(0.001);  // cluster-center density
    double lambda_l = 5.0;                    // corridor rate per cluster (Poisson rate is lambda_l - 1)
    double lambda_t = units::per_km(1.0);     // aircraft per meter of corridor
    int max_corridors = 10;                   // N
    double height = 152.4;                    // h
    double tx_power = units::dbm_to_watts(40.0);
    double alpha = 4.0;
    int nakagami_m = 1;
    double gamma = units::db_to_linear(0.0);
    double bandwidth = 10e6;      // W, Hz
    double packet_bits = 5e3;     // V
    double data_bits = 1e3;       // v
    double cycles_per_bit = 1e3;  // epsilon
    double cpu_clock = 1e9;       // cycles/s
    RadiusModel radius_model = TruncatedGaussian{units::km(1.0)};
    double disc_radius = units::km(20.0);

    /// Local training delay t_comp = v * epsilon / f_clock.
    [[nodiscard]] double compute_delay() const { return data_bits * cycles_per_bit / cpu_clock; }

    void validate() const {
        require(lambda_b >= 0.0 && lambda_c >= 0.0 && lambda_t >= 0.0, "densities must be non-negative");
        require(lambda_l > 1.0, "lambda_l must exceed 1 (corridor-count rate is lambda_l - 1)");
        require(max_corridors >= 0, "max_corridors must be non-negative");
        require(height > 0.0, "height must be positive");
        require(tx_power > 0.0, "transmit power must be positive");
        require(alpha > 2.0, "path-loss exponent must exceed 2");
        require(nakagami_m >= 1, "Nakagami m must be a positive integer");
        require(gamma > 0.0, "SIR threshold must be positive");
        require(bandwidth > 0.0 && packet_bits > 0.0, "bandwidth and packet size must be positive");
        require(data_bits >= 0.0 && cycles_per_bit >= 0.0 && cpu_clock > 0.0, "invalid compute constants");
        require(disc_radius > 0.0, "disc radius must be positive");
        uamfl::validate(radius_model);
    }
};

/// Baseline defaults with the radius model swapped for the uniform variant.
inline ModelParams table1_uniform() {
    ModelParams p;
    p.radius_model = UniformRadius{units::km(2.0)};
    return p;
}

}  // namespace uamfl
