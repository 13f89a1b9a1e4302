#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <memory>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <vector>

#include <fftw3.h>

#include "uamfl/error.hpp"
#include "uamfl/params.hpp"
#include "uamfl/rng.hpp"

/// Viscous Burgers equation v_t + (v^2/2)_s = rho v_ss on the periodic unit
/// interval, solved pseudo-spectrally with 2/3-rule dealiasing and
/// integrating-factor RK4 time stepping.
namespace uamfl::burgers {

using cplx = std::complex<double>;

struct Field1D {
    std::vector<double> values;

    [[nodiscard]] std::size_t size() const { return values.size(); }
};

struct BurgersConfig {
    double rho = 0.01;
    double t_final = 0.1;
    double dt = 1e-4;
    std::size_t n_grid = 256;
    double init_spectrum_decay = 2.0;
    double amplitude = 1.0;
    bool zero_mean = true;

    void validate() const {
        require(rho > 0.0, "viscosity rho must be positive");
        require(dt > 0.0, "time step must be positive");
        require(t_final >= 0.0, "t_final must be non-negative");
        require(n_grid >= 4 && (n_grid & (n_grid - 1)) == 0, "n_grid must be a power of two >= 4");
        require(init_spectrum_decay >= 0.0, "spectrum decay must be non-negative");
    }
};

struct TurbulenceSample {
    Field1D input;
    Field1D target;
};

using ClientDataset = std::vector<TurbulenceSample>;

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

/// Highest Fourier mode kept by the 2/3 rule.
inline std::size_t dealias_cutoff(std::size_t n) { return n / 3; }

/// Owning real-to-complex / complex-to-real transform pair of fixed size.
/// The inverse is normalized so that inverse(forward(x)) == x.
class RealFft {
public:
    explicit RealFft(std::size_t n)
        : n_(n),
          real_(fftw_alloc_real(n), fftw_free),
          spec_(fftw_alloc_complex(n / 2 + 1), fftw_free) {
        const int len = static_cast<int>(n);
        // FFTW_ESTIMATE keeps plan selection deterministic across runs
        fwd_ = fftw_plan_dft_r2c_1d(len, real_.get(), spec_.get(), FFTW_ESTIMATE);
        inv_ = fftw_plan_dft_c2r_1d(len, spec_.get(), real_.get(), FFTW_ESTIMATE);
    }
    RealFft(const RealFft&) = delete;
    RealFft& operator=(const RealFft&) = delete;
    ~RealFft() {
        fftw_destroy_plan(fwd_);
        fftw_destroy_plan(inv_);
    }

    [[nodiscard]] std::size_t size() const { return n_; }

    void forward(std::span<const double> in, std::vector<cplx>& out) {
        std::copy(in.begin(), in.end(), real_.get());
        fftw_execute(fwd_);
        out.resize(n_ / 2 + 1);
        for (std::size_t k = 0; k <= n_ / 2; ++k) {
            out[k] = {spec_.get()[k][0], spec_.get()[k][1]};
        }
    }

    void inverse(std::span<const cplx> in, std::vector<double>& out) {
        for (std::size_t k = 0; k <= n_ / 2; ++k) {
            spec_.get()[k][0] = in[k].real();
            spec_.get()[k][1] = in[k].imag();
        }
        fftw_execute(inv_);
        out.resize(n_);
        const double scale = 1.0 / static_cast<double>(n_);
        for (std::size_t j = 0; j < n_; ++j) {
            out[j] = real_.get()[j] * scale;
        }
    }

private:
    std::size_t n_;
    std::unique_ptr<double, decltype(&fftw_free)> real_;
    std::unique_ptr<fftw_complex, decltype(&fftw_free)> spec_;
    fftw_plan fwd_{};
    fftw_plan inv_{};
};

/// Random initial velocity: independent complex Gaussian modes with magnitude
/// proportional to (1 + k)^{-decay}, band-limited to the dealiased range.
inline Field1D sample_initial_field(const BurgersConfig& config, Rng& rng) {
    config.validate();
    const std::size_t n = config.n_grid;
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<cplx> spec(n / 2 + 1, cplx{});
    const double nd = static_cast<double>(n);
    for (std::size_t k = 0; k <= dealias_cutoff(n); ++k) {
        const double mag = config.amplitude * std::pow(1.0 + static_cast<double>(k), -config.init_spectrum_decay);
        const double re = normal(rng);
        const double im = normal(rng);
        if (k == 0) {
            spec[0] = config.zero_mean ? cplx{} : cplx{mag * re * nd, 0.0};
        } else {
            // half the energy of a real mode sits in its conjugate partner
            spec[k] = cplx{re, im} * (mag * nd / std::sqrt(2.0));
        }
    }
    Field1D f;
    RealFft fft(n);
    fft.inverse(spec, f.values);
    return f;
}

/// Spectral right-hand side and integrating-factor stepper for a fixed grid.
class Solver {
public:
    explicit Solver(BurgersConfig config) : config_(config), fft_(config.n_grid) {
        config_.validate();
        const std::size_t half = config_.n_grid / 2 + 1;
        wavenumber_.resize(half);
        for (std::size_t k = 0; k < half; ++k) {
            wavenumber_[k] = 2.0 * kPi * static_cast<double>(k);
        }
    }

    [[nodiscard]] const BurgersConfig& config() const { return config_; }

    /// -(1/2) d/ds (v^2) in spectral form, dealiased.
    void nonlinear(std::span<const cplx> v_hat, std::vector<cplx>& out) {
        fft_.inverse(v_hat, phys_);
        for (double& x : phys_) {
            x = x * x;
        }
        fft_.forward(phys_, out);
        const std::size_t cut = dealias_cutoff(config_.n_grid);
        for (std::size_t k = 0; k < out.size(); ++k) {
            out[k] = k == 0 || k > cut ? cplx{} : cplx{0.0, -0.5 * wavenumber_[k]} * out[k];
        }
    }

    /// One integrating-factor RK4 step of size dt on the spectral state.
    void step_spectral(std::vector<cplx>& v_hat, double dt) {
        const std::size_t m = v_hat.size();
        decay_full_.resize(m);
        decay_half_.resize(m);
        for (std::size_t k = 0; k < m; ++k) {
            const double rate = config_.rho * wavenumber_[k] * wavenumber_[k];
            decay_full_[k] = std::exp(-rate * dt);
            decay_half_[k] = std::exp(-rate * dt / 2.0);
        }
        nonlinear(v_hat, a_);
        stage_.resize(m);
        for (std::size_t k = 0; k < m; ++k) {
            stage_[k] = decay_half_[k] * (v_hat[k] + 0.5 * dt * a_[k]);
        }
        nonlinear(stage_, b_);
        for (std::size_t k = 0; k < m; ++k) {
            stage_[k] = decay_half_[k] * v_hat[k] + 0.5 * dt * b_[k];
        }
        nonlinear(stage_, c_);
        for (std::size_t k = 0; k < m; ++k) {
            stage_[k] = decay_full_[k] * v_hat[k] + dt * decay_half_[k] * c_[k];
        }
        nonlinear(stage_, d_);
        for (std::size_t k = 0; k < m; ++k) {
            v_hat[k] = decay_full_[k] * v_hat[k] +
                       dt / 6.0 * (decay_full_[k] * a_[k] + 2.0 * decay_half_[k] * (b_[k] + c_[k]) + d_[k]);
        }
    }

    /// Explicit RK4 stability on the advective term: dt * max|v| * k_cut <= 2.8.
    void check_stability(const Field1D& field, double dt) const {
        double vmax = 0.0;
        for (double v : field.values) {
            if (!std::isfinite(v)) {
                throw NumericalError("Burgers solver: non-finite velocity (instability)");
            }
            vmax = std::max(vmax, std::abs(v));
        }
        const double k_cut = 2.0 * kPi * static_cast<double>(dealias_cutoff(config_.n_grid));
        if (dt * vmax * k_cut > 2.8) {
            std::ostringstream msg;
            msg << "Burgers solver: CFL condition dt*max|v|*k_cut <= 2.8 violated (" << dt * vmax * k_cut << ")";
            throw NumericalError(msg.str());
        }
    }

    Field1D step(const Field1D& field) { return advance(field, config_.dt, 1); }

    Field1D advance(const Field1D& field, double dt, std::size_t steps) {
        require(field.size() == config_.n_grid, "field size does not match the solver grid");
        check_stability(field, dt);
        std::vector<cplx> v_hat;
        fft_.forward(field.values, v_hat);
        for (std::size_t s = 0; s < steps; ++s) {
            step_spectral(v_hat, dt);
        }
        Field1D out;
        fft_.inverse(v_hat, out.values);
        check_stability(out, dt);
        return out;
    }

    Field1D solve(const Field1D& v0) {
        if (config_.t_final <= 0.0) {
            return v0;
        }
        const auto steps = static_cast<std::size_t>(std::ceil(config_.t_final / config_.dt - 1e-9));
        return advance(v0, config_.t_final / static_cast<double>(steps), steps);
    }

private:
    BurgersConfig config_;
    RealFft fft_;
    std::vector<double> wavenumber_;
    std::vector<double> phys_;
    std::vector<double> decay_full_, decay_half_;
    std::vector<cplx> a_, b_, c_, d_, stage_;
};

inline Field1D step(const Field1D& field, const BurgersConfig& config) { return Solver(config).step(field); }

inline Field1D solve(const Field1D& v0, const BurgersConfig& config) { return Solver(config).solve(v0); }

inline double spatial_mean(const Field1D& f) {
    double s = 0.0;
    for (double v : f.values) {
        s += v;
    }
    return s / static_cast<double>(f.size());
}

inline double energy(const Field1D& f) {
    double s = 0.0;
    for (double v : f.values) {
        s += v * v;
    }
    return s / static_cast<double>(f.size());
}

struct FederatedDataset {
    std::vector<ClientDataset> clients;
    std::vector<double> client_decay;  // per-client spectrum decay actually used

    [[nodiscard]] std::size_t total_samples() const {
        std::size_t n = 0;
        for (const auto& c : clients) {
            n += c.size();
        }
        return n;
    }
};

/// Per-client Burgers trajectories. Client k draws initial fields with
/// spectrum decay base * (1 + heterogeneity * xi_k), xi_k ~ U(-1, 1).
inline FederatedDataset make_federated_dataset(std::size_t k_clients, std::size_t samples_per_client,
                                               const BurgersConfig& config, std::uint64_t seed,
                                               double heterogeneity) {
    require(k_clients >= 1, "at least one client is required");
    require(heterogeneity >= 0.0, "heterogeneity must be non-negative");
    config.validate();
    FederatedDataset data;
    Solver solver(config);
    Rng client_rng = make_rng(seed, Stream::Burgers, 0);
    for (std::size_t k = 0; k < k_clients; ++k) {
        const double xi = 2.0 * uniform01(client_rng) - 1.0;
        BurgersConfig local = config;
        local.init_spectrum_decay = std::max(0.0, config.init_spectrum_decay * (1.0 + heterogeneity * xi));
        data.client_decay.push_back(local.init_spectrum_decay);
        ClientDataset ds;
        for (std::size_t j = 0; j < samples_per_client; ++j) {
            Rng rng = make_rng(seed, Stream::Burgers, 1 + k * 1'000'003ULL + j);
            TurbulenceSample sample;
            sample.input = sample_initial_field(local, rng);
            sample.target = solver.solve(sample.input);
            ds.push_back(std::move(sample));
        }
        data.clients.push_back(std::move(ds));
    }
    return data;
}

/// CSV: commented config header, then client,sample,in_0..in_{n-1},out_0..out_{n-1}.
inline void write_dataset_csv(std::ostream& os, const FederatedDataset& data, const BurgersConfig& config) {
    os << "# rho=" << config.rho << " t_final=" << config.t_final << " dt=" << config.dt
       << " n_grid=" << config.n_grid << " init_spectrum_decay=" << config.init_spectrum_decay
       << " amplitude=" << config.amplitude << '\n';
    os.precision(17);
    for (std::size_t k = 0; k < data.clients.size(); ++k) {
        for (std::size_t j = 0; j < data.clients[k].size(); ++j) {
            const auto& s = data.clients[k][j];
            os << k << ',' << j;
            for (double v : s.input.values) {
                os << ',' << v;
            }
            for (double v : s.target.values) {
                os << ',' << v;
            }
            os << '\n';
        }
    }
}

}  // namespace uamfl::burgers
