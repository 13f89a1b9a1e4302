#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "uamfl/burgers.hpp"
#include "uamfl/error.hpp"
#include "uamfl/params.hpp"
#include "uamfl/rng.hpp"

/// One-dimensional Fourier neural operator with hand-written reverse mode.
///
/// Shapes (C = width, M = k_max, H = hidden, I = 1 or 2 input channels):
///   lift_w [C][I], lift_b [C]
///   per layer: spec [M][C_out][C_in] complex (re, im interleaved),
///              point_w [C][C], point_b [C]
///   proj1_w [H][C], proj1_b [H], proj2_w [H], proj2_b (scalar)
/// All blocks live in one flat vector in that order.
namespace uamfl::fno {

using burgers::Field1D;
using burgers::TurbulenceSample;

enum class Activation : std::uint32_t { Identity = 0, Gelu = 1 };

struct FnoConfig {
    std::size_t n_layers = 2;
    std::size_t width = 32;
    std::size_t k_max = 12;
    std::size_t n_grid = 256;
    std::size_t hidden = 64;
    bool coordinate_channel = true;
    Activation activation = Activation::Gelu;

    [[nodiscard]] std::size_t in_channels() const { return coordinate_channel ? 2 : 1; }

    void validate() const {
        require(n_layers >= 1, "FNO needs at least one Fourier layer");
        require(width >= 1 && hidden >= 1, "FNO width and hidden size must be positive");
        require(n_grid >= 2, "FNO grid too small");
        require(k_max >= 1 && k_max <= n_grid / 2, "k_max must lie in [1, n_grid/2]");
    }

    bool operator==(const FnoConfig&) const = default;
};

/// Offsets of every block in the flat parameter vector.
struct Layout {
    std::size_t lift_w, lift_b;
    std::vector<std::size_t> spec, point_w, point_b;
    std::size_t proj1_w, proj1_b, proj2_w, proj2_b;
    std::size_t total;

    explicit Layout(const FnoConfig& c) {
        std::size_t at = 0;
        const auto take = [&at](std::size_t n) {
            const std::size_t here = at;
            at += n;
            return here;
        };
        lift_w = take(c.width * c.in_channels());
        lift_b = take(c.width);
        for (std::size_t l = 0; l < c.n_layers; ++l) {
            spec.push_back(take(2 * c.k_max * c.width * c.width));
            point_w.push_back(take(c.width * c.width));
            point_b.push_back(take(c.width));
        }
        proj1_w = take(c.hidden * c.width);
        proj1_b = take(c.hidden);
        proj2_w = take(c.hidden);
        proj2_b = take(1);
        total = at;
    }
};

struct FnoParams {
    FnoConfig config;
    std::vector<double> values;

    FnoParams() = default;
    explicit FnoParams(const FnoConfig& c) : config(c), values(Layout(c).total, 0.0) { c.validate(); }

    [[nodiscard]] std::size_t size() const { return values.size(); }
};

/// Same shape tree as FnoParams.
using GradientVector = FnoParams;

inline void require_congruent(const FnoParams& a, const FnoParams& b) {
    require(a.config == b.config && a.values.size() == b.values.size(), "parameter shapes are not congruent");
}

inline double gelu(double z) { return 0.5 * z * (1.0 + std::erf(z / std::sqrt(2.0))); }

inline double gelu_grad(double z) {
    constexpr double inv_sqrt_2pi = 0.3989422804014327;
    return 0.5 * (1.0 + std::erf(z / std::sqrt(2.0))) + z * inv_sqrt_2pi * std::exp(-0.5 * z * z);
}

inline double activate(Activation a, double z) { return a == Activation::Gelu ? gelu(z) : z; }
inline double activate_grad(Activation a, double z) { return a == Activation::Gelu ? gelu_grad(z) : 1.0; }

/// Spectral weights U(0, 1/width^2) (re and im); real matrices and biases
/// U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
inline FnoParams init_params(const FnoConfig& config, Rng& rng) {
    FnoParams p(config);
    const Layout lay(config);
    const auto fill = [&](std::size_t at, std::size_t n, double lo, double hi) {
        for (std::size_t i = 0; i < n; ++i) {
            p.values[at + i] = lo + (hi - lo) * uniform01(rng);
        }
    };
    const double C = static_cast<double>(config.width);
    const auto sym = [&](std::size_t at, std::size_t n, double fan_in) {
        const double b = 1.0 / std::sqrt(fan_in);
        fill(at, n, -b, b);
    };
    sym(lay.lift_w, config.width * config.in_channels(), static_cast<double>(config.in_channels()));
    sym(lay.lift_b, config.width, static_cast<double>(config.in_channels()));
    for (std::size_t l = 0; l < config.n_layers; ++l) {
        fill(lay.spec[l], 2 * config.k_max * config.width * config.width, 0.0, 1.0 / (C * C));
        sym(lay.point_w[l], config.width * config.width, C);
        sym(lay.point_b[l], config.width, C);
    }
    sym(lay.proj1_w, config.hidden * config.width, C);
    sym(lay.proj1_b, config.hidden, C);
    sym(lay.proj2_w, config.hidden, static_cast<double>(config.hidden));
    sym(lay.proj2_b, 1, static_cast<double>(config.hidden));
    return p;
}

/// Forward/backward workspace for one configuration. Channel-major buffers:
/// value [c * n + j].
class Network {
public:
    explicit Network(const FnoConfig& config) : cfg_(config), lay_(config) {
        cfg_.validate();
        const std::size_t n = cfg_.n_grid;
        cos_.resize(n * cfg_.k_max);
        sin_.resize(n * cfg_.k_max);
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t k = 0; k < cfg_.k_max; ++k) {
                // reduce jk mod n first so the angle stays exact for large grids
                const double ang = 2.0 * kPi * static_cast<double>((j * k) % n) / static_cast<double>(n);
                cos_[j * cfg_.k_max + k] = std::cos(ang);
                sin_[j * cfg_.k_max + k] = std::sin(ang);
            }
        }
        acts_.resize(cfg_.n_layers + 1);
        pre_.resize(cfg_.n_layers);
        spec_in_.resize(cfg_.n_layers);
    }

    [[nodiscard]] const FnoConfig& config() const { return cfg_; }
    [[nodiscard]] const Layout& layout() const { return lay_; }

    Field1D forward(const FnoParams& p, const Field1D& input) {
        check(p, input);
        run_forward(p, input);
        return Field1D{out_};
    }

    /// Adds d(scale * sum_j (out_j - target_j)^2)/dw to grad; returns the
    /// unscaled squared error sum.
    double accumulate(const FnoParams& p, const TurbulenceSample& sample, double scale, GradientVector& grad) {
        check(p, sample.input);
        require(sample.target.size() == cfg_.n_grid, "target grid does not match the FNO config");
        run_forward(p, sample.input);
        const std::size_t n = cfg_.n_grid;
        std::vector<double> g_out(n);
        double sse = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double r = out_[j] - sample.target.values[j];
            sse += r * r;
            g_out[j] = 2.0 * scale * r;
        }
        run_backward(p, g_out, grad);
        return sse;
    }

private:
    void check(const FnoParams& p, const Field1D& input) const {
        require(p.config == cfg_ && p.values.size() == lay_.total, "parameters do not match the network config");
        require(input.size() == cfg_.n_grid, "input grid does not match the FNO config");
    }

    void run_forward(const FnoParams& p, const Field1D& input) {
        const std::size_t n = cfg_.n_grid, C = cfg_.width, M = cfg_.k_max, H = cfg_.hidden;
        const std::size_t I = cfg_.in_channels();
        const double* w = p.values.data();
        in_.assign(I * n, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            in_[j] = input.values[j];
            if (I == 2) {
                in_[n + j] = static_cast<double>(j) / static_cast<double>(n);
            }
        }
        auto& a0 = acts_[0];
        a0.assign(C * n, 0.0);
        for (std::size_t c = 0; c < C; ++c) {
            for (std::size_t j = 0; j < n; ++j) {
                double v = w[lay_.lift_b + c];
                for (std::size_t i = 0; i < I; ++i) {
                    v += w[lay_.lift_w + c * I + i] * in_[i * n + j];
                }
                a0[c * n + j] = v;
            }
        }
        for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
            const auto& a = acts_[l];
            auto& A = spec_in_[l];  // [i][k] (re, im)
            A.assign(2 * C * M, 0.0);
            for (std::size_t i = 0; i < C; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    const double v = a[i * n + j];
                    for (std::size_t k = 0; k < M; ++k) {
                        A[2 * (i * M + k)] += v * cos_[j * M + k];
                        A[2 * (i * M + k) + 1] -= v * sin_[j * M + k];
                    }
                }
            }
            std::vector<double> Y(2 * C * M, 0.0);  // [o][k]
            const double* R = w + lay_.spec[l];
            for (std::size_t k = 0; k < M; ++k) {
                for (std::size_t o = 0; o < C; ++o) {
                    double yr = 0.0, yi = 0.0;
                    for (std::size_t i = 0; i < C; ++i) {
                        const double rr = R[2 * ((k * C + o) * C + i)];
                        const double ri = R[2 * ((k * C + o) * C + i) + 1];
                        const double ar = A[2 * (i * M + k)];
                        const double ai = A[2 * (i * M + k) + 1];
                        yr += rr * ar - ri * ai;
                        yi += rr * ai + ri * ar;
                    }
                    Y[2 * (o * M + k)] = yr;
                    Y[2 * (o * M + k) + 1] = yi;
                }
            }
            auto& z = pre_[l];
            z.assign(C * n, 0.0);
            const double inv_n = 1.0 / static_cast<double>(n);
            for (std::size_t o = 0; o < C; ++o) {
                for (std::size_t j = 0; j < n; ++j) {
                    double s = 0.0;
                    for (std::size_t k = 0; k < M; ++k) {
                        const double ck = k == 0 ? 1.0 : 2.0;
                        s += ck * (Y[2 * (o * M + k)] * cos_[j * M + k] - Y[2 * (o * M + k) + 1] * sin_[j * M + k]);
                    }
                    double v = s * inv_n + w[lay_.point_b[l] + o];
                    for (std::size_t i = 0; i < C; ++i) {
                        v += w[lay_.point_w[l] + o * C + i] * a[i * n + j];
                    }
                    z[o * n + j] = v;
                }
            }
            auto& next = acts_[l + 1];
            next.resize(C * n);
            for (std::size_t q = 0; q < C * n; ++q) {
                next[q] = activate(cfg_.activation, z[q]);
            }
        }
        const auto& aL = acts_[cfg_.n_layers];
        hid_pre_.assign(H * n, 0.0);
        out_.assign(n, w[lay_.proj2_b]);
        for (std::size_t h = 0; h < H; ++h) {
            for (std::size_t j = 0; j < n; ++j) {
                double v = w[lay_.proj1_b + h];
                for (std::size_t c = 0; c < C; ++c) {
                    v += w[lay_.proj1_w + h * C + c] * aL[c * n + j];
                }
                hid_pre_[h * n + j] = v;
                out_[j] += w[lay_.proj2_w + h] * activate(cfg_.activation, v);
            }
        }
    }

    void run_backward(const FnoParams& p, const std::vector<double>& g_out, GradientVector& grad) {
        const std::size_t n = cfg_.n_grid, C = cfg_.width, M = cfg_.k_max, H = cfg_.hidden;
        const std::size_t I = cfg_.in_channels();
        const double* w = p.values.data();
        double* g = grad.values.data();
        std::vector<double> ga(C * n, 0.0);
        const auto& aL = acts_[cfg_.n_layers];
        for (std::size_t j = 0; j < n; ++j) {
            g[lay_.proj2_b] += g_out[j];
        }
        for (std::size_t h = 0; h < H; ++h) {
            for (std::size_t j = 0; j < n; ++j) {
                const double v = hid_pre_[h * n + j];
                g[lay_.proj2_w + h] += g_out[j] * activate(cfg_.activation, v);
                const double gh = g_out[j] * w[lay_.proj2_w + h] * activate_grad(cfg_.activation, v);
                g[lay_.proj1_b + h] += gh;
                for (std::size_t c = 0; c < C; ++c) {
                    g[lay_.proj1_w + h * C + c] += gh * aL[c * n + j];
                    ga[c * n + j] += gh * w[lay_.proj1_w + h * C + c];
                }
            }
        }
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t l = cfg_.n_layers; l-- > 0;) {
            const auto& a = acts_[l];
            const auto& z = pre_[l];
            std::vector<double> gz(C * n);
            for (std::size_t q = 0; q < C * n; ++q) {
                gz[q] = ga[q] * activate_grad(cfg_.activation, z[q]);
            }
            std::vector<double> ga_prev(C * n, 0.0);
            // pointwise path
            for (std::size_t o = 0; o < C; ++o) {
                for (std::size_t j = 0; j < n; ++j) {
                    const double go = gz[o * n + j];
                    g[lay_.point_b[l] + o] += go;
                    for (std::size_t i = 0; i < C; ++i) {
                        g[lay_.point_w[l] + o * C + i] += go * a[i * n + j];
                        ga_prev[i * n + j] += go * w[lay_.point_w[l] + o * C + i];
                    }
                }
            }
            // spectral path: gradient with respect to Re Y and Im Y
            std::vector<double> GY(2 * C * M, 0.0);
            for (std::size_t o = 0; o < C; ++o) {
                for (std::size_t k = 0; k < M; ++k) {
                    const double ck = (k == 0 ? 1.0 : 2.0) * inv_n;
                    double gr = 0.0, gi = 0.0;
                    for (std::size_t j = 0; j < n; ++j) {
                        gr += gz[o * n + j] * cos_[j * M + k];
                        gi -= gz[o * n + j] * sin_[j * M + k];
                    }
                    GY[2 * (o * M + k)] = ck * gr;
                    GY[2 * (o * M + k) + 1] = ck * gi;
                }
            }
            const auto& A = spec_in_[l];
            const double* R = w + lay_.spec[l];
            double* GR = g + lay_.spec[l];
            std::vector<double> GA(2 * C * M, 0.0);
            for (std::size_t k = 0; k < M; ++k) {
                for (std::size_t o = 0; o < C; ++o) {
                    const double yr = GY[2 * (o * M + k)];
                    const double yi = GY[2 * (o * M + k) + 1];
                    for (std::size_t i = 0; i < C; ++i) {
                        const std::size_t at = 2 * ((k * C + o) * C + i);
                        const double ar = A[2 * (i * M + k)];
                        const double ai = A[2 * (i * M + k) + 1];
                        // dL/dR = GY * conj(A), dL/dA = conj(R) * GY
                        GR[at] += yr * ar + yi * ai;
                        GR[at + 1] += yi * ar - yr * ai;
                        GA[2 * (i * M + k)] += R[at] * yr + R[at + 1] * yi;
                        GA[2 * (i * M + k) + 1] += R[at] * yi - R[at + 1] * yr;
                    }
                }
            }
            for (std::size_t i = 0; i < C; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    double v = 0.0;
                    for (std::size_t k = 0; k < M; ++k) {
                        v += GA[2 * (i * M + k)] * cos_[j * M + k] - GA[2 * (i * M + k) + 1] * sin_[j * M + k];
                    }
                    ga_prev[i * n + j] += v;
                }
            }
            ga.swap(ga_prev);
        }
        for (std::size_t c = 0; c < C; ++c) {
            for (std::size_t j = 0; j < n; ++j) {
                const double gc = ga[c * n + j];
                g[lay_.lift_b + c] += gc;
                for (std::size_t i = 0; i < I; ++i) {
                    g[lay_.lift_w + c * I + i] += gc * in_[i * n + j];
                }
            }
        }
    }

    FnoConfig cfg_;
    Layout lay_;
    std::vector<double> cos_, sin_;
    std::vector<double> in_;
    std::vector<std::vector<double>> acts_, pre_, spec_in_;
    std::vector<double> hid_pre_, out_;
};

inline Field1D forward(const FnoParams& params, const Field1D& input) {
    Network net(params.config);
    return net.forward(params, input);
}

/// Mean squared error over samples and grid points.
inline double loss(const FnoParams& params, std::span<const TurbulenceSample> data) {
    require(!data.empty(), "loss needs a non-empty dataset");
    Network net(params.config);
    double sse = 0.0;
    for (const auto& s : data) {
        const Field1D out = net.forward(params, s.input);
        require(s.target.size() == out.size(), "target grid does not match the FNO config");
        for (std::size_t j = 0; j < out.size(); ++j) {
            const double r = out.values[j] - s.target.values[j];
            sse += r * r;
        }
    }
    return sse / static_cast<double>(data.size() * params.config.n_grid);
}

/// Gradient of loss(); samples are reduced in order.
inline GradientVector gradient(const FnoParams& params, std::span<const TurbulenceSample> data,
                               double* loss_out = nullptr) {
    require(!data.empty(), "gradient needs a non-empty dataset");
    Network net(params.config);
    GradientVector grad(params.config);
    const double scale = 1.0 / static_cast<double>(data.size() * params.config.n_grid);
    double sse = 0.0;
    for (const auto& s : data) {
        sse += net.accumulate(params, s, scale, grad);
    }
    if (loss_out != nullptr) {
        *loss_out = sse * scale;
    }
    return grad;
}

/// params - lr * scale * grad
inline FnoParams sgd_step(const FnoParams& params, const GradientVector& grad, double lr, double scale) {
    require_congruent(params, grad);
    FnoParams out = params;
    const double a = lr * scale;
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        out.values[i] -= a * grad.values[i];
    }
    return out;
}

// Checkpoint layout (all little-endian):
//   0  char[8]  "UAMFLFNO"
//   8  u32      format version (1)
//  12  u32      n_layers
//  16  u32      width
//  20  u32      k_max
//  24  u32      n_grid
//  28  u32      hidden
//  32  u32      flags: bit0 coordinate channel, bit1 GELU activation
//  36  u64      parameter count P
//  44  f64[P]   flat parameter vector (Layout order)
inline constexpr char kCheckpointMagic[8] = {'U', 'A', 'M', 'F', 'L', 'F', 'N', 'O'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <class T>
void put_le(std::ostream& os, T v) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
        std::reverse(b, b + sizeof(T));
    }
    os.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <class T>
T get_le(std::istream& is) {
    unsigned char b[sizeof(T)];
    if (!is.read(reinterpret_cast<char*>(b), sizeof(T))) {
        throw ParameterError("checkpoint truncated");
    }
    if constexpr (std::endian::native == std::endian::big) {
        std::reverse(b, b + sizeof(T));
    }
    T v;
    std::memcpy(&v, b, sizeof(T));
    return v;
}

}  // namespace detail

inline void write_checkpoint(std::ostream& os, const FnoParams& p) {
    const auto& c = p.config;
    os.write(kCheckpointMagic, sizeof kCheckpointMagic);
    detail::put_le<std::uint32_t>(os, kCheckpointVersion);
    for (std::size_t v : {c.n_layers, c.width, c.k_max, c.n_grid, c.hidden}) {
        detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(v));
    }
    const std::uint32_t flags =
        (c.coordinate_channel ? 1U : 0U) | (c.activation == Activation::Gelu ? 2U : 0U);
    detail::put_le<std::uint32_t>(os, flags);
    detail::put_le<std::uint64_t>(os, p.values.size());
    for (double v : p.values) {
        detail::put_le<double>(os, v);
    }
}

inline FnoParams read_checkpoint(std::istream& is) {
    char magic[8];
    if (!is.read(magic, sizeof magic) || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
        throw ParameterError("not an FNO checkpoint (bad magic)");
    }
    const auto version = detail::get_le<std::uint32_t>(is);
    require(version == kCheckpointVersion, "unsupported checkpoint version " + std::to_string(version));
    FnoConfig c;
    c.n_layers = detail::get_le<std::uint32_t>(is);
    c.width = detail::get_le<std::uint32_t>(is);
    c.k_max = detail::get_le<std::uint32_t>(is);
    c.n_grid = detail::get_le<std::uint32_t>(is);
    c.hidden = detail::get_le<std::uint32_t>(is);
    const auto flags = detail::get_le<std::uint32_t>(is);
    c.coordinate_channel = (flags & 1U) != 0;
    c.activation = (flags & 2U) != 0 ? Activation::Gelu : Activation::Identity;
    FnoParams p(c);
    const auto count = detail::get_le<std::uint64_t>(is);
    require(count == p.values.size(), "checkpoint parameter count does not match its config");
    for (double& v : p.values) {
        v = detail::get_le<double>(is);
    }
    return p;
}

inline void save_checkpoint(const std::string& path, const FnoParams& p) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw ParameterError("cannot open checkpoint for writing: " + path);
    }
    write_checkpoint(os, p);
}

inline FnoParams load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw ParameterError("cannot open checkpoint: " + path);
    }
    return read_checkpoint(is);
}

}  // namespace uamfl::fno
