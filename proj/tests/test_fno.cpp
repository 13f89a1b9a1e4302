#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <cstring>
#include <sstream>

#include "uamfl/fno.hpp"

using namespace uamfl;
using namespace uamfl::fno;

namespace {

FnoConfig small_config() {
    FnoConfig c;
    c.width = 4;
    c.k_max = 3;
    c.n_grid = 16;
    c.hidden = 5;
    return c;
}

// parameters of order one so every gradient coordinate is well above
// finite-difference round-off
FnoParams random_params(const FnoConfig& c, std::uint64_t seed) {
    Rng rng = make_rng(seed, Stream::FnoInit);
    FnoParams p(c);
    for (double& v : p.values) {
        v = 2.0 * uniform01(rng) - 1.0;
    }
    return p;
}

std::vector<TurbulenceSample> sample_pairs(std::size_t n_grid, std::size_t count, std::uint64_t seed) {
    Rng rng = make_rng(seed, Stream::Training);
    std::vector<TurbulenceSample> d(count);
    for (auto& s : d) {
        for (std::size_t j = 0; j < n_grid; ++j) {
            s.input.values.push_back(uniform01(rng) - 0.5);
            s.target.values.push_back(uniform01(rng) - 0.5);
        }
    }
    return d;
}

// fourth-order central difference; the second-order rule's round-off
// is comparable to the smallest gradient coordinates
template <class Loss>
double central_difference(const FnoParams& p, std::size_t i, double h, Loss&& f) {
    const auto at = [&](double step) {
        FnoParams q = p;
        q.values[i] += step;
        return f(q);
    };
    return (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h);
}

std::vector<std::complex<double>> dft(const std::vector<double>& x) {
    const std::size_t n = x.size();
    std::vector<std::complex<double>> out(n / 2 + 1);
    for (std::size_t k = 0; k <= n / 2; ++k) {
        for (std::size_t j = 0; j < n; ++j) {
            out[k] += x[j] * std::polar(1.0, -2.0 * kPi * static_cast<double>(j * k % n) / static_cast<double>(n));
        }
    }
    return out;
}

}  // namespace

TEST(Config, Validation) {
    FnoConfig c = small_config();
    c.k_max = 9;
    EXPECT_THROW(c.validate(), ParameterError);
    c = small_config();
    c.n_layers = 0;
    EXPECT_THROW(c.validate(), ParameterError);
}

TEST(Forward, IdentityNetwork) {
    FnoConfig c;
    c.n_layers = 1;
    c.width = 1;
    c.hidden = 1;
    c.n_grid = 16;
    c.k_max = 8;
    c.coordinate_channel = false;
    c.activation = Activation::Identity;
    FnoParams p(c);
    const Layout lay(c);
    p.values[lay.lift_w] = 1.0;
    for (std::size_t k = 0; k < c.k_max; ++k) {
        p.values[lay.spec[0] + 2 * k] = 1.0;
    }
    p.values[lay.proj1_w] = 1.0;
    p.values[lay.proj2_w] = 1.0;
    // no Nyquist content, which the retained modes 0..7 cannot carry
    Field1D in;
    for (std::size_t j = 0; j < 16; ++j) {
        const double x = static_cast<double>(j) / 16.0;
        in.values.push_back(0.3 + std::sin(2 * kPi * x) - 0.5 * std::cos(2 * kPi * 7 * x));
    }
    const auto out = forward(p, in);
    for (std::size_t j = 0; j < 16; ++j) {
        EXPECT_NEAR(out.values[j], in.values[j], 1e-13);
    }
}

TEST(Forward, ZeroParamsGiveOutputBias) {
    const FnoConfig c = small_config();
    FnoParams p(c);
    const auto d = sample_pairs(16, 1, 1);
    for (double v : forward(p, d[0].input).values) {
        EXPECT_EQ(v, 0.0);
    }
    p.values[Layout(c).proj2_b] = 0.25;
    for (double v : forward(p, d[0].input).values) {
        EXPECT_DOUBLE_EQ(v, 0.25);
    }
}

TEST(Forward, ShiftEquivariantWithoutCoordinates) {
    FnoConfig c = small_config();
    c.coordinate_channel = false;
    const auto p = random_params(c, 2);
    const auto d = sample_pairs(16, 1, 3);
    const auto base = forward(p, d[0].input);
    for (std::size_t shift : {1u, 5u, 11u}) {
        Field1D moved;
        for (std::size_t j = 0; j < 16; ++j) {
            moved.values.push_back(d[0].input.values[(j + 16 - shift) % 16]);
        }
        const auto out = forward(p, moved);
        for (std::size_t j = 0; j < 16; ++j) {
            EXPECT_NEAR(out.values[j], base.values[(j + 16 - shift) % 16], 1e-10);
        }
    }
}

TEST(Forward, SpectralTruncation) {
    FnoConfig c = small_config();
    c.n_grid = 32;
    c.activation = Activation::Identity;
    auto p = random_params(c, 4);
    const Layout lay(c);
    for (std::size_t l = 0; l < c.n_layers; ++l) {
        std::fill_n(p.values.begin() + static_cast<std::ptrdiff_t>(lay.point_w[l]), c.width * c.width, 0.0);
        std::fill_n(p.values.begin() + static_cast<std::ptrdiff_t>(lay.point_b[l]), c.width, 0.0);
    }
    const auto d = sample_pairs(32, 1, 5);
    const auto spec = dft(forward(p, d[0].input).values);
    for (std::size_t k = c.k_max; k < spec.size(); ++k) {
        EXPECT_LT(std::abs(spec[k]), 1e-12) << "mode " << k;
    }
}

TEST(Forward, ShapeMismatchRejected) {
    const auto p = random_params(small_config(), 6);
    Field1D wrong{std::vector<double>(8, 0.0)};
    EXPECT_THROW(forward(p, wrong), ParameterError);
}

TEST(Loss, MatchesTwoLoopMse) {
    const auto p = random_params(small_config(), 7);
    const auto d = sample_pairs(16, 3, 8);
    double acc = 0.0;
    for (const auto& s : d) {
        const auto out = forward(p, s.input);
        for (std::size_t j = 0; j < 16; ++j) {
            acc += (out.values[j] - s.target.values[j]) * (out.values[j] - s.target.values[j]);
        }
    }
    EXPECT_NEAR(loss(p, d), acc / 48.0, 1e-12);
    EXPECT_THROW(loss(p, std::vector<TurbulenceSample>{}), ParameterError);
}

TEST(Loss, ZeroAtExactTarget) {
    const auto p = random_params(small_config(), 9);
    auto d = sample_pairs(16, 2, 10);
    for (auto& s : d) {
        s.target = forward(p, s.input);
    }
    EXPECT_EQ(loss(p, d), 0.0);
    const auto g = gradient(p, d);
    for (double v : g.values) {
        EXPECT_EQ(v, 0.0);
    }
    FnoParams zero(small_config());
    for (auto& s : d) {
        std::fill(s.target.values.begin(), s.target.values.end(), 0.0);
    }
    EXPECT_EQ(loss(zero, d), 0.0);
}

TEST(Gradient, MatchesCentralDifferences) {
    const FnoConfig c = small_config();
    const auto p = random_params(c, 11);
    const auto d = sample_pairs(16, 2, 12);
    const auto g = gradient(p, d);
    double worst = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double fd = central_difference(p, i, 1e-3, [&](const FnoParams& q) { return loss(q, d); });
        if (g.values[i] == 0.0) {
            // imaginary parts of the mode-0 weights cannot reach a real output
            EXPECT_LT(std::abs(fd), 1e-12) << "coordinate " << i;
            continue;
        }
        const double rel = std::abs(fd - g.values[i]) / std::abs(g.values[i]);
        EXPECT_LT(rel, 1e-5) << "coordinate " << i << " fd=" << fd << " exact=" << g.values[i];
        worst = std::max(worst, rel);
    }
    RecordProperty("worst_relative_error", std::to_string(worst));
}

TEST(Gradient, GeluIdentityActivationsBothCheck) {
    FnoConfig c = small_config();
    c.activation = Activation::Identity;
    c.coordinate_channel = false;
    const auto p = random_params(c, 13);
    const auto d = sample_pairs(16, 1, 14);
    const auto g = gradient(p, d);
    for (std::size_t i = 0; i < p.size(); i += 7) {
        const double fd = central_difference(p, i, 1e-3, [&](const FnoParams& q) { return loss(q, d); });
        EXPECT_NEAR(g.values[i], fd, 1e-5 * std::max(std::abs(fd), 1e-3));
    }
}

TEST(Gradient, ScalesLinearlyWithLoss) {
    const FnoConfig c = small_config();
    const auto p = random_params(c, 15);
    const auto d = sample_pairs(16, 1, 16);
    Network net(c);
    GradientVector g1(c), g3(c);
    net.accumulate(p, d[0], 1.0, g1);
    net.accumulate(p, d[0], 3.0, g3);
    for (std::size_t i = 0; i < g1.size(); ++i) {
        EXPECT_NEAR(g3.values[i], 3.0 * g1.values[i], 1e-14 * (1.0 + std::abs(g3.values[i])));
    }
}

TEST(SgdStep, ArithmeticProperties) {
    const FnoConfig c = small_config();
    const auto p = random_params(c, 17);
    const auto g = random_params(c, 18);
    const auto h = random_params(c, 19);
    EXPECT_EQ(sgd_step(p, g, 0.0, 1.0).values, p.values);
    const auto one = sgd_step(p, g, 0.1, 1.0);
    const auto two = sgd_step(one, h, 0.1, 1.0);
    for (std::size_t i = 0; i < p.size(); ++i) {
        EXPECT_DOUBLE_EQ(one.values[i], p.values[i] - 0.1 * g.values[i]);
        EXPECT_NEAR(two.values[i], p.values[i] - 0.1 * (g.values[i] + h.values[i]), 1e-15);
    }
    FnoConfig other = c;
    other.width = 5;
    EXPECT_THROW(sgd_step(p, FnoParams(other), 0.1, 1.0), ParameterError);
}

TEST(Training, OverfitsSingleSample) {
    FnoConfig c;
    c.width = 8;
    c.k_max = 4;
    c.n_grid = 16;
    c.hidden = 16;
    Rng rng = make_rng(20, Stream::FnoInit);
    auto p = init_params(c, rng);
    auto d = sample_pairs(16, 1, 21);
    // a smooth, learnable target
    for (std::size_t j = 0; j < 16; ++j) {
        d[0].target.values[j] = 0.5 * std::sin(2 * kPi * static_cast<double>(j) / 16.0);
    }
    const double start = loss(p, d);
    for (int step = 0; step < 5000; ++step) {
        p = sgd_step(p, gradient(p, d), 0.2, 1.0);
    }
    EXPECT_LT(loss(p, d), 1e-3 * start);
}

TEST(Checkpoint, RoundTripAndLayout) {
    const FnoConfig c = small_config();
    const auto p = random_params(c, 22);
    std::stringstream ss;
    write_checkpoint(ss, p);
    const std::string bytes = ss.str();
    EXPECT_EQ(bytes.size(), 44 + 8 * p.size());
    EXPECT_EQ(bytes.substr(0, 8), "UAMFLFNO");
    double first = 0.0;
    std::memcpy(&first, bytes.data() + 44, 8);
    EXPECT_EQ(first, p.values[0]);
    const auto q = read_checkpoint(ss);
    EXPECT_TRUE(q.config == p.config);
    EXPECT_EQ(q.values, p.values);

    std::stringstream bad("NOTACHKPxxxxxxxx");
    EXPECT_THROW(read_checkpoint(bad), ParameterError);
}
