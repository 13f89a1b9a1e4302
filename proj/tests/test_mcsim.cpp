#include <gtest/gtest.h>

#include <cmath>

#include "uamfl/analysis.hpp"
#include "uamfl/mcsim.hpp"

using namespace uamfl;

TEST(McConnectivity, TinyThresholdAlwaysConnects) {
    const auto r = mcsim::mc_connectivity(ModelParams{}, 1e-30, 500, 1);
    EXPECT_DOUBLE_EQ(r.estimate, 1.0);
    EXPECT_EQ(r.trials, 500);
}

TEST(McConnectivity, DeterministicUnderSeed) {
    const auto a = mcsim::mc_connectivity(ModelParams{}, 1.0, 2000, 42);
    const auto b = mcsim::mc_connectivity(ModelParams{}, 1.0, 2000, 42);
    EXPECT_EQ(a.estimate, b.estimate);
    EXPECT_EQ(a.stderr_, b.stderr_);
    EXPECT_EQ(a.discarded, b.discarded);
}

TEST(McConnectivity, StderrScalesWithTrials) {
    const auto a = mcsim::mc_connectivity(ModelParams{}, 10.0, 10000, 3);
    const auto b = mcsim::mc_connectivity(ModelParams{}, 10.0, 20000, 3);
    EXPECT_NEAR(a.stderr_ / b.stderr_, std::sqrt(2.0), 0.1);
}

TEST(McConnectivity, AgreesWithAnalyticAtZeroDb) {
    const ModelParams p;
    const auto mc = mcsim::mc_connectivity(p, 1.0, 100000, 4);
    const double an = analysis::connectivity_probability(1.0, analysis::LaplaceEvaluator{p});
    EXPECT_NEAR(mc.estimate, an, 0.03);
}

TEST(McConnectivity, EstimatesConverge) {
    const ModelParams p;
    const auto big = mcsim::mc_sir_samples(p, 100000, 5);
    const auto small = mcsim::SirSamples{{big.sir.begin(), big.sir.begin() + 10000}, 0};
    const auto a = mcsim::connectivity_from_samples(small, 1.0);
    const auto b = mcsim::connectivity_from_samples(big, 1.0);
    EXPECT_LE(std::abs(a.estimate - b.estimate), 3.0 * a.stderr_);
}

TEST(McConnectivity, NearestAssociatedSelectionRuns) {
    // the spec's in-realization serving rule; discards are counted
    const auto r = mcsim::mc_connectivity(ModelParams{}, 1.0, 2000, 6, mcsim::ServingSelection::NearestAssociated);
    EXPECT_EQ(r.trials, 2000);
    EXPECT_GT(r.estimate, 0.0);
    EXPECT_LT(r.estimate, 1.0);
}

TEST(McStaleness, DelayDecomposition) {
    const ModelParams p;
    const auto s = mcsim::staleness_from_sir(std::numeric_limits<double>::infinity(), p);
    EXPECT_DOUBLE_EQ(s.delta, p.compute_delay());
    const auto a = mcsim::staleness_from_sir(3.0, p);
    ModelParams q = p;
    q.packet_bits *= 2.0;
    const auto b = mcsim::staleness_from_sir(3.0, q);
    EXPECT_DOUBLE_EQ(b.t_tran, 2.0 * a.t_tran);
    EXPECT_DOUBLE_EQ(a.delta, a.t_comp + a.t_tran);
    EXPECT_DOUBLE_EQ(a.t_tran, p.packet_bits / (p.bandwidth * 2.0));
}

TEST(McStaleness, EmpiricalCdfMatchesAnalytic) {
    const ModelParams p;
    const auto samples = mcsim::mc_staleness(p, 100000, 7);
    const analysis::TabulatedLaplace tab{analysis::LaplaceEvaluator{p}};
    for (int i = 0; i < 20; ++i) {
        const double tau = p.compute_delay() + std::pow(10.0, -7.0 + 0.4 * i);
        double emp = 0.0;
        for (const auto& s : samples) {
            emp += s.delta <= tau ? 1.0 : 0.0;
        }
        emp /= static_cast<double>(samples.size());
        EXPECT_NEAR(analysis::staleness_cdf(tau, tab), emp, 0.03) << "tau=" << tau;
    }
}

TEST(McParticipants, ZeroAircraftAndScaling) {
    ModelParams p;
    p.lambda_t = 0.0;
    EXPECT_DOUBLE_EQ(mcsim::mc_participants(p, 200, 8).estimate, 0.0);

    // a scenario with several aircraft per GBS so halving is visible
    ModelParams q;
    q.lambda_b = units::per_km2(0.01);
    ModelParams q2 = q;
    q2.lambda_b *= 2.0;
    const auto a = mcsim::mc_participants(q, 4000, 9);
    const auto b = mcsim::mc_participants(q2, 4000, 9);
    EXPECT_NEAR(a.estimate / b.estimate, 2.0, 0.3);
}

TEST(McParticipants, WithinOneOfFloorFormula) {
    for (double lb : {1.0, 0.01}) {
        ModelParams p;
        p.lambda_b = units::per_km2(lb);
        const auto k = analysis::expected_participants(p, analysis::expected_chord_length(p, QuadratureSpec{}));
        const auto mc = mcsim::mc_participants(p, 10000, 10);
        EXPECT_LE(std::abs(mc.estimate - static_cast<double>(k.count)), 1.0) << "lambda_b=" << lb;
    }
}
