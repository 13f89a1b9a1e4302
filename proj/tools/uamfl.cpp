// uamfl: connectivity, staleness, training and bound experiments.
#include <cstdlib>
#include <iostream>

#include "CLI11.hpp"

#include "uamfl/experiments.hpp"

using namespace uamfl;

namespace {

enum ExitCode { kOk = 0, kConfigError = 2, kNumericalError = 3 };

struct Overrides {
    std::string config_path;
    std::uint64_t seed = 0;
    std::string out;
    long trials = 0;
    std::string runner;
};

config::ExperimentConfig resolve(const CLI::App& sub, const Overrides& o) {
    config::ExperimentConfig cfg = o.config_path.empty() ? config::ExperimentConfig{} : config::load(o.config_path);
    if (sub.count("--seed") > 0) {
        cfg.seed = o.seed;
    }
    if (sub.count("--out") > 0) {
        cfg.out_dir = o.out;
    }
    if (sub.count("--trials") > 0) {
        cfg.trials = o.trials;
    }
    if (sub.count("--runner") > 0) {
        cfg.train.runner = o.runner;
    }
    cfg.validate();
    return cfg;
}

void add_common(CLI::App* sub, Overrides& o, bool with_runner) {
    sub->add_option("--config", o.config_path, "TOML experiment config (baseline defaults when omitted)");
    sub->add_option("--seed", o.seed, "master seed");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--trials", o.trials, "Monte Carlo trials")->check(CLI::PositiveNumber);
    if (with_runner) {
        sub->add_option("--runner", o.runner, "afl, afl-stale-free, fedavg or scalable");
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"UAM connectivity analysis and asynchronous federated FNO training"};
    app.require_subcommand(1);
    Overrides o;
    auto* conn = app.add_subcommand("connectivity", "analytical and Monte Carlo connectivity curves");
    auto* stale = app.add_subcommand("staleness", "analytical and empirical staleness CDF");
    auto* train = app.add_subcommand("train", "federated FNO training on Burgers data");
    auto* bounds = app.add_subcommand("bounds", "convergence bound against the quadratic toy");
    auto* dump = app.add_subcommand("dump-config", "print the resolved config");
    for (auto* sub : {conn, stale, bounds, dump}) {
        add_common(sub, o, false);
    }
    add_common(train, o, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }

    try {
        if (*dump) {
            std::cout << config::serialize(resolve(*dump, o));
        } else if (*conn) {
            const auto cfg = resolve(*conn, o);
            const auto rows = experiments::cmd_connectivity(cfg);
            std::cout << "wrote " << rows.size() << " rows to " << cfg.out_dir << "/connectivity.csv\n";
        } else if (*stale) {
            const auto cfg = resolve(*stale, o);
            const auto r = experiments::cmd_staleness(cfg);
            std::cout << "t_comp=" << r.t_comp << " s, K=" << r.K << "; wrote " << cfg.out_dir << "/staleness.csv\n";
        } else if (*train) {
            const auto cfg = resolve(*train, o);
            const auto r = experiments::cmd_train(cfg);
            std::cout << cfg.train.runner << ": K=" << r.K_formula << " (" << r.clients << " clients), "
                      << r.trace.rounds << " rounds, sim time " << r.trace.rows.back().sim_clock << " s, "
                      << (r.trace.reached_target ? "reached" : "did not reach") << " target loss\n";
        } else if (*bounds) {
            const auto cfg = resolve(*bounds, o);
            const auto r = experiments::cmd_bounds(cfg);
            std::cout << "condition margin " << r.condition.margin << ", gap term " << r.gap_term << "; wrote "
                      << cfg.out_dir << "/bounds.csv\n";
        }
    } catch (const config::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const ParameterError& e) {
        std::cerr << "invalid parameter: " << e.what() << '\n';
        return kConfigError;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kNumericalError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kNumericalError;
    }
    return kOk;
}
