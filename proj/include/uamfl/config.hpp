#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "CLI11.hpp"

#include "uamfl/burgers.hpp"
#include "uamfl/error.hpp"
#include "uamfl/fno.hpp"
#include "uamfl/params.hpp"
#include "uamfl/quadrature.hpp"

/// Experiment configuration: a sectioned TOML file whose values are kept in
/// the user's units (km, dBm, dB) and converted when the model is built.
namespace uamfl::config {

class ConfigError : public ParameterError {
public:
    using ParameterError::ParameterError;
};

struct ModelSection {
    double lambda_b = 1.0;    // per km^2
    double lambda_c = 0.001;  // per km^2
    double lambda_l = 5.0;
    double lambda_t = 1.0;  // per km
    long max_corridors = 10;
    double height_m = 152.4;
    double tx_power_dbm = 40.0;
    double alpha = 4.0;
    long nakagami_m = 1;
    double gamma_db = 0.0;
    double bandwidth_hz = 10e6;
    double packet_bits = 5e3;
    double data_bits = 1e3;
    double cycles_per_bit = 1e3;
    double cpu_clock_hz = 1e9;
    std::string radius_model = "gaussian";  // or "uniform"
    double sigma_km = 1.0;
    double r_hat_km = 2.0;
    double disc_radius_km = 20.0;
};

struct QuadratureSection {
    double rel_tol = 1e-5;
    double truncation_radius_km = 0.0;
};

struct ConnectivitySection {
    std::vector<double> gamma_db{-10, -5, 0, 5, 10, 15, 20};
    std::vector<std::string> radius_models{"gaussian", "uniform"};
    std::string sweep = "none";  // lambda_l, lambda_c, lambda_b or lambda_t
    std::vector<double> sweep_values{};
};

struct StalenessSection {
    long points = 50;
    double slack_min_s = 1e-7;  // tau - t_comp at the first grid point
    double slack_max_s = 10.0;
};

struct TrainSection {
    std::string runner = "afl";  // afl, afl-stale-free, fedavg, scalable
    long max_clients = 10;
    long samples_per_client = 20;
    long test_samples = 20;
    double heterogeneity = 0.3;
    double lr = 0.3;
    double cohort_fraction = 0.5;
    std::string staleness = "analytical";  // analytical, mc or constant
    double constant_delta_s = 1e-3;
    long max_rounds = 30000;
    double target_loss = 1e-3;
    double max_sim_time_s = std::numeric_limits<double>::infinity();
};

struct BoundsSection {
    long clients = 10;
    long dim = 4;
    double c = 0.5;
    double L = 2.0;
    double spread = 1.0;
    double eta = 0.5;
    long rounds = 3000;
    long seeds = 20;
    std::string g1 = "default";  // or "unit"
    long toy_seed = 1;
};

struct ExperimentConfig {
    std::uint64_t seed = 1;
    long trials = 100000;
    std::string out_dir = "out";
    ModelSection model;
    QuadratureSection quadrature;
    ConnectivitySection connectivity;
    StalenessSection staleness;
    burgers::BurgersConfig burgers;
    fno::FnoConfig fno;
    TrainSection train;
    BoundsSection bounds;

    [[nodiscard]] ModelParams model_params() const;
    [[nodiscard]] QuadratureSpec quadrature_spec() const;
    void validate() const;
};

namespace detail {

// size_t fields (grid and layer sizes) share the unsigned slot with the seed
static_assert(std::is_same_v<std::size_t, std::uint64_t>, "64-bit size_t expected");
using Slot = std::variant<double*, long*, std::uint64_t*, bool*, std::string*, std::vector<double>*,
                          std::vector<std::string>*>;

struct Binding {
    std::string section;
    std::string key;
    Slot slot;
};

// Single source of truth for parsing and serialization order.
inline std::vector<Binding> bindings(ExperimentConfig& c) {
    auto& m = c.model;
    auto& b = c.burgers;
    auto& f = c.fno;
    auto& t = c.train;
    auto& k = c.bounds;
    return {
        {"run", "seed", &c.seed},
        {"run", "trials", &c.trials},
        {"run", "out_dir", &c.out_dir},
        {"model", "lambda_b_per_km2", &m.lambda_b},
        {"model", "lambda_c_per_km2", &m.lambda_c},
        {"model", "lambda_l", &m.lambda_l},
        {"model", "lambda_t_per_km", &m.lambda_t},
        {"model", "max_corridors", &m.max_corridors},
        {"model", "height_m", &m.height_m},
        {"model", "tx_power_dbm", &m.tx_power_dbm},
        {"model", "alpha", &m.alpha},
        {"model", "nakagami_m", &m.nakagami_m},
        {"model", "gamma_db", &m.gamma_db},
        {"model", "bandwidth_hz", &m.bandwidth_hz},
        {"model", "packet_bits", &m.packet_bits},
        {"model", "data_bits", &m.data_bits},
        {"model", "cycles_per_bit", &m.cycles_per_bit},
        {"model", "cpu_clock_hz", &m.cpu_clock_hz},
        {"model", "radius_model", &m.radius_model},
        {"model", "sigma_km", &m.sigma_km},
        {"model", "r_hat_km", &m.r_hat_km},
        {"model", "disc_radius_km", &m.disc_radius_km},
        {"quadrature", "rel_tol", &c.quadrature.rel_tol},
        {"quadrature", "truncation_radius_km", &c.quadrature.truncation_radius_km},
        {"connectivity", "gamma_db", &c.connectivity.gamma_db},
        {"connectivity", "radius_models", &c.connectivity.radius_models},
        {"connectivity", "sweep", &c.connectivity.sweep},
        {"connectivity", "sweep_values", &c.connectivity.sweep_values},
        {"staleness", "points", &c.staleness.points},
        {"staleness", "slack_min_s", &c.staleness.slack_min_s},
        {"staleness", "slack_max_s", &c.staleness.slack_max_s},
        {"burgers", "rho", &b.rho},
        {"burgers", "t_final", &b.t_final},
        {"burgers", "dt", &b.dt},
        {"burgers", "n_grid", &b.n_grid},
        {"burgers", "init_spectrum_decay", &b.init_spectrum_decay},
        {"burgers", "amplitude", &b.amplitude},
        {"burgers", "zero_mean", &b.zero_mean},
        {"fno", "n_layers", &f.n_layers},
        {"fno", "width", &f.width},
        {"fno", "k_max", &f.k_max},
        {"fno", "hidden", &f.hidden},
        {"fno", "coordinate_channel", &f.coordinate_channel},
        {"train", "runner", &t.runner},
        {"train", "max_clients", &t.max_clients},
        {"train", "samples_per_client", &t.samples_per_client},
        {"train", "test_samples", &t.test_samples},
        {"train", "heterogeneity", &t.heterogeneity},
        {"train", "lr", &t.lr},
        {"train", "cohort_fraction", &t.cohort_fraction},
        {"train", "staleness", &t.staleness},
        {"train", "constant_delta_s", &t.constant_delta_s},
        {"train", "max_rounds", &t.max_rounds},
        {"train", "target_loss", &t.target_loss},
        {"train", "max_sim_time_s", &t.max_sim_time_s},
        {"bounds", "clients", &k.clients},
        {"bounds", "dim", &k.dim},
        {"bounds", "c", &k.c},
        {"bounds", "L", &k.L},
        {"bounds", "spread", &k.spread},
        {"bounds", "eta", &k.eta},
        {"bounds", "rounds", &k.rounds},
        {"bounds", "seeds", &k.seeds},
        {"bounds", "g1", &k.g1},
        {"bounds", "toy_seed", &k.toy_seed},
    };
}

inline std::string format_double(double v) {
    if (std::isinf(v)) {
        return v > 0 ? "inf" : "-inf";
    }
    std::ostringstream os;
    os << std::setprecision(17) << v;
    std::string s = os.str();
    // keep TOML floats recognisable as floats
    if (s.find_first_of(".eEn") == std::string::npos) {
        s += ".0";
    }
    return s;
}

inline std::string quote(const std::string& s) {
    require(s.find_first_of("\"\\\n") == std::string::npos, "config strings may not contain quotes or newlines");
    return '"' + s + '"';
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
    try {
        std::size_t used = 0;
        T v{};
        if constexpr (std::is_same_v<T, double>) {
            v = std::stod(text, &used);
        } else if constexpr (std::is_same_v<T, long>) {
            v = std::stol(text, &used);
        } else {
            if (!text.empty() && text[0] == '-') {
                throw std::invalid_argument("negative");
            }
            v = static_cast<T>(std::stoull(text, &used));
        }
        if (used != text.size()) {
            throw std::invalid_argument("trailing characters");
        }
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': cannot read '" + text + "' as a number");
    }
}

inline void assign(const std::string& key, Slot slot, const std::vector<std::string>& in) {
    const auto single = [&]() -> const std::string& {
        if (in.size() != 1) {
            throw ConfigError("config key '" + key + "' expects a single value");
        }
        return in[0];
    };
    std::visit(
        [&](auto* p) {
            using T = std::remove_pointer_t<decltype(p)>;
            if constexpr (std::is_same_v<T, double>) {
                *p = parse_number<double>(key, single());
            } else if constexpr (std::is_same_v<T, long>) {
                *p = parse_number<long>(key, single());
            } else if constexpr (std::is_same_v<T, std::uint64_t>) {
                *p = parse_number<T>(key, single());
            } else if constexpr (std::is_same_v<T, bool>) {
                const auto& s = single();
                if (s != "true" && s != "false") {
                    throw ConfigError("config key '" + key + "' expects true or false, got '" + s + "'");
                }
                *p = s == "true";
            } else if constexpr (std::is_same_v<T, std::string>) {
                *p = single();
            } else if constexpr (std::is_same_v<T, std::vector<double>>) {
                p->clear();
                for (const auto& s : in) {
                    p->push_back(parse_number<double>(key, s));
                }
            } else {
                *p = in;
            }
        },
        slot);
}

inline std::string render(Slot slot) {
    return std::visit(
        [](auto* p) -> std::string {
            using T = std::remove_pointer_t<decltype(p)>;
            if constexpr (std::is_same_v<T, double>) {
                return format_double(*p);
            } else if constexpr (std::is_same_v<T, bool>) {
                return *p ? "true" : "false";
            } else if constexpr (std::is_same_v<T, std::string>) {
                return quote(*p);
            } else if constexpr (std::is_same_v<T, std::vector<double>>) {
                std::string s = "[";
                for (std::size_t i = 0; i < p->size(); ++i) {
                    s += (i ? ", " : "") + format_double((*p)[i]);
                }
                return s + "]";
            } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
                std::string s = "[";
                for (std::size_t i = 0; i < p->size(); ++i) {
                    s += (i ? ", " : "") + quote((*p)[i]);
                }
                return s + "]";
            } else {
                return std::to_string(*p);
            }
        },
        slot);
}

}  // namespace detail

/// Reads a config; keys not present keep the baseline defaults. Unknown
/// keys are errors so typos do not silently fall back to defaults.
inline ExperimentConfig parse(std::istream& in) {
    ExperimentConfig cfg;
    auto binds = detail::bindings(cfg);
    std::map<std::string, detail::Slot> by_name;
    for (const auto& b : binds) {
        by_name.emplace(b.section + "." + b.key, b.slot);
    }
    std::vector<CLI::ConfigItem> items;
    try {
        items = CLI::ConfigTOML().from_config(in);
    } catch (const CLI::Error& e) {
        throw ConfigError(std::string("config syntax error: ") + e.what());
    }
    for (const auto& item : items) {
        if (item.name == "++" || item.name == "--") {
            continue;
        }
        const std::string key = item.fullname();
        const auto it = by_name.find(key);
        if (it == by_name.end()) {
            throw ConfigError("unknown config key '" + key + "'");
        }
        detail::assign(key, it->second, item.inputs);
    }
    cfg.validate();
    return cfg;
}

inline ExperimentConfig parse_string(const std::string& text) {
    std::istringstream in(text);
    return parse(in);
}

inline ExperimentConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file '" + path + "'");
    }
    return parse(in);
}

inline std::string serialize(const ExperimentConfig& cfg) {
    ExperimentConfig copy = cfg;
    std::ostringstream os;
    std::string section;
    for (const auto& b : detail::bindings(copy)) {
        if (b.section != section) {
            os << (section.empty() ? "" : "\n") << '[' << b.section << "]\n";
            section = b.section;
        }
        os << b.key << " = " << detail::render(b.slot) << '\n';
    }
    return os.str();
}

/// FNV-1a over the serialized form; printed in every output header. The
/// output directory is left out so a rerun elsewhere gives identical files.
inline std::uint64_t config_hash(const ExperimentConfig& cfg) {
    ExperimentConfig c = cfg;
    c.out_dir.clear();
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : serialize(c)) {
        h = (h ^ ch) * 1099511628211ULL;
    }
    return h;
}

inline std::string hash_hex(const ExperimentConfig& cfg) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << config_hash(cfg);
    return os.str();
}

inline RadiusModel radius_model_named(const ModelSection& m, const std::string& name) {
    if (name == "gaussian") {
        return TruncatedGaussian{units::km(m.sigma_km)};
    }
    if (name == "uniform") {
        return UniformRadius{units::km(m.r_hat_km)};
    }
    throw ConfigError("radius model must be \"gaussian\" or \"uniform\", got \"" + name + "\"");
}

inline ModelParams ExperimentConfig::model_params() const {
    ModelParams p;
    p.lambda_b = units::per_km2(model.lambda_b);
    p.lambda_c = units::per_km2(model.lambda_c);
    p.lambda_l = model.lambda_l;
    p.lambda_t = units::per_km(model.lambda_t);
    p.max_corridors = static_cast<int>(model.max_corridors);
    p.height = model.height_m;
    p.tx_power = units::dbm_to_watts(model.tx_power_dbm);
    p.alpha = model.alpha;
    p.nakagami_m = static_cast<int>(model.nakagami_m);
    p.gamma = units::db_to_linear(model.gamma_db);
    p.bandwidth = model.bandwidth_hz;
    p.packet_bits = model.packet_bits;
    p.data_bits = model.data_bits;
    p.cycles_per_bit = model.cycles_per_bit;
    p.cpu_clock = model.cpu_clock_hz;
    p.radius_model = radius_model_named(model, model.radius_model);
    p.disc_radius = units::km(model.disc_radius_km);
    return p;
}

inline QuadratureSpec ExperimentConfig::quadrature_spec() const {
    QuadratureSpec q;
    q.rel_tol = quadrature.rel_tol;
    q.truncation_radius = units::km(quadrature.truncation_radius_km);
    return q;
}

inline void ExperimentConfig::validate() const {
    const auto check = [](bool ok, const std::string& msg) {
        if (!ok) {
            throw ConfigError(msg);
        }
    };
    try {
        model_params().validate();
        burgers.validate();
        fno::FnoConfig f = fno;
        f.n_grid = burgers.n_grid;
        f.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const ParameterError& e) {
        throw ConfigError(e.what());
    }
    for (const auto& r : connectivity.radius_models) {
        radius_model_named(model, r);
    }
    check(trials >= 1, "run.trials must be at least 1");
    check(quadrature.rel_tol > 0.0, "quadrature.rel_tol must be positive");
    const auto& s = connectivity.sweep;
    check(s == "none" || s == "lambda_l" || s == "lambda_c" || s == "lambda_b" || s == "lambda_t",
          "connectivity.sweep must be none, lambda_l, lambda_c, lambda_b or lambda_t");
    check(staleness.points >= 2, "staleness.points must be at least 2");
    check(staleness.slack_min_s > 0.0 && staleness.slack_max_s > staleness.slack_min_s,
          "staleness slack range must satisfy 0 < slack_min_s < slack_max_s");
    const auto& r = train.runner;
    check(r == "afl" || r == "afl-stale-free" || r == "fedavg" || r == "scalable",
          "train.runner must be afl, afl-stale-free, fedavg or scalable");
    check(train.max_clients >= 1, "train.max_clients must be at least 1");
    check(train.samples_per_client >= 1, "train.samples_per_client must be at least 1");
    check(train.test_samples >= 1, "train.test_samples must be at least 1");
    check(train.heterogeneity >= 0.0 && train.heterogeneity < 1.0, "train.heterogeneity must lie in [0, 1)");
    check(train.lr > 0.0, "train.lr must be positive");
    check(train.cohort_fraction > 0.0 && train.cohort_fraction <= 1.0, "train.cohort_fraction must lie in (0, 1]");
    check(train.staleness == "analytical" || train.staleness == "mc" || train.staleness == "constant",
          "train.staleness must be analytical, mc or constant");
    check(train.constant_delta_s > 0.0, "train.constant_delta_s must be positive");
    check(train.max_rounds >= 1, "train.max_rounds must be at least 1");
    check(bounds.clients >= 1 && bounds.dim >= 1 && bounds.rounds >= 1 && bounds.seeds >= 1,
          "bounds sizes must be at least 1");
    check(bounds.c > 0.0 && bounds.L >= bounds.c, "bounds needs 0 < c <= L");
    check(bounds.eta > 0.0, "bounds.eta must be positive");
    check(bounds.g1 == "default" || bounds.g1 == "unit", "bounds.g1 must be default or unit");
}

}  // namespace uamfl::config
