#include "eflow/config.hpp"

#include "eflow/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <set>

namespace eflow {

namespace {

using nlohmann::json;

void require_object(const json& j, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    require_object(j, where);
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& item : j.items()) {
        if (!ok.count(item.key())) throw ConfigError(where + ": unknown key '" + item.key() + "'");
    }
}

double number(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) throw ConfigError(where + ": missing required key '" + key + "'");
    const json& v = j.at(key);
    if (!v.is_number()) throw ConfigError(where + "." + key + ": expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ConfigError(where + "." + key + ": must be finite");
    return x;
}

double number_or(const json& j, const char* key, double fallback, const std::string& where) {
    return j.contains(key) ? number(j, key, where) : fallback;
}

std::size_t count_or(const json& j, const char* key, std::size_t fallback, const std::string& where) {
    if (!j.contains(key)) return fallback;
    const json& v = j.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0) {
        throw ConfigError(where + "." + key + ": expected a nonnegative integer");
    }
    return static_cast<std::size_t>(v.get<long long>());
}

std::string text(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) throw ConfigError(where + ": missing required key '" + key + "'");
    if (!j.at(key).is_string()) throw ConfigError(where + "." + key + ": expected a string");
    return j.at(key).get<std::string>();
}

double positive(double x, const std::string& what) {
    if (!(x > 0.0)) throw ConfigError(what + " must be positive");
    return x;
}

double param(const std::map<std::string, double>& p, const char* key) {
    return p.at(key);
}

// Family-specific numeric parameters; every listed key is required.
std::map<std::string, double> family_params(const json& j, const std::string& where,
                                            std::initializer_list<const char*> keys) {
    std::map<std::string, double> out;
    for (const char* k : keys) out[k] = number(j, k, where);
    return out;
}

RateSpec parse_rate(const json& j) {
    const std::string where = "rate";
    require_object(j, where);
    RateSpec spec;
    spec.family = text(j, "family", where);
    if (spec.family == "constant") {
        check_keys(j, {"family", "p0", "s_star"}, where);
        spec.params = family_params(j, where, {"p0", "s_star"});
    } else if (spec.family == "affine_sigmoid") {
        check_keys(j, {"family", "p_min", "p_max", "s_star", "J", "w"}, where);
        spec.params = family_params(j, where, {"p_min", "p_max", "s_star", "J", "w"});
    } else if (spec.family == "affine") {
        check_keys(j, {"family", "a", "b", "p_max", "s_star"}, where);
        spec.params = family_params(j, where, {"a", "b", "p_max", "s_star"});
    } else {
        throw ConfigError("rate.family: unknown family '" + spec.family + "'");
    }
    return spec;
}

KernelSpec parse_kernel(const json& j) {
    const std::string where = "kernel";
    require_object(j, where);
    KernelSpec spec;
    spec.family = text(j, "family", where);
    if (spec.family == "delta") {
        check_keys(j, {"family"}, where);
    } else if (spec.family == "truncated_uniform") {
        check_keys(j, {"family", "c"}, where);
        spec.params = family_params(j, where, {"c"});
    } else {
        throw ConfigError("kernel.family: unknown family '" + spec.family + "'");
    }
    return spec;
}

InitialSpec parse_initial(const json& j, const std::string& where) {
    require_object(j, where);
    InitialSpec spec;
    spec.type = text(j, "type", where);
    if (j.contains("label")) spec.label = text(j, "label", where);
    if (spec.type == "dirac") {
        check_keys(j, {"type", "s0", "label"}, where);
        spec.s0 = number(j, "s0", where);
        if (spec.s0 < 0.0) throw ConfigError(where + ".s0 must be nonnegative");
        if (spec.label.empty()) spec.label = "dirac(" + std::to_string(spec.s0) + ")";
    } else if (spec.type == "density") {
        spec.name = text(j, "name", where);
        if (spec.name == "exponential") {
            check_keys(j, {"type", "name", "rate", "label"}, where);
            spec.params = family_params(j, where, {"rate"});
            positive(spec.params["rate"], where + ".rate");
        } else if (spec.name == "uniform") {
            check_keys(j, {"type", "name", "lo", "hi", "label"}, where);
            spec.params = family_params(j, where, {"lo", "hi"});
            if (!(spec.params["lo"] >= 0.0 && spec.params["hi"] > spec.params["lo"])) {
                throw ConfigError(where + ": need 0 <= lo < hi");
            }
        } else if (spec.name == "gaussian") {
            check_keys(j, {"type", "name", "mean", "sd", "label"}, where);
            spec.params = family_params(j, where, {"mean", "sd"});
            positive(spec.params["sd"], where + ".sd");
        } else {
            throw ConfigError(where + ".name: unknown density '" + spec.name + "'");
        }
        if (spec.label.empty()) spec.label = spec.name;
    } else if (spec.type == "snapshot") {
        check_keys(j, {"type", "path", "label"}, where);
        spec.path = text(j, "path", where);
        if (spec.label.empty()) spec.label = "snapshot(" + spec.path + ")";
    } else {
        throw ConfigError(where + ".type: unknown initial datum type '" + spec.type + "'");
    }
    return spec;
}

RelaxationSpec parse_relaxation(const json& j) {
    const std::string where = "certify.relaxation";
    check_keys(j, {"enabled", "horizon", "fit_lo", "fit_hi", "stride", "inits"}, where);
    RelaxationSpec spec;
    if (j.contains("enabled")) {
        if (!j.at("enabled").is_boolean()) throw ConfigError(where + ".enabled: expected a boolean");
        spec.enabled = j.at("enabled").get<bool>();
    }
    spec.horizon = number_or(j, "horizon", spec.horizon, where);
    spec.fit_lo = number_or(j, "fit_lo", spec.fit_lo, where);
    spec.fit_hi = number_or(j, "fit_hi", spec.horizon, where);
    spec.stride = count_or(j, "stride", spec.stride, where);
    if (spec.stride == 0) throw ConfigError(where + ".stride must be positive");
    if (!(spec.horizon > 0.0) || !(spec.fit_lo >= 0.0) || !(spec.fit_hi > spec.fit_lo)) {
        throw ConfigError(where + ": need horizon > 0 and 0 <= fit_lo < fit_hi");
    }
    if (j.contains("inits")) {
        if (!j.at("inits").is_array()) throw ConfigError(where + ".inits: expected an array");
        std::size_t k = 0;
        for (const auto& item : j.at("inits")) {
            spec.inits.push_back(parse_initial(item, where + ".inits[" + std::to_string(k++) + "]"));
        }
    }
    return spec;
}

CertifySpec parse_certify(const json& j) {
    const std::string where = "certify";
    check_keys(j, {"n_trials", "n_pairs", "debug_bound_scale", "relaxation"}, where);
    CertifySpec spec;
    spec.n_trials = count_or(j, "n_trials", spec.n_trials, where);
    spec.n_pairs = count_or(j, "n_pairs", spec.n_pairs, where);
    spec.debug_bound_scale = number_or(j, "debug_bound_scale", 1.0, where);
    if (spec.n_trials < 2) throw ConfigError("certify.n_trials must be at least 2");
    positive(spec.debug_bound_scale, "certify.debug_bound_scale");
    if (j.contains("relaxation")) spec.relaxation = parse_relaxation(j.at("relaxation"));
    return spec;
}

SweepSpec parse_sweep(const json& j) {
    const std::string where = "sweep";
    check_keys(j, {"parameter", "values", "range"}, where);
    SweepSpec spec;
    if (j.contains("parameter")) spec.parameter = text(j, "parameter", where);
    if (spec.parameter != "L" && spec.parameter != "J") {
        throw ConfigError("sweep.parameter must be 'L' or 'J'");
    }
    if (j.contains("values") == j.contains("range")) {
        throw ConfigError("sweep: give exactly one of 'values' or 'range'");
    }
    if (j.contains("values")) {
        if (!j.at("values").is_array() || j.at("values").empty()) {
            throw ConfigError("sweep.values: expected a nonempty array");
        }
        for (const auto& v : j.at("values")) {
            if (!v.is_number()) throw ConfigError("sweep.values: expected numbers");
            spec.values.push_back(v.get<double>());
        }
    } else {
        const json& r = j.at("range");
        check_keys(r, {"from", "to", "count"}, "sweep.range");
        const double from = number(r, "from", "sweep.range");
        const double to = number(r, "to", "sweep.range");
        const std::size_t count = count_or(r, "count", 0, "sweep.range");
        if (count < 1) throw ConfigError("sweep.range.count must be at least 1");
        for (std::size_t k = 0; k < count; ++k) {
            const double x = count == 1 ? from : from + (to - from) * static_cast<double>(k) / static_cast<double>(count - 1);
            spec.values.push_back(x);
        }
    }
    if (spec.parameter == "L") {
        for (double v : spec.values) {
            if (v < 0.0) throw ConfigError("sweep: L values must be nonnegative");
        }
    }
    return spec;
}

}  // namespace

RunConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir) {
    check_keys(j,
               {"model", "grid", "rate", "kernel", "initial", "horizon", "tolerances", "output", "seed", "out_dir",
                "certify", "sweep"},
               "config");
    RunConfig cfg;
    cfg.raw = j;
    cfg.base_dir = base_dir;

    if (!j.contains("model") || !j.at("model").is_number_integer()) {
        throw ConfigError("config.model: expected 1 or 2");
    }
    const auto model = j.at("model").get<long long>();
    if (model != 1 && model != 2) throw ConfigError("config.model: expected 1 or 2");
    cfg.model = model == 1 ? ModelKind::age_structured : ModelKind::fatigue;

    if (!j.contains("grid")) throw ConfigError("config: missing required key 'grid'");
    const json& g = j.at("grid");
    check_keys(g, {"s_max", "n_cells"}, "grid");
    cfg.s_max = positive(number(g, "s_max", "grid"), "grid.s_max");
    cfg.n_cells = count_or(g, "n_cells", 0, "grid");
    if (cfg.n_cells < 2) throw ConfigError("grid.n_cells must be at least 2");

    if (!j.contains("rate")) throw ConfigError("config: missing required key 'rate'");
    cfg.rate = parse_rate(j.at("rate"));

    if (j.contains("kernel")) cfg.kernel = parse_kernel(j.at("kernel"));
    if (cfg.model == ModelKind::fatigue && !cfg.kernel) throw ConfigError("model 2 needs a 'kernel' block");
    if (cfg.model == ModelKind::age_structured && cfg.kernel) {
        throw ConfigError("model 1 reinjects at s = 0; remove the 'kernel' block");
    }

    if (j.contains("initial")) {
        cfg.initial = parse_initial(j.at("initial"), "initial");
    } else {
        cfg.initial.label = "dirac(0.000000)";
    }

    cfg.horizon = number_or(j, "horizon", cfg.horizon, "config");
    if (!(cfg.horizon >= 0.0)) throw ConfigError("config.horizon must be nonnegative");

    if (j.contains("tolerances")) {
        const json& t = j.at("tolerances");
        check_keys(t, {"activity", "equilibrium"}, "tolerances");
        cfg.activity_tol = positive(number_or(t, "activity", cfg.activity_tol, "tolerances"), "tolerances.activity");
        cfg.equilibrium_tol =
            positive(number_or(t, "equilibrium", cfg.equilibrium_tol, "tolerances"), "tolerances.equilibrium");
    }
    if (j.contains("output")) {
        const json& o = j.at("output");
        check_keys(o, {"stride", "snapshot_stride"}, "output");
        cfg.stride = count_or(o, "stride", cfg.stride, "output");
        cfg.snapshot_stride = count_or(o, "snapshot_stride", cfg.snapshot_stride, "output");
        if (cfg.stride == 0) throw ConfigError("output.stride must be positive");
    }
    if (j.contains("seed")) {
        if (!j.at("seed").is_number_unsigned() && !(j.at("seed").is_number_integer() && j.at("seed").get<long long>() >= 0)) {
            throw ConfigError("config.seed: expected a nonnegative integer");
        }
        cfg.seed = j.at("seed").get<std::uint64_t>();
    }
    if (j.contains("out_dir")) cfg.out_dir = text(j, "out_dir", "config");
    if (j.contains("certify")) cfg.certify = parse_certify(j.at("certify"));
    if (j.contains("sweep")) cfg.sweep = parse_sweep(j.at("sweep"));
    if (cfg.sweep.parameter == "J" && !cfg.sweep.values.empty() && cfg.rate.family != "affine_sigmoid") {
        throw ConfigError("sweep over J needs the affine_sigmoid rate family");
    }
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
    }
    return parse_config(j, path.parent_path());
}

Grid make_grid(const RunConfig& cfg) {
    return Grid(cfg.s_max, cfg.n_cells);
}

RateModel make_rate(const RateSpec& spec) {
    const auto& p = spec.params;
    if (spec.family == "constant") {
        return make_constant_rate(param(p, "p0"), param(p, "s_star"));
    }
    if (spec.family == "affine_sigmoid") {
        return make_affine_sigmoid_rate(param(p, "p_min"), param(p, "p_max"), param(p, "s_star"), param(p, "J"),
                                        param(p, "w"));
    }
    if (spec.family == "affine") {
        return make_affine_rate(param(p, "a"), param(p, "b"), param(p, "p_max"), param(p, "s_star"));
    }
    throw ConfigError("unknown rate family '" + spec.family + "'");
}

RateModel make_rate_with_lipschitz(const RateSpec& spec, double lipschitz) {
    RateSpec s = spec;
    if (spec.family == "affine_sigmoid") {
        const double span = param(spec.params, "p_max") - param(spec.params, "p_min");
        if (span <= 0.0) {
            if (lipschitz != 0.0) throw ConfigError("a flat sigmoid rate cannot reach L > 0");
            s.params["J"] = 0.0;
        } else {
            s.params["J"] = 4.0 * param(spec.params, "w") * lipschitz / span;
        }
    } else if (spec.family == "affine") {
        s.params["b"] = lipschitz;
    } else if (lipschitz != 0.0) {
        throw ConfigError("rate family '" + spec.family + "' has no connectivity parameter");
    }
    return make_rate(s);
}

RateModel make_rate_with_coupling(const RateSpec& spec, double coupling) {
    if (spec.family != "affine_sigmoid") throw ConfigError("coupling J applies to the affine_sigmoid family only");
    RateSpec s = spec;
    s.params["J"] = coupling;
    return make_rate(s);
}

std::optional<KernelModel> make_kernel(const RunConfig& cfg, const Grid& grid) {
    if (!cfg.kernel) return std::nullopt;
    if (cfg.kernel->family == "delta") return make_delta_kernel(grid);
    if (cfg.kernel->family == "truncated_uniform") {
        return make_truncated_uniform_kernel(grid, param(cfg.kernel->params, "c"));
    }
    throw ConfigError("unknown kernel family '" + cfg.kernel->family + "'");
}

GridMeasure make_initial(const InitialSpec& spec, const Grid& grid, const std::filesystem::path& base_dir) {
    GridMeasure n(grid);
    if (spec.type == "dirac") {
        if (spec.s0 > grid.s_max()) throw ConfigError("initial dirac s0 lies beyond s_max");
        return GridMeasure::dirac(grid, spec.s0);
    }
    if (spec.type == "density") {
        const auto& p = spec.params;
        std::function<double(double)> f;
        if (spec.name == "exponential") {
            const double r = param(p, "rate");
            f = [r](double s) { return r * std::exp(-r * s); };
        } else if (spec.name == "uniform") {
            const double lo = param(p, "lo");
            const double hi = param(p, "hi");
            f = [lo, hi](double s) { return s >= lo && s < hi ? 1.0 : 0.0; };
        } else {
            const double mu = param(p, "mean");
            const double sd = param(p, "sd");
            f = [mu, sd](double s) { return std::exp(-0.5 * (s - mu) * (s - mu) / (sd * sd)); };
        }
        n = GridMeasure::from_density(grid, f);
    } else if (spec.type == "snapshot") {
        std::filesystem::path path(spec.path);
        if (path.is_relative()) path = base_dir / path;
        n = read_csv(path.string());
        if (!(n.grid() == grid)) throw ConfigError("snapshot " + path.string() + " lives on a different grid");
    } else {
        throw ConfigError("unknown initial datum type '" + spec.type + "'");
    }
    if (!n.is_nonnegative() || !(n.mass() > 0.0)) {
        throw ConfigError("initial datum '" + spec.label + "' must be nonnegative with positive mass on the grid");
    }
    n *= 1.0 / n.mass();
    return n;
}

std::vector<InitialSpec> default_relaxation_inits(const RunConfig& cfg) {
    const double s_star = cfg.rate.params.at("s_star");
    std::vector<InitialSpec> out;
    for (double s0 : {0.0, 0.5 * s_star, s_star, 2.0 * s_star, 4.0 * s_star}) {
        InitialSpec spec;
        spec.type = "dirac";
        spec.s0 = std::min(s0, cfg.s_max);
        spec.label = "dirac(" + std::to_string(spec.s0) + ")";
        out.push_back(spec);
    }
    return out;
}

}  // namespace eflow
