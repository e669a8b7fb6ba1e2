#include "eflow/io.hpp"

#include "eflow/errors.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace eflow {

namespace {

using nlohmann::json;

json num(double v) {
    return std::isfinite(v) ? json(v) : json(nullptr);
}

json params_json(const std::map<std::string, double>& params) {
    json j = json::object();
    for (const auto& [k, v] : params) j[k] = num(v);
    return j;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw NumericalFailure("cannot write output file: " + path);
    return out;
}

const char* model_name(ModelKind m) {
    return m == ModelKind::age_structured ? "model1" : "model2";
}

}  // namespace

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

json to_json(const RateModel& rate) {
    const RateBounds& b = rate.bounds();
    return {{"family", rate.family()},
            {"params", params_json(rate.params())},
            {"p_min", num(b.p_min)},
            {"p_max", num(b.p_max)},
            {"s_star", num(b.s_star)},
            {"L", num(b.lipschitz)},
            {"monotone_s", b.monotone_s}};
}

json to_json(const KernelModel& kernel) {
    return {{"family", kernel.family()},
            {"params", params_json(kernel.params())},
            {"eps", num(kernel.eps())},
            {"delta", num(kernel.delta())},
            {"point_mass_at_zero", kernel.is_point_mass_at_zero()}};
}

json certified_constants(const TheoryConstants& tc) {
    const bool has_kernel_constants = tc.model == ModelKind::fatigue;
    return {{"model", model_name(tc.model)},
            {"point_mass_kernel", tc.point_mass_kernel},
            {"p_min", num(tc.p_min)},
            {"p_max", num(tc.p_max)},
            {"s_star", num(tc.s_star)},
            {"L", num(tc.L)},
            {"eps", has_kernel_constants ? num(tc.eps) : json(nullptr)},
            {"delta", has_kernel_constants ? num(tc.delta) : json(nullptr)},
            {"t0", num(tc.t0)},
            {"beta", num(tc.beta)},
            {"alpha", num(tc.alpha)},
            {"C", num(tc.C)},
            {"lambda_lin", num(tc.lambda_lin)},
            {"C_tilde", num(tc.C_tilde)},
            {"lambda_nl", num(tc.lambda_nl)},
            {"L_threshold", num(tc.L_threshold)},
            {"L_threshold_first", num(tc.L_threshold_first)},
            {"L_threshold_rate", num(tc.L_threshold_rate)},
            {"L_threshold_stationary", num(tc.L_threshold_stationary)},
            {"upsilon_factor", num(tc.upsilon_factor)}};
}

json to_json(const TheoryConstants& tc) {
    return certified_constants(tc);
}

json margins_json(const TheoryConstants& tc) {
    json arr = json::array();
    for (const auto& m : threshold_margins(tc)) {
        arr.push_back({{"name", m.name},
                       {"L", num(m.L)},
                       {"threshold", num(m.threshold)},
                       {"margin", num(m.margin())},
                       {"satisfied", m.satisfied()}});
    }
    return arr;
}

json equilibrium_json(const Equilibrium& eq) {
    return {{"N_star", num(eq.N_star)},
            {"residual", num(eq.residual)},
            {"iterations", eq.iterations},
            {"mass", num(eq.n_star.mass())},
            {"tail_mass", num(eq.n_star.tail())}};
}

json to_json(const DoeblinReport& rep) {
    return {{"model", model_name(rep.model)},
            {"t0", num(rep.t0)},
            {"window", {num(rep.lo), num(rep.hi)}},
            {"bound", num(rep.bound)},
            {"floor", num(rep.floor)},
            {"bound_scale", num(rep.bound_scale)},
            {"min_density", num(rep.min_density)},
            {"margin", num(rep.min_density - rep.floor)},
            {"trials", rep.trials},
            {"window_cells", rep.window_cells},
            {"worst_initial", rep.worst_initial},
            {"pass", rep.pass}};
}

json to_json(const ContractionReport& rep) {
    return {{"pairs", rep.pairs},
            {"skipped", rep.skipped},
            {"seed", rep.seed},
            {"alpha", num(rep.alpha)},
            {"bound", num(rep.bound)},
            {"worst_ratio", num(rep.worst_ratio)},
            {"worst_pair", rep.worst_pair},
            {"margin", num(rep.bound - rep.worst_ratio)},
            {"non_expansive", rep.non_expansive},
            {"pass", rep.pass}};
}

json to_json(const RateFit& fit) {
    return {{"lambda_fit", num(fit.lambda_fit)},
            {"intercept", num(fit.intercept)},
            {"r2", num(fit.r2)},
            {"window", {num(fit.t_lo), num(fit.t_hi)}},
            {"samples", fit.samples},
            {"window_shrunk", fit.window_shrunk},
            {"lambda_theory", num(fit.lambda_theory)}};
}

json to_json(const RelaxationReport& rep) {
    json runs = json::array();
    for (const auto& run : rep.runs) {
        runs.push_back({{"label", run.label},
                        {"truncation_horizon", num(run.truncation_horizon)},
                        {"fit_ok", run.fit_ok},
                        {"fit", run.fit_ok ? to_json(run.fit) : json(nullptr)},
                        {"max_h_ratio", num(run.max_h_ratio)},
                        {"max_abs_h_integral", num(run.max_abs_h_integral)}});
    }
    return {{"lambda_theory", num(rep.lambda_theory)},
            {"min_lambda_fit", num(rep.min_lambda_fit)},
            {"min_r2", num(rep.min_r2)},
            {"max_h_ratio", num(rep.max_h_ratio)},
            {"h_ratio_bound", num(rep.constants.C_tilde)},
            {"max_abs_h_integral", num(rep.max_abs_h_integral)},
            {"equilibrium", equilibrium_json(rep.equilibrium)},
            {"rate_pass", rep.rate_pass},
            {"h_pass", rep.h_pass},
            {"integral_pass", rep.integral_pass},
            {"pass", rep.pass()},
            {"runs", runs}};
}

json make_manifest(const std::string& command, const json& config, std::uint64_t seed, const RateModel& rate,
                   const KernelModel* kernel, const TheoryConstants& tc) {
    return {{"command", command},
            {"config", config},
            {"seed", seed},
            {"rate", to_json(rate)},
            {"kernel", kernel != nullptr ? to_json(*kernel) : json(nullptr)},
            {"certified_constants", certified_constants(tc)},
            {"threshold_margins", margins_json(tc)}};
}

void write_json(const std::string& path, const json& j) {
    auto out = open_out(path);
    out << j.dump(2) << '\n';
}

void write_decay_csv(const std::string& path, std::span<const double> t, std::span<const double> tv) {
    auto out = open_out(path);
    out << "t,tv\n";
    for (std::size_t k = 0; k < t.size() && k < tv.size(); ++k) {
        out << format_double(t[k]) << ',' << format_double(tv[k]) << '\n';
    }
}

}  // namespace eflow
