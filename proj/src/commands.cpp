#include "eflow/commands.hpp"

#include "eflow/analysis.hpp"
#include "eflow/equilibria.hpp"
#include "eflow/errors.hpp"
#include "eflow/io.hpp"
#include "eflow/parallel.hpp"
#include "eflow/semigroup.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <ostream>

namespace eflow {

namespace {

using nlohmann::json;

struct Setup {
    Grid grid;
    RateModel rate;
    std::optional<KernelModel> kernel;
    TheoryConstants constants;

    [[nodiscard]] const KernelModel* kernel_ptr() const { return kernel ? &*kernel : nullptr; }
};

Setup build(const RunConfig& cfg) {
    Grid grid = make_grid(cfg);
    RateModel rate = make_rate(cfg.rate);
    std::optional<KernelModel> kernel = make_kernel(cfg, grid);
    if (kernel) {
        const KernelReport kr = validate_kernel(*kernel, rate.s_star());
        if (!kernel->is_point_mass_at_zero() && !kr.pass()) {
            throw ConfigError("kernel fails its assumptions: " + kr.detail);
        }
    }
    TheoryConstants tc = theory_constants(rate, kernel ? &*kernel : nullptr, cfg.model);
    return Setup{grid, std::move(rate), std::move(kernel), tc};
}

std::string path_in(const CommandContext& ctx, const std::string& name) {
    return (ctx.out_dir / name).string();
}

void say(const CommandContext& ctx, const std::string& line) {
    if (ctx.out != nullptr) *ctx.out << line << '\n';
}

void warn(const CommandContext& ctx, const std::string& line) {
    if (ctx.err != nullptr) *ctx.err << line << '\n';
}

std::string margin_lines(const TheoryConstants& tc) {
    std::string s;
    for (const auto& m : threshold_margins(tc)) {
        s += "  " + m.name + ": L = " + format_double(m.L) + " vs threshold " + format_double(m.threshold) +
             " (margin " + format_double(m.margin()) + ")\n";
    }
    return s;
}

Equilibrium solve_equilibrium(const RunConfig& cfg, const Setup& s) {
    return cfg.model == ModelKind::age_structured ? stationary_model1(s.rate, s.grid, cfg.equilibrium_tol)
                                                  : stationary_model2(s.rate, *s.kernel, cfg.equilibrium_tol);
}

std::vector<LabeledMeasure> relaxation_inits(const RunConfig& cfg, const Grid& grid) {
    const auto specs = cfg.certify.relaxation.inits.empty() ? default_relaxation_inits(cfg) : cfg.certify.relaxation.inits;
    std::vector<LabeledMeasure> inits;
    for (const auto& spec : specs) inits.emplace_back(spec.label, make_initial(spec, grid, cfg.base_dir));
    return inits;
}

RelaxationOptions relaxation_options(const RunConfig& cfg, unsigned threads) {
    const RelaxationSpec& r = cfg.certify.relaxation;
    RelaxationOptions o;
    o.horizon = r.horizon;
    o.fit_lo = r.fit_lo;
    o.fit_hi = r.fit_hi;
    o.stride = r.stride;
    o.tol = cfg.equilibrium_tol;
    o.threads = threads;
    return o;
}

json threshold_failure_json(const ThresholdViolation& e, const TheoryConstants& tc) {
    return {{"status", "precondition_failed"},
            {"condition", e.condition()},
            {"lhs", e.lhs()},
            {"rhs", e.rhs()},
            {"certified_constants", certified_constants(tc)},
            {"threshold_margins", margins_json(tc)}};
}

}  // namespace

int cmd_simulate(const RunConfig& cfg, const CommandContext& ctx) {
    const Setup s = build(cfg);
    const GridMeasure init = make_initial(cfg.initial, s.grid, cfg.base_dir);
    const Dynamics dyn{cfg.model, s.rate, s.kernel, false, cfg.activity_tol};

    Observers obs;
    obs.stride = cfg.stride;
    obs.snapshot_stride = cfg.snapshot_stride;
    const Trajectory traj = simulate(dyn, init, cfg.horizon, obs);

    {
        std::ofstream csv(path_in(ctx, "trajectory.csv"), std::ios::binary);
        if (!csv) throw NumericalFailure("cannot write trajectory.csv");
        write_trajectory_csv(csv, traj);
    }
    write_csv(path_in(ctx, "final.csv"), traj.final_state.n);
    if (!traj.snapshots.empty()) {
        std::filesystem::create_directories(ctx.out_dir / "snapshots");
        for (const auto& snap : traj.snapshots) {
            const auto step = static_cast<long long>(std::llround(snap.t / s.grid.ds()));
            char name[64];
            std::snprintf(name, sizeof(name), "snapshots/step_%08lld.csv", step);
            write_csv(path_in(ctx, name), snap.n);
        }
    }
    json manifest = make_manifest("simulate", cfg.raw, cfg.seed, s.rate, s.kernel_ptr(), s.constants);
    manifest["initial"] = cfg.initial.label;
    manifest["steps"] = s.grid.steps_for(cfg.horizon);
    manifest["rows"] = traj.samples.size();
    write_json(path_in(ctx, "manifest.json"), manifest);

    say(ctx, "simulate: " + std::to_string(traj.samples.size()) + " samples, final N = " +
                 format_double(traj.final_state.N) + ", final mass = " + format_double(traj.final_state.n.mass()));
    return kExitOk;
}

int cmd_equilibrium(const RunConfig& cfg, const CommandContext& ctx) {
    const Setup s = build(cfg);
    json manifest = make_manifest("equilibrium", cfg.raw, cfg.seed, s.rate, s.kernel_ptr(), s.constants);
    write_json(path_in(ctx, "manifest.json"), manifest);
    say(ctx, "threshold margins:\n" + margin_lines(s.constants));
    try {
        const Equilibrium eq = solve_equilibrium(cfg, s);
        json report = {{"status", "ok"},
                       {"equilibrium", equilibrium_json(eq)},
                       {"N_star", eq.N_star},
                       {"residual", eq.residual},
                       {"iterations", eq.iterations},
                       {"certified_constants", certified_constants(s.constants)},
                       {"threshold_margins", margins_json(s.constants)}};
        write_json(path_in(ctx, "equilibrium.json"), report);
        write_csv(path_in(ctx, "n_star.csv"), eq.n_star);
        say(ctx, "equilibrium: N_star = " + format_double(eq.N_star) + ", residual = " + format_double(eq.residual) +
                     ", iterations = " + std::to_string(eq.iterations));
        return kExitOk;
    } catch (const ThresholdViolation& e) {
        write_json(path_in(ctx, "equilibrium.json"), threshold_failure_json(e, s.constants));
        warn(ctx, "precondition failed: " + e.condition() + ": " + format_double(e.lhs()) +
                      " >= " + format_double(e.rhs()));
        return kExitThreshold;
    }
}

int cmd_certify(const RunConfig& cfg, const CommandContext& ctx) {
    const Setup s = build(cfg);
    json manifest = make_manifest("certify", cfg.raw, cfg.seed, s.rate, s.kernel_ptr(), s.constants);
    write_json(path_in(ctx, "manifest.json"), manifest);
    say(ctx, "threshold margins:\n" + margin_lines(s.constants));

    json report = {{"certified_constants", certified_constants(s.constants)},
                   {"threshold_margins", margins_json(s.constants)}};
    try {
        const Equilibrium eq = solve_equilibrium(cfg, s);
        report["equilibrium"] = equilibrium_json(eq);
        const RateModel frozen = s.rate.frozen_at(eq.N_star);

        const DoeblinReport doeblin = doeblin_check(cfg.model, frozen, s.kernel_ptr(), s.grid, cfg.certify.n_trials,
                                                    ctx.threads, cfg.certify.debug_bound_scale);
        report["doeblin"] = to_json(doeblin);
        say(ctx, "doeblin: min density " + format_double(doeblin.min_density) + " vs floor " +
                     format_double(doeblin.floor) + (doeblin.pass ? " PASS" : " FAIL"));

        const ContractionReport contraction =
            contraction_check(cfg.model, frozen, s.kernel_ptr(), s.grid, cfg.certify.n_pairs, cfg.seed, ctx.threads);
        report["contraction"] = to_json(contraction);
        say(ctx, "contraction: worst ratio " + format_double(contraction.worst_ratio) + " vs bound " +
                     format_double(contraction.bound) + (contraction.pass ? " PASS" : " FAIL"));

        bool pass = doeblin.pass && contraction.pass;
        if (cfg.certify.relaxation.enabled) {
            const RelaxationReport relax = relaxation_experiment(cfg.model, s.rate, s.kernel_ptr(),
                                                                 relaxation_inits(cfg, s.grid), s.grid,
                                                                 relaxation_options(cfg, ctx.threads));
            report["relaxation"] = to_json(relax);
            for (std::size_t k = 0; k < relax.runs.size(); ++k) {
                write_decay_csv(path_in(ctx, "decay_" + std::to_string(k) + ".csv"), relax.runs[k].t,
                                relax.runs[k].tv);
            }
            say(ctx, "relaxation: min lambda_fit " + format_double(relax.min_lambda_fit) + " vs lambda_theory " +
                         format_double(relax.lambda_theory) + ", max h ratio " + format_double(relax.max_h_ratio) +
                         " vs C_tilde " + format_double(relax.constants.C_tilde) + (relax.pass() ? " PASS" : " FAIL"));
            pass = pass && relax.pass();
        }
        report["pass"] = pass;
        write_json(path_in(ctx, "certify.json"), report);
        return pass ? kExitOk : kExitCertificate;
    } catch (const ThresholdViolation& e) {
        report["status"] = "precondition_failed";
        report["condition"] = e.condition();
        report["lhs"] = e.lhs();
        report["rhs"] = e.rhs();
        report["pass"] = false;
        write_json(path_in(ctx, "certify.json"), report);
        warn(ctx, "precondition failed: " + e.condition() + ": " + format_double(e.lhs()) +
                      " >= " + format_double(e.rhs()));
        return kExitThreshold;
    }
}

int cmd_sweep(const RunConfig& cfg, const CommandContext& ctx) {
    if (cfg.sweep.values.empty()) throw ConfigError("sweep command needs a 'sweep' block with values or a range");
    const Setup base = build(cfg);
    const auto& values = cfg.sweep.values;
    const auto inits = relaxation_inits(cfg, base.grid);
    RelaxationOptions options = relaxation_options(cfg, 1);

    struct Point {
        double L = std::numeric_limits<double>::quiet_NaN();
        double N_star = std::numeric_limits<double>::quiet_NaN();
        double lambda_theory = std::numeric_limits<double>::quiet_NaN();
        double lambda_fit = std::numeric_limits<double>::quiet_NaN();
        std::string status;
        json detail;
    };
    std::vector<Point> points(values.size());

    parallel_for(values.size(), ctx.threads, [&](std::size_t k) {
        Point& p = points[k];
        try {
            const RateModel rate = cfg.sweep.parameter == "L" ? make_rate_with_lipschitz(cfg.rate, values[k])
                                                              : make_rate_with_coupling(cfg.rate, values[k]);
            const TheoryConstants tc = theory_constants(rate, base.kernel_ptr(), cfg.model);
            p.L = tc.L;
            p.lambda_theory = tc.lambda_nl;
            p.detail = {{"certified_constants", certified_constants(tc)}, {"threshold_margins", margins_json(tc)}};
            try {
                const RelaxationReport rep =
                    relaxation_experiment(cfg.model, rate, base.kernel_ptr(), inits, base.grid, options);
                p.N_star = rep.equilibrium.N_star;
                p.lambda_fit = rep.min_lambda_fit;
                p.status = rep.pass() ? "true" : "false";
                p.detail["relaxation"] = to_json(rep);
            } catch (const ThresholdViolation& e) {
                p.status = "precondition_failed";
                p.detail["condition"] = e.condition();
                p.detail["lhs"] = e.lhs();
                p.detail["rhs"] = e.rhs();
            }
        } catch (const std::exception& e) {
            p.status = "error";
            p.detail["error"] = e.what();
        }
    });

    std::ofstream csv(path_in(ctx, "sweep.csv"), std::ios::binary);
    if (!csv) throw NumericalFailure("cannot write sweep.csv");
    csv << "L,N_star,lambda_theory,lambda_fit,pass\n";
    json summary = json::array();
    bool all_completed = true;
    for (std::size_t k = 0; k < points.size(); ++k) {
        const Point& p = points[k];
        csv << format_double(p.L) << ',' << format_double(p.N_star) << ',' << format_double(p.lambda_theory) << ','
            << format_double(p.lambda_fit) << ',' << p.status << '\n';
        json row = p.detail;
        row[cfg.sweep.parameter] = values[k];
        row["status"] = p.status;
        summary.push_back(row);
        if (p.status == "error") all_completed = false;
        say(ctx, "sweep " + cfg.sweep.parameter + " = " + format_double(values[k]) + ": " + p.status);
    }
    csv.close();
    write_json(path_in(ctx, "sweep.json"), json{{"parameter", cfg.sweep.parameter}, {"points", summary}});
    write_json(path_in(ctx, "manifest.json"),
               make_manifest("sweep", cfg.raw, cfg.seed, base.rate, base.kernel_ptr(), base.constants));
    return all_completed ? kExitOk : kExitNumerical;
}

unsigned resolve_threads(std::optional<long long> requested, const char* env_value) {
    if (requested) {
        if (*requested < 1) throw ConfigError("--threads must be at least 1");
        return static_cast<unsigned>(*requested);
    }
    if (env_value != nullptr && *env_value != '\0') {
        const std::string text(env_value);
        unsigned value = 0;
        const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
        if (ec != std::errc() || ptr != text.data() + text.size() || value == 0) {
            throw ConfigError("ELAPSED_FLOW_THREADS must be a positive integer, got '" + text + "'");
        }
        return value;
    }
    return 1;
}

int run_command(const std::string& command, const std::filesystem::path& config_path,
                const std::optional<std::string>& out_override, unsigned threads, std::ostream& out,
                std::ostream& err) {
    try {
        const RunConfig cfg = load_config(config_path);
        CommandContext ctx;
        ctx.out_dir = out_override ? std::filesystem::path(*out_override) : std::filesystem::path(cfg.out_dir);
        ctx.threads = threads;
        ctx.out = &out;
        ctx.err = &err;
        std::filesystem::create_directories(ctx.out_dir);

        if (command == "simulate") return cmd_simulate(cfg, ctx);
        if (command == "equilibrium") return cmd_equilibrium(cfg, ctx);
        if (command == "certify") return cmd_certify(cfg, ctx);
        if (command == "sweep") return cmd_sweep(cfg, ctx);
        throw ConfigError("unknown command '" + command + "'");
    } catch (const ThresholdViolation& e) {
        err << "precondition failed: " << e.condition() << ": " << format_double(e.lhs())
            << " >= " << format_double(e.rhs()) << '\n';
        return kExitThreshold;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const NumericalFailure& e) {
        err << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const std::invalid_argument& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::domain_error& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "i/o error: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const std::exception& e) {
        err << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    }
}

}  // namespace eflow
