#pragma once

#include "eflow/config.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

namespace eflow {

/// Process exit codes of the command-line tool.
enum ExitCode : int {
    kExitOk = 0,
    kExitConfig = 2,
    kExitNumerical = 3,
    kExitThreshold = 4,
    kExitCertificate = 5,
};

struct CommandContext {
    std::filesystem::path out_dir;
    unsigned threads = 1;
    std::ostream* out = nullptr;  // summary lines; may be null
    std::ostream* err = nullptr;  // diagnostics; may be null
};

/// Trajectory CSV, final snapshot, optional strided snapshots, manifest.
int cmd_simulate(const RunConfig& cfg, const CommandContext& ctx);

/// Equilibrium report JSON and n_star snapshot; exit 4 when the stationary
/// smallness condition on L fails (report still written, with margins).
int cmd_equilibrium(const RunConfig& cfg, const CommandContext& ctx);

/// Doeblin floor, windowed contraction and relaxation in one pass; exit 5 on
/// any failed certificate.
int cmd_certify(const RunConfig& cfg, const CommandContext& ctx);

/// Equilibrium plus rate fit per sweep point, parallel across points; CSV
/// `L,N_star,lambda_theory,lambda_fit,pass`.
int cmd_sweep(const RunConfig& cfg, const CommandContext& ctx);

/// Thread count: the explicit value when given, else ELAPSED_FLOW_THREADS,
/// else 1. Throws ConfigError on a malformed or zero value.
[[nodiscard]] unsigned resolve_threads(std::optional<long long> requested, const char* env_value);

/// Loads the config, picks the output directory (override, else the
/// config's out_dir), dispatches, and maps exceptions to exit codes.
int run_command(const std::string& command, const std::filesystem::path& config_path,
                const std::optional<std::string>& out_override, unsigned threads, std::ostream& out,
                std::ostream& err);

}  // namespace eflow
