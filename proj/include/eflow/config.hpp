#pragma once

#include "eflow/grid_measure.hpp"
#include "eflow/models.hpp"
#include "eflow/semigroup.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace eflow {

struct RateSpec {
    std::string family;                     // constant | affine_sigmoid | affine
    std::map<std::string, double> params;
};

struct KernelSpec {
    std::string family;                     // delta | truncated_uniform
    std::map<std::string, double> params;
};

struct InitialSpec {
    std::string type = "dirac";             // dirac | density | snapshot
    double s0 = 0.0;
    std::string name;                       // density: exponential | uniform | gaussian
    std::map<std::string, double> params;
    std::string path;                       // snapshot, relative to the config file
    std::string label;
};

struct RelaxationSpec {
    bool enabled = true;
    double horizon = 40.0;
    double fit_lo = 2.0;
    double fit_hi = 40.0;
    std::size_t stride = 20;
    std::vector<InitialSpec> inits;         // empty: five default Diracs
};

struct CertifySpec {
    std::size_t n_trials = 64;
    std::size_t n_pairs = 100;
    double debug_bound_scale = 1.0;         // multiplies the Doeblin floor; tests only
    RelaxationSpec relaxation;
};

struct SweepSpec {
    std::string parameter = "L";            // L | J
    std::vector<double> values;
};

/// Parsed and validated run configuration. Unknown keys are rejected at
/// every level before any computation starts.
struct RunConfig {
    ModelKind model = ModelKind::age_structured;
    double s_max = 10.0;
    std::size_t n_cells = 2000;
    RateSpec rate;
    std::optional<KernelSpec> kernel;
    InitialSpec initial;
    double horizon = 1.0;
    double activity_tol = kDefaultActivityTol;
    double equilibrium_tol = kDefaultActivityTol;
    std::size_t stride = 1;
    std::size_t snapshot_stride = 0;
    std::uint64_t seed = 12345;
    std::string out_dir = "out";
    CertifySpec certify;
    SweepSpec sweep;

    nlohmann::json raw;                     // echoed into manifests
    std::filesystem::path base_dir;
};

[[nodiscard]] RunConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
[[nodiscard]] RunConfig load_config(const std::filesystem::path& path);

[[nodiscard]] Grid make_grid(const RunConfig& cfg);
[[nodiscard]] RateModel make_rate(const RateSpec& spec);

/// Same family with the connectivity rescaled so the certified L equals
/// `lipschitz` (sigmoid: J = 4 w L / (p_max - p_min); affine: b = L).
[[nodiscard]] RateModel make_rate_with_lipschitz(const RateSpec& spec, double lipschitz);

/// Sigmoid family with coupling J replaced.
[[nodiscard]] RateModel make_rate_with_coupling(const RateSpec& spec, double coupling);

[[nodiscard]] std::optional<KernelModel> make_kernel(const RunConfig& cfg, const Grid& grid);

/// Initial probability on the grid (densities and snapshots are normalized to mass 1).
[[nodiscard]] GridMeasure make_initial(const InitialSpec& spec, const Grid& grid,
                                       const std::filesystem::path& base_dir);

[[nodiscard]] std::vector<InitialSpec> default_relaxation_inits(const RunConfig& cfg);

}  // namespace eflow
