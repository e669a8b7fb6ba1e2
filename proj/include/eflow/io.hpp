#pragma once

#include "eflow/analysis.hpp"
#include "eflow/equilibria.hpp"
#include "eflow/models.hpp"

#include <json.hpp>

#include <cstdint>
#include <span>
#include <string>

namespace eflow {

[[nodiscard]] nlohmann::json to_json(const RateModel& rate);
[[nodiscard]] nlohmann::json to_json(const KernelModel& kernel);
[[nodiscard]] nlohmann::json to_json(const TheoryConstants& tc);
[[nodiscard]] nlohmann::json to_json(const DoeblinReport& rep);
[[nodiscard]] nlohmann::json to_json(const ContractionReport& rep);
[[nodiscard]] nlohmann::json to_json(const RateFit& fit);
[[nodiscard]] nlohmann::json to_json(const RelaxationReport& rep);
[[nodiscard]] nlohmann::json margins_json(const TheoryConstants& tc);

/// Equilibrium summary: N_star, residual, iterations, mass, tail mass.
[[nodiscard]] nlohmann::json equilibrium_json(const Equilibrium& eq);

/// Every certified constant under fixed keys: p_min, p_max, s_star, L, eps,
/// delta (null for model 1), beta, alpha, C, lambda_lin, C_tilde, lambda_nl,
/// and all L thresholds.
[[nodiscard]] nlohmann::json certified_constants(const TheoryConstants& tc);

/// Run manifest: command, echoed config, seed, rate/kernel, certified constants.
/// Contains nothing run-dependent such as timestamps or host names.
[[nodiscard]] nlohmann::json make_manifest(const std::string& command, const nlohmann::json& config,
                                           std::uint64_t seed, const RateModel& rate, const KernelModel* kernel,
                                           const TheoryConstants& tc);

/// Pretty-printed JSON plus trailing newline; non-finite numbers become null.
void write_json(const std::string& path, const nlohmann::json& j);

/// CSV with header `t,tv`.
void write_decay_csv(const std::string& path, std::span<const double> t, std::span<const double> tv);

/// Shortest-round-trip-safe decimal form used in CSV outputs.
[[nodiscard]] std::string format_double(double v);

}  // namespace eflow
