#pragma once

#include "etdkf/decomp.hpp"
#include "etdkf/simnet.hpp"
#include "etdkf/triggers.hpp"

#include <json.hpp>

#include <iosfwd>
#include <optional>
#include <string>

namespace etdkf {

using Json = nlohmann::json;

/// Accepts {"rows","cols","data"} (row-major), nested arrays, a flat array (column vector) or a number.
Matrix matrix_from_json(const Json& j);
Json matrix_to_json(const Matrix& M);

TriggerSpec trigger_from_json(const Json& j);
Json trigger_to_json(const TriggerSpec& spec);

/// Parsed scenario file before any construction work.
struct ScenarioConfig {
  PlantAndNetwork plant;
  TriggerSpec trigger = StaticTime{};
  DecompositionOptions decomposition;
  std::optional<Matrix> gain;  // replaces the Kalman gain when present
  int horizon = 20;
  int runs = 1;
  std::uint64_t seed = 1;
};

ScenarioConfig scenario_from_json(const Json& j);
ScenarioConfig load_scenario_file(const std::string& path);

Json builtin_example1_json();
Json builtin_heat_json();

/// Builds the decomposition (Kalman or override gain) and returns a runnable scenario.
Scenario realize(const ScenarioConfig& cfg);

Json decomposition_to_json(const Decomposition& dec);
Decomposition decomposition_from_json(const Json& j);

Json metrics_to_json(const AggregateMetrics& agg);

void write_trace_csv_header(std::ostream& os);
void write_trace_csv(std::ostream& os, int run, const SimTrace& tr);
void write_step_csv_header(std::ostream& os);
void write_step_csv(std::ostream& os, int run, const SimTrace& tr);

}  // namespace etdkf
