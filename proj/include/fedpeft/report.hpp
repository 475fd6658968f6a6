// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fedpeft/federate.hpp"

#include <nlohmann/json_fwd.hpp>

namespace fedpeft {

/// Full report document: resolved config + results, schema
/// {config, scenario, accuracy, per_round, comm_cost_gb, memory_gb,
///  node_accuracies?}.
nlohmann::json report_to_json(const ScenarioReport& rep, const nlohmann::json& config);
ScenarioReport report_from_json(const nlohmann::json& j);

/// Round curves as CSV (round,bytes_up,bytes_down,mean_loss,val_accuracy).
std::string round_csv(const ScenarioReport& rep);

/// One comparison-table row: the three scenario accuracies for a single
/// (backbone config, adapter method) pair plus the deltas the tables report.
struct ComparisonRow {
    std::string method;
    double centralized = 0.0;
    double single_institution = 0.0;
    double federated = 0.0;
    double delta_fed_centralized = 0.0;
    double delta_fed_single = 0.0;
    double comm_cost_gb = 0.0; // federated round cost
    double memory_gb = 0.0;    // federated per-node mean peak
};

/// Builds a row from the three reports; they must share an evaluation split.
ComparisonRow compare_scenarios(const ScenarioReport& centralized, const ScenarioReport& federated,
                                const ScenarioReport& single_institution, const std::string& method);

std::string comparison_csv(const std::vector<ComparisonRow>& rows);
nlohmann::json comparison_json(const std::vector<ComparisonRow>& rows);

/// Grouped accuracy bars (one group per CSV row, one bar per scenario).
/// Deterministic bytes for fixed input; an input without data rows is an error.
std::string chart_svg(const std::string& comparison_csv_text);

} // namespace fedpeft
