// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fedpeft/rng.hpp"

#include <string>
#include <vector>

namespace fedpeft {

enum class HdAggregate {
    node_vs_global, // mean over nodes of HD(node dist, global dist); the validated default
    pairwise        // mean over unordered node pairs
};

struct PartitionPlan {
    int nodes = 0;
    double alpha = 0.0;
    std::uint64_t seed = 0;
    double achieved_hd = 0.0;
    std::vector<std::vector<int>> node_indices;
    std::vector<std::vector<long>> histograms; // per node, per class counts
};

/// (1/sqrt(2)) * || sqrt(p) - sqrt(q) ||_2 for categorical distributions.
double hellinger(const std::vector<double>& p, const std::vector<double>& q);

/// Per-class Dirichlet(alpha) label-skew partition with largest-remainder
/// rounding (exact count conservation). Empty nodes trigger a bounded
/// redraw on the next substream; after 8 attempts the draw fails.
PartitionPlan partition_dirichlet(const std::vector<int>& labels, int nodes, double alpha, Rng rng,
                                  HdAggregate agg = HdAggregate::node_vs_global);

/// Largest grid alpha whose plan reaches the target heterogeneity; the grid
/// is scanned in descending order.
std::pair<double, PartitionPlan> calibrate_alpha(const std::vector<int>& labels, int nodes, double target_hd,
                                                 std::vector<double> alpha_grid, Rng rng);

/// Paper presets: fpb -> 0.7; fiqa-sa / medqa / medmcqa -> 1.0.
double alpha_preset(const std::string& name);

/// Per-node class-proportion rows as CSV (one row per node).
std::string plan_report_csv(const PartitionPlan& plan);

std::string plan_to_json(const PartitionPlan& plan);
PartitionPlan plan_from_json(const std::string& text);

} // namespace fedpeft
