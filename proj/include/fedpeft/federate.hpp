// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fedpeft/eval.hpp"
#include "fedpeft/memtrack.hpp"
#include "fedpeft/peft.hpp"

namespace fedpeft {

struct FedConfig {
    int rounds = 4;
    int local_epochs = 1;
    int batch_size = 4;
    double learning_rate = 1e-4;
    OptKind optimizer = OptKind::adamw;
    std::uint64_t seed = 42;
    /// Default resets optimizer state at every broadcast (stateless nodes).
    bool persist_optimizer_state = false;
    /// Evaluate the validation split after each round and log it.
    bool eval_validation = true;
    /// Report the best-validation-round φ instead of the final one.
    bool select_best_validation = false;
    void validate() const;
};

struct NodeData {
    int id = 0;
    std::vector<Instance> data;
};

struct RoundLog {
    int round = 0;
    double mean_loss = 0.0;
    long bytes_up = 0;   // sum over participating nodes
    long bytes_down = 0; // broadcast volume, equal by construction
    std::uint64_t phi_checksum = 0;
    double val_accuracy = -1.0; // -1 when not evaluated
};

struct ScenarioReport {
    std::string scenario;
    double accuracy = 0.0;
    std::vector<RoundLog> rounds;
    double comm_cost_gb = 0.0;
    double memory_gb = 0.0;
    long trainable_bytes_per_node = 0;
    int participants = 0;
    std::vector<double> node_accuracies;
    std::vector<double> node_peak_bytes;
    std::uint64_t eval_fp = 0;
    ParamSet final_phi; // the adapter state the reported accuracy was measured with
};

/// 2 * K * B_train / 1024^3.
double comm_cost_per_round(int participants, long trainable_bytes);
/// Mean of per-node peak bytes, in GB (1024^3).
double memory_footprint(const std::vector<double>& peak_bytes);

/// Sample-weighted elementwise average, accumulated in the given order.
ParamSet aggregate(const std::vector<ParamSet>& phis, const std::vector<long>& weights);

/// Persistent per-node training state. RNG streams are derived from the
/// config seed and the node id, so results are independent of scheduling.
struct NodeState {
    int id = 0;
    const std::vector<Instance>* data = nullptr;
    Model model; // cloned lazily inside the node's worker
    bool initialized = false;
    std::unique_ptr<Optimizer> opt;
    Rng shuffle_rng;
    Rng dropout_rng;
    std::shared_ptr<memtrack::Meter> meter;
    double last_mean_loss = 0.0;

    NodeState(int node_id, const std::vector<Instance>& d, const FedConfig& cfg);
};

/// Loads φ, runs E local epochs of mini-batch optimization, returns the
/// updated φ_k. θ is untouched; optimizer state resets unless persistence
/// is enabled.
ParamSet local_update(NodeState& node, const Model& global_template, const ParamSet& phi, const FedConfig& cfg);

ScenarioReport run_federated(const Model& global_init, const std::vector<NodeData>& nodes,
                             const std::vector<Instance>& validation, const std::vector<Instance>& test,
                             const FedConfig& cfg);

ScenarioReport run_centralized(const Model& global_init, const std::vector<Instance>& pooled,
                               const std::vector<Instance>& validation, const std::vector<Instance>& test,
                               const FedConfig& cfg);

ScenarioReport run_single_institution(const Model& global_init, const std::vector<NodeData>& nodes,
                                      const std::vector<Instance>& test, const FedConfig& cfg);

} // namespace fedpeft
