// SPDX-License-Identifier: Apache-2.0
#include "fedpeft/federate.hpp"

#include "fedpeft/errors.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace fedpeft {

void FedConfig::validate() const {
    if (rounds < 1) throw ConfigError("rounds must be >= 1");
    if (local_epochs < 1) throw ConfigError("local_epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (learning_rate < 0.0 || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be finite and >= 0");
}

double comm_cost_per_round(int participants, long trainable_bytes) {
    if (participants < 0 || trainable_bytes < 0) throw ConfigError("comm_cost: negative argument");
    return 2.0 * static_cast<double>(participants) * static_cast<double>(trainable_bytes) / (1024.0 * 1024.0 * 1024.0);
}

double memory_footprint(const std::vector<double>& peak_bytes) {
    if (peak_bytes.empty()) throw ConfigError("memory_footprint: no nodes");
    double acc = 0.0;
    for (double b : peak_bytes) acc += b;
    return acc / static_cast<double>(peak_bytes.size()) / (1024.0 * 1024.0 * 1024.0);
}

ParamSet aggregate(const std::vector<ParamSet>& phis, const std::vector<long>& weights) {
    if (phis.empty()) throw ConfigError("aggregate: no contributions");
    if (phis.size() != weights.size()) throw ShapeError("aggregate: weight count mismatch");
    double total = 0.0;
    for (long w : weights) {
        if (w <= 0) throw ConfigError("aggregate: weights must be positive");
        total += static_cast<double>(w);
    }
    ParamSet out;
    for (const auto& [name, t] : phis[0]) out.emplace(name, Tensor(t.shape()));
    for (std::size_t k = 0; k < phis.size(); ++k) {
        const float coef = static_cast<float>(static_cast<double>(weights[k]) / total);
        if (phis[k].size() != out.size()) throw ShapeError("aggregate: parameter name sets differ");
        for (auto& [name, acc] : out) {
            auto it = phis[k].find(name);
            if (it == phis[k].end()) throw ShapeError("aggregate: missing parameter " + name);
            const Tensor& src = it->second;
            if (src.shape() != acc.shape()) throw ShapeError("aggregate: shape mismatch for " + name);
            const float* s = src.data();
            float* d = acc.data();
            for (long i = 0; i < acc.numel(); ++i) d[i] += coef * s[i];
        }
    }
    return out;
}

NodeState::NodeState(int node_id, const std::vector<Instance>& d, const FedConfig& cfg)
    : id(node_id), data(&d), shuffle_rng(cfg.seed, streams::node_shuffle + static_cast<std::uint64_t>(node_id)),
      dropout_rng(cfg.seed, streams::node_dropout + static_cast<std::uint64_t>(node_id)),
      meter(std::make_shared<memtrack::Meter>()) {
    OptimizerConfig oc;
    oc.kind = cfg.optimizer;
    oc.lr = cfg.learning_rate;
    opt = std::make_unique<Optimizer>(oc);
}

ParamSet local_update(NodeState& node, const Model& global_template, const ParamSet& phi, const FedConfig& cfg) {
    if (node.data == nullptr || node.data->empty())
        throw DataError("local_update: node " + std::to_string(node.id) + " has no data");
    memtrack::ScopedMeter guard(node.meter);
    if (!node.initialized) {
        node.model = global_template.clone();
        node.initialized = true;
    }
    load_phi(node.model, phi);
    if (!cfg.persist_optimizer_state) node.opt->reset();

    const auto& data = *node.data;
    std::vector<std::size_t> order(data.size());
    double loss_sum = 0.0;
    long steps = 0;
    for (int e = 0; e < cfg.local_epochs; ++e) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        node.shuffle_rng.shuffle(order);
        for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t hi = std::min(order.size(), at + static_cast<std::size_t>(cfg.batch_size));
            std::vector<const Instance*> batch;
            batch.reserve(hi - at);
            for (std::size_t i = at; i < hi; ++i) batch.push_back(&data[order[i]]);
            Var loss = training_loss(node.model, batch, &node.dropout_rng);
            loss_sum += static_cast<double>(loss->value(0));
            backward(loss);
            node.opt->step(node.model.params, node.model.trainable);
            node.model.zero_grads();
            ++steps;
        }
    }
    node.last_mean_loss = loss_sum / static_cast<double>(steps);
    return extract_phi(node.model);
}

namespace {

/// Shared round loop for the federated and centralized scenarios; they differ
/// only in node count and whether transfer bytes are charged.
ScenarioReport run_protocol(const Model& global_init, const std::vector<NodeData>& nodes,
                            const std::vector<Instance>& validation, const std::vector<Instance>& test,
                            const FedConfig& cfg, const std::string& scenario, bool communicate) {
    cfg.validate();
    if (!global_init.adapter) throw ConfigError(scenario + ": model has no adapter attached");
    if (nodes.empty()) throw ConfigError(scenario + ": no nodes");

    std::vector<const NodeData*> ordered;
    for (const auto& nd : nodes) ordered.push_back(&nd);
    std::sort(ordered.begin(), ordered.end(), [](const NodeData* a, const NodeData* b) { return a->id < b->id; });
    for (std::size_t i = 0; i < ordered.size(); ++i) {
        if (ordered[i]->id < 0) throw ConfigError(scenario + ": negative node id");
        if (i > 0 && ordered[i]->id == ordered[i - 1]->id) throw ConfigError(scenario + ": duplicate node id");
    }

    std::vector<std::unique_ptr<NodeState>> states;
    std::vector<long> weights;
    for (const NodeData* nd : ordered) {
        states.push_back(std::make_unique<NodeState>(nd->id, nd->data, cfg));
        weights.push_back(static_cast<long>(nd->data.size()));
    }
    const int k = static_cast<int>(states.size());
    const long bytes = trainable_bytes(global_init);

    Model eval_model = global_init.clone();
    ParamSet phi = extract_phi(global_init);
    ParamSet best_phi;
    double best_val = -1.0;

    ScenarioReport rep;
    rep.scenario = scenario;
    rep.participants = k;
    rep.trainable_bytes_per_node = bytes;

    for (int round = 1; round <= cfg.rounds; ++round) {
        std::vector<ParamSet> contributions(states.size());
        std::vector<std::exception_ptr> errors(states.size());
        std::vector<std::thread> workers;
        for (std::size_t i = 0; i < states.size(); ++i) {
            workers.emplace_back([&, i] {
                try {
                    contributions[i] = local_update(*states[i], global_init, phi, cfg);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            });
        }
        for (auto& w : workers) w.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);

        phi = aggregate(contributions, weights);

        RoundLog log;
        log.round = round;
        double wloss = 0.0, wsum = 0.0;
        for (std::size_t i = 0; i < states.size(); ++i) {
            wloss += static_cast<double>(weights[i]) * states[i]->last_mean_loss;
            wsum += static_cast<double>(weights[i]);
        }
        log.mean_loss = wloss / wsum;
        log.bytes_up = communicate ? static_cast<long>(k) * bytes : 0;
        log.bytes_down = communicate ? static_cast<long>(k) * bytes : 0;
        log.phi_checksum = phi_checksum(phi);
        if (cfg.eval_validation && !validation.empty()) {
            load_phi(eval_model, phi);
            log.val_accuracy = evaluate(eval_model, validation).accuracy;
            if (log.val_accuracy > best_val) {
                best_val = log.val_accuracy;
                best_phi = phi;
            }
        }
        rep.rounds.push_back(log);
    }

    rep.final_phi = (cfg.select_best_validation && best_val >= 0.0) ? best_phi : phi;
    load_phi(eval_model, rep.final_phi);
    rep.accuracy = evaluate(eval_model, test).accuracy;
    rep.eval_fp = eval_fingerprint(test);
    rep.comm_cost_gb = communicate ? comm_cost_per_round(k, bytes) : 0.0;
    for (const auto& st : states) rep.node_peak_bytes.push_back(static_cast<double>(st->meter->peak.load()));
    rep.memory_gb = memory_footprint(rep.node_peak_bytes);
    return rep;
}

} // namespace

ScenarioReport run_federated(const Model& global_init, const std::vector<NodeData>& nodes,
                             const std::vector<Instance>& validation, const std::vector<Instance>& test,
                             const FedConfig& cfg) {
    return run_protocol(global_init, nodes, validation, test, cfg, "federated", true);
}

ScenarioReport run_centralized(const Model& global_init, const std::vector<Instance>& pooled,
                               const std::vector<Instance>& validation, const std::vector<Instance>& test,
                               const FedConfig& cfg) {
    std::vector<NodeData> one(1);
    one[0].id = 0;
    one[0].data = pooled;
    return run_protocol(global_init, one, validation, test, cfg, "centralized", false);
}

ScenarioReport run_single_institution(const Model& global_init, const std::vector<NodeData>& nodes,
                                      const std::vector<Instance>& test, const FedConfig& cfg) {
    cfg.validate();
    if (!global_init.adapter) throw ConfigError("single_institution: model has no adapter attached");
    if (nodes.empty()) throw ConfigError("single_institution: no nodes");

    std::vector<const NodeData*> ordered;
    for (const auto& nd : nodes) ordered.push_back(&nd);
    std::sort(ordered.begin(), ordered.end(), [](const NodeData* a, const NodeData* b) { return a->id < b->id; });

    // Each node trains alone for the full rounds * epochs budget, then is
    // evaluated on the shared held-out split.
    FedConfig solo = cfg;
    solo.local_epochs = cfg.rounds * cfg.local_epochs;
    const ParamSet phi0 = extract_phi(global_init);

    ScenarioReport rep;
    rep.scenario = "single_institution";
    rep.participants = static_cast<int>(ordered.size());
    rep.trainable_bytes_per_node = trainable_bytes(global_init);
    rep.eval_fp = eval_fingerprint(test);

    std::vector<std::unique_ptr<NodeState>> states;
    for (const NodeData* nd : ordered) states.push_back(std::make_unique<NodeState>(nd->id, nd->data, cfg));

    std::vector<double> accs(states.size(), 0.0);
    std::vector<std::exception_ptr> errors(states.size());
    std::vector<std::thread> workers;
    for (std::size_t i = 0; i < states.size(); ++i) {
        workers.emplace_back([&, i] {
            try {
                local_update(*states[i], global_init, phi0, solo);
                memtrack::ScopedMeter guard(states[i]->meter);
                accs[i] = evaluate(states[i]->model, test).accuracy;
            } catch (...) {
                errors[i] = std::current_exception();
            }
        });
    }
    for (auto& w : workers) w.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    rep.node_accuracies = accs;
    double acc = 0.0;
    for (double a : accs) acc += a;
    rep.accuracy = acc / static_cast<double>(accs.size());
    for (const auto& st : states) rep.node_peak_bytes.push_back(static_cast<double>(st->meter->peak.load()));
    rep.memory_gb = memory_footprint(rep.node_peak_bytes);
    rep.comm_cost_gb = 0.0;
    return rep;
}

} // namespace fedpeft
