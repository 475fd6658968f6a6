// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fedpeft/datasets.hpp"
#include "fedpeft/federate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace fedpeft;

namespace {
BackboneConfig tiny_cfg() {
    BackboneConfig c;
    c.d = 16;
    c.layers = 1;
    c.heads = 2;
    c.ff = 32;
    c.max_len = 64;
    return c;
}

Model lora_model(std::uint64_t seed = 42, double dropout = 0.0) {
    Model m = Model::init(tiny_cfg(), Rng(seed, streams::init));
    AdapterSpec s;
    s.method = PeftMethod::lora;
    s.rank = 2;
    s.alpha = 4;
    s.dropout = dropout;
    attach(m, s, Rng(seed, streams::init + 1));
    return m;
}

std::vector<Instance> synth_instances(int n, std::uint64_t seed) {
    SynthConfig cfg;
    cfg.classes = 3;
    cfg.instances = n;
    cfg.noise = 0.0;
    return make_instances(synth_task(cfg, Rng(seed)), synth_task_def(3), 64);
}

ParamSet one_tensor(float a, float b) {
    ParamSet p;
    Tensor t({2});
    t(0) = a;
    t(1) = b;
    p.emplace("w", std::move(t));
    return p;
}

bool paramsets_equal(const ParamSet& a, const ParamSet& b) {
    if (a.size() != b.size()) return false;
    for (const auto& [name, t] : a) {
        auto it = b.find(name);
        if (it == b.end() || it->second.shape() != t.shape()) return false;
        for (long i = 0; i < t.numel(); ++i)
            if (t.data()[i] != it->second.data()[i]) return false;
    }
    return true;
}

FedConfig sgd_cfg(double lr, int rounds = 1) {
    FedConfig cfg;
    cfg.rounds = rounds;
    cfg.optimizer = OptKind::sgd;
    cfg.learning_rate = lr;
    cfg.eval_validation = false;
    return cfg;
}
} // namespace

TEST_CASE("communication cost formula") {
    CHECK(comm_cost_per_round(2, 1024L * 1024 * 1024) == 4.0);
    CHECK(comm_cost_per_round(5, 1048576) == 0.009765625);
    CHECK(comm_cost_per_round(0, 12345) == 0.0);
}

TEST_CASE("memory footprint is the mean of node peaks") {
    const double gib = 1024.0 * 1024.0 * 1024.0;
    CHECK(memory_footprint({gib, 3.0 * gib}) == 2.0);
    CHECK(memory_footprint({512.0}) == 512.0 / gib);
    CHECK_THROWS_AS(memory_footprint({}), ConfigError);
}

TEST_CASE("aggregate is a sample-weighted mean") {
    std::vector<ParamSet> phis = {one_tensor(1, 3), one_tensor(5, 7)};
    ParamSet avg = aggregate(phis, {1, 3});
    CHECK(avg.at("w")(0) == doctest::Approx(4.0).epsilon(1e-7));
    CHECK(avg.at("w")(1) == doctest::Approx(6.0).epsilon(1e-7));

    ParamSet same = aggregate({one_tensor(2, -1), one_tensor(2, -1), one_tensor(2, -1)}, {1, 5, 2});
    CHECK(same.at("w")(0) == doctest::Approx(2.0).epsilon(1e-7));
    CHECK(same.at("w")(1) == doctest::Approx(-1.0).epsilon(1e-7));

    ParamSet mean = aggregate({one_tensor(0, 0), one_tensor(1, 2)}, {1, 1});
    CHECK(mean.at("w")(0) == doctest::Approx(0.5).epsilon(1e-7));

    CHECK_THROWS_AS(aggregate({}, {}), ConfigError);
    CHECK_THROWS_AS(aggregate(phis, {1}), ShapeError);
    CHECK_THROWS_AS(aggregate(phis, {1, 0}), ConfigError); // weights must be positive
    ParamSet other;
    Tensor t({3});
    other.emplace("w", std::move(t));
    CHECK_THROWS_AS(aggregate({one_tensor(0, 0), other}, {1, 1}), ShapeError);
    ParamSet renamed = one_tensor(0, 0);
    auto node = renamed.extract("w");
    node.key() = "v";
    renamed.insert(std::move(node));
    CHECK_THROWS_AS(aggregate({one_tensor(0, 0), renamed}, {1, 1}), ShapeError);
}

TEST_CASE("local update with zero learning rate returns phi unchanged") {
    Model global = lora_model();
    auto data = synth_instances(12, 1);
    FedConfig cfg = sgd_cfg(0.0);
    NodeState node(0, data, cfg);
    ParamSet phi = extract_phi(global);
    ParamSet out = local_update(node, global, phi, cfg);
    CHECK(paramsets_equal(out, phi));
    CHECK(node.last_mean_loss > 0.0);
}

TEST_CASE("local update matches a manual SGD step on one instance") {
    Model global = lora_model();
    auto data = synth_instances(1, 2);
    const double lr = 0.01;
    FedConfig cfg = sgd_cfg(lr);
    cfg.batch_size = 1;

    ParamSet phi = extract_phi(global);
    NodeState node(0, data, cfg);
    ParamSet got = local_update(node, global, phi, cfg);

    // manual: one full-batch gradient step from the same phi
    Model m = global.clone();
    load_phi(m, phi);
    Var loss = training_loss(m, {&data[0]}, nullptr);
    backward(loss);
    for (const auto& [name, expect0] : phi) {
        const Tensor& g = m.params.at(name)->grad;
        const Tensor& got_t = got.at(name);
        REQUIRE(g.numel() == expect0.numel());
        for (long i = 0; i < expect0.numel(); ++i) {
            const float expect = expect0.data()[i] - static_cast<float>(lr) * g.data()[i];
            CHECK(got_t.data()[i] == doctest::Approx(expect).epsilon(1e-6));
        }
    }
}

TEST_CASE("nodes with the same id and data produce identical updates") {
    Model global = lora_model();
    auto data = synth_instances(8, 3);
    FedConfig cfg = sgd_cfg(0.05);
    ParamSet phi = extract_phi(global);
    NodeState a(2, data, cfg), b(2, data, cfg);
    CHECK(paramsets_equal(local_update(a, global, phi, cfg), local_update(b, global, phi, cfg)));
}

TEST_CASE("one-round FedAvg equals the pooled full-batch gradient step") {
    // deterministic setting: SGD, dropout 0, one epoch, full batch per node
    Model global = lora_model();
    std::vector<NodeData> nodes(3);
    auto all = synth_instances(6, 4);
    nodes[0] = {0, {all[0]}};
    nodes[1] = {1, {all[1], all[2]}};
    nodes[2] = {2, {all[3], all[4], all[5]}};

    const double lr = 0.01;
    FedConfig cfg = sgd_cfg(lr);
    cfg.batch_size = 3; // >= max node size: one full-batch step each

    ScenarioReport rep = run_federated(global, nodes, {}, {all[0]}, cfg);

    // oracle: phi - lr * grad of the pooled sample-weighted objective,
    // J = (1/6) sum over all instances of per-instance loss
    Model m = global.clone();
    std::vector<const Instance*> pooled;
    for (const auto& inst : all) pooled.push_back(&inst);
    Var loss = training_loss(m, pooled, nullptr);
    backward(loss);
    ParamSet phi = extract_phi(global);
    for (const auto& [name, t] : phi) {
        const Tensor& g = m.params.at(name)->grad;
        const Tensor& got = rep.final_phi.at(name);
        for (long i = 0; i < t.numel(); ++i) {
            const double expect = static_cast<double>(t.data()[i]) - lr * static_cast<double>(g.data()[i]);
            const double err = std::fabs(got.data()[i] - expect);
            const double rel = err / std::max(1e-12, std::fabs(expect));
            CHECK((rel < 1e-6 || err < 1e-8));
        }
    }
}

TEST_CASE("centralized run is the one-node federated run without transport") {
    Model global = lora_model();
    auto data = synth_instances(20, 5);
    auto test = synth_instances(10, 6);
    FedConfig cfg;
    cfg.rounds = 3;
    cfg.eval_validation = false;

    ScenarioReport central = run_centralized(global, data, {}, test, cfg);
    ScenarioReport fed = run_federated(global, {{0, data}}, {}, test, cfg);

    CHECK(paramsets_equal(central.final_phi, fed.final_phi));
    CHECK(central.accuracy == fed.accuracy);
    for (const auto& r : central.rounds) {
        CHECK(r.bytes_up == 0);
        CHECK(r.bytes_down == 0);
    }
    for (std::size_t i = 0; i < central.rounds.size(); ++i)
        CHECK(central.rounds[i].mean_loss == fed.rounds[i].mean_loss);
    CHECK(central.comm_cost_gb == 0.0);
    CHECK(fed.rounds[0].bytes_up == trainable_bytes(global));
}

TEST_CASE("result is independent of node submission order") {
    Model global = lora_model();
    std::vector<NodeData> nodes;
    for (int k = 0; k < 4; ++k) nodes.push_back({k, synth_instances(5 + k, 10 + static_cast<std::uint64_t>(k))});
    FedConfig cfg = sgd_cfg(0.05, 2);

    ScenarioReport a = run_federated(global, nodes, {}, synth_instances(8, 99), cfg);
    std::vector<NodeData> shuffled = {nodes[2], nodes[0], nodes[3], nodes[1]};
    ScenarioReport b = run_federated(global, shuffled, {}, synth_instances(8, 99), cfg);

    CHECK(paramsets_equal(a.final_phi, b.final_phi));
    for (std::size_t i = 0; i < a.rounds.size(); ++i) {
        CHECK(a.rounds[i].phi_checksum == b.rounds[i].phi_checksum);
        CHECK(a.rounds[i].mean_loss == b.rounds[i].mean_loss);
    }
    CHECK_THROWS_AS(run_federated(global, {nodes[0], nodes[0]}, {}, synth_instances(8, 99), cfg), ConfigError);
}

TEST_CASE("per-round transport volume is participants times adapter bytes") {
    Model lora = lora_model();
    Model ia3 = Model::init(tiny_cfg(), Rng(42, streams::init));
    AdapterSpec s;
    s.method = PeftMethod::ia3;
    attach(ia3, s, Rng(42, streams::init + 1));

    std::vector<NodeData> nodes;
    for (int k = 0; k < 3; ++k) nodes.push_back({k, synth_instances(4, 20 + static_cast<std::uint64_t>(k))});
    FedConfig cfg = sgd_cfg(0.01, 2);
    auto test = synth_instances(6, 30);

    ScenarioReport rl = run_federated(lora, nodes, {}, test, cfg);
    ScenarioReport ri = run_federated(ia3, nodes, {}, test, cfg);
    for (const auto& r : rl.rounds) {
        CHECK(r.bytes_up == 3 * trainable_bytes(lora));
        CHECK(r.bytes_down == 3 * trainable_bytes(lora));
    }
    for (const auto& r : ri.rounds) CHECK(r.bytes_up == 3 * trainable_bytes(ia3));
    CHECK(ri.rounds[0].bytes_up < rl.rounds[0].bytes_up);
    CHECK(rl.comm_cost_gb == comm_cost_per_round(3, trainable_bytes(lora)));
    CHECK(rl.trainable_bytes_per_node == trainable_bytes(lora));
    CHECK(rl.participants == 3);
}

TEST_CASE("backbone weights stay frozen across a federated run") {
    Model global = lora_model();
    std::map<std::string, Tensor> theta;
    for (const auto& [name, var] : global.params)
        if (!global.is_trainable(name)) theta.emplace(name, var->value);

    std::vector<NodeData> nodes = {{0, synth_instances(6, 40)}, {1, synth_instances(6, 41)}};
    run_federated(global, nodes, {}, synth_instances(4, 42), sgd_cfg(0.05, 2));

    for (const auto& [name, before] : theta) {
        const Tensor& after = global.params.at(name)->value;
        for (long i = 0; i < before.numel(); ++i) CHECK(before.data()[i] == after.data()[i]);
    }
}

TEST_CASE("zero learning rate makes every scenario score identically") {
    Model global = lora_model();
    std::vector<NodeData> nodes = {{0, synth_instances(6, 50)}, {1, synth_instances(7, 51)}};
    std::vector<Instance> pooled;
    for (const auto& nd : nodes) pooled.insert(pooled.end(), nd.data.begin(), nd.data.end());
    auto test = synth_instances(10, 52);

    FedConfig cfg = sgd_cfg(0.0, 2);
    ScenarioReport fed = run_federated(global, nodes, {}, test, cfg);
    ScenarioReport central = run_centralized(global, pooled, {}, test, cfg);
    ScenarioReport solo = run_single_institution(global, nodes, test, cfg);

    CHECK(fed.accuracy == central.accuracy);
    for (double a : solo.node_accuracies) CHECK(a == fed.accuracy);
    CHECK(fed.eval_fp == central.eval_fp);
    CHECK(fed.eval_fp == solo.eval_fp);
    CHECK(fed.eval_fp == eval_fingerprint(test));
}

TEST_CASE("single institution reports per-node accuracies and their mean") {
    Model global = lora_model();
    auto shared = synth_instances(10, 60);
    std::vector<NodeData> nodes = {{0, shared}, {1, shared}, {2, shared}};
    auto test = synth_instances(8, 61);
    FedConfig cfg = sgd_cfg(0.05, 2);

    ScenarioReport solo = run_single_institution(global, nodes, test, cfg);
    REQUIRE(solo.node_accuracies.size() == 3);
    const double mean = std::accumulate(solo.node_accuracies.begin(), solo.node_accuracies.end(), 0.0) / 3.0;
    CHECK(solo.accuracy == doctest::Approx(mean).epsilon(1e-12));
    CHECK(solo.comm_cost_gb == 0.0);
    for (const auto& r : solo.rounds) {
        CHECK(r.bytes_up == 0);
        CHECK(r.bytes_down == 0);
    }
}

TEST_CASE("validation logging and best-round selection") {
    Model global = lora_model();
    std::vector<NodeData> nodes = {{0, synth_instances(8, 70)}, {1, synth_instances(8, 71)}};
    auto val = synth_instances(6, 72);
    auto test = synth_instances(6, 73);

    FedConfig cfg = sgd_cfg(0.05, 3);
    cfg.eval_validation = true;
    ScenarioReport rep = run_federated(global, nodes, val, test, cfg);
    for (const auto& r : rep.rounds) CHECK(r.val_accuracy >= 0.0);

    FedConfig off = sgd_cfg(0.05, 3);
    ScenarioReport quiet = run_federated(global, nodes, val, test, off);
    for (const auto& r : quiet.rounds) CHECK(r.val_accuracy == -1.0);

    FedConfig best = cfg;
    best.select_best_validation = true;
    ScenarioReport brep = run_federated(global, nodes, val, test, best);
    // the reported phi must be the one from the best validation round
    std::size_t arg = 0;
    for (std::size_t i = 1; i < brep.rounds.size(); ++i)
        if (brep.rounds[i].val_accuracy > brep.rounds[arg].val_accuracy) arg = i;
    CHECK(phi_checksum(brep.final_phi) == brep.rounds[arg].phi_checksum);
}

TEST_CASE("config validation") {
    FedConfig cfg;
    cfg.rounds = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.rounds = 1;
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.batch_size = 4;
    cfg.learning_rate = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    CHECK_THROWS_AS(run_federated(lora_model(), {}, {}, synth_instances(4, 1), FedConfig{}), ConfigError);
    CHECK_THROWS_AS(run_federated(lora_model(), {{-1, synth_instances(4, 1)}}, {}, synth_instances(4, 1), FedConfig{}),
                    ConfigError);
}
