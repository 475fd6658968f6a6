// SPDX-License-Identifier: Apache-2.0
// Experiment front door: partition | train | bench | chart.

#include "fedpeft/checkpoint.hpp"
#include "fedpeft/datasets.hpp"
#include "fedpeft/partition.hpp"
#include "fedpeft/report.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fedpeft;

namespace {

struct ExperimentConfig {
    std::uint64_t seed = 42;
    std::string out_dir = "out";

    std::string source = "synthetic"; // "synthetic" or a jsonl path
    std::string task = "synthetic";   // synthetic | mcqa | sentiment
    SynthConfig synth;
    double val_fraction = 0.1;
    double test_fraction = 0.1;

    BackboneConfig backbone;
    AdapterSpec adapter;

    int nodes = 5;
    double alpha = 1.0;
    std::string alpha_preset_name; // overrides alpha when set
    double target_hd = -1.0;       // calibrate when >= 0

    FedConfig fed;
};

json config_to_json(const ExperimentConfig& c) {
    json j;
    j["seed"] = c.seed;
    j["out_dir"] = c.out_dir;
    j["dataset"] = {{"source", c.source},
                    {"task", c.task},
                    {"classes", c.synth.classes},
                    {"instances", c.synth.instances},
                    {"noise", c.synth.noise},
                    {"val_fraction", c.val_fraction},
                    {"test_fraction", c.test_fraction}};
    j["backbone"] = {{"d", c.backbone.d},
                     {"layers", c.backbone.layers},
                     {"heads", c.backbone.heads},
                     {"ff", c.backbone.ff},
                     {"max_len", c.backbone.max_len}};
    j["adapter"] = {{"method", to_string(c.adapter.method)},
                    {"rank", c.adapter.rank},
                    {"alpha", c.adapter.alpha},
                    {"dropout", c.adapter.dropout},
                    {"qblock", c.adapter.qblock}};
    j["partition"] = {{"nodes", c.nodes},
                      {"alpha", c.alpha},
                      {"preset", c.alpha_preset_name},
                      {"target_hd", c.target_hd}};
    j["federate"] = {{"rounds", c.fed.rounds},
                     {"local_epochs", c.fed.local_epochs},
                     {"batch_size", c.fed.batch_size},
                     {"learning_rate", c.fed.learning_rate},
                     {"optimizer", to_string(c.fed.optimizer)},
                     {"persist_optimizer_state", c.fed.persist_optimizer_state},
                     {"eval_validation", c.fed.eval_validation},
                     {"select_best_validation", c.fed.select_best_validation}};
    return j;
}

void config_merge_json(ExperimentConfig& c, const json& j) {
    c.seed = j.value("seed", c.seed);
    c.out_dir = j.value("out_dir", c.out_dir);
    if (j.contains("dataset")) {
        const auto& d = j["dataset"];
        c.source = d.value("source", c.source);
        c.task = d.value("task", c.task);
        c.synth.classes = d.value("classes", c.synth.classes);
        c.synth.instances = d.value("instances", c.synth.instances);
        c.synth.noise = d.value("noise", c.synth.noise);
        c.val_fraction = d.value("val_fraction", c.val_fraction);
        c.test_fraction = d.value("test_fraction", c.test_fraction);
    }
    if (j.contains("backbone")) {
        const auto& b = j["backbone"];
        c.backbone.d = b.value("d", c.backbone.d);
        c.backbone.layers = b.value("layers", c.backbone.layers);
        c.backbone.heads = b.value("heads", c.backbone.heads);
        c.backbone.ff = b.value("ff", c.backbone.ff);
        c.backbone.max_len = b.value("max_len", c.backbone.max_len);
    }
    if (j.contains("adapter")) {
        const auto& a = j["adapter"];
        c.adapter.method = peft_from_string(a.value("method", to_string(c.adapter.method)));
        c.adapter.rank = a.value("rank", c.adapter.rank);
        c.adapter.alpha = a.value("alpha", c.adapter.alpha);
        c.adapter.dropout = a.value("dropout", c.adapter.dropout);
        c.adapter.qblock = a.value("qblock", c.adapter.qblock);
    }
    if (j.contains("partition")) {
        const auto& p = j["partition"];
        c.nodes = p.value("nodes", c.nodes);
        c.alpha = p.value("alpha", c.alpha);
        c.alpha_preset_name = p.value("preset", c.alpha_preset_name);
        c.target_hd = p.value("target_hd", c.target_hd);
    }
    if (j.contains("federate")) {
        const auto& f = j["federate"];
        c.fed.rounds = f.value("rounds", c.fed.rounds);
        c.fed.local_epochs = f.value("local_epochs", c.fed.local_epochs);
        c.fed.batch_size = f.value("batch_size", c.fed.batch_size);
        c.fed.learning_rate = f.value("learning_rate", c.fed.learning_rate);
        c.fed.optimizer = opt_kind_from_string(f.value("optimizer", to_string(c.fed.optimizer)));
        c.fed.persist_optimizer_state = f.value("persist_optimizer_state", c.fed.persist_optimizer_state);
        c.fed.eval_validation = f.value("eval_validation", c.fed.eval_validation);
        c.fed.select_best_validation = f.value("select_best_validation", c.fed.select_best_validation);
    }
}

struct Prepared {
    TaskDef task;
    std::vector<Instance> train;
    std::vector<Instance> validation;
    std::vector<Instance> test;
    std::vector<int> train_labels;
};

Prepared prepare(const ExperimentConfig& c) {
    std::vector<RawRecord> records;
    Prepared p;
    if (c.source == "synthetic") {
        records = synth_task(c.synth, Rng(c.seed));
        p.task = synth_task_def(c.synth.classes);
    } else if (c.task == "sentiment") {
        records = load_jsonl(c.source);
        p.task = sentiment_task_def();
    } else {
        records = load_jsonl(c.source);
        FilterStats st;
        records = filter_valid_mcqa(records, &st);
        if (st.dropped > 0) std::cerr << "dropped " << st.dropped << " malformed records\n";
        std::size_t k = 0;
        for (const auto& r : records) k = std::max(k, r.options.size());
        TaskDef t;
        t.name = "mcqa";
        for (std::size_t i = 0; i < k; ++i) t.answers.push_back(std::string(1, static_cast<char>('A' + i)));
        p.task = t;
    }
    if (records.empty()) throw DataError("no usable records in " + c.source);

    auto instances = make_instances(records, p.task, c.backbone.max_len);
    const auto splits =
        make_splits(static_cast<int>(instances.size()), c.val_fraction, c.test_fraction, Rng(c.seed, streams::split));
    for (int i : splits.train) {
        p.train.push_back(instances[static_cast<std::size_t>(i)]);
        p.train_labels.push_back(instances[static_cast<std::size_t>(i)].gold);
    }
    for (int i : splits.validation) p.validation.push_back(instances[static_cast<std::size_t>(i)]);
    for (int i : splits.test) p.test.push_back(instances[static_cast<std::size_t>(i)]);
    return p;
}

double resolved_alpha(const ExperimentConfig& c) {
    return c.alpha_preset_name.empty() ? c.alpha : alpha_preset(c.alpha_preset_name);
}

PartitionPlan make_plan(const ExperimentConfig& c, const Prepared& p) {
    if (c.target_hd >= 0.0) {
        auto [alpha, plan] =
            calibrate_alpha(p.train_labels, c.nodes, c.target_hd,
                            {100.0, 10.0, 1.0, 0.7, 0.5, 0.3, 0.1, 0.05, 0.01}, Rng(c.seed));
        (void)alpha;
        return plan;
    }
    return partition_dirichlet(p.train_labels, c.nodes, resolved_alpha(c), Rng(c.seed));
}

std::vector<NodeData> plan_nodes(const PartitionPlan& plan, const std::vector<Instance>& train) {
    std::vector<NodeData> nodes(static_cast<std::size_t>(plan.nodes));
    for (int k = 0; k < plan.nodes; ++k) {
        nodes[static_cast<std::size_t>(k)].id = k;
        for (int i : plan.node_indices[static_cast<std::size_t>(k)])
            nodes[static_cast<std::size_t>(k)].data.push_back(train[static_cast<std::size_t>(i)]);
    }
    return nodes;
}

Model build_model(const ExperimentConfig& c, PeftMethod method) {
    Model m = Model::init(c.backbone, Rng(c.seed, streams::init));
    AdapterSpec spec = c.adapter;
    spec.method = method;
    attach(m, spec, Rng(c.seed, streams::init + 1));
    return m;
}

void write_file(const fs::path& path, const std::string& bytes) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot write " + path.string());
    os << bytes;
    std::cout << path.string() << "\n";
}

ScenarioReport run_scenario(const std::string& scenario, const Model& m, const Prepared& p,
                            const std::vector<NodeData>& nodes, const FedConfig& fc) {
    if (scenario == "centralized") return run_centralized(m, p.train, p.validation, p.test, fc);
    if (scenario == "single") return run_single_institution(m, nodes, p.test, fc);
    if (scenario == "federated") return run_federated(m, nodes, p.validation, p.test, fc);
    throw ConfigError("unknown scenario: " + scenario);
}

void emit_report(const ExperimentConfig& c, const ScenarioReport& rep, PeftMethod method) {
    const std::string stem = rep.scenario + "_" + to_string(method);
    const fs::path dir(c.out_dir);
    write_file(dir / ("report_" + stem + ".json"), report_to_json(rep, config_to_json(c)).dump(2) + "\n");
    if (!rep.rounds.empty()) write_file(dir / ("rounds_" + stem + ".csv"), round_csv(rep));
    if (!rep.final_phi.empty()) {
        const fs::path ckpt = dir / ("phi_" + stem + ".bin");
        save_paramset(ckpt.string(), rep.final_phi);
        std::cout << ckpt.string() << "\n";
    }
}

int cmd_partition(const ExperimentConfig& c) {
    const Prepared p = prepare(c);
    PartitionPlan plan = make_plan(c, p);
    fs::create_directories(c.out_dir);
    write_file(fs::path(c.out_dir) / "partition_plan.json", plan_to_json(plan));
    write_file(fs::path(c.out_dir) / "partition_hist.csv", plan_report_csv(plan));
    return 0;
}

int cmd_train(const ExperimentConfig& c, const std::string& scenario) {
    const Prepared p = prepare(c);
    const auto nodes = plan_nodes(make_plan(c, p), p.train);
    FedConfig fc = c.fed;
    fc.seed = c.seed;
    const Model m = build_model(c, c.adapter.method);
    fs::create_directories(c.out_dir);
    const std::vector<std::string> all = {"centralized", "single", "federated"};
    for (const auto& s : (scenario == "all" ? all : std::vector<std::string>{scenario}))
        emit_report(c, run_scenario(s, m, p, nodes, fc), c.adapter.method);
    return 0;
}

int cmd_bench(const ExperimentConfig& c, bool single_method) {
    const Prepared p = prepare(c);
    const auto nodes = plan_nodes(make_plan(c, p), p.train);
    FedConfig fc = c.fed;
    fc.seed = c.seed;
    fs::create_directories(c.out_dir);
    std::vector<PeftMethod> methods = {PeftMethod::lora, PeftMethod::qlora, PeftMethod::ia3};
    if (single_method) methods = {c.adapter.method};
    std::vector<ComparisonRow> rows;
    for (PeftMethod method : methods) {
        const Model m = build_model(c, method);
        ScenarioReport central = run_scenario("centralized", m, p, nodes, fc);
        ScenarioReport single = run_scenario("single", m, p, nodes, fc);
        ScenarioReport fed = run_scenario("federated", m, p, nodes, fc);
        emit_report(c, central, method);
        emit_report(c, single, method);
        emit_report(c, fed, method);
        rows.push_back(compare_scenarios(central, fed, single, to_string(method)));
    }
    write_file(fs::path(c.out_dir) / "comparison.csv", comparison_csv(rows));
    write_file(fs::path(c.out_dir) / "comparison.json", comparison_json(rows).dump(2) + "\n");
    return 0;
}

int cmd_chart(const ExperimentConfig& c, const std::string& csv_path) {
    std::ifstream is(csv_path, std::ios::binary);
    if (!is) throw DataError("cannot open " + csv_path);
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    const std::string svg = chart_svg(text); // errors before any file is written
    fs::create_directories(c.out_dir);
    write_file(fs::path(c.out_dir) / "comparison.svg", svg);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Desk-scale federated PEFT benchmark engine"};
    app.require_subcommand(1);

    std::string config_path, scenario = "all", peft, out_dir, chart_input;
    std::uint64_t seed = 0;
    auto* opt_config = app.add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
    auto* opt_seed = app.add_option("--seed", seed, "Master seed");
    auto* opt_scenario =
        app.add_option("--scenario", scenario, "Scenario")->check(CLI::IsMember({"centralized", "single", "federated", "all"}));
    auto* opt_peft = app.add_option("--peft", peft, "Adapter method")->check(CLI::IsMember({"lora", "qlora", "ia3"}));
    auto* opt_out = app.add_option("--out", out_dir, "Output directory");

    auto* sub_partition = app.add_subcommand("partition", "Write a Dirichlet partition plan and histogram CSV");
    auto* sub_train = app.add_subcommand("train", "Train the configured adapter under one or all scenarios");
    auto* sub_bench = app.add_subcommand("bench", "Run all scenarios per adapter method and emit the comparison table");
    auto* sub_chart = app.add_subcommand("chart", "Render a comparison CSV as a grouped bar SVG");
    sub_chart->add_option("csv", chart_input, "Comparison CSV path")->required()->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        ExperimentConfig cfg;
        if (const char* env = std::getenv("FEDPEFT_OUT")) cfg.out_dir = env;
        if (*opt_config) {
            std::ifstream is(config_path);
            config_merge_json(cfg, json::parse(is));
        }
        if (*opt_seed) cfg.seed = seed;
        if (*opt_peft) cfg.adapter.method = peft_from_string(peft);
        if (*opt_out) cfg.out_dir = out_dir;

        if (sub_partition->parsed()) return cmd_partition(cfg);
        if (sub_train->parsed()) return cmd_train(cfg, scenario);
        if (sub_bench->parsed()) return cmd_bench(cfg, static_cast<bool>(*opt_peft));
        if (sub_chart->parsed()) return cmd_chart(cfg, chart_input);
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
