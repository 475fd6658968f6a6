// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fedpeft/datasets.hpp"
#include "fedpeft/report.hpp"

#include <algorithm>
#include <nlohmann/json.hpp>

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

Instance mcqa(const std::string& prompt, int classes, int gold) {
    Instance inst;
    inst.prompt = tokenize(prompt);
    for (int c = 0; c < classes; ++c) inst.candidates.push_back(tokenize(std::string(1, static_cast<char>('A' + c))));
    inst.gold = gold;
    inst.completion = inst.candidates[static_cast<std::size_t>(gold)];
    return inst;
}

/// Model whose head strongly prefers one answer byte, making predictions
/// known in advance.
Model biased_model(char preferred) {
    Model m = Model::init(tiny_cfg(), Rng(42));
    auto& head = m.params.at("head.w")->value;
    std::fill(head.data(), head.data() + head.numel(), 0.0f);
    auto& fb = m.params.at("final_ln.b")->value;
    float* row = head.data() + static_cast<long>(tokenize(std::string(1, preferred))[0]) * m.cfg.d;
    for (long j = 0; j < m.cfg.d; ++j) {
        fb(j) = 1.0f;
        row[j] = 1.0f;
    }
    return m;
}

ScenarioReport stub_report(const std::string& scenario, double accuracy, std::uint64_t fp) {
    ScenarioReport rep;
    rep.scenario = scenario;
    rep.accuracy = accuracy;
    rep.eval_fp = fp;
    rep.comm_cost_gb = scenario == "federated" ? 0.25 : 0.0;
    rep.memory_gb = 0.125;
    return rep;
}
} // namespace

TEST_CASE("evaluate counts and accuracy values") {
    Model m = biased_model('A'); // predicts index 0 everywhere
    std::vector<Instance> insts = {mcqa("q1", 3, 0), mcqa("q2", 3, 0), mcqa("q3", 3, 1), mcqa("q4", 3, 0)};
    EvalResult r = evaluate(m, insts);
    CHECK(r.n == 4);
    CHECK(r.correct == 3);
    CHECK(r.accuracy == 0.75);

    EvalResult all = evaluate(m, {mcqa("a", 2, 0), mcqa("b", 2, 0)});
    CHECK(all.accuracy == 1.0);
    EvalResult none = evaluate(m, {mcqa("a", 2, 1), mcqa("b", 2, 1)});
    CHECK(none.accuracy == 0.0);
    CHECK_THROWS_AS(evaluate(m, {}), DataError);
}

TEST_CASE("confusion matrix rows sum to the gold counts") {
    Model m = Model::init(tiny_cfg(), Rng(9));
    std::vector<Instance> insts;
    Rng rng(3);
    for (int i = 0; i < 24; ++i)
        insts.push_back(mcqa("question " + std::to_string(i) + " ans:", 3, static_cast<int>(rng.below(3))));
    EvalResult r = evaluate(m, insts);
    REQUIRE(r.confusion.size() == 3);
    long total = 0;
    for (std::size_t g = 0; g < 3; ++g) {
        long gold_count = 0;
        for (const auto& inst : insts)
            if (inst.gold == static_cast<int>(g)) ++gold_count;
        long row = 0;
        for (long v : r.confusion[g]) row += v;
        CHECK(row == gold_count);
        total += row;
        CHECK(r.confusion[g][g] <= gold_count);
    }
    CHECK(total == r.n);
    long diag = 0;
    for (std::size_t g = 0; g < 3; ++g) diag += r.confusion[g][g];
    CHECK(diag == r.correct);
}

TEST_CASE("evaluation is order invariant") {
    Model m = Model::init(tiny_cfg(), Rng(10));
    std::vector<Instance> insts;
    for (int i = 0; i < 16; ++i) insts.push_back(mcqa("item " + std::to_string(i), 4, i % 4));
    EvalResult a = evaluate(m, insts);
    std::reverse(insts.begin(), insts.end());
    EvalResult b = evaluate(m, insts);
    CHECK(a.accuracy == b.accuracy);
    CHECK(a.correct == b.correct);
}

TEST_CASE("untrained accuracy sits near the uniform baseline") {
    // an untrained head is effectively an arbitrary fixed scorer; averaged
    // over many random 4-way items the hit rate concentrates near 1/4
    Model m = Model::init(tiny_cfg(), Rng(42));
    SynthConfig cfg;
    cfg.classes = 4;
    cfg.instances = 400;
    cfg.noise = 0.0;
    auto insts = make_instances(synth_task(cfg, Rng(5)), synth_task_def(4), 64);
    EvalResult r = evaluate(m, insts);
    // 4-sigma binomial band around p = 1/4
    CHECK(r.accuracy > 0.25 - 4.0 * 0.0217);
    CHECK(r.accuracy < 0.25 + 4.0 * 0.0217);
}

TEST_CASE("fingerprint tracks the evaluation split") {
    std::vector<Instance> a = {mcqa("q1", 3, 0), mcqa("q2", 3, 1)};
    CHECK(eval_fingerprint(a) == eval_fingerprint(a));
    std::vector<Instance> relabeled = a;
    relabeled[1].gold = 2;
    CHECK(eval_fingerprint(a) != eval_fingerprint(relabeled));
    std::vector<Instance> grown = a;
    grown.push_back(mcqa("q3", 3, 0));
    CHECK(eval_fingerprint(a) != eval_fingerprint(grown));
    std::vector<Instance> reprompted = a;
    reprompted[0].prompt = tokenize("a different question");
    CHECK(eval_fingerprint(a) != eval_fingerprint(reprompted));
}

TEST_CASE("scenario comparison deltas") {
    ScenarioReport central = stub_report("centralized", 0.9, 77);
    ScenarioReport fed = stub_report("federated", 0.85, 77);
    ScenarioReport solo = stub_report("single_institution", 0.7, 77);

    ComparisonRow row = compare_scenarios(central, fed, solo, "lora");
    CHECK(row.method == "lora");
    CHECK(row.delta_fed_centralized == doctest::Approx(-0.05).epsilon(1e-12));
    CHECK(row.delta_fed_single == doctest::Approx(0.15).epsilon(1e-12));
    CHECK(row.comm_cost_gb == 0.25);

    ComparisonRow same = compare_scenarios(central, central, central, "x");
    CHECK(same.delta_fed_centralized == 0.0);
    CHECK(same.delta_fed_single == 0.0);

    ScenarioReport other_split = stub_report("federated", 0.85, 78);
    CHECK_THROWS_AS(compare_scenarios(central, other_split, solo, "lora"), DataError);
}

TEST_CASE("comparison CSV layout") {
    ComparisonRow row;
    row.method = "ia3";
    row.centralized = 0.5;
    row.single_institution = 0.25;
    row.federated = 0.375;
    row.delta_fed_centralized = -0.125;
    row.delta_fed_single = 0.125;
    row.comm_cost_gb = 0.001953125;
    row.memory_gb = 2.0;
    const std::string csv = comparison_csv({row});
    CHECK(csv ==
          "method,centralized,single_institution,federated,delta_fed_centralized,delta_fed_single,"
          "comm_cost_gb,memory_gb\n"
          "ia3,0.500000,0.250000,0.375000,-0.125000,0.125000,0.001953125,2.000000000\n");

    nlohmann::json arr = comparison_json({row});
    REQUIRE(arr.size() == 1);
    CHECK(arr[0]["method"] == "ia3");
    CHECK(arr[0]["federated"] == 0.375);
}

TEST_CASE("report JSON round trip") {
    ScenarioReport rep;
    rep.scenario = "federated";
    rep.accuracy = 0.625;
    rep.comm_cost_gb = 0.25;
    rep.memory_gb = 0.0625;
    rep.trainable_bytes_per_node = 4096;
    rep.participants = 3;
    rep.node_peak_bytes = {100.0, 200.0, 300.0};
    rep.eval_fp = 12345;
    rep.node_accuracies = {0.5, 0.75};
    for (int r = 1; r <= 2; ++r) {
        RoundLog log;
        log.round = r;
        log.bytes_up = 3 * 4096;
        log.bytes_down = 3 * 4096;
        log.mean_loss = 5.5 - r;
        log.phi_checksum = 42 + static_cast<std::uint64_t>(r);
        log.val_accuracy = r == 1 ? -1.0 : 0.5;
        rep.rounds.push_back(log);
    }
    nlohmann::json cfg = {{"seed", 42}};
    nlohmann::json j = report_to_json(rep, cfg);
    CHECK(j["config"]["seed"] == 42);
    CHECK(j["scenario"] == "federated");
    CHECK(j["per_round"].size() == 2);
    CHECK(!j["per_round"][0].contains("val_accuracy")); // unevaluated rounds omit the field
    CHECK(j["per_round"][1]["val_accuracy"] == 0.5);

    ScenarioReport back = report_from_json(j);
    CHECK(back.scenario == rep.scenario);
    CHECK(back.accuracy == rep.accuracy);
    CHECK(back.comm_cost_gb == rep.comm_cost_gb);
    CHECK(back.memory_gb == rep.memory_gb);
    CHECK(back.trainable_bytes_per_node == rep.trainable_bytes_per_node);
    CHECK(back.participants == rep.participants);
    CHECK(back.node_peak_bytes == rep.node_peak_bytes);
    CHECK(back.eval_fp == rep.eval_fp);
    CHECK(back.node_accuracies == rep.node_accuracies);
    REQUIRE(back.rounds.size() == 2);
    CHECK(back.rounds[0].val_accuracy == -1.0);
    CHECK(back.rounds[1].phi_checksum == 44);
    CHECK(back.rounds[1].mean_loss == rep.rounds[1].mean_loss);
}

TEST_CASE("round CSV layout") {
    ScenarioReport rep;
    RoundLog log;
    log.round = 1;
    log.bytes_up = 1024;
    log.bytes_down = 1024;
    log.mean_loss = 5.5;
    log.val_accuracy = 0.25;
    rep.rounds.push_back(log);
    CHECK(round_csv(rep) ==
          "round,bytes_up,bytes_down,mean_loss,val_accuracy\n"
          "1,1024,1024,5.500000,0.250000\n");
}

TEST_CASE("chart generation") {
    ComparisonRow a, b, c;
    a.method = "lora";
    a.centralized = 0.9;
    a.single_institution = 0.6;
    a.federated = 0.85;
    b = a;
    b.method = "qlora";
    b.federated = 0.8;
    c = a;
    c.method = "ia3";
    c.centralized = 0.7;
    const std::string csv = comparison_csv({a, b, c});

    const std::string svg = chart_svg(csv);
    CHECK(svg == chart_svg(csv)); // deterministic bytes
    CHECK(svg.rfind("<svg", 0) == 0);

    // 3 groups x 3 bars + 3 legend swatches + 1 background rect
    std::size_t rects = 0;
    for (std::size_t at = svg.find("<rect"); at != std::string::npos; at = svg.find("<rect", at + 1)) ++rects;
    CHECK(rects == 13);
    CHECK(svg.find("lora centralized 0.900000") != std::string::npos);
    CHECK(svg.find("qlora federated 0.800000") != std::string::npos);
    CHECK(svg.find(">ia3</text>") != std::string::npos);

    CHECK_THROWS_AS(chart_svg(""), DataError);
    CHECK_THROWS_AS(chart_svg("not,a,known,header\n"), DataError);
    const std::string header =
        "method,centralized,single_institution,federated,delta_fed_centralized,delta_fed_single,"
        "comm_cost_gb,memory_gb\n";
    CHECK_THROWS_AS(chart_svg(header), DataError);                         // no data rows
    CHECK_THROWS_AS(chart_svg(header + "lora,0.5,0.5\n"), DataError);      // ragged
    CHECK_THROWS_AS(chart_svg(header + "lora,x,0.5,0.5,0,0,0,0\n"), DataError); // non-numeric
}
