// SPDX-License-Identifier: Apache-2.0
// Validates the engine's analytic gradients against central finite differences
// computed on the double-precision oracle in double_oracle.hpp.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "double_oracle.hpp"

#include <cmath>
#include <vector>

using namespace fedpeft;
using oracle::batch_loss;
using oracle::DModel;
using oracle::dvec;
using oracle::mirror;

namespace {

std::vector<Instance> probe_batch() {
    std::vector<Instance> batch;
    for (const char* prompt : {"grad check one. ans:", "check two. ans:"}) {
        Instance inst;
        inst.prompt = tokenize(prompt);
        inst.candidates = {tokenize("A"), tokenize("B"), tokenize("CD")};
        inst.gold = 2;
        inst.completion = inst.candidates[2];
        batch.push_back(inst);
    }
    return batch;
}

void randomize_phi(Model& m, Rng rng) {
    for (const auto& name : m.trainable) {
        Tensor& t = m.params.at(name)->value;
        const bool ia3 = name.find(".ia3") != std::string::npos;
        for (long i = 0; i < t.numel(); ++i)
            t.data()[i] = (ia3 ? 1.0f : 0.0f) + 0.05f * static_cast<float>(rng.normal());
    }
}

void check_gradients(Model& m, int samples) {
    const auto batch = probe_batch();
    std::vector<const Instance*> ptrs;
    for (const auto& b : batch) ptrs.push_back(&b);

    m.zero_grads();
    Var loss = training_loss(m, ptrs, nullptr);
    backward(loss);

    std::vector<std::string> names(m.trainable.begin(), m.trainable.end());
    REQUIRE(!names.empty());
    Rng pick(99);
    const double h = 1e-3;
    int agreed = 0;
    for (int s = 0; s < samples; ++s) {
        const std::string& name = names[pick.below(names.size())];
        Tensor& t = m.params.at(name)->value;
        const long idx = static_cast<long>(pick.below(static_cast<std::uint64_t>(t.numel())));
        const double an = m.params.at(name)->grad.numel() ? m.params.at(name)->grad.data()[idx] : 0.0;

        DModel dm = mirror(m);
        dvec& dp = dm.p.at(name);
        const double saved = dp[static_cast<std::size_t>(idx)];
        dp[static_cast<std::size_t>(idx)] = saved + h;
        const double lp = batch_loss(dm, batch);
        dp[static_cast<std::size_t>(idx)] = saved - h;
        const double lm = batch_loss(dm, batch);
        const double fd = (lp - lm) / (2 * h);

        if (std::fabs(fd) < 1e-7 && std::fabs(an) < 1e-7) {
            ++agreed;
            continue;
        }
        const double rel = std::fabs(fd - an) / std::max(std::fabs(fd), std::fabs(an));
        const bool ok = rel < 1e-3 || std::fabs(fd - an) < 1e-6; // fp32 noise floor on tiny grads
        CHECK_MESSAGE(ok, name, "[", idx, "] fd=", fd, " an=", an);
        if (ok) ++agreed;
    }
    CHECK(agreed == samples);
}

Model adapted_model(PeftMethod method) {
    BackboneConfig cfg;
    cfg.d = 16;
    cfg.layers = 1;
    cfg.heads = 2;
    cfg.ff = 32;
    cfg.max_len = 32;
    Model m = Model::init(cfg, Rng(42));
    AdapterSpec spec;
    spec.method = method;
    spec.rank = 4;
    spec.alpha = 8;
    spec.dropout = 0.0; // deterministic forward for the oracle
    attach(m, spec, Rng(42));
    randomize_phi(m, Rng(7, 1));
    return m;
}

} // namespace

TEST_CASE("oracle forward agrees with the engine") {
    Model m = adapted_model(PeftMethod::lora);
    const auto batch = probe_batch();
    std::vector<const Instance*> ptrs{&batch[0], &batch[1]};
    NoGradGuard ng;
    const double engine = training_loss(m, ptrs, nullptr)->value(0);
    const double oracle_loss = batch_loss(mirror(m), batch);
    CHECK(engine == doctest::Approx(oracle_loss).epsilon(1e-5));
}

TEST_CASE("lora gradients match finite differences") {
    Model m = adapted_model(PeftMethod::lora);
    check_gradients(m, 100);
}

TEST_CASE("qlora gradients match finite differences") {
    Model m = adapted_model(PeftMethod::qlora);
    check_gradients(m, 100);
}

TEST_CASE("ia3 gradients match finite differences") {
    Model m = adapted_model(PeftMethod::ia3);
    check_gradients(m, 100);
}

TEST_CASE("raw backbone gradients match finite differences") {
    BackboneConfig cfg;
    cfg.d = 16;
    cfg.layers = 1;
    cfg.heads = 2;
    cfg.ff = 32;
    cfg.max_len = 32;
    Model m = Model::init(cfg, Rng(41));
    check_gradients(m, 60);
}
