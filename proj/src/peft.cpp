// SPDX-License-Identifier: Apache-2.0
#include "fedpeft/peft.hpp"

namespace fedpeft {

const std::vector<std::string> kLoraProjections = {"q_proj", "k_proj", "v_proj",
                                                   "o_proj", "up_proj", "down_proj"};
const std::vector<std::string> kIa3Targets = {"k_proj", "v_proj", "down_proj"};

namespace {
bool is_phi_name(const std::string& name) {
    return name.find(".lora_A") != std::string::npos || name.find(".lora_B") != std::string::npos ||
           name.find(".ia3") != std::string::npos;
}

Tensor gaussian(std::vector<long> shape, Rng& rng, float std_dev) {
    Tensor t(std::move(shape));
    for (long i = 0; i < t.numel(); ++i) t.data()[i] = static_cast<float>(rng.normal()) * std_dev;
    return t;
}
} // namespace

std::vector<std::string> lora_targets(const Model& m) {
    std::vector<std::string> out;
    for (int l = 0; l < m.cfg.layers; ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        for (const auto& proj : kLoraProjections) {
            const std::string w = p + proj + ".w";
            if (m.params.count(w) || m.qparams.count(w)) out.push_back(p + proj);
        }
    }
    return out;
}

void attach(Model& m, AdapterSpec spec, Rng rng) {
    spec.validate();
    if (m.adapter) throw ConfigError("attach: model already has an adapter");
    Rng r = rng.child(streams::init + 1);

    const bool auto_targets = spec.targets.empty();
    std::vector<std::string> targets = spec.targets;
    if (auto_targets) targets = (spec.method == PeftMethod::ia3) ? kIa3Targets : kLoraProjections;

    // θ is frozen from here on
    m.trainable.clear();
    for (auto& [name, var] : m.params) var->requires_grad = false;

    for (int l = 0; l < m.cfg.layers; ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        for (const auto& module : targets) {
            const std::string w = p + module + ".w";
            auto it = m.params.find(w);
            if (it == m.params.end()) {
                if (auto_targets) continue; // absent modules are skipped in auto mode
                throw ConfigError("attach: unknown target module " + module);
            }
            const long dout = it->second->value.rows();
            const long din = it->second->value.cols();
            if (spec.method == PeftMethod::ia3) {
                const std::string name = p + module + ".ia3";
                m.params[name] = make_leaf(Tensor::full({dout}, 1.0f), true);
                m.trainable.insert(name);
            } else {
                const std::string an = p + module + ".lora_A";
                const std::string bn = p + module + ".lora_B";
                m.params[an] = make_leaf(gaussian({spec.rank, din}, r, 0.02f), true);
                m.params[bn] = make_leaf(Tensor::zeros({dout, spec.rank}), true);
                m.trainable.insert(an);
                m.trainable.insert(bn);
            }
        }
    }
    if (m.trainable.empty()) throw ConfigError("attach: no target modules found");

    if (spec.method == PeftMethod::qlora) {
        // quantize every frozen matrix; layer norms stay in fp32
        std::vector<std::string> to_quantize = {"embed.tok", "embed.pos", "head.w"};
        for (int l = 0; l < m.cfg.layers; ++l) {
            const std::string p = "layer" + std::to_string(l) + ".";
            for (const auto& proj : kLoraProjections)
                if (m.params.count(p + proj + ".w")) to_quantize.push_back(p + proj + ".w");
        }
        for (const auto& name : to_quantize) {
            m.qparams[name] = quantize(m.params.at(name)->value, spec.qblock);
            m.params.erase(name);
        }
    }
    m.adapter = std::move(spec);
}

ParamSet extract_phi(const Model& m) {
    if (!m.adapter) throw ConfigError("extract_phi: no adapter attached");
    ParamSet out;
    for (const auto& [name, var] : m.params)
        if (is_phi_name(name)) out[name] = var->value;
    return out;
}

void load_phi(Model& m, const ParamSet& phi) {
    if (!m.adapter) throw ConfigError("load_phi: no adapter attached");
    ParamSet current = extract_phi(m);
    if (phi.size() != current.size()) throw ShapeError("load_phi: key set mismatch");
    for (const auto& [name, t] : phi) {
        auto it = m.params.find(name);
        if (it == m.params.end() || !is_phi_name(name)) throw ShapeError("load_phi: unknown key " + name);
        if (!it->second->value.same_shape(t)) throw ShapeError("load_phi: shape mismatch for " + name);
        std::copy(t.data(), t.data() + t.numel(), it->second->value.data());
    }
}

long trainable_bytes(const Model& m) {
    if (!m.adapter) throw ConfigError("trainable_bytes: no adapter attached");
    long total = 0;
    for (const auto& [name, var] : m.params)
        if (is_phi_name(name)) total += 4 * var->value.numel();
    return total;
}

std::uint64_t phi_checksum(const ParamSet& phi) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    auto eat = [&h](const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 0x100000001B3ull;
        }
    };
    for (const auto& [name, t] : phi) {
        eat(name.data(), name.size());
        eat(t.data(), static_cast<std::size_t>(t.numel()) * sizeof(float));
    }
    return h;
}

} // namespace fedpeft
