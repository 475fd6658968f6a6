// SPDX-License-Identifier: Apache-2.0
#include "fedpeft/backbone.hpp"

#include <cmath>

namespace fedpeft {

std::vector<int> tokenize(const std::string& text) {
    std::vector<int> out;
    out.reserve(text.size());
    for (unsigned char c : text) out.push_back(static_cast<int>(c) + tok::offset);
    return out;
}

std::string detokenize(const std::vector<int>& tokens) {
    std::string out;
    out.reserve(tokens.size());
    for (int t : tokens) {
        if (t < tok::offset || t >= tok::vocab_size) throw DataError("detokenize: not a byte token");
        out.push_back(static_cast<char>(t - tok::offset));
    }
    return out;
}

void BackboneConfig::validate() const {
    if (d % heads != 0) throw ConfigError("backbone: width must be divisible by head count");
    if (max_len < 2) throw ConfigError("backbone: max sequence length must be >= 2");
    if (vocab < 2 || d < 1 || layers < 1 || heads < 1 || ff < 1) throw ConfigError("backbone: bad config");
}

void AdapterSpec::validate() const {
    if (rank < 1) throw ConfigError("adapter: rank must be >= 1");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("adapter: dropout must be in [0, 1)");
    if (qblock < 2) throw ConfigError("adapter: quantization block size must be >= 2");
}

PeftMethod peft_from_string(const std::string& s) {
    if (s == "lora") return PeftMethod::lora;
    if (s == "qlora") return PeftMethod::qlora;
    if (s == "ia3") return PeftMethod::ia3;
    throw ConfigError("unknown PEFT method: " + s);
}

std::string to_string(PeftMethod m) {
    switch (m) {
    case PeftMethod::lora: return "lora";
    case PeftMethod::qlora: return "qlora";
    default: return "ia3";
    }
}

Instance truncate_prompt(Instance inst, int max_len) {
    std::size_t longest = inst.completion.size();
    for (const auto& c : inst.candidates) longest = std::max(longest, c.size());
    if (static_cast<int>(longest) >= max_len)
        throw DataError("truncate_prompt: a candidate alone exceeds the maximum length");
    const std::size_t budget = static_cast<std::size_t>(max_len) - longest;
    if (inst.prompt.size() > budget)
        inst.prompt.erase(inst.prompt.begin(), inst.prompt.end() - static_cast<long>(budget));
    return inst;
}

namespace {
Tensor gaussian(std::vector<long> shape, Rng& rng, float std_dev) {
    Tensor t(std::move(shape));
    for (long i = 0; i < t.numel(); ++i) t.data()[i] = static_cast<float>(rng.normal()) * std_dev;
    return t;
}
} // namespace

Model Model::init(const BackboneConfig& cfg, Rng rng) {
    cfg.validate();
    Rng r = rng.child(streams::init);
    Model m;
    m.cfg = cfg;
    auto put = [&m](const std::string& name, Tensor t) {
        m.params[name] = make_leaf(std::move(t), true);
        m.trainable.insert(name);
    };
    const float std_dev = 0.02f;
    put("embed.tok", gaussian({cfg.vocab, cfg.d}, r, std_dev));
    put("embed.pos", gaussian({cfg.max_len, cfg.d}, r, std_dev));
    for (int l = 0; l < cfg.layers; ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        put(p + "ln1.g", Tensor::full({cfg.d}, 1.0f));
        put(p + "ln1.b", Tensor::zeros({cfg.d}));
        put(p + "ln2.g", Tensor::full({cfg.d}, 1.0f));
        put(p + "ln2.b", Tensor::zeros({cfg.d}));
        put(p + "q_proj.w", gaussian({cfg.d, cfg.d}, r, std_dev));
        put(p + "k_proj.w", gaussian({cfg.d, cfg.d}, r, std_dev));
        put(p + "v_proj.w", gaussian({cfg.d, cfg.d}, r, std_dev));
        put(p + "o_proj.w", gaussian({cfg.d, cfg.d}, r, std_dev));
        put(p + "up_proj.w", gaussian({cfg.ff, cfg.d}, r, std_dev));
        put(p + "down_proj.w", gaussian({cfg.d, cfg.ff}, r, std_dev));
    }
    put("final_ln.g", Tensor::full({cfg.d}, 1.0f));
    put("final_ln.b", Tensor::zeros({cfg.d}));
    put("head.w", gaussian({cfg.vocab, cfg.d}, r, std_dev));
    return m;
}

Model Model::clone() const {
    Model m;
    m.cfg = cfg;
    m.adapter = adapter;
    m.trainable = trainable;
    for (const auto& [name, var] : params) m.params[name] = make_leaf(var->value, var->requires_grad);
    m.qparams = qparams;
    return m;
}

void Model::zero_grads() const {
    for (const auto& [name, var] : params) var->zero_grad();
}

Var Model::project(const std::string& layer_prefix, const std::string& module, const Var& x, bool training,
                   Rng* dropout_rng) const {
    const std::string wname = layer_prefix + module + ".w";
    Var base;
    if (auto qit = qparams.find(wname); qit != qparams.end()) {
        base = ops::linear_q(x, &qit->second);
    } else {
        base = ops::linear(x, params.at(wname));
    }
    if (!adapter) return base;
    if (auto ait = params.find(layer_prefix + module + ".lora_A"); ait != params.end()) {
        const Var& a = ait->second;
        const Var& b = params.at(layer_prefix + module + ".lora_B");
        Var in = x;
        if (training && adapter->dropout > 0.0) {
            if (!dropout_rng) throw ConfigError("training forward requires a dropout rng");
            in = ops::dropout(x, static_cast<float>(adapter->dropout), *dropout_rng);
        }
        const float mult = static_cast<float>(adapter->alpha / static_cast<double>(adapter->rank));
        base = ops::add(base, ops::scale(ops::linear(ops::linear(in, a), b), mult));
    } else if (auto iit = params.find(layer_prefix + module + ".ia3"); iit != params.end()) {
        base = ops::colscale(base, iit->second);
    }
    return base;
}

Var Model::forward(const std::vector<int>& ids, bool training, Rng* dropout_rng) const {
    const long t = static_cast<long>(ids.size());
    if (t == 0) throw ShapeError("forward: empty sequence");
    if (t > cfg.max_len) throw ShapeError("forward: sequence exceeds maximum length");

    std::vector<int> pos(ids.size());
    for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = static_cast<int>(i);

    auto embed = [this](const char* name, const std::vector<int>& idx) {
        if (auto qit = qparams.find(name); qit != qparams.end()) return ops::embedding_q(&qit->second, idx);
        return ops::embedding(params.at(name), idx);
    };
    Var x = ops::add(embed("embed.tok", ids), embed("embed.pos", pos));
    for (int l = 0; l < cfg.layers; ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        Var a = ops::layer_norm(x, params.at(p + "ln1.g"), params.at(p + "ln1.b"));
        Var q = project(p, "q_proj", a, training, dropout_rng);
        Var k = project(p, "k_proj", a, training, dropout_rng);
        Var v = project(p, "v_proj", a, training, dropout_rng);
        Var att = ops::causal_attention(q, k, v, cfg.heads);
        x = ops::add(x, project(p, "o_proj", att, training, dropout_rng));
        Var mi = ops::layer_norm(x, params.at(p + "ln2.g"), params.at(p + "ln2.b"));
        Var up = ops::gelu(project(p, "up_proj", mi, training, dropout_rng));
        x = ops::add(x, project(p, "down_proj", up, training, dropout_rng));
    }
    Var f = ops::layer_norm(x, params.at("final_ln.g"), params.at("final_ln.b"));
    if (auto qit = qparams.find("head.w"); qit != qparams.end()) return ops::linear_q(f, &qit->second);
    return ops::linear(f, params.at("head.w"));
}

namespace {
double row_logprob(const Tensor& logits, long row, int gold) {
    const long vocab = logits.cols();
    const float* r = logits.data() + row * vocab;
    float mx = r[0];
    for (long j = 1; j < vocab; ++j) mx = std::max(mx, r[j]);
    double z = 0.0;
    for (long j = 0; j < vocab; ++j) z += std::exp(static_cast<double>(r[j] - mx));
    return static_cast<double>(r[gold] - mx) - std::log(z);
}
} // namespace

double forward_logprob(const Model& m, const std::vector<int>& prompt, const std::vector<int>& completion) {
    if (completion.empty()) return 0.0;
    if (prompt.empty()) throw ShapeError("forward_logprob: empty prompt with non-empty completion");
    NoGradGuard ng;
    std::vector<int> seq = prompt;
    seq.insert(seq.end(), completion.begin(), completion.end());
    Var logits = m.forward(seq, false, nullptr);
    const long p = static_cast<long>(prompt.size());
    double total = 0.0;
    for (std::size_t j = 0; j < completion.size(); ++j)
        total += row_logprob(logits->value, p + static_cast<long>(j) - 1, completion[j]);
    return total;
}

int predict(const Model& m, const Instance& inst) {
    if (inst.candidates.size() < 2) throw DataError("predict: need at least 2 candidates");
    int best = 0;
    double best_lp = forward_logprob(m, inst.prompt, inst.candidates[0]);
    for (std::size_t i = 1; i < inst.candidates.size(); ++i) {
        double lp = forward_logprob(m, inst.prompt, inst.candidates[i]);
        if (lp > best_lp) {
            best = static_cast<int>(i);
            best_lp = lp;
        }
    }
    return best;
}

Var training_loss(const Model& m, const std::vector<const Instance*>& batch, Rng* dropout_rng) {
    if (batch.empty()) throw DataError("training_loss: empty batch");
    std::vector<Var> terms;
    terms.reserve(batch.size());
    for (const Instance* inst : batch) {
        if (inst->prompt.empty()) throw ShapeError("training_loss: empty prompt");
        std::vector<int> seq = inst->prompt;
        seq.insert(seq.end(), inst->completion.begin(), inst->completion.end());
        const long t = static_cast<long>(seq.size());
        Var logits = m.forward(seq, true, dropout_rng);
        std::vector<int> targets(static_cast<std::size_t>(t), 0);
        std::vector<unsigned char> mask(static_cast<std::size_t>(t), 0);
        const long p = static_cast<long>(inst->prompt.size());
        for (long i = 0; i + 1 < t; ++i) {
            targets[static_cast<std::size_t>(i)] = seq[static_cast<std::size_t>(i + 1)];
            if (i + 1 >= p) mask[static_cast<std::size_t>(i)] = 1; // completion positions only
        }
        terms.push_back(ops::completion_nll(logits, targets, mask));
    }
    return ops::average(terms);
}

} // namespace fedpeft
