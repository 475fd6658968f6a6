// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fedpeft/autodiff.hpp"
#include "fedpeft/optim.hpp"

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace fedpeft {

// Byte-level vocabulary: 3 special ids then one id per byte value.
namespace tok {
inline constexpr int pad = 0;
inline constexpr int bos = 1;
inline constexpr int eos = 2;
inline constexpr int offset = 3;
inline constexpr int vocab_size = 259;
} // namespace tok

std::vector<int> tokenize(const std::string& text);
std::string detokenize(const std::vector<int>& tokens);

struct BackboneConfig {
    int vocab = tok::vocab_size;
    int d = 64;
    int layers = 2;
    int heads = 4;
    int ff = 256;
    int max_len = 512;
    void validate() const;
};

enum class PeftMethod { lora, qlora, ia3 };

struct AdapterSpec {
    PeftMethod method = PeftMethod::lora;
    int rank = 32;
    double alpha = 21.0;
    double dropout = 0.1;
    int qblock = 64;
    /// Empty means infer targets from the architecture.
    std::vector<std::string> targets;
    void validate() const;
};

PeftMethod peft_from_string(const std::string& s);
std::string to_string(PeftMethod m);

/// One supervised example over the closed answer set.
struct Instance {
    std::vector<int> prompt;
    std::vector<int> completion; // the gold candidate's tokens
    int gold = 0;
    std::vector<std::vector<int>> candidates;
    int label() const { return gold; }
};

/// Head-truncates the prompt so prompt + longest candidate fits in max_len.
Instance truncate_prompt(Instance inst, int max_len);

// Decoder-style transformer with named per-layer projections. Parameters are
// autodiff leaves keyed by name; under qlora the frozen matrices move into
// `qparams` as int8 blocks and only layer norms stay in fp32.
class Model {
  public:
    BackboneConfig cfg;
    std::optional<AdapterSpec> adapter;
    std::map<std::string, Var> params;
    std::map<std::string, QuantizedTensor> qparams;
    std::set<std::string> trainable;

    static Model init(const BackboneConfig& cfg, Rng rng);
    Model clone() const;

    /// Logits [T, vocab]. `dropout_rng` is consulted only when training.
    Var forward(const std::vector<int>& ids, bool training = false, Rng* dropout_rng = nullptr) const;

    void zero_grads() const;
    bool is_trainable(const std::string& name) const { return trainable.count(name) != 0; }

  private:
    Var project(const std::string& layer_prefix, const std::string& module, const Var& x, bool training,
                Rng* dropout_rng) const;
};

/// Sum over completion positions of log P(next token); prompt positions carry
/// no loss terms.
double forward_logprob(const Model& m, const std::vector<int>& prompt, const std::vector<int>& completion);

/// Argmax over candidate completions; ties break toward the lowest index.
int predict(const Model& m, const Instance& inst);

/// Mean over the batch of per-instance completion cross-entropy (token sum).
Var training_loss(const Model& m, const std::vector<const Instance*>& batch, Rng* dropout_rng);

} // namespace fedpeft
