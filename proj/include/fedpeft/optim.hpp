// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fedpeft/autodiff.hpp"

#include <map>
#include <set>
#include <string>

namespace fedpeft {

enum class OptKind { adamw, sgd };

struct OptimizerConfig {
    OptKind kind = OptKind::adamw;
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

// AdamW with decoupled weight decay, or plain SGD (p <- p - lr * g).
// Moments are keyed by parameter name and sized on first use.
class Optimizer {
  public:
    explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) {}

    /// Applies one update to every trainable leaf in `params`. Gradients are
    /// read from the leaves' grad tensors and left untouched.
    void step(std::map<std::string, Var>& params, const std::set<std::string>& trainable);

    void reset() {
        step_count_ = 0;
        m_.clear();
        v_.clear();
    }
    long step_count() const { return step_count_; }
    const OptimizerConfig& config() const { return cfg_; }

  private:
    OptimizerConfig cfg_;
    long step_count_ = 0;
    std::map<std::string, Tensor> m_;
    std::map<std::string, Tensor> v_;
};

OptKind opt_kind_from_string(const std::string& s);
std::string to_string(OptKind k);

} // namespace fedpeft
