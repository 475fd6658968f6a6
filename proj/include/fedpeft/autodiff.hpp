// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fedpeft/quant.hpp"
#include "fedpeft/rng.hpp"
#include "fedpeft/tensor.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace fedpeft {

// Reverse-mode tape over the backbone's fixed op set. Leaves persist across
// steps (model parameters); intermediate nodes are freed with the graph.
struct Node {
    Tensor value;
    Tensor grad; // allocated lazily, zeroed between steps by the owner
    bool requires_grad = false;
    bool is_leaf = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    Tensor& ensure_grad() {
        if (grad.numel() == 0) grad = Tensor(value.shape());
        return grad;
    }
    void zero_grad() {
        if (grad.numel() > 0) std::fill(grad.data(), grad.data() + grad.numel(), 0.0f);
    }
};

using Var = std::shared_ptr<Node>;

Var make_leaf(Tensor value, bool trainable);
Var make_const(Tensor value);

/// Runs reverse accumulation from a scalar root. Throws if called twice on
/// the same root without a fresh forward pass.
void backward(const Var& root);

/// Disables gradient tracking on this thread while alive (evaluation mode).
class NoGradGuard {
  public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool saved_;
};
bool grad_enabled();

namespace ops {

Var add(const Var& a, const Var& b);
Var scale(const Var& a, float c);
Var matmul(const Var& a, const Var& b);
/// y = x * w^T with x [t, d_in], w [d_out, d_in].
Var linear(const Var& x, const Var& w);
/// Same contract with a frozen quantized weight; `w` must outlive the graph.
Var linear_q(const Var& x, const QuantizedTensor* w);
/// Scales column j of x by v[j] (IA3-style output gating).
Var colscale(const Var& x, const Var& v);
Var gelu(const Var& x);
Var layer_norm(const Var& x, const Var& gain, const Var& bias);
/// Multi-head causal self-attention over packed [t, d] projections.
Var causal_attention(const Var& q, const Var& k, const Var& v, int heads);
Var dropout(const Var& x, float rate, Rng& rng);
Var embedding(const Var& table, const std::vector<int>& ids);
Var embedding_q(const QuantizedTensor* table, const std::vector<int>& ids);
/// Sum over rows with mask[t] != 0 of -log softmax(logits[t])[targets[t]].
Var completion_nll(const Var& logits, const std::vector<int>& targets, const std::vector<unsigned char>& mask);
/// -log softmax(logits)[gold] for a single candidate-score row of K >= 2.
Var softmax_cross_entropy(const Var& logits, int gold);
Var sum_all(const Var& x);
/// Scalar mean of scalar terms.
Var average(const std::vector<Var>& terms);

} // namespace ops

} // namespace fedpeft
