// SPDX-License-Identifier: Apache-2.0
#include "fedpeft/autodiff.hpp"

#include <cmath>
#include <unordered_set>

namespace fedpeft {

namespace {
thread_local bool t_grad_enabled = true;

bool wants_grad(const std::vector<Var>& parents) {
    if (!t_grad_enabled) return false;
    for (const auto& p : parents)
        if (p->requires_grad) return true;
    return false;
}

Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = wants_grad(parents);
    if (n->requires_grad) {
        n->parents = std::move(parents);
        n->backward_fn = std::move(fn);
    }
    return n;
}

void add_into(Tensor& dst, const Tensor& src) {
    for (long i = 0; i < dst.numel(); ++i) dst.data()[i] += src.data()[i];
}
} // namespace

NoGradGuard::NoGradGuard() : saved_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = saved_; }
bool grad_enabled() { return t_grad_enabled; }

Var make_leaf(Tensor value, bool trainable) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = trainable;
    n->is_leaf = true;
    return n;
}

Var make_const(Tensor value) { return make_leaf(std::move(value), false); }

void backward(const Var& root) {
    if (root->value.numel() != 1) throw ShapeError("backward: root must be scalar");
    if (!root->requires_grad) throw NumericError("backward: root does not require grad");
    if (!root->backward_fn && !root->is_leaf) throw NumericError("backward called twice without a new forward pass");

    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [n, idx] = stack.back();
        if (idx < n->parents.size()) {
            Node* p = n->parents[idx++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    root->ensure_grad()(0) = 1.0f;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn) {
            n->backward_fn(*n);
            n->backward_fn = nullptr; // tape is single-shot
        }
    }
}

namespace ops {

Var add(const Var& a, const Var& b) {
    if (!a->value.same_shape(b->value)) throw ShapeError("add: shape mismatch");
    Tensor y(a->value.shape());
    for (long i = 0; i < y.numel(); ++i) y.data()[i] = a->value.data()[i] + b->value.data()[i];
    return make_node(std::move(y), {a, b}, [](Node& n) {
        for (const auto& p : n.parents)
            if (p->requires_grad) add_into(p->ensure_grad(), n.grad);
    });
}

Var scale(const Var& a, float c) {
    Tensor y(a->value.shape());
    for (long i = 0; i < y.numel(); ++i) y.data()[i] = a->value.data()[i] * c;
    return make_node(std::move(y), {a}, [c](Node& n) {
        auto& p = n.parents[0];
        if (!p->requires_grad) return;
        Tensor& g = p->ensure_grad();
        for (long i = 0; i < g.numel(); ++i) g.data()[i] += c * n.grad.data()[i];
    });
}

Var matmul(const Var& a, const Var& b) {
    Tensor y = fedpeft::matmul(a->value, b->value);
    return make_node(std::move(y), {a, b}, [](Node& n) {
        const Var& a = n.parents[0];
        const Var& b = n.parents[1];
        const long m = a->value.rows(), k = a->value.cols(), c = b->value.cols();
        if (a->requires_grad)
            kernels::mm_nt_acc(n.grad.data(), b->value.data(), a->ensure_grad().data(), m, c, k);
        if (b->requires_grad)
            kernels::mm_tn_acc(a->value.data(), n.grad.data(), b->ensure_grad().data(), m, k, c);
    });
}

Var linear(const Var& x, const Var& w) {
    if (x->value.ndim() != 2 || w->value.ndim() != 2 || x->value.cols() != w->value.cols())
        throw ShapeError("linear: shape mismatch");
    const long t = x->value.rows(), din = x->value.cols(), dout = w->value.rows();
    Tensor y({t, dout});
    kernels::mm_nt_acc(x->value.data(), w->value.data(), y.data(), t, din, dout);
    return make_node(std::move(y), {x, w}, [t, din, dout](Node& n) {
        const Var& x = n.parents[0];
        const Var& w = n.parents[1];
        if (x->requires_grad)
            kernels::mm_nn_acc(n.grad.data(), w->value.data(), x->ensure_grad().data(), t, dout, din);
        if (w->requires_grad)
            kernels::mm_tn_acc(n.grad.data(), x->value.data(), w->ensure_grad().data(), t, dout, din);
    });
}

Var linear_q(const Var& x, const QuantizedTensor* w) {
    if (x->value.ndim() != 2 || w->shape.size() != 2 || x->value.cols() != w->shape[1])
        throw ShapeError("linear_q: shape mismatch");
    const long t = x->value.rows(), din = x->value.cols(), dout = w->shape[0];
    Tensor y({t, dout});
    {
        // weight lives only for the duration of the product
        Tensor wt(w->shape);
        dequantize_into(*w, wt.data());
        kernels::mm_nt_acc(x->value.data(), wt.data(), y.data(), t, din, dout);
    }
    return make_node(std::move(y), {x}, [w, t, din, dout](Node& n) {
        const Var& x = n.parents[0];
        if (!x->requires_grad) return;
        Tensor wt(w->shape);
        dequantize_into(*w, wt.data());
        kernels::mm_nn_acc(n.grad.data(), wt.data(), x->ensure_grad().data(), t, dout, din);
    });
}

Var colscale(const Var& x, const Var& v) {
    if (x->value.ndim() != 2 || v->value.numel() != x->value.cols()) throw ShapeError("colscale: shape mismatch");
    const long t = x->value.rows(), d = x->value.cols();
    Tensor y({t, d});
    for (long i = 0; i < t; ++i)
        for (long j = 0; j < d; ++j) y(i, j) = x->value(i, j) * v->value(j);
    return make_node(std::move(y), {x, v}, [t, d](Node& n) {
        const Var& x = n.parents[0];
        const Var& v = n.parents[1];
        if (x->requires_grad) {
            Tensor& gx = x->ensure_grad();
            for (long i = 0; i < t; ++i)
                for (long j = 0; j < d; ++j) gx(i, j) += n.grad(i, j) * v->value(j);
        }
        if (v->requires_grad) {
            Tensor& gv = v->ensure_grad();
            for (long i = 0; i < t; ++i)
                for (long j = 0; j < d; ++j) gv(j) += n.grad(i, j) * x->value(i, j);
        }
    });
}

Var gelu(const Var& x) {
    const long n = x->value.numel();
    Tensor y(x->value.shape());
    for (long i = 0; i < n; ++i) {
        float v = x->value.data()[i];
        y.data()[i] = 0.5f * v * (1.0f + std::erf(v * static_cast<float>(M_SQRT1_2)));
    }
    return make_node(std::move(y), {x}, [n](Node& nd) {
        const Var& x = nd.parents[0];
        if (!x->requires_grad) return;
        Tensor& g = x->ensure_grad();
        constexpr float inv_sqrt_2pi = 0.3989422804014327f;
        for (long i = 0; i < n; ++i) {
            float v = x->value.data()[i];
            float cdf = 0.5f * (1.0f + std::erf(v * static_cast<float>(M_SQRT1_2)));
            float pdf = inv_sqrt_2pi * std::exp(-0.5f * v * v);
            g.data()[i] += nd.grad.data()[i] * (cdf + v * pdf);
        }
    });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias) {
    const long t = x->value.rows(), d = x->value.cols();
    if (gain->value.numel() != d || bias->value.numel() != d) throw ShapeError("layer_norm: affine shape mismatch");
    constexpr float eps = 1e-5f;
    Tensor y({t, d});
    std::vector<float> mu(static_cast<std::size_t>(t)), inv(static_cast<std::size_t>(t));
    for (long i = 0; i < t; ++i) {
        float m = 0.0f;
        for (long j = 0; j < d; ++j) m += x->value(i, j);
        m /= static_cast<float>(d);
        float var = 0.0f;
        for (long j = 0; j < d; ++j) {
            float c = x->value(i, j) - m;
            var += c * c;
        }
        var /= static_cast<float>(d);
        float is = 1.0f / std::sqrt(var + eps);
        mu[static_cast<std::size_t>(i)] = m;
        inv[static_cast<std::size_t>(i)] = is;
        for (long j = 0; j < d; ++j)
            y(i, j) = (x->value(i, j) - m) * is * gain->value(j) + bias->value(j);
    }
    return make_node(std::move(y), {x, gain, bias}, [t, d, mu = std::move(mu), inv = std::move(inv)](Node& n) {
        const Var& x = n.parents[0];
        const Var& gain = n.parents[1];
        const Var& bias = n.parents[2];
        std::vector<float> xhat(static_cast<std::size_t>(d));
        for (long i = 0; i < t; ++i) {
            const float m = mu[static_cast<std::size_t>(i)];
            const float is = inv[static_cast<std::size_t>(i)];
            for (long j = 0; j < d; ++j) xhat[static_cast<std::size_t>(j)] = (x->value(i, j) - m) * is;
            if (gain->requires_grad) {
                Tensor& gg = gain->ensure_grad();
                for (long j = 0; j < d; ++j) gg(j) += n.grad(i, j) * xhat[static_cast<std::size_t>(j)];
            }
            if (bias->requires_grad) {
                Tensor& gb = bias->ensure_grad();
                for (long j = 0; j < d; ++j) gb(j) += n.grad(i, j);
            }
            if (x->requires_grad) {
                float s1 = 0.0f, s2 = 0.0f;
                for (long j = 0; j < d; ++j) {
                    float gy = n.grad(i, j) * gain->value(j);
                    s1 += gy;
                    s2 += gy * xhat[static_cast<std::size_t>(j)];
                }
                s1 /= static_cast<float>(d);
                s2 /= static_cast<float>(d);
                Tensor& gx = x->ensure_grad();
                for (long j = 0; j < d; ++j) {
                    float gy = n.grad(i, j) * gain->value(j);
                    gx(i, j) += (gy - s1 - xhat[static_cast<std::size_t>(j)] * s2) * is;
                }
            }
        }
    });
}

Var causal_attention(const Var& q, const Var& k, const Var& v, int heads) {
    const long t = q->value.rows(), d = q->value.cols();
    if (d % heads != 0) throw ShapeError("causal_attention: width not divisible by head count");
    if (!k->value.same_shape(q->value) || !v->value.same_shape(q->value))
        throw ShapeError("causal_attention: q/k/v shape mismatch");
    const long dh = d / heads;
    const float sc = 1.0f / std::sqrt(static_cast<float>(dh));
    Tensor probs({static_cast<long>(heads), t, t});
    Tensor y({t, d});
    std::vector<float> row(static_cast<std::size_t>(t));
    for (long h = 0; h < heads; ++h) {
        const long off = h * dh;
        float* ph = probs.data() + h * t * t;
        for (long i = 0; i < t; ++i) {
            float mx = -1e30f;
            for (long j = 0; j <= i; ++j) {
                float s = 0.0f;
                const float* qi = q->value.data() + i * d + off;
                const float* kj = k->value.data() + j * d + off;
                for (long c = 0; c < dh; ++c) s += qi[c] * kj[c];
                s *= sc;
                row[static_cast<std::size_t>(j)] = s;
                mx = std::max(mx, s);
            }
            float z = 0.0f;
            for (long j = 0; j <= i; ++j) {
                float e = std::exp(row[static_cast<std::size_t>(j)] - mx);
                row[static_cast<std::size_t>(j)] = e;
                z += e;
            }
            for (long j = 0; j <= i; ++j) {
                float p = row[static_cast<std::size_t>(j)] / z;
                ph[i * t + j] = p;
                const float* vj = v->value.data() + j * d + off;
                float* yi = y.data() + i * d + off;
                for (long c = 0; c < dh; ++c) yi[c] += p * vj[c];
            }
        }
    }
    return make_node(std::move(y), {q, k, v},
                     [heads, t, d, dh, sc, probs = std::move(probs)](Node& n) {
                         const Var& q = n.parents[0];
                         const Var& k = n.parents[1];
                         const Var& v = n.parents[2];
                         std::vector<float> dp(static_cast<std::size_t>(t));
                         for (long h = 0; h < heads; ++h) {
                             const long off = h * dh;
                             const float* ph = probs.data() + h * t * t;
                             for (long i = 0; i < t; ++i) {
                                 const float* gi = n.grad.data() + i * d + off;
                                 // dP and dV
                                 float dot = 0.0f;
                                 for (long j = 0; j <= i; ++j) {
                                     const float* vj = v->value.data() + j * d + off;
                                     float s = 0.0f;
                                     for (long c = 0; c < dh; ++c) s += gi[c] * vj[c];
                                     dp[static_cast<std::size_t>(j)] = s;
                                     dot += s * ph[i * t + j];
                                     if (v->requires_grad) {
                                         float* gv = v->ensure_grad().data() + j * d + off;
                                         const float p = ph[i * t + j];
                                         for (long c = 0; c < dh; ++c) gv[c] += p * gi[c];
                                     }
                                 }
                                 // dS -> dQ, dK
                                 for (long j = 0; j <= i; ++j) {
                                     const float ds = ph[i * t + j] * (dp[static_cast<std::size_t>(j)] - dot) * sc;
                                     if (ds == 0.0f) continue;
                                     if (q->requires_grad) {
                                         float* gq = q->ensure_grad().data() + i * d + off;
                                         const float* kj = k->value.data() + j * d + off;
                                         for (long c = 0; c < dh; ++c) gq[c] += ds * kj[c];
                                     }
                                     if (k->requires_grad) {
                                         float* gk = k->ensure_grad().data() + j * d + off;
                                         const float* qi = q->value.data() + i * d + off;
                                         for (long c = 0; c < dh; ++c) gk[c] += ds * qi[c];
                                     }
                                 }
                             }
                         }
                     });
}

Var dropout(const Var& x, float rate, Rng& rng) {
    if (rate < 0.0f || rate >= 1.0f) throw ConfigError("dropout: rate must be in [0, 1)");
    if (rate == 0.0f) return x;
    const long n = x->value.numel();
    const float keep = 1.0f - rate;
    Buffer<float> mask(static_cast<std::size_t>(n));
    Tensor y(x->value.shape());
    for (long i = 0; i < n; ++i) {
        float m = (rng.uniform() < rate) ? 0.0f : 1.0f / keep;
        mask[static_cast<std::size_t>(i)] = m;
        y.data()[i] = x->value.data()[i] * m;
    }
    return make_node(std::move(y), {x}, [n, mask = std::move(mask)](Node& nd) {
        const Var& x = nd.parents[0];
        if (!x->requires_grad) return;
        Tensor& g = x->ensure_grad();
        for (long i = 0; i < n; ++i) g.data()[i] += nd.grad.data()[i] * mask[static_cast<std::size_t>(i)];
    });
}

Var embedding(const Var& table, const std::vector<int>& ids) {
    const long v = table->value.rows(), d = table->value.cols();
    const long t = static_cast<long>(ids.size());
    Tensor y({t, d});
    for (long i = 0; i < t; ++i) {
        const int id = ids[static_cast<std::size_t>(i)];
        if (id < 0 || id >= v) throw ShapeError("embedding: token id out of range");
        std::copy(table->value.data() + id * d, table->value.data() + (id + 1) * d, y.data() + i * d);
    }
    return make_node(std::move(y), {table}, [ids, d](Node& n) {
        const Var& table = n.parents[0];
        if (!table->requires_grad) return;
        Tensor& g = table->ensure_grad();
        for (std::size_t i = 0; i < ids.size(); ++i) {
            float* row = g.data() + static_cast<long>(ids[i]) * d;
            const float* gr = n.grad.data() + static_cast<long>(i) * d;
            for (long j = 0; j < d; ++j) row[j] += gr[j];
        }
    });
}

Var embedding_q(const QuantizedTensor* table, const std::vector<int>& ids) {
    const long v = table->shape[0], d = table->shape[1];
    const long t = static_cast<long>(ids.size());
    Tensor y({t, d});
    for (long i = 0; i < t; ++i) {
        const int id = ids[static_cast<std::size_t>(i)];
        if (id < 0 || id >= v) throw ShapeError("embedding_q: token id out of range");
        for (long j = 0; j < d; ++j) y(i, j) = table->value(static_cast<long>(id) * d + j);
    }
    return make_const(std::move(y));
}

Var completion_nll(const Var& logits, const std::vector<int>& targets, const std::vector<unsigned char>& mask) {
    const long t = logits->value.rows(), vocab = logits->value.cols();
    if (static_cast<long>(targets.size()) != t || static_cast<long>(mask.size()) != t)
        throw ShapeError("completion_nll: target/mask length mismatch");
    Tensor probs({t, vocab}); // filled only for masked rows
    double total = 0.0;
    for (long i = 0; i < t; ++i) {
        if (!mask[static_cast<std::size_t>(i)]) continue;
        const int gold = targets[static_cast<std::size_t>(i)];
        if (gold < 0 || gold >= vocab) throw ShapeError("completion_nll: target out of range");
        const float* row = logits->value.data() + i * vocab;
        float mx = row[0];
        for (long j = 1; j < vocab; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (long j = 0; j < vocab; ++j) z += std::exp(static_cast<double>(row[j] - mx));
        total += std::log(z) - static_cast<double>(row[gold] - mx);
        float* pr = probs.data() + i * vocab;
        for (long j = 0; j < vocab; ++j)
            pr[j] = static_cast<float>(std::exp(static_cast<double>(row[j] - mx)) / z);
    }
    Tensor y({1});
    y(0) = static_cast<float>(total);
    y.check_finite("completion_nll");
    return make_node(std::move(y), {logits}, [t, vocab, targets, mask, probs = std::move(probs)](Node& n) {
        const Var& logits = n.parents[0];
        if (!logits->requires_grad) return;
        const float g = n.grad(0);
        Tensor& gl = logits->ensure_grad();
        for (long i = 0; i < t; ++i) {
            if (!mask[static_cast<std::size_t>(i)]) continue;
            const float* pr = probs.data() + i * vocab;
            float* go = gl.data() + i * vocab;
            for (long j = 0; j < vocab; ++j) go[j] += g * pr[j];
            go[targets[static_cast<std::size_t>(i)]] -= g;
        }
    });
}

Var softmax_cross_entropy(const Var& logits, int gold) {
    const long k = logits->value.numel();
    if (k < 2) throw ShapeError("softmax_cross_entropy: need at least 2 candidates");
    if (gold < 0 || gold >= k) throw ShapeError("softmax_cross_entropy: gold index out of range");
    std::vector<int> targets{gold};
    std::vector<unsigned char> mask{1};
    Tensor flat({1, k});
    std::copy(logits->value.data(), logits->value.data() + k, flat.data());
    // reshape via a pass-through node so gradients land back on `logits`
    Var row = make_node(std::move(flat), {logits}, [k](Node& n) {
        const Var& src = n.parents[0];
        if (!src->requires_grad) return;
        Tensor& g = src->ensure_grad();
        for (long i = 0; i < k; ++i) g.data()[i] += n.grad.data()[i];
    });
    return completion_nll(row, targets, mask);
}

Var sum_all(const Var& x) {
    Tensor y({1});
    double s = 0.0;
    for (long i = 0; i < x->value.numel(); ++i) s += x->value.data()[i];
    y(0) = static_cast<float>(s);
    return make_node(std::move(y), {x}, [](Node& n) {
        const Var& x = n.parents[0];
        if (!x->requires_grad) return;
        Tensor& g = x->ensure_grad();
        const float gv = n.grad(0);
        for (long i = 0; i < g.numel(); ++i) g.data()[i] += gv;
    });
}

Var average(const std::vector<Var>& terms) {
    if (terms.empty()) throw ShapeError("average: empty term list");
    Tensor y({1});
    double s = 0.0;
    for (const auto& v : terms) s += v->value(0);
    y(0) = static_cast<float>(s / static_cast<double>(terms.size()));
    const float inv = 1.0f / static_cast<float>(terms.size());
    return make_node(std::move(y), terms, [inv](Node& n) {
        for (const auto& p : n.parents)
            if (p->requires_grad) p->ensure_grad()(0) += inv * n.grad(0);
    });
}

} // namespace ops

} // namespace fedpeft
