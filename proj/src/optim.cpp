// SPDX-License-Identifier: Apache-2.0
#include "fedpeft/optim.hpp"

#include <cmath>

namespace fedpeft {

void Optimizer::step(std::map<std::string, Var>& params, const std::set<std::string>& trainable) {
    ++step_count_;
    for (const auto& name : trainable) {
        auto it = params.find(name);
        if (it == params.end()) throw ShapeError("optimizer: unknown parameter " + name);
        Node& p = *it->second;
        if (p.grad.numel() == 0) p.ensure_grad(); // no gradient flowed: treat as zero
        if (!p.grad.same_shape(p.value)) throw ShapeError("optimizer: grad shape mismatch for " + name);

        const long n = p.value.numel();
        float* w = p.value.data();
        const float* g = p.grad.data();
        if (cfg_.kind == OptKind::sgd) {
            const float lr = static_cast<float>(cfg_.lr);
            for (long i = 0; i < n; ++i) w[i] -= lr * g[i];
        } else {
            Tensor& m = m_[name];
            Tensor& v = v_[name];
            if (m.numel() == 0) m = Tensor(p.value.shape());
            if (v.numel() == 0) v = Tensor(p.value.shape());
            const double b1 = cfg_.beta1, b2 = cfg_.beta2;
            const double bc1 = 1.0 - std::pow(b1, static_cast<double>(step_count_));
            const double bc2 = 1.0 - std::pow(b2, static_cast<double>(step_count_));
            const double lr = cfg_.lr;
            for (long i = 0; i < n; ++i) {
                const double gi = g[i];
                double mi = b1 * m.data()[i] + (1.0 - b1) * gi;
                double vi = b2 * v.data()[i] + (1.0 - b2) * gi * gi;
                m.data()[i] = static_cast<float>(mi);
                v.data()[i] = static_cast<float>(vi);
                double wd = cfg_.weight_decay > 0.0 ? lr * cfg_.weight_decay * w[i] : 0.0;
                w[i] = static_cast<float>(w[i] - wd - lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg_.eps));
            }
        }
        it->second->value.check_finite("parameter " + name + " after optimizer step");
    }
}

OptKind opt_kind_from_string(const std::string& s) {
    if (s == "adamw") return OptKind::adamw;
    if (s == "sgd") return OptKind::sgd;
    throw ConfigError("unknown optimizer kind: " + s);
}

std::string to_string(OptKind k) { return k == OptKind::adamw ? "adamw" : "sgd"; }

} // namespace fedpeft
