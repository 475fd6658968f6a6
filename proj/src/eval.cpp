// SPDX-License-Identifier: Apache-2.0
#include "fedpeft/eval.hpp"

namespace fedpeft {

EvalResult evaluate(const Model& m, const std::vector<Instance>& instances) {
    if (instances.empty()) throw DataError("evaluate: empty instance list");
    std::size_t k = 0;
    for (const auto& inst : instances) k = std::max(k, inst.candidates.size());
    EvalResult r;
    r.confusion.assign(k, std::vector<long>(k, 0));
    for (const auto& inst : instances) {
        const int pred = predict(m, inst);
        ++r.n;
        if (pred == inst.gold) ++r.correct;
        ++r.confusion[static_cast<std::size_t>(inst.gold)][static_cast<std::size_t>(pred)];
    }
    r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.n);
    return r;
}

std::uint64_t eval_fingerprint(const std::vector<Instance>& instances) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    auto eat = [&h](std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xFF;
            h *= 0x100000001B3ull;
        }
    };
    eat(instances.size());
    for (const auto& inst : instances) {
        eat(static_cast<std::uint64_t>(inst.gold));
        eat(inst.prompt.size());
    }
    return h;
}

} // namespace fedpeft
