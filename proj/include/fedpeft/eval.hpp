// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fedpeft/backbone.hpp"

#include <string>
#include <vector>

namespace fedpeft {

struct EvalResult {
    long n = 0;
    long correct = 0;
    double accuracy = 0.0;
    std::vector<std::vector<long>> confusion; // [gold][pred]
};

/// Exact-match accuracy over candidate indices; deterministic (no dropout).
EvalResult evaluate(const Model& m, const std::vector<Instance>& instances);

/// Fingerprint of an evaluation split (size + gold labels); scenario reports
/// must agree on it before they can be compared.
std::uint64_t eval_fingerprint(const std::vector<Instance>& instances);

} // namespace fedpeft
