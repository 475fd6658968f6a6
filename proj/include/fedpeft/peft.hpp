// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fedpeft/backbone.hpp"

namespace fedpeft {

/// Named tensor collection; used for both θ checkpoints and φ payloads.
using ParamSet = std::map<std::string, Tensor>;

/// Projection names eligible for LoRA, in architecture order.
extern const std::vector<std::string> kLoraProjections;
/// IA3 default targets.
extern const std::vector<std::string> kIa3Targets;

/// Freezes θ and installs the adapter's trainable set φ. LoRA starts with
/// A ~ N(0, 0.02), B = 0; IA3 vectors start at ones, so the adapted model is
/// initially behavior-identical to the backbone. Under qlora the frozen
/// weight matrices are additionally replaced by int8 blocks.
void attach(Model& m, AdapterSpec spec, Rng rng);

/// Module names in the architecture that LoRA would target.
std::vector<std::string> lora_targets(const Model& m);

ParamSet extract_phi(const Model& m);
void load_phi(Model& m, const ParamSet& phi);

/// Serialized size of φ values: 4 bytes per element, header excluded.
long trainable_bytes(const Model& m);

/// FNV-1a over φ bytes in name order.
std::uint64_t phi_checksum(const ParamSet& phi);

} // namespace fedpeft
