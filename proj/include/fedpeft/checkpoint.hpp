// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fedpeft/peft.hpp"

#include <string>

namespace fedpeft {

// Flat binary container of named tensors: a versioned metadata header
// (magic, version, entries with name + shape) followed by the concatenated
// raw little-endian 32-bit values in entry order. Used for θ checkpoints
// and φ payloads alike.
struct CheckpointInfo {
    long header_bytes = 0;
    long payload_bytes = 0;
};

void save_paramset(const std::string& path, const ParamSet& tensors);
ParamSet load_paramset(const std::string& path);
/// Parses the header without loading tensor data.
CheckpointInfo checkpoint_info(const std::string& path);

} // namespace fedpeft
