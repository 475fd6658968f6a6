// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fedpeft/tensor.hpp"

#include <cstdint>

namespace fedpeft {

// Blockwise absmax int8 container for frozen backbone weights. Blocks run
// over the flattened row-major data; an all-zero block has scale 0.
struct QuantizedTensor {
    std::vector<long> shape;
    long block = 64;
    Buffer<float> scales;     // absmax / 127 per block
    Buffer<std::int8_t> codes;

    long numel() const {
        long n = 1;
        for (long d : shape) n *= d;
        return n;
    }
    /// Dequantized value at flat index i.
    float value(long i) const { return static_cast<float>(codes[static_cast<std::size_t>(i)]) * scales[static_cast<std::size_t>(i / block)]; }
};

QuantizedTensor quantize(const Tensor& t, long block_size);
Tensor dequantize(const QuantizedTensor& q);
/// Dequantize into a caller-provided buffer of q.numel() floats.
void dequantize_into(const QuantizedTensor& q, float* out);

} // namespace fedpeft
