// SPDX-License-Identifier: Apache-2.0
#include "fedpeft/quant.hpp"

#include <cmath>

namespace fedpeft {

QuantizedTensor quantize(const Tensor& t, long block_size) {
    if (block_size < 2) throw ConfigError("quantize: block size must be >= 2");
    QuantizedTensor q;
    q.shape = t.shape();
    q.block = block_size;
    const long n = t.numel();
    const long nblocks = (n + block_size - 1) / block_size;
    q.scales = Buffer<float>(static_cast<std::size_t>(nblocks));
    q.codes = Buffer<std::int8_t>(static_cast<std::size_t>(n));
    for (long b = 0; b < nblocks; ++b) {
        const long lo = b * block_size;
        const long hi = std::min(n, lo + block_size);
        float absmax = 0.0f;
        for (long i = lo; i < hi; ++i) absmax = std::max(absmax, std::fabs(t.data()[i]));
        const float scale = absmax / 127.0f;
        q.scales[static_cast<std::size_t>(b)] = scale;
        for (long i = lo; i < hi; ++i) {
            std::int8_t code = 0;
            if (scale > 0.0f) {
                // round half away from zero
                float v = t.data()[i] / scale;
                code = static_cast<std::int8_t>(v >= 0.0f ? std::floor(v + 0.5f) : std::ceil(v - 0.5f));
            }
            q.codes[static_cast<std::size_t>(i)] = code;
        }
    }
    return q;
}

Tensor dequantize(const QuantizedTensor& q) {
    Tensor t(q.shape);
    dequantize_into(q, t.data());
    return t;
}

void dequantize_into(const QuantizedTensor& q, float* out) {
    const long n = q.numel();
    for (long i = 0; i < n; ++i)
        out[i] = static_cast<float>(q.codes[static_cast<std::size_t>(i)]) * q.scales[static_cast<std::size_t>(i / q.block)];
}

} // namespace fedpeft
