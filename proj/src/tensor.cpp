// SPDX-License-Identifier: Apache-2.0
#include "fedpeft/tensor.hpp"

namespace fedpeft {

namespace kernels {

void mm_nn_acc(const float* a, const float* b, float* c, long m, long k, long n) {
    for (long i = 0; i < m; ++i) {
        const float* ai = a + i * k;
        float* ci = c + i * n;
        for (long p = 0; p < k; ++p) {
            const float av = ai[p];
            if (av == 0.0f) continue;
            const float* bp = b + p * n;
            for (long j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

void mm_nt_acc(const float* a, const float* b, float* c, long m, long k, long n) {
    for (long i = 0; i < m; ++i) {
        const float* ai = a + i * k;
        float* ci = c + i * n;
        for (long j = 0; j < n; ++j) {
            const float* bj = b + j * k;
            float acc = 0.0f;
            for (long p = 0; p < k; ++p) acc += ai[p] * bj[p];
            ci[j] += acc;
        }
    }
}

void mm_tn_acc(const float* a, const float* b, float* c, long m, long k, long n) {
    for (long t = 0; t < m; ++t) {
        const float* at = a + t * k;
        const float* bt = b + t * n;
        for (long i = 0; i < k; ++i) {
            const float av = at[i];
            if (av == 0.0f) continue;
            float* ci = c + i * n;
            for (long j = 0; j < n; ++j) ci[j] += av * bt[j];
        }
    }
}

} // namespace kernels

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2) throw ShapeError("matmul: operands must be 2-D");
    if (a.cols() != b.rows()) throw ShapeError("matmul: inner extents disagree");
    Tensor c({a.rows(), b.cols()});
    kernels::mm_nn_acc(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.cols());
    return c;
}

} // namespace fedpeft
