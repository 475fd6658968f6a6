// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fedpeft/errors.hpp"
#include "fedpeft/memtrack.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

namespace fedpeft {

/// Flat typed storage charged against the ambient memory meter.
template <typename T>
class Buffer {
  public:
    Buffer() = default;
    explicit Buffer(std::size_t n) : n_(n) {
        if (n_ == 0) return;
        data_ = std::make_unique<T[]>(n_);
        meter_ = memtrack::ambient();
        meter_->add(bytes());
    }
    Buffer(const Buffer& o) : Buffer(o.n_) {
        if (n_) std::copy(o.data_.get(), o.data_.get() + n_, data_.get());
    }
    Buffer(Buffer&& o) noexcept : n_(o.n_), data_(std::move(o.data_)), meter_(std::move(o.meter_)) { o.n_ = 0; }
    Buffer& operator=(const Buffer& o) {
        if (this != &o) {
            Buffer tmp(o);
            *this = std::move(tmp);
        }
        return *this;
    }
    Buffer& operator=(Buffer&& o) noexcept {
        if (this != &o) {
            release();
            n_ = o.n_;
            data_ = std::move(o.data_);
            meter_ = std::move(o.meter_);
            o.n_ = 0;
        }
        return *this;
    }
    ~Buffer() { release(); }

    T* data() { return data_.get(); }
    const T* data() const { return data_.get(); }
    std::size_t size() const { return n_; }
    std::int64_t bytes() const { return static_cast<std::int64_t>(n_ * sizeof(T)); }
    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

  private:
    void release() {
        if (meter_) meter_->sub(bytes());
        data_.reset();
        n_ = 0;
        meter_.reset();
    }
    std::size_t n_ = 0;
    std::unique_ptr<T[]> data_;
    std::shared_ptr<memtrack::Meter> meter_;
};

/// Dense row-major 32-bit tensor.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::vector<long> shape) : shape_(std::move(shape)), data_(checked_numel(shape_)) {}

    static Tensor zeros(std::vector<long> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<long> shape, float v) {
        Tensor t(std::move(shape));
        std::fill(t.data(), t.data() + t.numel(), v);
        return t;
    }
    static Tensor from(std::vector<long> shape, std::initializer_list<float> vals) {
        Tensor t(std::move(shape));
        if (static_cast<long>(vals.size()) != t.numel()) throw ShapeError("Tensor::from: value count mismatch");
        std::copy(vals.begin(), vals.end(), t.data());
        return t;
    }

    const std::vector<long>& shape() const { return shape_; }
    long numel() const { return static_cast<long>(data_.size()); }
    int ndim() const { return static_cast<int>(shape_.size()); }
    long dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
    long rows() const { return require_2d(), shape_[0]; }
    long cols() const { return require_2d(), shape_[1]; }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    float& operator()(long i) { return data_[static_cast<std::size_t>(i)]; }
    float operator()(long i) const { return data_[static_cast<std::size_t>(i)]; }
    float& operator()(long i, long j) { return data_[static_cast<std::size_t>(i * shape_[1] + j)]; }
    float operator()(long i, long j) const { return data_[static_cast<std::size_t>(i * shape_[1] + j)]; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (long i = 0; i < numel(); ++i)
            if (!std::isfinite(data_[static_cast<std::size_t>(i)])) return false;
        return true;
    }
    void check_finite(const std::string& what) const {
        if (!all_finite()) throw NumericError("non-finite values in " + what);
    }

  private:
    static std::size_t checked_numel(const std::vector<long>& shape) {
        long n = 1;
        for (long d : shape) {
            if (d < 0) throw ShapeError("negative tensor extent");
            n *= d;
        }
        return static_cast<std::size_t>(n);
    }
    void require_2d() const {
        if (shape_.size() != 2) throw ShapeError("expected a 2-D tensor");
    }

    std::vector<long> shape_;
    Buffer<float> data_;
};

/// Standard product a[m,k] x b[k,n]; throws on inner-extent mismatch.
Tensor matmul(const Tensor& a, const Tensor& b);

namespace kernels {
// C[m,n] += A[m,k] B[k,n]
void mm_nn_acc(const float* a, const float* b, float* c, long m, long k, long n);
// C[m,n] += A[m,k] B[n,k]^T
void mm_nt_acc(const float* a, const float* b, float* c, long m, long k, long n);
// C[k,n] += A[m,k]^T B[m,n]
void mm_tn_acc(const float* a, const float* b, float* c, long m, long k, long n);
} // namespace kernels

} // namespace fedpeft
