/*
 * Copyright (c) 2026, the shadowformer-cpp authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <vector>

#include "shadowformer/common.hpp"

namespace sf {

/// 64-byte-aligned allocator. Reductions over tensor data are auto-
/// vectorized; pinning the alignment pins the lane grouping, which keeps
/// results bitwise reproducible across allocations.
template <class T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::size_t alignment = 64;

    AlignedAllocator() = default;
    template <class U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept
    {
    }

    T* allocate(std::size_t n)
    {
        return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t(alignment)));
    }
    void deallocate(T* p, std::size_t) noexcept
    {
        ::operator delete(p, std::align_val_t(alignment));
    }
    template <class U>
    bool operator==(const AlignedAllocator<U>&) const noexcept
    {
        return true;
    }
    template <class U>
    bool operator!=(const AlignedAllocator<U>&) const noexcept
    {
        return false;
    }
};

/// Dense row-major tensor of doubles. The whole pipeline runs in 64-bit
/// precision; metrics and gradient checks rely on it.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::int64_t> shape) : shape_(std::move(shape))
    {
        std::int64_t n = 1;
        for (auto d : shape_) {
            if (d < 0) throw ShapeError(cat("negative tensor dimension ", d));
            n *= d;
        }
        data_.assign(static_cast<std::size_t>(n), 0.0);
    }

    Tensor(std::initializer_list<std::int64_t> shape)
        : Tensor(std::vector<std::int64_t>(shape))
    {
    }

    static Tensor zeros(std::vector<std::int64_t> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<std::int64_t> shape, double v)
    {
        Tensor t(std::move(shape));
        t.fill(v);
        return t;
    }

    int ndim() const { return static_cast<int>(shape_.size()); }
    const std::vector<std::int64_t>& shape() const { return shape_; }

    std::int64_t dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }

    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    // 2-D access (rows, cols).
    double& at(std::int64_t i, std::int64_t j) { return data_[static_cast<std::size_t>(i * shape_[1] + j)]; }
    double at(std::int64_t i, std::int64_t j) const { return data_[static_cast<std::size_t>(i * shape_[1] + j)]; }

    // 3-D access (c, y, x).
    double& at(std::int64_t c, std::int64_t y, std::int64_t x)
    {
        return data_[static_cast<std::size_t>((c * shape_[1] + y) * shape_[2] + x)];
    }
    double at(std::int64_t c, std::int64_t y, std::int64_t x) const
    {
        return data_[static_cast<std::size_t>((c * shape_[1] + y) * shape_[2] + x)];
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    /// Reinterprets the shape; the element count must not change.
    void set_shape(std::vector<std::int64_t> shape)
    {
        std::int64_t n = 1;
        for (auto d : shape) n *= d;
        if (n != numel()) throw ShapeError("set_shape: element count mismatch");
        shape_ = std::move(shape);
    }

    bool equals(const Tensor& o) const { return shape_ == o.shape_ && data_ == o.data_; }

private:
    std::vector<std::int64_t> shape_;
    std::vector<double, AlignedAllocator<double>> data_;
};

inline Tensor operator+(const Tensor& a, const Tensor& b)
{
    if (!a.same_shape(b)) throw ShapeError("tensor add: shape mismatch");
    Tensor out = a;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += b[i];
    return out;
}

inline Tensor operator-(const Tensor& a, const Tensor& b)
{
    if (!a.same_shape(b)) throw ShapeError("tensor sub: shape mismatch");
    Tensor out = a;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] -= b[i];
    return out;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b)
{
    if (!a.same_shape(b)) throw ShapeError("max_abs_diff: shape mismatch");
    double m = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace sf
