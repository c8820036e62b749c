#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace akn {

using Dims = std::vector<std::size_t>;

// Raised when operand shapes disagree. The message names the offending dimension.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

inline std::string dims_to_string(const Dims& dims)
{
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < dims.size(); ++i)
        os << (i ? "x" : "") << dims[i];
    os << ']';
    return os.str();
}

inline std::size_t dims_product(const Dims& dims)
{
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

// Dense row-major tensor, last dimension fastest.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    explicit Tensor(Dims dims, T fill = T{0})
    : dims_(std::move(dims))
    , data_(dims_product(dims_), fill)
    {
        check_dims();
    }

    Tensor(Dims dims, std::vector<T> data)
    : dims_(std::move(dims))
    , data_(std::move(data))
    {
        check_dims();
        if (data_.size() != dims_product(dims_))
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match dims " + dims_to_string(dims_));
    }

    static Tensor scalar(T v) { return Tensor({1}, std::vector<T>{v}); }

    const Dims& dims() const { return dims_; }
    std::size_t dim(std::size_t i) const { return dims_.at(i); }
    std::size_t rank() const { return dims_.size(); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::span<const T> data() const { return data_; }
    std::span<T> data() { return data_; }
    const T* ptr() const { return data_.data(); }
    T* ptr() { return data_.data(); }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    template <typename... Idx>
    T& at(Idx... idx) { return data_[offset({static_cast<std::size_t>(idx)...})]; }
    template <typename... Idx>
    const T& at(Idx... idx) const { return data_[offset({static_cast<std::size_t>(idx)...})]; }

    T item() const
    {
        if (data_.size() != 1)
            throw ShapeError("item() on tensor of dims " + dims_to_string(dims_));
        return data_[0];
    }

    Tensor reshaped(Dims dims) const
    {
        if (dims_product(dims) != data_.size())
            throw ShapeError("cannot reshape " + dims_to_string(dims_) + " to " + dims_to_string(dims));
        return Tensor(std::move(dims), data_);
    }

    template <typename U>
    Tensor<U> cast() const
    {
        std::vector<U> out(data_.begin(), data_.end());
        return Tensor<U>(dims_, std::move(out));
    }

    bool all_finite() const
    {
        return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
    }

    Tensor& operator+=(const Tensor& other)
    {
        if (other.dims_ != dims_)
            throw ShapeError("accumulate " + dims_to_string(other.dims_) + " into " + dims_to_string(dims_));
        for (std::size_t i = 0; i < data_.size(); ++i)
            data_[i] += other.data_[i];
        return *this;
    }

    friend bool operator==(const Tensor& a, const Tensor& b) = default;

private:
    void check_dims() const
    {
        for (std::size_t i = 0; i < dims_.size(); ++i)
            if (dims_[i] == 0)
                throw ShapeError("dimension " + std::to_string(i) + " of " + dims_to_string(dims_) + " is zero");
    }

    std::size_t offset(std::initializer_list<std::size_t> idx) const
    {
        std::size_t off = 0;
        std::size_t d = 0;
        for (std::size_t i : idx)
            off = off * dims_[d++] + i;
        return off;
    }

    Dims dims_;
    std::vector<T> data_;
};

// Require `t` to have exactly `rank` dimensions; `what` names the operand in the error.
template <typename T>
void expect_rank(const Tensor<T>& t, std::size_t rank, const char* what)
{
    if (t.rank() != rank)
        throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                         dims_to_string(t.dims()));
}

template <typename T>
void expect_dim(const Tensor<T>& t, std::size_t axis, std::size_t value, const char* what)
{
    if (t.dim(axis) != value)
        throw ShapeError(std::string(what) + ": dimension " + std::to_string(axis) + " is " +
                         std::to_string(t.dim(axis)) + ", expected " + std::to_string(value));
}

} // namespace akn
