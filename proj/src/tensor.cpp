#include "dbigan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "dbigan/error.hpp"

namespace dbigan {

std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ')';
    return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), data_(std::move(values)) {
    if (data_.size() != shape_size(shape_)) {
        throw ConfigError("tensor data size " + std::to_string(data_.size()) + " does not match shape " +
                          shape_string(shape_));
    }
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_size(shape) != size()) {
        throw ConfigError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    Tensor out;
    out.shape_ = std::move(shape);
    out.data_ = data_;
    return out;
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::slice_batch(std::size_t begin, std::size_t count) const {
    if (begin + count > batch()) throw ConfigError("batch slice out of range");
    Shape s = shape_;
    s[0] = count;
    const std::size_t stride = sample_size();
    std::vector<double> v(data_.begin() + static_cast<std::ptrdiff_t>(begin * stride),
                          data_.begin() + static_cast<std::ptrdiff_t>((begin + count) * stride));
    return Tensor(std::move(s), std::move(v));
}

Tensor Tensor::gather_batch(std::span<const std::size_t> rows) const {
    Shape s = shape_;
    s[0] = rows.size();
    Tensor out(std::move(s));
    const std::size_t stride = sample_size();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= batch()) throw ConfigError("batch gather index out of range");
        std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(rows[i] * stride), stride,
                    out.data_.begin() + static_cast<std::ptrdiff_t>(i * stride));
    }
    return out;
}

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void add_into(Tensor& dst, const Tensor& src) {
    if (dst.size() != src.size()) {
        throw ConfigError("add: size mismatch " + shape_string(dst.shape()) + " vs " + shape_string(src.shape()));
    }
    double* d = dst.data();
    const double* s = src.data();
    for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

Tensor subtract(const Tensor& a, const Tensor& b) {
    if (a.size() != b.size()) throw ConfigError("subtract: size mismatch");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

Tensor scaled(const Tensor& t, double factor) {
    Tensor out = t;
    for (auto& v : out.values()) v *= factor;
    return out;
}

double max_abs(const Tensor& t) {
    double m = 0.0;
    for (double v : t.values()) m = std::max(m, std::abs(v));
    return m;
}

} // namespace dbigan
