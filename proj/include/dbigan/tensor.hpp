#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace dbigan {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major tensor of doubles. Image batches are laid out NHWC, so the
// leading dimension is always the batch.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> values);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    // Leading dimension; a scalar counts as a batch of one.
    std::size_t batch() const { return shape_.empty() ? 1 : shape_[0]; }
    std::size_t sample_size() const { return batch() == 0 ? 0 : size() / batch(); }

    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }
    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    Tensor reshaped(Shape shape) const;
    void fill(double v);

    // Rows [begin, begin + count) along the batch dimension.
    Tensor slice_batch(std::size_t begin, std::size_t count) const;
    // Gathers the given batch rows in order.
    Tensor gather_batch(std::span<const std::size_t> rows) const;

    bool all_finite() const;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

void add_into(Tensor& dst, const Tensor& src);
Tensor subtract(const Tensor& a, const Tensor& b);
Tensor scaled(const Tensor& t, double factor);
double max_abs(const Tensor& t);

} // namespace dbigan
