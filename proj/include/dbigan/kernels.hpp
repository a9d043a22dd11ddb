#pragma once

#include <cstddef>
#include <span>

namespace dbigan::kernels {

struct DenseGeometry {
    std::size_t batch = 0;
    std::size_t in = 0;
    std::size_t out = 0;
};

// NHWC activations, weights laid out [ky][kx][in_c][out_c], zero padding.
struct ConvGeometry {
    std::size_t batch = 0;
    std::size_t in_h = 0, in_w = 0, in_c = 0;
    std::size_t out_h = 0, out_w = 0, out_c = 0;
    std::size_t kernel = 1;
    std::size_t stride = 1;
    std::size_t padding = 0;

    std::size_t input_size() const { return batch * in_h * in_w * in_c; }
    std::size_t output_size() const { return batch * out_h * out_w * out_c; }
    std::size_t weight_size() const { return kernel * kernel * in_c * out_c; }
};

// Forward and input-gradient kernels overwrite their output. Parameter
// gradient kernels accumulate, since one network may appear several times in
// a single loss graph. An empty bias span means "no bias".
//
// Every kernel parallelises over output elements only, so results do not
// depend on the thread count.

void dense_forward(const DenseGeometry& g, std::span<const double> x, std::span<const double> w,
                   std::span<const double> b, std::span<double> y);
void dense_backward_input(const DenseGeometry& g, std::span<const double> gy, std::span<const double> w,
                          std::span<double> gx);
void dense_backward_params(const DenseGeometry& g, std::span<const double> x, std::span<const double> gy,
                           std::span<double> gw, std::span<double> gb);

void conv2d_forward(const ConvGeometry& g, std::span<const double> x, std::span<const double> w,
                    std::span<const double> b, std::span<double> y);
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> gy, std::span<const double> w,
                           std::span<double> gx);
void conv2d_backward_params(const ConvGeometry& g, std::span<const double> x, std::span<const double> gy,
                            std::span<double> gw, std::span<double> gb);

// Straight-line serial versions with a different loop order (scatter instead
// of gather for the input gradient). Used as the oracle for the OpenMP
// kernels in tests and as the baseline in the benchmark.
namespace reference {

void dense_forward(const DenseGeometry& g, std::span<const double> x, std::span<const double> w,
                   std::span<const double> b, std::span<double> y);
void dense_backward_input(const DenseGeometry& g, std::span<const double> gy, std::span<const double> w,
                          std::span<double> gx);
void dense_backward_params(const DenseGeometry& g, std::span<const double> x, std::span<const double> gy,
                           std::span<double> gw, std::span<double> gb);

void conv2d_forward(const ConvGeometry& g, std::span<const double> x, std::span<const double> w,
                    std::span<const double> b, std::span<double> y);
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> gy, std::span<const double> w,
                           std::span<double> gx);
void conv2d_backward_params(const ConvGeometry& g, std::span<const double> x, std::span<const double> gy,
                            std::span<double> gw, std::span<double> gb);

} // namespace reference

} // namespace dbigan::kernels
