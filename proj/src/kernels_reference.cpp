#include <algorithm>
#include <cstddef>
#include <vector>

#include "dbigan/kernels.hpp"

namespace dbigan::kernels::reference {

namespace {

std::size_t nhwc(std::size_t n, std::size_t y, std::size_t x, std::size_t c, std::size_t h, std::size_t w,
                 std::size_t channels) {
    return ((n * h + y) * w + x) * channels + c;
}

std::size_t weight_index(const ConvGeometry& g, std::size_t ky, std::size_t kx, std::size_t ci, std::size_t co) {
    return ((ky * g.kernel + kx) * g.in_c + ci) * g.out_c + co;
}

// Input coordinate touched by output coordinate `o` through kernel tap `t`,
// or -1 when it falls in the zero padding.
long input_coord(std::size_t o, std::size_t t, const ConvGeometry& g, std::size_t extent) {
    const long v = static_cast<long>(o * g.stride + t) - static_cast<long>(g.padding);
    return (v < 0 || v >= static_cast<long>(extent)) ? -1 : v;
}

} // namespace

void dense_forward(const DenseGeometry& g, std::span<const double> x, std::span<const double> w,
                   std::span<const double> b, std::span<double> y) {
    for (std::size_t n = 0; n < g.batch; ++n) {
        for (std::size_t o = 0; o < g.out; ++o) {
            double acc = 0.0;
            for (std::size_t i = 0; i < g.in; ++i) acc += x[n * g.in + i] * w[i * g.out + o];
            y[n * g.out + o] = acc + (b.empty() ? 0.0 : b[o]);
        }
    }
}

void dense_backward_input(const DenseGeometry& g, std::span<const double> gy, std::span<const double> w,
                          std::span<double> gx) {
    for (std::size_t n = 0; n < g.batch; ++n) {
        for (std::size_t i = 0; i < g.in; ++i) {
            double acc = 0.0;
            for (std::size_t o = 0; o < g.out; ++o) acc += gy[n * g.out + o] * w[i * g.out + o];
            gx[n * g.in + i] = acc;
        }
    }
}

void dense_backward_params(const DenseGeometry& g, std::span<const double> x, std::span<const double> gy,
                           std::span<double> gw, std::span<double> gb) {
    for (std::size_t i = 0; i < g.in; ++i) {
        for (std::size_t o = 0; o < g.out; ++o) {
            double acc = 0.0;
            for (std::size_t n = 0; n < g.batch; ++n) acc += x[n * g.in + i] * gy[n * g.out + o];
            gw[i * g.out + o] += acc;
        }
    }
    if (gb.empty()) return;
    for (std::size_t o = 0; o < g.out; ++o) {
        double acc = 0.0;
        for (std::size_t n = 0; n < g.batch; ++n) acc += gy[n * g.out + o];
        gb[o] += acc;
    }
}

void conv2d_forward(const ConvGeometry& g, std::span<const double> x, std::span<const double> w,
                    std::span<const double> b, std::span<double> y) {
    for (std::size_t n = 0; n < g.batch; ++n)
        for (std::size_t oy = 0; oy < g.out_h; ++oy)
            for (std::size_t ox = 0; ox < g.out_w; ++ox)
                for (std::size_t co = 0; co < g.out_c; ++co) {
                    double acc = 0.0;
                    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
                        const long iy = input_coord(oy, ky, g, g.in_h);
                        if (iy < 0) continue;
                        for (std::size_t kx = 0; kx < g.kernel; ++kx) {
                            const long ix = input_coord(ox, kx, g, g.in_w);
                            if (ix < 0) continue;
                            for (std::size_t ci = 0; ci < g.in_c; ++ci) {
                                acc += x[nhwc(n, iy, ix, ci, g.in_h, g.in_w, g.in_c)] * w[weight_index(g, ky, kx, ci, co)];
                            }
                        }
                    }
                    y[nhwc(n, oy, ox, co, g.out_h, g.out_w, g.out_c)] = acc + (b.empty() ? 0.0 : b[co]);
                }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> gy, std::span<const double> w,
                           std::span<double> gx) {
    std::fill(gx.begin(), gx.end(), 0.0);
    for (std::size_t n = 0; n < g.batch; ++n)
        for (std::size_t oy = 0; oy < g.out_h; ++oy)
            for (std::size_t ox = 0; ox < g.out_w; ++ox)
                for (std::size_t ky = 0; ky < g.kernel; ++ky) {
                    const long iy = input_coord(oy, ky, g, g.in_h);
                    if (iy < 0) continue;
                    for (std::size_t kx = 0; kx < g.kernel; ++kx) {
                        const long ix = input_coord(ox, kx, g, g.in_w);
                        if (ix < 0) continue;
                        for (std::size_t ci = 0; ci < g.in_c; ++ci)
                            for (std::size_t co = 0; co < g.out_c; ++co)
                                gx[nhwc(n, iy, ix, ci, g.in_h, g.in_w, g.in_c)] +=
                                    gy[nhwc(n, oy, ox, co, g.out_h, g.out_w, g.out_c)] * w[weight_index(g, ky, kx, ci, co)];
                    }
                }
}

void conv2d_backward_params(const ConvGeometry& g, std::span<const double> x, std::span<const double> gy,
                            std::span<double> gw, std::span<double> gb) {
    std::vector<double> acc(g.weight_size(), 0.0);
    std::vector<double> bias_acc(g.out_c, 0.0);
    for (std::size_t n = 0; n < g.batch; ++n)
        for (std::size_t oy = 0; oy < g.out_h; ++oy)
            for (std::size_t ox = 0; ox < g.out_w; ++ox)
                for (std::size_t co = 0; co < g.out_c; ++co) {
                    const double grad = gy[nhwc(n, oy, ox, co, g.out_h, g.out_w, g.out_c)];
                    bias_acc[co] += grad;
                    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
                        const long iy = input_coord(oy, ky, g, g.in_h);
                        if (iy < 0) continue;
                        for (std::size_t kx = 0; kx < g.kernel; ++kx) {
                            const long ix = input_coord(ox, kx, g, g.in_w);
                            if (ix < 0) continue;
                            for (std::size_t ci = 0; ci < g.in_c; ++ci)
                                acc[weight_index(g, ky, kx, ci, co)] += x[nhwc(n, iy, ix, ci, g.in_h, g.in_w, g.in_c)] * grad;
                        }
                    }
                }
    for (std::size_t i = 0; i < acc.size(); ++i) gw[i] += acc[i];
    if (!gb.empty())
        for (std::size_t co = 0; co < g.out_c; ++co) gb[co] += bias_acc[co];
}

} // namespace dbigan::kernels::reference
