#include "dbigan/kernels.hpp"

#include <algorithm>
#include <cstddef>

namespace dbigan::kernels {

using Index = std::ptrdiff_t;

void dense_forward(const DenseGeometry& g, std::span<const double> x, std::span<const double> w,
                   std::span<const double> b, std::span<double> y) {
    const Index batch = static_cast<Index>(g.batch);
    const std::size_t in = g.in, out = g.out;
    const double* xp = x.data();
    const double* wp = w.data();
    const double* bp = b.empty() ? nullptr : b.data();
    double* yp = y.data();
#pragma omp parallel for schedule(static)
    for (Index n = 0; n < batch; ++n) {
        double* row = yp + n * static_cast<Index>(out);
        if (bp) std::copy_n(bp, out, row);
        else std::fill_n(row, out, 0.0);
        const double* xr = xp + n * static_cast<Index>(in);
        for (std::size_t i = 0; i < in; ++i) {
            const double v = xr[i];
            const double* wr = wp + i * out;
            for (std::size_t o = 0; o < out; ++o) row[o] += v * wr[o];
        }
    }
}

void dense_backward_input(const DenseGeometry& g, std::span<const double> gy, std::span<const double> w,
                          std::span<double> gx) {
    const Index batch = static_cast<Index>(g.batch);
    const std::size_t in = g.in, out = g.out;
    const double* gyp = gy.data();
    const double* wp = w.data();
    double* gxp = gx.data();
#pragma omp parallel for schedule(static)
    for (Index n = 0; n < batch; ++n) {
        const double* gr = gyp + n * static_cast<Index>(out);
        double* xr = gxp + n * static_cast<Index>(in);
        for (std::size_t i = 0; i < in; ++i) {
            const double* wr = wp + i * out;
            double acc = 0.0;
            for (std::size_t o = 0; o < out; ++o) acc += gr[o] * wr[o];
            xr[i] = acc;
        }
    }
}

void dense_backward_params(const DenseGeometry& g, std::span<const double> x, std::span<const double> gy,
                           std::span<double> gw, std::span<double> gb) {
    const std::size_t batch = g.batch, out = g.out;
    const Index in = static_cast<Index>(g.in);
    const double* xp = x.data();
    const double* gyp = gy.data();
    double* gwp = gw.data();
#pragma omp parallel for schedule(static)
    for (Index i = 0; i < in; ++i) {
        double* wr = gwp + i * static_cast<Index>(out);
        for (std::size_t n = 0; n < batch; ++n) {
            const double v = xp[n * static_cast<std::size_t>(in) + static_cast<std::size_t>(i)];
            const double* gr = gyp + n * out;
            for (std::size_t o = 0; o < out; ++o) wr[o] += v * gr[o];
        }
    }
    if (!gb.empty()) {
        for (std::size_t n = 0; n < batch; ++n) {
            const double* gr = gyp + n * out;
            for (std::size_t o = 0; o < out; ++o) gb[o] += gr[o];
        }
    }
}

void conv2d_forward(const ConvGeometry& g, std::span<const double> x, std::span<const double> w,
                    std::span<const double> b, std::span<double> y) {
    const Index rows = static_cast<Index>(g.batch * g.out_h);
    const Index ih = static_cast<Index>(g.in_h), iw = static_cast<Index>(g.in_w);
    const Index k = static_cast<Index>(g.kernel), s = static_cast<Index>(g.stride), p = static_cast<Index>(g.padding);
    const std::size_t ic = g.in_c, oc = g.out_c, ow = g.out_w, oh = g.out_h;
    const double* xp = x.data();
    const double* wp = w.data();
    const double* bp = b.empty() ? nullptr : b.data();
    double* yp = y.data();
#pragma omp parallel for schedule(static)
    for (Index r = 0; r < rows; ++r) {
        const Index n = r / static_cast<Index>(oh);
        const Index oy = r % static_cast<Index>(oh);
        for (std::size_t ox = 0; ox < ow; ++ox) {
            double* out = yp + (static_cast<std::size_t>(r) * ow + ox) * oc;
            if (bp) std::copy_n(bp, oc, out);
            else std::fill_n(out, oc, 0.0);
            for (Index ky = 0; ky < k; ++ky) {
                const Index iy = oy * s - p + ky;
                if (iy < 0 || iy >= ih) continue;
                for (Index kx = 0; kx < k; ++kx) {
                    const Index ix = static_cast<Index>(ox) * s - p + kx;
                    if (ix < 0 || ix >= iw) continue;
                    const double* xin = xp + ((n * ih + iy) * iw + ix) * static_cast<Index>(ic);
                    const double* wk = wp + (ky * k + kx) * static_cast<Index>(ic * oc);
                    for (std::size_t ci = 0; ci < ic; ++ci) {
                        const double v = xin[ci];
                        const double* wr = wk + ci * oc;
                        for (std::size_t co = 0; co < oc; ++co) out[co] += v * wr[co];
                    }
                }
            }
        }
    }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> gy, std::span<const double> w,
                           std::span<double> gx) {
    const Index rows = static_cast<Index>(g.batch * g.in_h);
    const Index oh = static_cast<Index>(g.out_h), ow = static_cast<Index>(g.out_w);
    const Index k = static_cast<Index>(g.kernel), s = static_cast<Index>(g.stride), p = static_cast<Index>(g.padding);
    const std::size_t ic = g.in_c, oc = g.out_c, iw = g.in_w, ih = g.in_h;
    const double* gyp = gy.data();
    const double* wp = w.data();
    double* gxp = gx.data();
#pragma omp parallel for schedule(static)
    for (Index r = 0; r < rows; ++r) {
        const Index n = r / static_cast<Index>(ih);
        const Index iy = r % static_cast<Index>(ih);
        for (std::size_t ix = 0; ix < iw; ++ix) {
            double* out = gxp + (static_cast<std::size_t>(r) * iw + ix) * ic;
            std::fill_n(out, ic, 0.0);
            for (Index ky = 0; ky < k; ++ky) {
                const Index ty = iy + p - ky;
                if (ty < 0 || ty % s != 0) continue;
                const Index oy = ty / s;
                if (oy >= oh) continue;
                for (Index kx = 0; kx < k; ++kx) {
                    const Index tx = static_cast<Index>(ix) + p - kx;
                    if (tx < 0 || tx % s != 0) continue;
                    const Index ox = tx / s;
                    if (ox >= ow) continue;
                    const double* gr = gyp + ((n * oh + oy) * ow + ox) * static_cast<Index>(oc);
                    const double* wk = wp + (ky * k + kx) * static_cast<Index>(ic * oc);
                    for (std::size_t ci = 0; ci < ic; ++ci) {
                        const double* wr = wk + ci * oc;
                        double acc = 0.0;
                        for (std::size_t co = 0; co < oc; ++co) acc += gr[co] * wr[co];
                        out[ci] += acc;
                    }
                }
            }
        }
    }
}

void conv2d_backward_params(const ConvGeometry& g, std::span<const double> x, std::span<const double> gy,
                            std::span<double> gw, std::span<double> gb) {
    const Index taps = static_cast<Index>(g.kernel * g.kernel * g.in_c);
    const Index ih = static_cast<Index>(g.in_h), iw = static_cast<Index>(g.in_w);
    const Index oh = static_cast<Index>(g.out_h), ow = static_cast<Index>(g.out_w);
    const Index k = static_cast<Index>(g.kernel), s = static_cast<Index>(g.stride), p = static_cast<Index>(g.padding);
    const Index ic = static_cast<Index>(g.in_c);
    const std::size_t oc = g.out_c;
    const Index batch = static_cast<Index>(g.batch);
    const double* xp = x.data();
    const double* gyp = gy.data();
    double* gwp = gw.data();
#pragma omp parallel for schedule(static)
    for (Index q = 0; q < taps; ++q) {
        const Index ci = q % ic;
        const Index kk = q / ic;
        const Index ky = kk / k, kx = kk % k;
        double* wr = gwp + q * static_cast<Index>(oc);
        for (Index n = 0; n < batch; ++n) {
            for (Index oy = 0; oy < oh; ++oy) {
                const Index iy = oy * s - p + ky;
                if (iy < 0 || iy >= ih) continue;
                for (Index ox = 0; ox < ow; ++ox) {
                    const Index ix = ox * s - p + kx;
                    if (ix < 0 || ix >= iw) continue;
                    const double v = xp[((n * ih + iy) * iw + ix) * ic + ci];
                    const double* gr = gyp + ((n * oh + oy) * ow + ox) * static_cast<Index>(oc);
                    for (std::size_t co = 0; co < oc; ++co) wr[co] += v * gr[co];
                }
            }
        }
    }
    if (!gb.empty()) {
        const std::size_t pixels = g.batch * g.out_h * g.out_w;
        for (std::size_t i = 0; i < pixels; ++i) {
            const double* gr = gyp + i * oc;
            for (std::size_t co = 0; co < oc; ++co) gb[co] += gr[co];
        }
    }
}

} // namespace dbigan::kernels
