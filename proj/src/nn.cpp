// Copyright Contributors to the layersplat project
// SPDX-License-Identifier: Apache-2.0

#include <layersplat/errors.hpp>
#include <layersplat/nn.hpp>

#include <cmath>

namespace layersplat {

Tensor
conv2d(const Tensor &x, const Tensor &w, const Tensor &b, std::size_t stride, std::size_t pad) {
    if (x.rank() != 3 || w.rank() != 4 || w.shape()[1] != x.shape()[0] || w.shape()[2] != w.shape()[3] ||
        b.shape() != Shape{w.shape()[0]} || stride == 0) {
        throw ShapeError("conv2d: input " + shape_str(x.shape()) + ", weight " + shape_str(w.shape()) +
                         ", bias " + shape_str(b.shape()) + " are incompatible");
    }
    const std::size_t cin = x.shape()[0];
    const std::size_t h = x.shape()[1];
    const std::size_t wd = x.shape()[2];
    const std::size_t cout = w.shape()[0];
    const std::size_t k = w.shape()[2];
    if (h + 2 * pad < k || wd + 2 * pad < k) {
        throw ShapeError("conv2d: kernel larger than padded input " + shape_str(x.shape()));
    }
    const std::size_t ho = (h + 2 * pad - k) / stride + 1;
    const std::size_t wo = (wd + 2 * pad - k) / stride + 1;

    // Visits every (output pixel, input pixel) pair of one kernel tap.
    auto for_tap = [=](std::size_t ky, std::size_t kx, auto &&body) {
        for (std::size_t oy = 0; oy < ho; ++oy) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t ox = 0; ox < wo; ++ox) {
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) continue;
                body(oy * wo + ox, static_cast<std::size_t>(iy) * wd + static_cast<std::size_t>(ix));
            }
        }
    };

    const auto xv = x.data();
    const auto wv = w.data();
    const auto bv = b.data();
    std::vector<double> out(cout * ho * wo);
    for (std::size_t co = 0; co < cout; ++co) {
        double *o = out.data() + co * ho * wo;
        for (std::size_t p = 0; p < ho * wo; ++p) o[p] = bv[co];
        for (std::size_t ci = 0; ci < cin; ++ci) {
            const double *in = xv.data() + ci * h * wd;
            for (std::size_t ky = 0; ky < k; ++ky) {
                for (std::size_t kx = 0; kx < k; ++kx) {
                    const double wt = wv[((co * cin + ci) * k + ky) * k + kx];
                    for_tap(ky, kx, [&](std::size_t op, std::size_t ip) { o[op] += wt * in[ip]; });
                }
            }
        }
    }

    BackwardFn fn = [x, w, cin, h, wd, cout, k, ho, wo, for_tap](std::span<const double> g,
                                                                 std::span<std::vector<double> *> gin) {
        const auto xv = x.data();
        const auto wv = w.data();
        for (std::size_t co = 0; co < cout; ++co) {
            const double *go = g.data() + co * ho * wo;
            if (gin[2]) {
                double total = 0.0;
                for (std::size_t p = 0; p < ho * wo; ++p) total += go[p];
                (*gin[2])[co] += total;
            }
            for (std::size_t ci = 0; ci < cin; ++ci) {
                const double *in = xv.data() + ci * h * wd;
                for (std::size_t ky = 0; ky < k; ++ky) {
                    for (std::size_t kx = 0; kx < k; ++kx) {
                        const std::size_t wi = ((co * cin + ci) * k + ky) * k + kx;
                        if (gin[1]) {
                            double acc = 0.0;
                            for_tap(ky, kx, [&](std::size_t op, std::size_t ip) { acc += go[op] * in[ip]; });
                            (*gin[1])[wi] += acc;
                        }
                        if (gin[0]) {
                            double *gx = gin[0]->data() + ci * h * wd;
                            const double wt = wv[wi];
                            for_tap(ky, kx, [&](std::size_t op, std::size_t ip) { gx[ip] += wt * go[op]; });
                        }
                    }
                }
            }
        }
    };
    return make_result({x, w, b}, {cout, ho, wo}, std::move(out), std::move(fn));
}

Tensor
upsample2x(const Tensor &x) {
    if (x.rank() != 3) {
        throw ShapeError("upsample2x expects [C,H,W], got " + shape_str(x.shape()));
    }
    const std::size_t c = x.shape()[0];
    const std::size_t h = x.shape()[1];
    const std::size_t w = x.shape()[2];
    const auto xv = x.data();
    std::vector<double> out(c * 4 * h * w);
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < 2 * h; ++y)
            for (std::size_t xx = 0; xx < 2 * w; ++xx)
                out[(ch * 2 * h + y) * 2 * w + xx] = xv[(ch * h + y / 2) * w + xx / 2];
    BackwardFn fn = [c, h, w](std::span<const double> g, std::span<std::vector<double> *> gin) {
        auto &gx = *gin[0];
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t y = 0; y < 2 * h; ++y)
                for (std::size_t xx = 0; xx < 2 * w; ++xx)
                    gx[(ch * h + y / 2) * w + xx / 2] += g[(ch * 2 * h + y) * 2 * w + xx];
    };
    return make_result({x}, {c, 2 * h, 2 * w}, std::move(out), std::move(fn));
}

Conv2dLayer
Conv2dLayer::init(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
                  std::mt19937_64 &rng, double gain) {
    const double bound = gain * std::sqrt(6.0 / static_cast<double>(in * kernel * kernel));
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> v(out * in * kernel * kernel);
    for (auto &x : v) x = dist(rng);
    Conv2dLayer layer;
    layer.weight = Tensor({out, in, kernel, kernel}, std::move(v));
    layer.bias = Tensor::zeros({out});
    layer.stride = stride;
    layer.pad = kernel / 2;
    return layer;
}

} // namespace layersplat
