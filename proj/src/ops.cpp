// Copyright Contributors to the layersplat project
// SPDX-License-Identifier: Apache-2.0

#include <layersplat/errors.hpp>
#include <layersplat/ops.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace layersplat {

namespace {

using IndexMap = std::shared_ptr<const std::vector<std::size_t>>;

// Maps every flat output index to the flat index of `in` under broadcasting; null means
// identity (same shape).
IndexMap
broadcast_index(const Shape &in, const Shape &out) {
    if (in == out) {
        return nullptr;
    }
    const std::size_t n = shape_numel(out);
    auto idx = std::make_shared<std::vector<std::size_t>>(n, 0);
    if (shape_numel(in) == 1) {
        return idx;
    }

    const std::size_t rank = out.size();
    const std::size_t offset = rank - in.size();
    std::vector<std::size_t> stride(rank, 0);
    std::size_t s = 1;
    for (std::size_t d = in.size(); d-- > 0;) {
        stride[d + offset] = in[d] == 1 ? 0 : s;
        s *= in[d];
    }

    std::vector<std::size_t> counter(rank, 0);
    std::size_t flat = 0;
    for (std::size_t i = 0; i < n; ++i) {
        (*idx)[i] = flat;
        for (std::size_t d = rank; d-- > 0;) {
            ++counter[d];
            flat += stride[d];
            if (counter[d] < out[d]) {
                break;
            }
            flat -= stride[d] * counter[d];
            counter[d] = 0;
        }
    }
    return idx;
}

inline std::size_t
at(const IndexMap &map, std::size_t i) {
    return map ? (*map)[i] : i;
}

inline double
stable_sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double
stable_softplus(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

const char *
kind_name(Elementwise kind) {
    switch (kind) {
    case Elementwise::add: return "add";
    case Elementwise::sub: return "sub";
    case Elementwise::mul: return "mul";
    case Elementwise::div: return "div";
    case Elementwise::pow: return "pow";
    case Elementwise::exp: return "exp";
    case Elementwise::log: return "log";
    case Elementwise::sigmoid: return "sigmoid";
    case Elementwise::softplus: return "softplus";
    case Elementwise::relu: return "relu";
    case Elementwise::neg: return "neg";
    case Elementwise::tanh: return "tanh";
    case Elementwise::sqrt: return "sqrt";
    case Elementwise::abs: return "abs";
    }
    return "?";
}

Tensor
binary(Elementwise kind, const Tensor &a, const Tensor &b) {
    Shape out_shape = broadcast_shape(a.shape(), b.shape());
    const IndexMap ia = broadcast_index(a.shape(), out_shape);
    const IndexMap ib = broadcast_index(b.shape(), out_shape);
    const std::size_t n = shape_numel(out_shape);
    const auto av = a.data();
    const auto bv = b.data();

    std::vector<double> out(n);
    switch (kind) {
    case Elementwise::add:
        for (std::size_t i = 0; i < n; ++i) out[i] = av[at(ia, i)] + bv[at(ib, i)];
        break;
    case Elementwise::sub:
        for (std::size_t i = 0; i < n; ++i) out[i] = av[at(ia, i)] - bv[at(ib, i)];
        break;
    case Elementwise::mul:
        for (std::size_t i = 0; i < n; ++i) out[i] = av[at(ia, i)] * bv[at(ib, i)];
        break;
    case Elementwise::div:
        for (std::size_t i = 0; i < n; ++i) out[i] = av[at(ia, i)] / bv[at(ib, i)];
        break;
    case Elementwise::pow:
        for (std::size_t i = 0; i < n; ++i) out[i] = std::pow(av[at(ia, i)], bv[at(ib, i)]);
        break;
    default: throw ShapeError(std::string("not a binary op: ") + kind_name(kind));
    }

    if (!a.on_tape() && !b.on_tape()) {
        return Tensor(std::move(out_shape), std::move(out));
    }
    std::shared_ptr<const std::vector<double>> result;
    if (kind == Elementwise::pow) {
        result = std::make_shared<const std::vector<double>>(out);
    }
    BackwardFn fn = [kind, a, b, ia, ib, result](std::span<const double> g,
                                                 std::span<std::vector<double> *> gin) {
        const auto av = a.data();
        const auto bv = b.data();
        std::vector<double> *ga = gin[0];
        std::vector<double> *gb = gin[1];
        const std::size_t n = g.size();
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t xa = at(ia, i);
            const std::size_t xb = at(ib, i);
            const double x = av[xa];
            const double y = bv[xb];
            double da = 0.0;
            double db = 0.0;
            switch (kind) {
            case Elementwise::add: da = 1.0; db = 1.0; break;
            case Elementwise::sub: da = 1.0; db = -1.0; break;
            case Elementwise::mul: da = y; db = x; break;
            case Elementwise::div: da = 1.0 / y; db = -x / (y * y); break;
            case Elementwise::pow: {
                da = y * std::pow(x, y - 1.0);
                const double r = (*result)[i];
                db = r == 0.0 ? 0.0 : r * std::log(x);
                break;
            }
            default: break;
            }
            if (ga) (*ga)[xa] += g[i] * da;
            if (gb) (*gb)[xb] += g[i] * db;
        }
    };
    return make_result({a, b}, std::move(out_shape), std::move(out), std::move(fn));
}

Tensor
unary(Elementwise kind, const Tensor &a) {
    const auto av = a.data();
    const std::size_t n = av.size();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = av[i];
        switch (kind) {
        case Elementwise::exp: out[i] = std::exp(x); break;
        case Elementwise::log: out[i] = std::log(x); break;
        case Elementwise::sigmoid: out[i] = stable_sigmoid(x); break;
        case Elementwise::softplus: out[i] = stable_softplus(x); break;
        case Elementwise::relu: out[i] = x > 0.0 ? x : 0.0; break;
        case Elementwise::neg: out[i] = -x; break;
        case Elementwise::tanh: out[i] = std::tanh(x); break;
        case Elementwise::sqrt: out[i] = std::sqrt(x); break;
        case Elementwise::abs: out[i] = std::abs(x); break;
        default: throw ShapeError(std::string("not a unary op: ") + kind_name(kind));
        }
    }
    if (!a.on_tape()) {
        return Tensor(a.shape(), std::move(out));
    }
    auto result = std::make_shared<std::vector<double>>(out);
    BackwardFn fn = [kind, a, result](std::span<const double> g,
                                      std::span<std::vector<double> *> gin) {
        auto &ga = *gin[0];
        const auto av = a.data();
        const auto &r = *result;
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double x = av[i];
            double d = 0.0;
            switch (kind) {
            case Elementwise::exp: d = r[i]; break;
            case Elementwise::log: d = 1.0 / x; break;
            case Elementwise::sigmoid: d = r[i] * (1.0 - r[i]); break;
            case Elementwise::softplus: d = stable_sigmoid(x); break;
            case Elementwise::relu: d = x > 0.0 ? 1.0 : 0.0; break;
            case Elementwise::neg: d = -1.0; break;
            case Elementwise::tanh: d = 1.0 - r[i] * r[i]; break;
            case Elementwise::sqrt: d = 0.5 / r[i]; break;
            case Elementwise::abs: d = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); break;
            default: break;
            }
            ga[i] += g[i] * d;
        }
    };
    return make_result({a}, a.shape(), std::move(out), std::move(fn));
}

void
check_axis(const Tensor &a, std::size_t axis, const char *op) {
    if (axis >= a.rank()) {
        throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for shape " + shape_str(a.shape()));
    }
}

// Splits a shape around `axis` into (outer, extent, inner) loop counts.
struct AxisSplit {
    std::size_t outer = 1;
    std::size_t extent = 1;
    std::size_t inner = 1;
};

AxisSplit
split_at(const Shape &shape, std::size_t axis) {
    AxisSplit s;
    for (std::size_t d = 0; d < axis; ++d) s.outer *= shape[d];
    s.extent = shape[axis];
    for (std::size_t d = axis + 1; d < shape.size(); ++d) s.inner *= shape[d];
    return s;
}

} // namespace

bool
is_binary(Elementwise kind) {
    switch (kind) {
    case Elementwise::add:
    case Elementwise::sub:
    case Elementwise::mul:
    case Elementwise::div:
    case Elementwise::pow: return true;
    default: return false;
    }
}

Shape
broadcast_shape(const Shape &a, const Shape &b) {
    const std::size_t rank = std::max(a.size(), b.size());
    Shape out(rank, 1);
    for (std::size_t i = 0; i < rank; ++i) {
        const std::size_t da = i < a.size() ? a[a.size() - 1 - i] : 1;
        const std::size_t db = i < b.size() ? b[b.size() - 1 - i] : 1;
        if (da != db && da != 1 && db != 1) {
            throw ShapeError("shapes " + shape_str(a) + " and " + shape_str(b) +
                             " are not broadcast-compatible");
        }
        out[rank - 1 - i] = da == 1 ? db : da;
    }
    return out;
}

Tensor
elementwise(Elementwise kind, const Tensor &a, const std::optional<Tensor> &b) {
    if (is_binary(kind)) {
        if (!b) {
            throw ShapeError(std::string(kind_name(kind)) + " requires two operands");
        }
        return binary(kind, a, *b);
    }
    return unary(kind, a);
}

Tensor add(const Tensor &a, const Tensor &b) { return binary(Elementwise::add, a, b); }
Tensor sub(const Tensor &a, const Tensor &b) { return binary(Elementwise::sub, a, b); }
Tensor mul(const Tensor &a, const Tensor &b) { return binary(Elementwise::mul, a, b); }
Tensor div(const Tensor &a, const Tensor &b) { return binary(Elementwise::div, a, b); }
Tensor pow(const Tensor &a, const Tensor &b) { return binary(Elementwise::pow, a, b); }
Tensor exp(const Tensor &a) { return unary(Elementwise::exp, a); }
Tensor log(const Tensor &a) { return unary(Elementwise::log, a); }
Tensor sigmoid(const Tensor &a) { return unary(Elementwise::sigmoid, a); }
Tensor softplus(const Tensor &a) { return unary(Elementwise::softplus, a); }
Tensor relu(const Tensor &a) { return unary(Elementwise::relu, a); }
Tensor neg(const Tensor &a) { return unary(Elementwise::neg, a); }
Tensor tanh(const Tensor &a) { return unary(Elementwise::tanh, a); }
Tensor sqrt(const Tensor &a) { return unary(Elementwise::sqrt, a); }
Tensor abs(const Tensor &a) { return unary(Elementwise::abs, a); }

Tensor operator+(const Tensor &a, const Tensor &b) { return add(a, b); }
Tensor operator-(const Tensor &a, const Tensor &b) { return sub(a, b); }
Tensor operator*(const Tensor &a, const Tensor &b) { return mul(a, b); }
Tensor operator/(const Tensor &a, const Tensor &b) { return div(a, b); }
Tensor operator-(const Tensor &a) { return neg(a); }
Tensor operator+(const Tensor &a, double b) { return add(a, Tensor::scalar(b)); }
Tensor operator-(const Tensor &a, double b) { return sub(a, Tensor::scalar(b)); }
Tensor operator*(const Tensor &a, double b) { return mul(a, Tensor::scalar(b)); }
Tensor operator*(double a, const Tensor &b) { return mul(Tensor::scalar(a), b); }
Tensor operator/(const Tensor &a, double b) { return div(a, Tensor::scalar(b)); }
Tensor operator+(double a, const Tensor &b) { return add(Tensor::scalar(a), b); }
Tensor operator-(double a, const Tensor &b) { return sub(Tensor::scalar(a), b); }

Tensor
clamp(const Tensor &a, double lo, double hi) {
    const auto av = a.data();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) {
        out[i] = std::clamp(av[i], lo, hi);
    }
    BackwardFn fn = [a, lo, hi](std::span<const double> g, std::span<std::vector<double> *> gin) {
        const auto av = a.data();
        auto &ga = *gin[0];
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (av[i] >= lo && av[i] <= hi) {
                ga[i] += g[i];
            }
        }
    };
    return make_result({a}, a.shape(), std::move(out), std::move(fn));
}

Tensor
sum(const Tensor &a) {
    double total = 0.0;
    for (const double v : a.data()) {
        total += v;
    }
    BackwardFn fn = [](std::span<const double> g, std::span<std::vector<double> *> gin) {
        for (auto &v : *gin[0]) v += g[0];
    };
    return make_result({a}, {}, {total}, std::move(fn));
}

Tensor
mean(const Tensor &a) {
    const double n = static_cast<double>(a.numel());
    double total = 0.0;
    for (const double v : a.data()) {
        total += v;
    }
    BackwardFn fn = [n](std::span<const double> g, std::span<std::vector<double> *> gin) {
        for (auto &v : *gin[0]) v += g[0] / n;
    };
    return make_result({a}, {}, {total / n}, std::move(fn));
}

Tensor
sum(const Tensor &a, std::size_t axis, bool keepdim) {
    check_axis(a, axis, "sum");
    const AxisSplit s = split_at(a.shape(), axis);
    const auto av = a.data();
    std::vector<double> out(s.outer * s.inner, 0.0);
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t k = 0; k < s.extent; ++k) {
            const double *row = av.data() + (o * s.extent + k) * s.inner;
            double *dst = out.data() + o * s.inner;
            for (std::size_t i = 0; i < s.inner; ++i) dst[i] += row[i];
        }
    }
    Shape shape = a.shape();
    if (keepdim) {
        shape[axis] = 1;
    } else {
        shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
    }
    BackwardFn fn = [s](std::span<const double> g, std::span<std::vector<double> *> gin) {
        auto &ga = *gin[0];
        for (std::size_t o = 0; o < s.outer; ++o) {
            for (std::size_t k = 0; k < s.extent; ++k) {
                for (std::size_t i = 0; i < s.inner; ++i) {
                    ga[(o * s.extent + k) * s.inner + i] += g[o * s.inner + i];
                }
            }
        }
    };
    return make_result({a}, std::move(shape), std::move(out), std::move(fn));
}

Tensor
reshape(const Tensor &a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        throw ShapeError("cannot reshape " + shape_str(a.shape()) + " to " + shape_str(shape));
    }
    std::vector<double> out(a.data().begin(), a.data().end());
    BackwardFn fn = [](std::span<const double> g, std::span<std::vector<double> *> gin) {
        auto &ga = *gin[0];
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    };
    return make_result({a}, std::move(shape), std::move(out), std::move(fn));
}

Tensor
permute(const Tensor &a, const std::vector<std::size_t> &perm) {
    const std::size_t rank = a.rank();
    std::vector<bool> seen(rank, false);
    if (perm.size() != rank) {
        throw ShapeError("permute: permutation rank mismatch for shape " + shape_str(a.shape()));
    }
    for (const auto p : perm) {
        if (p >= rank || seen[p]) {
            throw ShapeError("permute: invalid permutation for shape " + shape_str(a.shape()));
        }
        seen[p] = true;
    }

    Shape out_shape(rank);
    std::vector<std::size_t> in_stride(rank);
    std::size_t s = 1;
    for (std::size_t d = rank; d-- > 0;) {
        in_stride[d] = s;
        s *= a.shape()[d];
    }
    std::vector<std::size_t> stride(rank);
    for (std::size_t d = 0; d < rank; ++d) {
        out_shape[d] = a.shape()[perm[d]];
        stride[d] = in_stride[perm[d]];
    }

    // src[i] = flat input index of flat output index i
    const std::size_t n = a.numel();
    auto src = std::make_shared<std::vector<std::size_t>>(n);
    std::vector<std::size_t> counter(rank, 0);
    std::size_t flat = 0;
    for (std::size_t i = 0; i < n; ++i) {
        (*src)[i] = flat;
        for (std::size_t d = rank; d-- > 0;) {
            ++counter[d];
            flat += stride[d];
            if (counter[d] < out_shape[d]) {
                break;
            }
            flat -= stride[d] * counter[d];
            counter[d] = 0;
        }
    }

    const auto av = a.data();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = av[(*src)[i]];
    BackwardFn fn = [src](std::span<const double> g, std::span<std::vector<double> *> gin) {
        auto &ga = *gin[0];
        for (std::size_t i = 0; i < g.size(); ++i) ga[(*src)[i]] += g[i];
    };
    return make_result({a}, std::move(out_shape), std::move(out), std::move(fn));
}

Tensor
transpose(const Tensor &a) {
    if (a.rank() != 2) {
        throw ShapeError("transpose expects rank 2, got " + shape_str(a.shape()));
    }
    return permute(a, {1, 0});
}

Tensor
slice(const Tensor &a, std::size_t axis, std::size_t begin, std::size_t end) {
    check_axis(a, axis, "slice");
    if (begin > end || end > a.shape()[axis]) {
        throw ShapeError("slice [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") out of range on axis " + std::to_string(axis) + " of " +
                         shape_str(a.shape()));
    }
    const AxisSplit s = split_at(a.shape(), axis);
    const std::size_t len = end - begin;
    const auto av = a.data();
    std::vector<double> out(s.outer * len * s.inner);
    for (std::size_t o = 0; o < s.outer; ++o) {
        std::copy_n(av.data() + (o * s.extent + begin) * s.inner, len * s.inner,
                    out.data() + o * len * s.inner);
    }
    Shape shape = a.shape();
    shape[axis] = len;
    BackwardFn fn = [s, begin, len](std::span<const double> g,
                                    std::span<std::vector<double> *> gin) {
        auto &ga = *gin[0];
        for (std::size_t o = 0; o < s.outer; ++o) {
            const double *src = g.data() + o * len * s.inner;
            double *dst = ga.data() + (o * s.extent + begin) * s.inner;
            for (std::size_t i = 0; i < len * s.inner; ++i) dst[i] += src[i];
        }
    };
    return make_result({a}, std::move(shape), std::move(out), std::move(fn));
}

Tensor
concat(const std::vector<Tensor> &parts, std::size_t axis) {
    if (parts.empty()) {
        throw ShapeError("concat of zero tensors");
    }
    check_axis(parts[0], axis, "concat");
    Shape shape = parts[0].shape();
    std::size_t total = 0;
    for (const auto &p : parts) {
        bool ok = p.rank() == shape.size();
        for (std::size_t d = 0; ok && d < shape.size(); ++d) {
            ok = d == axis || p.shape()[d] == shape[d];
        }
        if (!ok) {
            throw ShapeError("concat: shape " + shape_str(p.shape()) + " incompatible with " +
                             shape_str(shape) + " on axis " + std::to_string(axis));
        }
        total += p.shape()[axis];
    }
    shape[axis] = total;
    const AxisSplit s = split_at(shape, axis);

    std::vector<double> out(shape_numel(shape));
    std::vector<std::size_t> offsets;
    std::size_t off = 0;
    for (const auto &p : parts) {
        offsets.push_back(off);
        const std::size_t len = p.shape()[axis];
        const auto pv = p.data();
        for (std::size_t o = 0; o < s.outer; ++o) {
            std::copy_n(pv.data() + o * len * s.inner, len * s.inner,
                        out.data() + (o * total + off) * s.inner);
        }
        off += len;
    }
    std::vector<std::size_t> lens;
    for (const auto &p : parts) lens.push_back(p.shape()[axis]);

    BackwardFn fn = [s, total, offsets, lens](std::span<const double> g,
                                              std::span<std::vector<double> *> gin) {
        for (std::size_t k = 0; k < gin.size(); ++k) {
            if (!gin[k]) continue;
            auto &gp = *gin[k];
            const std::size_t len = lens[k];
            for (std::size_t o = 0; o < s.outer; ++o) {
                const double *src = g.data() + (o * total + offsets[k]) * s.inner;
                double *dst = gp.data() + o * len * s.inner;
                for (std::size_t i = 0; i < len * s.inner; ++i) dst[i] += src[i];
            }
        }
    };
    return make_result(parts, std::move(shape), std::move(out), std::move(fn));
}

Tensor
matmul(const Tensor &a, const Tensor &b) {
    if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
        throw ShapeError("matmul: inner extents differ for " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    }
    const std::size_t m = a.shape()[0];
    const std::size_t k = a.shape()[1];
    const std::size_t n = b.shape()[1];
    const auto av = a.data();
    const auto bv = b.data();
    std::vector<double> out(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double x = av[i * k + p];
            const double *brow = bv.data() + p * n;
            double *orow = out.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += x * brow[j];
        }
    }
    BackwardFn fn = [a, b, m, k, n](std::span<const double> g,
                                    std::span<std::vector<double> *> gin) {
        const auto av = a.data();
        const auto bv = b.data();
        if (gin[0]) {
            // dA = dC * B^T
            auto &ga = *gin[0];
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bv[p * n + j];
                    ga[i * k + p] += acc;
                }
            }
        }
        if (gin[1]) {
            // dB = A^T * dC
            auto &gb = *gin[1];
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    const double x = av[i * k + p];
                    for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += x * g[i * n + j];
                }
            }
        }
    };
    return make_result({a, b}, {m, n}, std::move(out), std::move(fn));
}

Tensor
softmax(const Tensor &a, std::size_t axis) {
    check_axis(a, axis, "softmax");
    const AxisSplit s = split_at(a.shape(), axis);
    const auto av = a.data();
    auto out = std::make_shared<std::vector<double>>(a.numel());
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t i = 0; i < s.inner; ++i) {
            const std::size_t base = o * s.extent * s.inner + i;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < s.extent; ++k) mx = std::max(mx, av[base + k * s.inner]);
            double z = 0.0;
            for (std::size_t k = 0; k < s.extent; ++k) {
                const double e = std::exp(av[base + k * s.inner] - mx);
                (*out)[base + k * s.inner] = e;
                z += e;
            }
            for (std::size_t k = 0; k < s.extent; ++k) (*out)[base + k * s.inner] /= z;
        }
    }
    BackwardFn fn = [s, out](std::span<const double> g, std::span<std::vector<double> *> gin) {
        auto &ga = *gin[0];
        const auto &y = *out;
        for (std::size_t o = 0; o < s.outer; ++o) {
            for (std::size_t i = 0; i < s.inner; ++i) {
                const std::size_t base = o * s.extent * s.inner + i;
                double dot = 0.0;
                for (std::size_t k = 0; k < s.extent; ++k) {
                    dot += g[base + k * s.inner] * y[base + k * s.inner];
                }
                for (std::size_t k = 0; k < s.extent; ++k) {
                    const std::size_t x = base + k * s.inner;
                    ga[x] += y[x] * (g[x] - dot);
                }
            }
        }
    };
    std::vector<double> values = *out;
    return make_result({a}, a.shape(), std::move(values), std::move(fn));
}

} // namespace layersplat
