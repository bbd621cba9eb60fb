// Copyright Contributors to the layersplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <layersplat/tensor.hpp>

#include <optional>
#include <vector>

namespace layersplat {

enum class Elementwise {
    add,
    sub,
    mul,
    div,
    pow,
    exp,
    log,
    sigmoid,
    softplus,
    relu,
    neg,
    tanh,
    sqrt,
    abs,
};

bool is_binary(Elementwise kind);

/// Result shape of broadcasting `a` against `b` (numpy trailing-dimension rules).
Shape broadcast_shape(const Shape &a, const Shape &b);

/// Elementwise op with broadcasting. `b` is required for binary kinds and ignored otherwise.
/// Division and log follow IEEE semantics; NaN/Inf propagate.
Tensor elementwise(Elementwise kind, const Tensor &a, const std::optional<Tensor> &b = {});

Tensor add(const Tensor &a, const Tensor &b);
Tensor sub(const Tensor &a, const Tensor &b);
Tensor mul(const Tensor &a, const Tensor &b);
Tensor div(const Tensor &a, const Tensor &b);
Tensor pow(const Tensor &a, const Tensor &b);
Tensor exp(const Tensor &a);
Tensor log(const Tensor &a);
Tensor sigmoid(const Tensor &a);
Tensor softplus(const Tensor &a);
Tensor relu(const Tensor &a);
Tensor neg(const Tensor &a);
Tensor tanh(const Tensor &a);
Tensor sqrt(const Tensor &a);
Tensor abs(const Tensor &a);

Tensor operator+(const Tensor &a, const Tensor &b);
Tensor operator-(const Tensor &a, const Tensor &b);
Tensor operator*(const Tensor &a, const Tensor &b);
Tensor operator/(const Tensor &a, const Tensor &b);
Tensor operator-(const Tensor &a);
Tensor operator+(const Tensor &a, double b);
Tensor operator-(const Tensor &a, double b);
Tensor operator*(const Tensor &a, double b);
Tensor operator*(double a, const Tensor &b);
Tensor operator/(const Tensor &a, double b);
Tensor operator+(double a, const Tensor &b);
Tensor operator-(double a, const Tensor &b);

/// Gradient passes where lo <= a <= hi.
Tensor clamp(const Tensor &a, double lo, double hi);

Tensor sum(const Tensor &a);
Tensor mean(const Tensor &a);
Tensor sum(const Tensor &a, std::size_t axis, bool keepdim = false);

Tensor reshape(const Tensor &a, Shape shape);
Tensor permute(const Tensor &a, const std::vector<std::size_t> &perm);
Tensor transpose(const Tensor &a);
Tensor slice(const Tensor &a, std::size_t axis, std::size_t begin, std::size_t end);
Tensor concat(const std::vector<Tensor> &parts, std::size_t axis);

Tensor matmul(const Tensor &a, const Tensor &b);

/// Numerically stable softmax (max-subtracted) along `axis`.
Tensor softmax(const Tensor &a, std::size_t axis);

} // namespace layersplat
