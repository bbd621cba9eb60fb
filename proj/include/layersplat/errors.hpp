// Copyright Contributors to the layersplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace layersplat {

/// Violated shape or argument contract (programming error at the call site).
class ShapeError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed or missing input data: files, scene specs, depth maps.
class DataError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// NaN/Inf encountered during optimization or differentiation.
class NumericalError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

} // namespace layersplat
