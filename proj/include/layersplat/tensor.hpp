// Copyright Contributors to the layersplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace layersplat {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape &shape);
std::string shape_str(const Shape &shape);

class Tape;

/// Dense row-major tensor of doubles. Values are immutable once constructed; copies share
/// storage. A tensor produced while any input is attached to a Tape is itself attached and
/// participates in reverse-mode differentiation through that tape.
class Tensor {
  public:
    /// Scalar zero.
    Tensor();
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double value);
    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double value);

    const Shape &shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t numel() const { return data_->size(); }
    std::size_t dim(std::size_t axis) const;

    std::span<const double> data() const { return *data_; }
    double operator[](std::size_t i) const { return (*data_)[i]; }
    /// Value of a single-element tensor.
    double item() const;

    bool on_tape() const { return tape_ != nullptr; }
    Tape *tape() const { return tape_; }
    std::size_t node() const { return node_; }

    /// Same values, no tape participation.
    Tensor detach() const;

  private:
    friend class Tape;

    Shape shape_;
    std::shared_ptr<const std::vector<double>> data_;
    Tape *tape_ = nullptr;
    std::size_t node_ = 0;
};

/// Backward closure of a recorded op. `grad_out` is dL/d(output); for every input that lives
/// on the tape `grad_in[k]` points to its accumulator (already sized), otherwise it is null.
using BackwardFn =
    std::function<void(std::span<const double> grad_out, std::span<std::vector<double> *> grad_in)>;

/// Append-only record of differentiable operations for one fitting session.
class Tape {
  public:
    Tape() = default;
    Tape(const Tape &) = delete;
    Tape &operator=(const Tape &) = delete;

    /// Registers `value` as a differentiable leaf.
    Tensor leaf(const Tensor &value, std::string name = {});

    /// Propagates d(loss)/d(node) from a scalar loss back to every reachable node, accumulating
    /// into leaf gradients. Returns the number of node visits.
    std::size_t backward(const Tensor &loss);

    /// Accumulated gradient of a leaf (zeros before any backward pass).
    std::span<const double> grad(const Tensor &leaf) const;
    void zero_grad();

    std::size_t size() const { return nodes_.size(); }
    const std::string &name(std::size_t node) const { return nodes_.at(node).name; }

    /// Records the result of an op. Used by op implementations; not needed by callers.
    Tensor record(const std::vector<Tensor> &inputs, Shape shape, std::vector<double> data,
                  BackwardFn backward);

  private:
    static constexpr std::size_t kNoNode = static_cast<std::size_t>(-1);

    struct Node {
        std::vector<std::size_t> inputs;
        std::size_t numel = 0;
        BackwardFn backward;
        bool is_leaf = false;
        std::string name;
        std::vector<double> leaf_grad;
    };

    std::vector<Node> nodes_;
};

/// Returns an attached result when any input is on a tape, a plain value otherwise. All
/// attached inputs must share one tape.
Tensor make_result(const std::vector<Tensor> &inputs, Shape shape, std::vector<double> data,
                   BackwardFn backward);

} // namespace layersplat
