// Copyright Contributors to the layersplat project
// SPDX-License-Identifier: Apache-2.0

#include <layersplat/errors.hpp>
#include <layersplat/tensor.hpp>

#include <algorithm>
#include <sstream>
#include <utility>

namespace layersplat {

std::size_t
shape_numel(const Shape &shape) {
    std::size_t n = 1;
    for (const auto extent : shape) {
        n *= extent;
    }
    return n;
}

std::string
shape_str(const Shape &shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "," : "") << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor() : data_(std::make_shared<const std::vector<double>>(1, 0.0)) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)) {
    if (shape_numel(shape_) != data.size()) {
        throw ShapeError("tensor shape " + shape_str(shape_) + " holds " +
                         std::to_string(shape_numel(shape_)) + " values but " +
                         std::to_string(data.size()) + " were given");
    }
    data_ = std::make_shared<const std::vector<double>>(std::move(data));
}

Tensor
Tensor::scalar(double value) {
    return Tensor({}, {value});
}

Tensor
Tensor::zeros(Shape shape) {
    return full(std::move(shape), 0.0);
}

Tensor
Tensor::full(Shape shape, double value) {
    const auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value));
}

std::size_t
Tensor::dim(std::size_t axis) const {
    if (axis >= shape_.size()) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_str(shape_));
    }
    return shape_[axis];
}

double
Tensor::item() const {
    if (numel() != 1) {
        throw ShapeError("item() on tensor of shape " + shape_str(shape_));
    }
    return (*data_)[0];
}

Tensor
Tensor::detach() const {
    Tensor t = *this;
    t.tape_ = nullptr;
    t.node_ = 0;
    return t;
}

Tensor
Tape::leaf(const Tensor &value, std::string name) {
    Node node;
    node.numel = value.numel();
    node.is_leaf = true;
    node.name = std::move(name);
    node.leaf_grad.assign(node.numel, 0.0);
    nodes_.push_back(std::move(node));

    Tensor t = value.detach();
    t.tape_ = this;
    t.node_ = nodes_.size() - 1;
    return t;
}

Tensor
Tape::record(const std::vector<Tensor> &inputs, Shape shape, std::vector<double> data,
             BackwardFn backward) {
    Node node;
    node.inputs.reserve(inputs.size());
    for (const auto &in : inputs) {
        if (in.tape_ == nullptr) {
            node.inputs.push_back(kNoNode);
        } else if (in.tape_ != this) {
            throw ShapeError("op mixes tensors from different tapes");
        } else {
            node.inputs.push_back(in.node_);
        }
    }
    node.numel = data.size();
    node.backward = std::move(backward);
    nodes_.push_back(std::move(node));

    Tensor t(std::move(shape), std::move(data));
    t.tape_ = this;
    t.node_ = nodes_.size() - 1;
    return t;
}

std::size_t
Tape::backward(const Tensor &loss) {
    if (loss.tape_ != this) {
        throw ShapeError("backward() requires a loss recorded on this tape");
    }
    if (loss.numel() != 1) {
        throw ShapeError("backward() requires a scalar loss, got shape " +
                         shape_str(loss.shape()));
    }

    std::vector<std::vector<double>> grads(loss.node_ + 1);
    grads[loss.node_].assign(1, 1.0);

    std::size_t visits = 0;
    std::vector<std::vector<double> *> slots;
    for (std::size_t i = loss.node_ + 1; i-- > 0;) {
        if (grads[i].empty()) {
            continue;
        }
        ++visits;
        Node &node = nodes_[i];
        if (node.is_leaf) {
            for (std::size_t k = 0; k < node.numel; ++k) {
                node.leaf_grad[k] += grads[i][k];
            }
        } else {
            slots.assign(node.inputs.size(), nullptr);
            for (std::size_t k = 0; k < node.inputs.size(); ++k) {
                const auto in = node.inputs[k];
                if (in == kNoNode) {
                    continue;
                }
                if (grads[in].empty()) {
                    grads[in].assign(nodes_[in].numel, 0.0);
                }
                slots[k] = &grads[in];
            }
            node.backward(grads[i], slots);
        }
        std::vector<double>().swap(grads[i]);
    }
    return visits;
}

std::span<const double>
Tape::grad(const Tensor &leaf) const {
    if (leaf.tape_ != this || !nodes_[leaf.node_].is_leaf) {
        throw ShapeError("grad() requires a leaf of this tape");
    }
    return nodes_[leaf.node_].leaf_grad;
}

void
Tape::zero_grad() {
    for (auto &node : nodes_) {
        if (node.is_leaf) {
            std::fill(node.leaf_grad.begin(), node.leaf_grad.end(), 0.0);
        }
    }
}

Tensor
make_result(const std::vector<Tensor> &inputs, Shape shape, std::vector<double> data,
            BackwardFn backward) {
    Tape *tape = nullptr;
    for (const auto &in : inputs) {
        if (!in.on_tape()) {
            continue;
        }
        if (tape != nullptr && in.tape() != tape) {
            throw ShapeError("op mixes tensors from different tapes");
        }
        tape = in.tape();
    }
    if (tape == nullptr) {
        return Tensor(std::move(shape), std::move(data));
    }
    return tape->record(inputs, std::move(shape), std::move(data), std::move(backward));
}

} // namespace layersplat
