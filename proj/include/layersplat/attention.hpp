// Copyright Contributors to the layersplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <layersplat/tensor.hpp>

#include <random>
#include <string>
#include <utility>
#include <vector>

namespace layersplat {

struct AttentionConfig {
    std::size_t channels = 32;
    std::size_t heads = 2;
    std::size_t head_dim = 8;
    std::size_t layers = 2;

    std::size_t width() const { return heads * head_dim; }
};

/// Projections of one residual self-attention layer. Query/key/value map C -> heads*head_dim
/// and the output maps back to C, so the channel adapter is folded into the projections.
struct AttentionLayerWeights {
    Tensor wq, bq; // [C, D], [D]
    Tensor wk, bk;
    Tensor wv, bv;
    Tensor wo, bo; // [D, C], [C]
};

struct AttentionBlock {
    AttentionConfig config;
    std::vector<AttentionLayerWeights> layers;

    /// Xavier-uniform projections, zero biases.
    static AttentionBlock xavier(const AttentionConfig &config, std::mt19937_64 &rng);

    void validate() const;

    /// Every weight tensor with a stable name ("layer0.wq", ...), for optimizers and checkpoints.
    std::vector<std::pair<std::string, Tensor *>> named_tensors();
};

/// Attention probabilities recorded during a forward pass, one [T, T] matrix per
/// (layer, batch item, head) in that nesting order.
struct AttentionTrace {
    std::vector<Tensor> weights;
};

/// Flattens x [B, C, H, W] to B token sequences of length H*W, applies the stacked residual
/// multi-head self-attention layers (no positional encoding, 1/sqrt(head_dim) scaling) and
/// restores [B, C, H, W]. Throws ShapeError when C differs from the block's channel count.
Tensor forward(const AttentionBlock &block, const Tensor &x, AttentionTrace *trace = nullptr);

} // namespace layersplat
