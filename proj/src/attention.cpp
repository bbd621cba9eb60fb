// Copyright Contributors to the layersplat project
// SPDX-License-Identifier: Apache-2.0

#include <layersplat/attention.hpp>
#include <layersplat/errors.hpp>
#include <layersplat/ops.hpp>

#include <cmath>

namespace layersplat {

namespace {

Tensor
xavier_matrix(std::size_t fan_in, std::size_t fan_out, std::mt19937_64 &rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-a, a);
    std::vector<double> v(fan_in * fan_out);
    for (auto &x : v) {
        x = dist(rng);
    }
    return Tensor({fan_in, fan_out}, std::move(v));
}

void
expect(const Tensor &t, const Shape &shape, const std::string &what) {
    if (t.shape() != shape) {
        throw ShapeError("attention " + what + " has shape " + shape_str(t.shape()) +
                         ", expected " + shape_str(shape));
    }
}

} // namespace

AttentionBlock
AttentionBlock::xavier(const AttentionConfig &config, std::mt19937_64 &rng) {
    AttentionBlock block;
    block.config = config;
    const std::size_t c = config.channels;
    const std::size_t d = config.width();
    for (std::size_t l = 0; l < config.layers; ++l) {
        AttentionLayerWeights w;
        w.wq = xavier_matrix(c, d, rng);
        w.wk = xavier_matrix(c, d, rng);
        w.wv = xavier_matrix(c, d, rng);
        w.wo = xavier_matrix(d, c, rng);
        w.bq = w.bk = w.bv = Tensor::zeros({d});
        w.bo = Tensor::zeros({c});
        block.layers.push_back(std::move(w));
    }
    return block;
}

void
AttentionBlock::validate() const {
    if (config.heads == 0 || config.head_dim == 0 || layers.size() != config.layers) {
        throw ShapeError("attention block layer count or head layout is inconsistent");
    }
    const std::size_t c = config.channels;
    const std::size_t d = config.width();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto &w = layers[l];
        const std::string at = "layer " + std::to_string(l) + " ";
        expect(w.wq, {c, d}, at + "wq");
        expect(w.wk, {c, d}, at + "wk");
        expect(w.wv, {c, d}, at + "wv");
        expect(w.wo, {d, c}, at + "wo");
        expect(w.bq, {d}, at + "bq");
        expect(w.bk, {d}, at + "bk");
        expect(w.bv, {d}, at + "bv");
        expect(w.bo, {c}, at + "bo");
    }
}

std::vector<std::pair<std::string, Tensor *>>
AttentionBlock::named_tensors() {
    std::vector<std::pair<std::string, Tensor *>> out;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        auto &w = layers[l];
        const std::string p = "layer" + std::to_string(l) + ".";
        out.emplace_back(p + "wq", &w.wq);
        out.emplace_back(p + "bq", &w.bq);
        out.emplace_back(p + "wk", &w.wk);
        out.emplace_back(p + "bk", &w.bk);
        out.emplace_back(p + "wv", &w.wv);
        out.emplace_back(p + "bv", &w.bv);
        out.emplace_back(p + "wo", &w.wo);
        out.emplace_back(p + "bo", &w.bo);
    }
    return out;
}

Tensor
forward(const AttentionBlock &block, const Tensor &x, AttentionTrace *trace) {
    block.validate();
    if (x.rank() != 4 || x.shape()[1] != block.config.channels) {
        throw ShapeError("attention input " + shape_str(x.shape()) + " must be [B, " +
                         std::to_string(block.config.channels) + ", H, W]");
    }
    const std::size_t batch = x.shape()[0];
    const std::size_t c = x.shape()[1];
    const std::size_t h = x.shape()[2];
    const std::size_t w = x.shape()[3];
    const std::size_t tokens = h * w;
    const std::size_t dh = block.config.head_dim;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    std::vector<Tensor> items;
    for (std::size_t b = 0; b < batch; ++b) {
        // B C H W -> B (H W) C
        Tensor seq = transpose(reshape(slice(x, 0, b, b + 1), {c, tokens}));
        for (const auto &lw : block.layers) {
            const Tensor q = matmul(seq, lw.wq) + lw.bq;
            const Tensor k = matmul(seq, lw.wk) + lw.bk;
            const Tensor v = matmul(seq, lw.wv) + lw.bv;
            std::vector<Tensor> heads;
            for (std::size_t hd = 0; hd < block.config.heads; ++hd) {
                const Tensor qh = slice(q, 1, hd * dh, (hd + 1) * dh);
                const Tensor kh = slice(k, 1, hd * dh, (hd + 1) * dh);
                const Tensor vh = slice(v, 1, hd * dh, (hd + 1) * dh);
                const Tensor attn = softmax(matmul(qh, transpose(kh)) * scale, 1);
                if (trace) {
                    trace->weights.push_back(attn.detach());
                }
                heads.push_back(matmul(attn, vh));
            }
            const Tensor merged = heads.size() == 1 ? heads[0] : concat(heads, 1);
            seq = seq + (matmul(merged, lw.wo) + lw.bo);
        }
        // B (H W) C -> B C H W
        items.push_back(reshape(transpose(seq), {1, c, h, w}));
    }
    return items.size() == 1 ? items[0] : concat(items, 0);
}

} // namespace layersplat
