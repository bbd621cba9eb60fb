// Copyright Contributors to the layersplat project
// SPDX-License-Identifier: Apache-2.0

#include <layersplat/attention.hpp>
#include <layersplat/errors.hpp>
#include <layersplat/gradcheck.hpp>
#include <layersplat/ops.hpp>

#include <Eigen/Core>
#include <gtest/gtest.h>

#include <cmath>
#include <algorithm>
#include <numeric>
#include <random>

using namespace layersplat;

namespace {

Tensor
random_tensor(Shape shape, std::mt19937_64 &rng, double lo = -1, double hi = 1) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(shape_numel(shape));
    for (auto &x : v) x = dist(rng);
    return Tensor(std::move(shape), std::move(v));
}

AttentionBlock
random_block(const AttentionConfig &cfg, std::mt19937_64 &rng) {
    AttentionBlock b = AttentionBlock::xavier(cfg, rng);
    for (auto &[name, t] : b.named_tensors()) *t = random_tensor(t->shape(), rng, -0.5, 0.5);
    return b;
}

Eigen::MatrixXd
as_matrix(const Tensor &t, std::size_t rows, std::size_t cols) {
    Eigen::MatrixXd m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) m(r, c) = t[r * cols + c];
    return m;
}

} // namespace

TEST(Attention, ZeroValueProjectionPassesInputThrough) {
    std::mt19937_64 rng(1);
    AttentionBlock b = AttentionBlock::xavier({8, 2, 4, 2}, rng);
    for (auto &l : b.layers) l.wv = Tensor::zeros(l.wv.shape());
    const Tensor x = random_tensor({2, 8, 3, 3}, rng);
    const Tensor y = forward(b, x);
    EXPECT_EQ(std::vector<double>(y.data().begin(), y.data().end()),
              std::vector<double>(x.data().begin(), x.data().end()));
}

TEST(Attention, SingleTokenMatchesDenseOracle) {
    std::mt19937_64 rng(2);
    const AttentionConfig cfg{6, 2, 3, 1};
    const AttentionBlock b = random_block(cfg, rng);
    const Tensor x = random_tensor({1, 6, 1, 1}, rng);
    const Tensor y = forward(b, x);
    const auto &l = b.layers[0];
    const Eigen::RowVectorXd xv = as_matrix(x, 1, 6);
    const Eigen::RowVectorXd v = xv * as_matrix(l.wv, 6, 6) + as_matrix(l.bv, 1, 6);
    const Eigen::RowVectorXd expect = xv + v * as_matrix(l.wo, 6, 6) + as_matrix(l.bo, 1, 6);
    for (int c = 0; c < 6; ++c) EXPECT_NEAR(y[c], expect[c], 1e-14);
}

TEST(Attention, MultiTokenMatchesDenseOracle) {
    std::mt19937_64 rng(3);
    const AttentionConfig cfg{4, 2, 3, 1};
    const AttentionBlock b = random_block(cfg, rng);
    const Tensor x = random_tensor({1, 4, 2, 3}, rng);
    const Tensor y = forward(b, x);
    const auto &l = b.layers[0];
    const Eigen::MatrixXd seq = as_matrix(x, 4, 6).transpose();
    auto proj = [&](const Tensor &w, const Tensor &bias) {
        return Eigen::MatrixXd((seq * as_matrix(w, 4, 6)).rowwise() + as_matrix(bias, 1, 6).row(0));
    };
    const Eigen::MatrixXd q = proj(l.wq, l.bq), k = proj(l.wk, l.bk), v = proj(l.wv, l.bv);
    Eigen::MatrixXd merged(6, 6);
    for (int h = 0; h < 2; ++h) {
        Eigen::MatrixXd s = q.middleCols(3 * h, 3) * k.middleCols(3 * h, 3).transpose() / std::sqrt(3.0);
        for (int r = 0; r < 6; ++r) {
            s.row(r) = (s.row(r).array() - s.row(r).maxCoeff()).exp();
            s.row(r) /= s.row(r).sum();
        }
        merged.middleCols(3 * h, 3) = s * v.middleCols(3 * h, 3);
    }
    const Eigen::MatrixXd out = seq + ((merged * as_matrix(l.wo, 6, 4)).rowwise() + as_matrix(l.bo, 1, 4).row(0));
    for (int c = 0; c < 4; ++c)
        for (int t = 0; t < 6; ++t) EXPECT_NEAR(y[c * 6 + t], out(t, c), 1e-13);
}

TEST(Attention, PermutationEquivariant) {
    std::mt19937_64 rng(4);
    const AttentionBlock b = random_block({8, 2, 4, 2}, rng);
    const Tensor x = random_tensor({1, 8, 3, 3}, rng);
    std::vector<std::size_t> perm(9);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    auto permute_tokens = [&](const Tensor &t) {
        std::vector<double> v(t.numel());
        for (std::size_t c = 0; c < 8; ++c)
            for (std::size_t i = 0; i < 9; ++i) v[c * 9 + i] = t[c * 9 + perm[i]];
        return Tensor(t.shape(), v);
    };
    const Tensor a = forward(b, permute_tokens(x));
    const Tensor c = permute_tokens(forward(b, x));
    for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a[i], c[i], 1e-12);
}

TEST(Attention, WeightsAreDistributions) {
    std::mt19937_64 rng(5);
    const AttentionBlock b = random_block({8, 2, 4, 2}, rng);
    AttentionTrace trace;
    const Tensor x = random_tensor({2, 8, 2, 3}, rng, -3, 3);
    const Tensor y = forward(b, x, &trace);
    EXPECT_EQ(y.shape(), x.shape());
    ASSERT_EQ(trace.weights.size(), 2u * 2u * 2u);
    for (const auto &w : trace.weights) {
        ASSERT_EQ(w.shape(), (Shape{6, 6}));
        for (std::size_t r = 0; r < 6; ++r) {
            double total = 0.0;
            for (std::size_t c = 0; c < 6; ++c) {
                EXPECT_GE(w[r * 6 + c], 0.0);
                total += w[r * 6 + c];
            }
            EXPECT_NEAR(total, 1.0, 1e-9);
        }
    }
}

TEST(Attention, RejectsChannelMismatch) {
    std::mt19937_64 rng(6);
    const AttentionBlock b = AttentionBlock::xavier({8, 2, 4, 1}, rng);
    EXPECT_THROW(forward(b, Tensor::zeros({1, 7, 2, 2})), ShapeError);
    EXPECT_THROW(forward(b, Tensor::zeros({8, 2, 2})), ShapeError);
}

TEST(Attention, XavierInit) {
    std::mt19937_64 rng(7);
    const AttentionBlock b = AttentionBlock::xavier({32, 2, 8, 2}, rng);
    const double bound = std::sqrt(6.0 / (32 + 16));
    for (const auto &l : b.layers) {
        for (double v : l.wq.data()) EXPECT_LE(std::abs(v), bound);
        for (double v : l.bo.data()) EXPECT_EQ(v, 0.0);
    }
}

TEST(Attention, GradientsMatchFiniteDifferences) {
    std::mt19937_64 rng(8);
    AttentionBlock b = random_block({8, 2, 4, 2}, rng);
    const Tensor x = random_tensor({1, 8, 3, 3}, rng);
    const Tensor w = random_tensor({1, 8, 3, 3}, rng);
    std::vector<Tensor> inputs{x};
    for (auto &[name, t] : b.named_tensors()) inputs.push_back(*t);
    GradcheckOptions opt;
    opt.samples = 400;
    const auto report = check_gradients(
        "attention",
        [&](const std::vector<Tensor> &in) {
            AttentionBlock local = b;
            auto named = local.named_tensors();
            for (std::size_t i = 0; i < named.size(); ++i) *named[i].second = in[i + 1];
            return sum(forward(local, in[0]) * w);
        },
        inputs, opt);
    EXPECT_TRUE(report.passed) << report.max_rel_err;
}
