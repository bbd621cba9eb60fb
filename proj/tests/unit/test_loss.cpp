// Copyright Contributors to the layersplat project
// SPDX-License-Identifier: Apache-2.0

#include <layersplat/errors.hpp>
#include <layersplat/gaussians.hpp>
#include <layersplat/gradcheck.hpp>
#include <layersplat/loss.hpp>
#include <layersplat/ops.hpp>

#include <gtest/gtest.h>

#include "../support/oracles.hpp"

#include <cmath>
#include <random>

using namespace layersplat;
using oracle::random_tensor;

namespace {

double
term(const LossBreakdown &b, const std::string &name) {
    for (const auto &[n, v] : b.terms) {
        if (n == name) return v;
    }
    ADD_FAILURE() << "missing term " << name;
    return 0.0;
}

GaussianLayerStack
explicit_stack(std::size_t n, const Eigen::Vector3d &offset, const Eigen::Vector3d &scale) {
    std::vector<DecodedGaussian> gs(n);
    for (std::size_t i = 0; i < n; ++i) {
        gs[i].depth = 2.0;
        gs[i].mean = Eigen::Vector3d(0.1 * i, 0.0, 2.0);
        gs[i].offset = offset;
        gs[i].scale = scale;
        gs[i].normal = Eigen::Vector3d(0, 0, -1);
        gs[i].sh = {0, {0.2, 0.2, 0.2}};
    }
    return GaussianLayerStack::from_gaussians(gs, 0);
}

} // namespace

TEST(Loss, PerfectFitHasNoPhotometricOrRegularizerCost) {
    std::mt19937_64 rng(1);
    const Tensor img = random_tensor({12, 12, 3}, rng, 0, 1);
    LossConfig cfg;
    cfg.normal_blend_weight = 0.0;
    const auto b = loss(img, img, explicit_stack(4, Eigen::Vector3d::Zero(), Eigen::Vector3d::Constant(0.1)), cfg);
    EXPECT_EQ(b.total.item(), 0.0);
    for (const auto &[name, v] : b.terms) EXPECT_EQ(v, 0.0) << name;
}

TEST(Loss, OffsetTermIsMeanSquaredNorm) {
    const Tensor img = Tensor::full({12, 12, 3}, 0.4);
    LossConfig cfg;
    cfg.lambda1 = 1.0;
    const auto b = loss(img, img, explicit_stack(6, {0.1, 0, 0}, Eigen::Vector3d::Constant(0.1)), cfg);
    EXPECT_NEAR(term(b, "offset"), 0.01, 1e-15);
}

TEST(Loss, ScaleTermIsHingeMeanOverAxes) {
    const Tensor img = Tensor::full({12, 12, 3}, 0.4);
    std::vector<DecodedGaussian> gs(5);
    for (auto &g : gs) {
        g.depth = 2.0;
        g.mean = {0, 0, 2};
        g.scale = Eigen::Vector3d::Constant(0.1);
        g.sh = {0, {0, 0, 0}};
    }
    gs[2].scale.y() = 0.3 + 0.2;
    LossConfig cfg;
    cfg.lambda2 = 1.0;
    const auto b = loss(img, img, GaussianLayerStack::from_gaussians(gs, 0), cfg);
    EXPECT_NEAR(term(b, "scale"), 0.2 / (5 * 3), 1e-15);
}

TEST(Loss, TermsAreNonnegativeAndSumToTotal) {
    std::mt19937_64 rng(2);
    const Tensor r = random_tensor({14, 13, 3}, rng, 0, 1);
    const Tensor t = random_tensor({14, 13, 3}, rng, 0, 1);
    const auto stack = explicit_stack(7, {0.02, -0.01, 0.03}, {0.5, 0.05, 0.2});
    const auto b = loss(std::vector<Tensor>{r, t}, std::vector<Tensor>{t, r}, stack, LossConfig{});
    ASSERT_EQ(b.terms.size(), 5u);
    const std::vector<std::string> order{"l1", "ssim", "offset", "scale", "normal"};
    double s = 0.0;
    for (std::size_t i = 0; i < b.terms.size(); ++i) {
        EXPECT_EQ(b.terms[i].first, order[i]);
        EXPECT_GE(b.terms[i].second, 0.0);
        s += b.terms[i].second;
    }
    EXPECT_NEAR(b.total.item(), s, 1e-12);
}

TEST(Loss, L1TermIsWeightedMeanAbsoluteError) {
    const Tensor r = Tensor::full({12, 12, 3}, 0.5);
    const Tensor t = Tensor::full({12, 12, 3}, 0.3);
    const auto b = loss(r, t, explicit_stack(1, Eigen::Vector3d::Zero(), Eigen::Vector3d::Constant(0.1)), LossConfig{});
    EXPECT_NEAR(term(b, "l1"), 0.85 * 0.2, 1e-14);
}

TEST(Loss, ExtentMismatchThrows) {
    const auto stack = explicit_stack(1, Eigen::Vector3d::Zero(), Eigen::Vector3d::Constant(0.1));
    EXPECT_THROW(loss(Tensor::zeros({12, 12, 3}), Tensor::zeros({12, 13, 3}), stack, LossConfig{}), ShapeError);
}

TEST(Loss, NegativeWeightIsRejected) {
    LossConfig cfg;
    cfg.lambda2 = -1.0;
    EXPECT_THROW(cfg.validate(), ShapeError);
}

TEST(NormalAlignment, AlignedShortAxisCostsNothing) {
    const Tensor scale({2, 3}, {1, 1, 0.01, 0.01, 1, 1});
    const Tensor rot({2, 4}, {1, 0, 0, 0, 1, 0, 0, 0});
    const Tensor normal({2, 3}, {0, 0, -1, 1, 0, 0});
    EXPECT_NEAR(normal_alignment(scale, rot, normal).item(), 0.0, 1e-15);
    const Tensor side({2, 3}, {0, 1, 0, 0, 0, 1});
    EXPECT_NEAR(normal_alignment(scale, rot, side).item(), 1.0, 1e-15);
}

TEST(NormalAlignment, GradientsMatchFiniteDifferences) {
    std::mt19937_64 rng(3);
    const Tensor scale = random_tensor({30, 3}, rng, 0.1, 1.0);
    const Tensor rot = random_tensor({30, 4}, rng);
    const Tensor normal = random_tensor({30, 3}, rng);
    GradcheckOptions opt;
    opt.skip_kinks = true;
    opt.samples = 150;
    const auto report = check_gradients(
        "normal_alignment",
        [&](const std::vector<Tensor> &in) { return normal_alignment(scale, in[0], in[1]); }, {rot, normal}, opt);
    EXPECT_TRUE(report.passed) << report.max_rel_err;
}
