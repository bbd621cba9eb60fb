// Copyright Contributors to the layersplat project
// SPDX-License-Identifier: Apache-2.0

#include <layersplat/camera.hpp>
#include <layersplat/errors.hpp>
#include <layersplat/gradcheck.hpp>
#include <layersplat/ops.hpp>

#include <gtest/gtest.h>

#include <random>

using namespace layersplat;

namespace {

Pose
random_pose(std::mt19937_64 &rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Pose p;
    p.rotation = Eigen::Quaterniond(n(rng), n(rng), n(rng), n(rng)).normalized();
    p.translation = {n(rng), n(rng), n(rng)};
    return p;
}

} // namespace

TEST(Unproject, ClosedForms) {
    Intrinsics k{1.0, 0.0, 0.0, 8, 8};
    EXPECT_EQ(unproject(k, {0, 0}, 2.0), Eigen::Vector3d(0, 0, 2));
    k.f = 2.0;
    EXPECT_EQ(unproject(k, {2, 1}, 4.0), Eigen::Vector3d(4, 2, 4));
    k.f = 1.0;
    EXPECT_EQ(unproject(k, {0, 0}, 2.0, {0.1, 0, 0}), Eigen::Vector3d(0.1, 0, 2));
    EXPECT_THROW(unproject(k, {0, 0}, 0.0), DataError);
    EXPECT_THROW(unproject(k, {0, 0}, -1.0), DataError);
}

TEST(PixelRay, CenteredOnPrincipalPoint) {
    const Intrinsics k = Intrinsics::centered(50.0, 64, 48);
    EXPECT_DOUBLE_EQ(k.cx, 31.5);
    EXPECT_DOUBLE_EQ(k.cy, 23.5);
    const PixelRay u = PixelRay::from_pixel(k, 40.0, 10.0);
    EXPECT_DOUBLE_EQ(u.ux, 8.5);
    EXPECT_DOUBLE_EQ(u.uy, -13.5);
    EXPECT_EQ(u.homogeneous().z(), 1.0);
}

TEST(Intrinsics, Validation) {
    EXPECT_NO_THROW(Intrinsics::centered(10, 4, 4).validate());
    EXPECT_THROW((Intrinsics{0.0, 1, 1, 4, 4}).validate(), DataError);
    EXPECT_THROW((Intrinsics{1.0, 4, 1, 4, 4}).validate(), DataError);
    EXPECT_THROW((Intrinsics{1.0, 1, -1, 4, 4}).validate(), DataError);
}

TEST(Pose, TransformsAndRoundTrip) {
    const Eigen::Vector3d x(0.3, -1.0, 2.5);
    EXPECT_EQ(world_to_view(Pose::identity(), x), x);
    Pose shift;
    shift.translation = {1, 2, 3};
    EXPECT_EQ(world_to_view(shift, x), x + shift.translation);
    std::mt19937_64 rng(1);
    for (int i = 0; i < 100; ++i) {
        const Pose p = random_pose(rng);
        EXPECT_NO_THROW(p.validate());
        EXPECT_LE((view_to_world(p, world_to_view(p, x)) - x).norm(), 1e-12);
    }
    Pose bad;
    bad.rotation = Eigen::Quaterniond(1.0, 0.1, 0.0, 0.0);
    EXPECT_THROW(bad.validate(), DataError);
}

TEST(Pose, LookingFromPlacesCameraCenter) {
    const Eigen::Matrix3d orient = Eigen::AngleAxisd(0.3, Eigen::Vector3d::UnitY()).toRotationMatrix();
    const Eigen::Vector3d c(0.05, 0.0, 0.0);
    const Pose p = Pose::looking_from(orient, c);
    EXPECT_LE((p.camera_center() - c).norm(), 1e-15);
    EXPECT_LE(world_to_view(p, c).norm(), 1e-15);
    // the camera's forward axis in world coordinates is the third column of the orientation
    EXPECT_LE((world_to_view(p, c + orient.col(2)) - Eigen::Vector3d::UnitZ()).norm(), 1e-15);
}

TEST(Project, OpticalAxisAndClip) {
    const Intrinsics k{100.0, 32.0, 32.0, 64, 64};
    const auto p = project(k, {0, 0, 1});
    ASSERT_TRUE(p);
    EXPECT_EQ(p->pixel, Eigen::Vector2d(32, 32));
    EXPECT_FALSE(project(k, {0, 0, 0}));
    EXPECT_FALSE(project(k, {0, 0, -2}));
    EXPECT_FALSE(project(k, {0, 0, kNearClip}));
}

TEST(Project, InvertsUnprojection) {
    const Intrinsics k = Intrinsics::centered(70.0, 64, 64);
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> px(0.0, 63.0), depth(0.1, 20.0), alpha(0.1, 5.0);
    for (int i = 0; i < 1000; ++i) {
        const double x = px(rng), y = px(rng), d = depth(rng);
        const PixelRay u = PixelRay::from_pixel(k, x, y);
        const Eigen::Vector3d m = unproject(k, u, d);
        const auto p = project(k, m);
        ASSERT_TRUE(p);
        EXPECT_NEAR(p->pixel.x(), x, 1e-9);
        EXPECT_NEAR(p->pixel.y(), y, 1e-9);
        EXPECT_NEAR(p->depth, d, 1e-12);
        const double a = alpha(rng);
        EXPECT_LE((unproject(k, u, a * d) - a * m).norm(), 1e-12 * a * m.norm());
    }
}

TEST(Unproject, TensorFormMatchesPointForm) {
    const Intrinsics k = Intrinsics::centered(5.0, 3, 2);
    const Tensor depth({2, 3}, {1, 2, 3, 4, 5, 6});
    const Tensor out = unproject(k, depth);
    ASSERT_EQ(out.shape(), (Shape{2, 3, 3}));
    for (int y = 0; y < 2; ++y) {
        for (int x = 0; x < 3; ++x) {
            const Eigen::Vector3d m = unproject(k, PixelRay::from_pixel(k, x, y), depth[3 * y + x]);
            for (int a = 0; a < 3; ++a) EXPECT_DOUBLE_EQ(out[(3 * y + x) * 3 + a], m[a]);
        }
    }
    EXPECT_THROW(unproject(k, Tensor({2, 3}, {1, 2, 3, 4, 0, 6})), DataError);
}

TEST(Unproject, GradientMatchesFiniteDifferences) {
    const Intrinsics k = Intrinsics::centered(7.0, 6, 5);
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> d(0.5, 3.0), o(-0.2, 0.2);
    std::vector<double> dv(2 * 5 * 6), ov(2 * 5 * 6 * 3), wv(2 * 5 * 6 * 3);
    for (auto &v : dv) v = d(rng);
    for (auto &v : ov) v = o(rng);
    for (auto &v : wv) v = o(rng);
    const Tensor w({2, 5, 6, 3}, wv);
    GradcheckOptions opt;
    opt.rel_tol = 1e-5;
    const auto report = check_gradients(
        "unproject",
        [&](const std::vector<Tensor> &in) {
            const Tensor m = unproject(k, in[0], in[1]);
            return sum(m * m * w);
        },
        {Tensor({2, 5, 6}, dv), Tensor({2, 5, 6, 3}, ov)}, opt);
    EXPECT_TRUE(report.passed) << report.max_rel_err;
}
