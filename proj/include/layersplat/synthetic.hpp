// Copyright Contributors to the layersplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <layersplat/camera.hpp>
#include <layersplat/fit.hpp>

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace layersplat {

inline constexpr std::size_t kMaxRoomPlanes = 5;
inline constexpr std::size_t kMaxRoomBoxes = 8;

/// Infinite plane x[axis] = offset with a flat albedo.
struct RoomPlane {
    int axis = 1;
    double offset = 1.0;
    Eigen::Vector3d color{0.5, 0.5, 0.5};
};

/// Axis-aligned box with a flat albedo.
struct RoomBox {
    Eigen::Vector3d min{-0.25, 0.5, 2.0};
    Eigen::Vector3d max{0.25, 1.0, 2.5};
    Eigen::Vector3d color{0.8, 0.2, 0.2};
};

/// Camera offset relative to the input view: yaw about the vertical axis, then a translation of
/// the camera center. Both are expressed in the input camera frame.
struct ViewOffset {
    double yaw_deg = 0.0;
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();

    Pose pose() const;
};

/// Parametric room seen from the input camera, which sits at the world origin looking down +z
/// with +y pointing down. A floor plane plus up to four more planes, and up to eight boxes.
struct RoomSpec {
    int width = 64;
    int height = 64;
    double fov_deg = 60.0;
    std::vector<RoomPlane> planes;
    std::vector<RoomBox> boxes;
    /// Extra boxes placed on the floor with the generation seed.
    std::size_t random_boxes = 0;
    /// Extra training views; the input view is always target 0.
    std::vector<ViewOffset> targets{ViewOffset{10.0, {0.1, 0.0, 0.0}}, ViewOffset{-10.0, {-0.1, 0.0, 0.0}}};
    std::vector<ViewOffset> heldout{ViewOffset{5.0, {0.05, 0.0, 0.0}}};

    Intrinsics intrinsics() const;
    /// Throws DataError when the room is empty or exceeds the plane and box limits.
    void validate() const;
};

/// Closed room (floor, ceiling, back and side walls) with randomized colors and
/// `boxes` random boxes, driven by `seed`.
RoomSpec random_room(std::uint64_t seed, std::size_t boxes = 3, int width = 64, int height = 64);

/// Parses the JSON room description; throws DataError on schema violations.
RoomSpec room_from_json(const std::string &text, const std::string &origin = "spec");
std::string room_to_json(const RoomSpec &spec);

/// Resolves `random_boxes` into concrete boxes using `seed`.
RoomSpec resolve_room(const RoomSpec &spec, std::uint64_t seed);

struct SurfaceHit {
    double t = 0.0;
    Eigen::Vector3d normal = Eigen::Vector3d::Zero(); // world frame, facing the ray origin
    Eigen::Vector3d color = Eigen::Vector3d::Zero();
};

/// Nearest hit with t > 0 along origin + t dir, over all planes and boxes.
std::optional<SurfaceHit> cast_ray(const RoomSpec &room, const Eigen::Vector3d &origin, const Eigen::Vector3d &dir);

struct GroundTruthView {
    Tensor image;  // [H, W, 3]
    Tensor depth;  // [H, W], view-space z of the first hit
    Tensor normal; // [H, W, 3], camera frame, facing the camera
};

/// Ray casts every pixel center. Throws DataError when a ray escapes the room.
GroundTruthView render_ground_truth(const RoomSpec &room, const Intrinsics &intr, const Pose &pose);

struct SceneBundle {
    SceneSample sample;
    std::vector<TargetView> targets;
    std::vector<TargetView> heldout;
};

/// Ray casts every view of a resolved room.
SceneBundle generate_scene(const RoomSpec &room);

/// Writes scene.json, input.{png,niag}, depth.niag, normal.niag, input_camera.json and
/// target_i / heldout_i as {png, niag, _camera.json}. Output is byte-identical per seed.
void generate_scene_bundle(const RoomSpec &spec, std::uint64_t seed, const std::filesystem::path &dir);

/// Reads a bundle written by generate_scene_bundle.
SceneBundle load_scene(const std::filesystem::path &dir);

} // namespace layersplat
