// Copyright Contributors to the layersplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <layersplat/camera.hpp>
#include <layersplat/fit.hpp>
#include <layersplat/tensor.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace layersplat {

inline constexpr std::uint32_t kTensorFileVersion = 1;
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// NIAG float tensor file: "NIAG", u32 version, u32 rank, u32 extents, f32 payload, all
/// little-endian. Values are stored at 32-bit precision.
std::vector<std::uint8_t> encode_tensor(const Tensor &t);
/// Throws DataError on a bad magic, unsupported version or truncated payload.
Tensor decode_tensor(const std::vector<std::uint8_t> &bytes, const std::string &origin = "tensor");

void write_tensor_file(const std::filesystem::path &path, const Tensor &t);
Tensor read_tensor_file(const std::filesystem::path &path);

struct CameraFile {
    Intrinsics intr;
    Pose pose;
};

/// {"fx", "cx", "cy", "width", "height", "pose": {"quat": [w,x,y,z], "t": [x,y,z]}}.
std::string camera_to_json(const CameraFile &camera);
/// Throws DataError on a schema violation; the quaternion is normalized.
CameraFile camera_from_json(const std::string &text, const std::string &origin = "camera");
void write_camera_file(const std::filesystem::path &path, const CameraFile &camera);
CameraFile read_camera_file(const std::filesystem::path &path);

/// 8-bit RGB PNG; each value is written as round(255 clamp(v, 0, 1)).
void write_png(const std::filesystem::path &path, const Tensor &image);
/// [H, W, 3] with values k / 255. Gray and alpha channels are converted to RGB.
Tensor read_png(const std::filesystem::path &path);

/// Everything needed to reproduce renders of a fitted scene.
struct Checkpoint {
    ModelConfig config;
    SceneSample sample;
    Bounds gaf_bounds;
    std::uint64_t step = 0;
    ParameterSet params;

    static Checkpoint from_model(const SceneModel &model, const SceneSample &sample, std::uint64_t step);
    SceneModel model() const;
};

/// "NIACKPT", u32 version, u8 mode, u64 seed, u64 step, intrinsics, config JSON, then named
/// f64 tensors (parameters, input maps, tri-plane bounds).
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint &ckpt);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t> &bytes, const std::string &origin = "checkpoint");
void write_checkpoint(const std::filesystem::path &path, const Checkpoint &ckpt);
Checkpoint read_checkpoint(const std::filesystem::path &path);

std::vector<std::uint8_t> read_bytes(const std::filesystem::path &path);
void write_bytes(const std::filesystem::path &path, const std::vector<std::uint8_t> &bytes);

} // namespace layersplat
