// Copyright Contributors to the layersplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <layersplat/camera.hpp>
#include <layersplat/decoder.hpp>
#include <layersplat/gaussians.hpp>
#include <layersplat/loss.hpp>
#include <layersplat/optim.hpp>
#include <layersplat/render.hpp>
#include <layersplat/triplane.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace layersplat {

/// The input view: image, ingested depth and normal maps, and its camera. World coordinates
/// are the input camera's frame.
struct SceneSample {
    Tensor image;  // [H, W, 3]
    Tensor depth;  // [H, W]
    Tensor normal; // [H, W, 3]
    Intrinsics intr;

    /// Throws DataError when extents disagree with the intrinsics.
    void validate() const;
};

struct TargetView {
    Tensor image; // [H, W, 3]
    Pose pose;
};

enum class FitMode { direct, network };

std::string to_string(FitMode mode);
/// Throws std::invalid_argument for anything but "direct" or "network".
FitMode parse_fit_mode(const std::string &text);

struct ModelConfig {
    FitMode mode = FitMode::direct;
    DecodeConfig decode;
    /// Feed the normal map to the decoder and keep the normal-alignment term.
    bool use_normal = true;
    bool use_gaf = true;
    bool use_attention = true;
    std::size_t gaf_channels = 64;
    std::size_t gaf_resolution = 32;
    AttentionConfig attention{32, 2, 8, 2};
    std::uint64_t seed = 0;
};

/// Footprint standard deviations, in pixels at the sample depth, of the initial front layer and
/// of every deeper layer.
inline constexpr double kFrontFootprintPx = 0.6;
inline constexpr double kBackFootprintPx = 3.0;

/// Raw maps whose decode approximates the input view: an opaque front layer and faint, wider
/// deeper layers at every pixel, isotropic scales, pixel colors as the SH constant term.
RawParamMaps initial_raw(const SceneSample &sample, const DecodeConfig &config);

/// Decoder input [7, H, W]: RGB, depth divided by its mean, and normals (zeros when disabled).
Tensor decoder_input(const SceneSample &sample, bool use_normal);

/// Scene positions of the 4x4-pixel bottleneck cells, [(H/4)(W/4), 3].
Tensor bottleneck_points(const SceneSample &sample);

/// Input-view point cloud bounds dilated by 10%.
Bounds scene_bounds(const SceneSample &sample);

/// Trainable scene. Direct mode optimizes the raw maps; network mode optimizes the decoder
/// (plus tri-plane and attention weights when enabled), whose output is added to initial_raw.
struct SceneModel {
    ModelConfig config;
    ParameterSet params;
    Bounds gaf_bounds;
    std::optional<MiniDecoder> decoder;

    static SceneModel create(const SceneSample &sample, const ModelConfig &config);

    /// Rebuilds the network skeleton for `config` so that loaded parameters can be attached.
    static SceneModel skeleton(const SceneSample &sample, const ModelConfig &config, const Bounds &bounds);

    RawParamMaps raw_maps(const SceneSample &sample, const ParameterSet &values) const;
    GaussianLayerStack decode(const SceneSample &sample, const ParameterSet &values) const;
    GaussianLayerStack decode(const SceneSample &sample) const { return decode(sample, params); }
};

struct FitConfig {
    std::size_t steps = 2000;
    AdamConfig adam{};
    LossConfig loss;
    std::size_t log_every = 50;
    Eigen::Vector3d background = Eigen::Vector3d::Zero();
};

struct LogRecord {
    std::size_t step = 0;
    double loss_total = 0.0;
    std::vector<std::pair<std::string, double>> terms;
    double psnr = 0.0;
    double ssim = 0.0;
    double wall_ms = 0.0;
};

/// One JSON object per line; wall_ms is omitted when `with_wall_time` is false.
std::string to_json_line(const LogRecord &record, bool with_wall_time = true);

struct FitResult {
    SceneModel model;
    std::size_t steps_done = 0;
    std::vector<LogRecord> log;
    /// Set when the loss or a gradient stopped being finite; `model` then holds the last
    /// parameters that produced a finite loss.
    bool diverged = false;
    std::string failure;
};

/// Adam on the full objective, rendering every target each step. A record is logged every
/// `log_every` steps (before that step's update) and once more after the final update; its
/// PSNR/SSIM compare the clamped render of targets[0]. When the model does not use normals
/// the normal-alignment weight is forced to 0.
FitResult fit(const SceneSample &sample, const std::vector<TargetView> &targets, SceneModel model,
              const FitConfig &config, const std::function<void(const LogRecord &)> &on_log = {});

/// Render of the fitted scene at `pose`, unclamped.
RenderOutput render_model(const SceneModel &model, const SceneSample &sample, const Pose &pose,
                          const Eigen::Vector3d &background = Eigen::Vector3d::Zero());

} // namespace layersplat
