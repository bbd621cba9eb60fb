// Copyright Contributors to the layersplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <layersplat/attention.hpp>
#include <layersplat/nn.hpp>
#include <layersplat/sh.hpp>
#include <layersplat/tensor.hpp>
#include <layersplat/triplane.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace layersplat {

struct DecoderConfig {
    int k_layers = 2;
    int sh_order = 1;
    bool use_gaf = true;
    bool use_attention = true;
    std::size_t gaf_channels = 64;
    std::size_t gaf_resolution = 32;
    AttentionConfig attention{32, 2, 8, 2};

    /// Raw channels per Gaussian layer: opacity, depth gap, offset, scale, rotation, SH.
    std::size_t channels_per_layer() const { return 12 + 3 * sh_basis_count(sh_order); }
    std::size_t output_channels() const {
        return static_cast<std::size_t>(k_layers) * channels_per_layer();
    }
};

inline constexpr std::size_t kDecoderInputChannels = 7;
inline constexpr std::size_t kBottleneckChannels = 32;

/// Small encoder-decoder: two stride-2 stages, a bottleneck that concatenates tri-plane
/// features and applies self-attention, and two upsampling stages with skip connections.
struct MiniDecoder {
    DecoderConfig config;
    Conv2dLayer enc0, enc1, enc2, fuse, dec1, dec0, head;
    std::optional<TriPlaneField> gaf;
    std::optional<AttentionBlock> attention;

    /// Every sub-module draws from its own RNG stream derived from `seed`, so shared parts
    /// start identical whichever optional parts are enabled.
    static MiniDecoder init(const DecoderConfig &config, const Bounds &gaf_bounds, std::uint64_t seed);

    std::vector<std::pair<std::string, Tensor *>> named_tensors();

    /// input [7, H, W] with H, W divisible by 4; points [(H/4)(W/4), 3] are the bottleneck
    /// cells' scene positions (row-major). Returns [output_channels, H, W].
    Tensor forward(const Tensor &input, const Tensor &points) const;
};

} // namespace layersplat
