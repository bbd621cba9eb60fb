// Copyright Contributors to the layersplat project
// SPDX-License-Identifier: Apache-2.0

#include <layersplat/decoder.hpp>
#include <layersplat/errors.hpp>
#include <layersplat/ops.hpp>

namespace layersplat {

namespace {

std::mt19937_64
stream(std::uint64_t seed, std::uint64_t module) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(module)};
    return std::mt19937_64(seq);
}

} // namespace

MiniDecoder
MiniDecoder::init(const DecoderConfig &config, const Bounds &gaf_bounds, std::uint64_t seed) {
    if (config.attention.channels != kBottleneckChannels) {
        throw ShapeError("attention channels must equal the bottleneck width " +
                         std::to_string(kBottleneckChannels));
    }
    MiniDecoder d;
    d.config = config;
    auto r0 = stream(seed, 0);
    d.enc0 = Conv2dLayer::init(kDecoderInputChannels, 16, 3, 1, r0);
    auto r1 = stream(seed, 1);
    d.enc1 = Conv2dLayer::init(16, 32, 3, 2, r1);
    auto r2 = stream(seed, 2);
    d.enc2 = Conv2dLayer::init(32, kBottleneckChannels, 3, 2, r2);
    const std::size_t fuse_in =
        kBottleneckChannels + (config.use_gaf ? 3 * config.gaf_channels : 0);
    auto r3 = stream(seed, 3);
    d.fuse = Conv2dLayer::init(fuse_in, kBottleneckChannels, 1, 1, r3);
    auto r4 = stream(seed, 4);
    d.dec1 = Conv2dLayer::init(kBottleneckChannels + 32, 32, 3, 1, r4);
    auto r5 = stream(seed, 5);
    d.dec0 = Conv2dLayer::init(32 + 16, 16, 3, 1, r5);
    auto r6 = stream(seed, 6);
    d.head = Conv2dLayer::init(16, config.output_channels(), 1, 1, r6, 0.05);
    if (config.use_gaf) {
        auto r7 = stream(seed, 7);
        d.gaf = TriPlaneField::random(config.gaf_channels, config.gaf_resolution, gaf_bounds, r7);
    }
    if (config.use_attention) {
        auto r8 = stream(seed, 8);
        d.attention = AttentionBlock::xavier(config.attention, r8);
    }
    return d;
}

std::vector<std::pair<std::string, Tensor *>>
MiniDecoder::named_tensors() {
    std::vector<std::pair<std::string, Tensor *>> out;
    const std::pair<const char *, Conv2dLayer *> convs[] = {{"enc0", &enc0}, {"enc1", &enc1}, {"enc2", &enc2},
                                                            {"fuse", &fuse}, {"dec1", &dec1}, {"dec0", &dec0},
                                                            {"head", &head}};
    for (const auto &[name, layer] : convs) {
        out.emplace_back(std::string("decoder.") + name + ".weight", &layer->weight);
        out.emplace_back(std::string("decoder.") + name + ".bias", &layer->bias);
    }
    if (gaf) {
        out.emplace_back("gaf.planes", &gaf->planes);
    }
    if (attention) {
        for (auto &[name, t] : attention->named_tensors()) {
            out.emplace_back("attention." + name, t);
        }
    }
    return out;
}

Tensor
MiniDecoder::forward(const Tensor &input, const Tensor &points) const {
    if (input.rank() != 3 || input.shape()[0] != kDecoderInputChannels || input.shape()[1] % 4 != 0 ||
        input.shape()[2] % 4 != 0 || input.shape()[1] == 0 || input.shape()[2] == 0) {
        throw ShapeError("decoder input must be [7,H,W] with H, W positive multiples of 4, got " +
                         shape_str(input.shape()));
    }
    const std::size_t h4 = input.shape()[1] / 4;
    const std::size_t w4 = input.shape()[2] / 4;
    const Tensor e0 = relu(enc0(input));
    const Tensor e1 = relu(enc1(e0));
    Tensor bottleneck = relu(enc2(e1));
    if (gaf) {
        if (points.shape() != Shape{h4 * w4, 3}) {
            throw ShapeError("decoder points must be [" + std::to_string(h4 * w4) + ",3], got " +
                             shape_str(points.shape()));
        }
        const Tensor features = transpose(query(*gaf, points)); // [3C, h4*w4]
        bottleneck = concat({bottleneck, reshape(features, {3 * gaf->channels(), h4, w4})}, 0);
    }
    bottleneck = relu(fuse(bottleneck));
    if (attention) {
        bottleneck = reshape(layersplat::forward(*attention, reshape(bottleneck, {1, kBottleneckChannels, h4, w4})),
                             {kBottleneckChannels, h4, w4});
    }
    const Tensor d1 = relu(dec1(concat({upsample2x(bottleneck), e1}, 0)));
    const Tensor d0 = relu(dec0(concat({upsample2x(d1), e0}, 0)));
    return head(d0);
}

} // namespace layersplat
