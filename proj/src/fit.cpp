// Copyright Contributors to the layersplat project
// SPDX-License-Identifier: Apache-2.0

#include <layersplat/errors.hpp>
#include <layersplat/fit.hpp>
#include <layersplat/metrics.hpp>
#include <layersplat/ops.hpp>

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace layersplat {

namespace {

double
softplus_inverse(double y) {
    return std::log(std::expm1(y));
}

// Layer slices of the head output [K*P, H, W] rearranged to the raw-map layouts.
Tensor
layer_field(const Tensor &out, std::size_t k, std::size_t per_layer, std::size_t begin, std::size_t width,
            std::size_t h, std::size_t w, const Shape &tail) {
    std::vector<Tensor> layers;
    for (std::size_t l = 0; l < k; ++l) {
        const std::size_t c0 = l * per_layer + begin;
        const Tensor part = slice(out, 0, c0, c0 + width); // [width, H, W]
        Shape shape{1, h, w};
        shape.insert(shape.end(), tail.begin(), tail.end());
        layers.push_back(reshape(width == 1 ? part : permute(part, {1, 2, 0}), shape));
    }
    return layers.size() == 1 ? layers[0] : concat(layers, 0);
}

Tensor
clamp01(const Tensor &t) {
    return clamp(t.detach(), 0.0, 1.0);
}

} // namespace

void
SceneSample::validate() const {
    intr.validate();
    const auto h = static_cast<std::size_t>(intr.height);
    const auto w = static_cast<std::size_t>(intr.width);
    if (image.shape() != Shape{h, w, 3} || depth.shape() != Shape{h, w} || normal.shape() != Shape{h, w, 3}) {
        throw DataError("scene sample extents disagree with the " + std::to_string(w) + "x" + std::to_string(h) +
                        " camera: image " + shape_str(image.shape()) + ", depth " + shape_str(depth.shape()) +
                        ", normal " + shape_str(normal.shape()));
    }
}

std::string
to_string(FitMode mode) {
    return mode == FitMode::direct ? "direct" : "network";
}

FitMode
parse_fit_mode(const std::string &text) {
    if (text == "direct") return FitMode::direct;
    if (text == "network") return FitMode::network;
    throw std::invalid_argument("unknown fit mode '" + text + "' (expected direct or network)");
}

RawParamMaps
initial_raw(const SceneSample &sample, const DecodeConfig &config) {
    sample.validate();
    const std::size_t k = static_cast<std::size_t>(config.k_layers);
    const std::size_t h = static_cast<std::size_t>(sample.intr.height);
    const std::size_t w = static_cast<std::size_t>(sample.intr.width);
    const std::size_t nb = sh_basis_count(config.sh_order);
    const auto dv = sample.depth.data();
    const auto iv = sample.image.data();

    std::vector<double> opacity(k * h * w), gap(k * h * w, softplus_inverse(0.1)), scale(k * h * w * 3),
        rotation(k * h * w * 4, 0.0), sh(k * h * w * nb * 3, 0.0);
    for (std::size_t l = 0; l < k; ++l) {
        for (std::size_t p = 0; p < h * w; ++p) {
            const std::size_t i = l * h * w + p;
            opacity[i] = l == 0 ? 2.0 : -2.0;
            const double std_dev = (l == 0 ? kFrontFootprintPx : kBackFootprintPx) * dv[p] / sample.intr.f;
            for (int a = 0; a < 3; ++a) scale[3 * i + a] = std::log(std_dev * std_dev);
            rotation[4 * i] = 1.0;
            for (int c = 0; c < 3; ++c) sh[i * nb * 3 + c] = iv[3 * p + c] / kShC0;
        }
    }
    RawParamMaps raw;
    raw.opacity = Tensor({k, h, w}, std::move(opacity));
    raw.delta_depth = Tensor({k, h, w}, std::move(gap));
    raw.offset = Tensor::zeros({k, h, w, 3});
    raw.scale = Tensor({k, h, w, 3}, std::move(scale));
    raw.rotation = Tensor({k, h, w, 4}, std::move(rotation));
    raw.sh = Tensor({k, h, w, nb, 3}, std::move(sh));
    return raw;
}

Tensor
decoder_input(const SceneSample &sample, bool use_normal) {
    const std::size_t h = sample.depth.shape()[0];
    const std::size_t w = sample.depth.shape()[1];
    const Tensor rgb = permute(sample.image.detach(), {2, 0, 1});
    const Tensor depth = sample.depth.detach();
    const Tensor depth_channel = reshape(depth / mean(depth), {1, h, w});
    const Tensor normal = use_normal ? permute(sample.normal.detach(), {2, 0, 1}) : Tensor::zeros({3, h, w});
    return concat({rgb, depth_channel, normal}, 0);
}

Tensor
bottleneck_points(const SceneSample &sample) {
    const std::size_t h = sample.depth.shape()[0];
    const std::size_t w = sample.depth.shape()[1];
    const std::size_t h4 = h / 4;
    const std::size_t w4 = w / 4;
    const auto dv = sample.depth.data();
    std::vector<double> pts;
    pts.reserve(h4 * w4 * 3);
    for (std::size_t i = 0; i < h4; ++i) {
        for (std::size_t j = 0; j < w4; ++j) {
            double d = 0.0;
            for (std::size_t y = 4 * i; y < 4 * i + 4; ++y)
                for (std::size_t x = 4 * j; x < 4 * j + 4; ++x) d += dv[y * w + x];
            d /= 16.0;
            const PixelRay u = PixelRay::from_pixel(sample.intr, 4.0 * static_cast<double>(j) + 1.5,
                                                    4.0 * static_cast<double>(i) + 1.5);
            const Eigen::Vector3d p = unproject(sample.intr, u, d);
            pts.insert(pts.end(), {p.x(), p.y(), p.z()});
        }
    }
    return Tensor({h4 * w4, 3}, std::move(pts));
}

Bounds
scene_bounds(const SceneSample &sample) {
    const std::size_t n = sample.depth.numel();
    return Bounds::around(reshape(unproject(sample.intr, sample.depth.detach()), {n, 3}), 0.1);
}

SceneModel
SceneModel::skeleton(const SceneSample &sample, const ModelConfig &config, const Bounds &bounds) {
    sample.validate();
    SceneModel m;
    m.config = config;
    m.gaf_bounds = bounds;
    if (config.mode == FitMode::direct) {
        const RawParamMaps raw = initial_raw(sample, config.decode);
        m.params = {{"raw.opacity", raw.opacity}, {"raw.delta_depth", raw.delta_depth},
                    {"raw.offset", raw.offset},   {"raw.scale", raw.scale},
                    {"raw.rotation", raw.rotation}, {"raw.sh", raw.sh}};
        return m;
    }
    DecoderConfig dc;
    dc.k_layers = config.decode.k_layers;
    dc.sh_order = config.decode.sh_order;
    dc.use_gaf = config.use_gaf;
    dc.use_attention = config.use_attention;
    dc.gaf_channels = config.gaf_channels;
    dc.gaf_resolution = config.gaf_resolution;
    dc.attention = config.attention;
    m.decoder = MiniDecoder::init(dc, bounds, config.seed);
    for (auto &[name, t] : m.decoder->named_tensors()) {
        m.params.push_back({name, *t});
    }
    return m;
}

SceneModel
SceneModel::create(const SceneSample &sample, const ModelConfig &config) {
    return skeleton(sample, config, scene_bounds(sample));
}

RawParamMaps
SceneModel::raw_maps(const SceneSample &sample, const ParameterSet &values) const {
    if (config.mode == FitMode::direct) {
        return {find_parameter(values, "raw.opacity"), find_parameter(values, "raw.delta_depth"),
                find_parameter(values, "raw.offset"),  find_parameter(values, "raw.scale"),
                find_parameter(values, "raw.rotation"), find_parameter(values, "raw.sh")};
    }
    MiniDecoder net = *decoder;
    for (auto &[name, t] : net.named_tensors()) {
        *t = find_parameter(values, name);
    }
    const Tensor out = net.forward(decoder_input(sample, config.use_normal), bottleneck_points(sample));
    const std::size_t k = static_cast<std::size_t>(config.decode.k_layers);
    const std::size_t h = sample.depth.shape()[0];
    const std::size_t w = sample.depth.shape()[1];
    const std::size_t per = net.config.channels_per_layer();
    const std::size_t nb = sh_basis_count(config.decode.sh_order);
    const RawParamMaps prior = initial_raw(sample, config.decode);
    RawParamMaps raw;
    raw.opacity = prior.opacity + layer_field(out, k, per, 0, 1, h, w, {});
    raw.delta_depth = prior.delta_depth + layer_field(out, k, per, 1, 1, h, w, {});
    raw.offset = prior.offset + layer_field(out, k, per, 2, 3, h, w, {3});
    raw.scale = prior.scale + layer_field(out, k, per, 5, 3, h, w, {3});
    raw.rotation = prior.rotation + layer_field(out, k, per, 8, 4, h, w, {4});
    raw.sh = prior.sh + layer_field(out, k, per, 12, 3 * nb, h, w, {nb, 3});
    return raw;
}

GaussianLayerStack
SceneModel::decode(const SceneSample &sample, const ParameterSet &values) const {
    return decode_activations(raw_maps(sample, values), sample.depth, sample.normal, sample.intr, config.decode);
}

std::string
to_json_line(const LogRecord &record, bool with_wall_time) {
    nlohmann::ordered_json j;
    j["step"] = record.step;
    j["loss_total"] = record.loss_total;
    nlohmann::ordered_json terms = nlohmann::ordered_json::object();
    for (const auto &[name, value] : record.terms) terms[name] = value;
    j["loss_terms"] = terms;
    j["psnr"] = record.psnr;
    j["ssim"] = record.ssim;
    if (with_wall_time) {
        j["wall_ms"] = record.wall_ms;
    }
    return j.dump();
}

RenderOutput
render_model(const SceneModel &model, const SceneSample &sample, const Pose &pose,
             const Eigen::Vector3d &background) {
    RenderTarget target = RenderTarget::matching(sample.intr);
    target.background = background;
    return render(model.decode(sample), pose, sample.intr, target);
}

FitResult
fit(const SceneSample &sample, const std::vector<TargetView> &targets, SceneModel model, const FitConfig &config,
    const std::function<void(const LogRecord &)> &on_log) {
    sample.validate();
    if (targets.empty()) {
        throw DataError("fit needs at least one target view");
    }
    for (const auto &t : targets) {
        if (t.image.shape() != sample.image.shape()) {
            throw DataError("target image " + shape_str(t.image.shape()) + " does not match the input view " +
                            shape_str(sample.image.shape()));
        }
    }
    LossConfig loss_config = config.loss;
    if (!model.config.use_normal) {
        loss_config.normal_blend_weight = 0.0;
    }
    RenderTarget target = RenderTarget::matching(sample.intr);
    target.background = config.background;
    std::vector<Tensor> target_images;
    for (const auto &t : targets) target_images.push_back(t.image.detach());

    FitResult result;
    Adam adam(config.adam);
    const auto start = std::chrono::steady_clock::now();
    ParameterSet last_good = model.params;
    for (std::size_t step = 0;; ++step) {
        Tape tape;
        ParameterSet leaves;
        for (const auto &p : model.params) leaves.push_back({p.name, tape.leaf(p.value, p.name)});
        const GaussianLayerStack stack = model.decode(sample, leaves);
        const SplatScene scene = SplatScene::from_stack(stack);
        std::vector<Tensor> renders;
        for (const auto &t : targets) renders.push_back(render(scene, t.pose, sample.intr, target).image);
        const LossBreakdown lb = loss(renders, target_images, stack, loss_config);
        const double total = lb.total.item();
        if (!std::isfinite(total)) {
            result.diverged = true;
            result.failure = "loss is not finite at step " + std::to_string(step);
            model.params = last_good;
            break;
        }
        last_good = model.params;

        const bool final_step = step == config.steps;
        if (final_step || (config.log_every > 0 && step % config.log_every == 0)) {
            LogRecord rec;
            rec.step = step;
            rec.loss_total = total;
            rec.terms = lb.terms;
            const Tensor shown = clamp01(renders[0]);
            rec.psnr = psnr(shown, target_images[0]);
            rec.ssim = ssim_value(shown, target_images[0]);
            rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
            result.log.push_back(rec);
            if (on_log) on_log(rec);
        }
        if (final_step) {
            break;
        }

        tape.backward(lb.total);
        std::vector<std::span<const double>> grads;
        for (const auto &leaf : leaves) grads.push_back(tape.grad(leaf.value));
        try {
            adam.step(model.params, grads);
        } catch (const NumericalError &e) {
            result.diverged = true;
            result.failure = e.what();
            break;
        }
        result.steps_done = step + 1;
    }
    result.model = std::move(model);
    return result;
}

} // namespace layersplat
