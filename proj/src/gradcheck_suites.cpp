// Copyright Contributors to the layersplat project
// SPDX-License-Identifier: Apache-2.0

#include <layersplat/attention.hpp>
#include <layersplat/camera.hpp>
#include <layersplat/decoder.hpp>
#include <layersplat/gaussians.hpp>
#include <layersplat/gradcheck.hpp>
#include <layersplat/loss.hpp>
#include <layersplat/metrics.hpp>
#include <layersplat/nn.hpp>
#include <layersplat/ops.hpp>
#include <layersplat/render.hpp>
#include <layersplat/sh.hpp>
#include <layersplat/triplane.hpp>

#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <stdexcept>

namespace layersplat {

namespace {

constexpr double kSmoothTol = 1e-4;
constexpr double kSplatTol = 1e-3;

Tensor
uniform_tensor(const Shape &shape, std::mt19937_64 &rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(shape_numel(shape));
    for (auto &x : v) x = u(rng);
    return Tensor(shape, std::move(v));
}

GradcheckOptions
options(double tol, bool kinks, std::uint64_t seed) {
    GradcheckOptions o;
    o.rel_tol = tol;
    o.skip_kinks = kinks;
    o.samples = 120;
    o.seed = seed;
    return o;
}

Tensor
unit_normals(std::size_t h, std::size_t w, std::mt19937_64 &rng) {
    std::normal_distribution<double> n(0.0, 0.2);
    std::vector<double> v;
    for (std::size_t p = 0; p < h * w; ++p) {
        Eigen::Vector3d d(n(rng), n(rng), -1.0);
        d.normalize();
        v.insert(v.end(), {d.x(), d.y(), d.z()});
    }
    return Tensor({h, w, 3}, std::move(v));
}

RawParamMaps
random_raw(std::size_t k, std::size_t h, std::size_t w, int sh_order, std::mt19937_64 &rng) {
    const std::size_t nb = sh_basis_count(sh_order);
    RawParamMaps r;
    r.opacity = uniform_tensor({k, h, w}, rng, -2, 2);
    r.delta_depth = uniform_tensor({k, h, w}, rng, -2, 1);
    r.offset = uniform_tensor({k, h, w, 3}, rng, -1.5, 1.5);
    r.scale = uniform_tensor({k, h, w, 3}, rng, -4, -0.5);
    r.rotation = uniform_tensor({k, h, w, 4}, rng);
    r.sh = uniform_tensor({k, h, w, nb, 3}, rng);
    return r;
}

std::vector<GradcheckReport>
tensor_suite() {
    std::mt19937_64 rng(101);
    const Tensor a = uniform_tensor({8, 8}, rng);
    const Tensor b = uniform_tensor({8, 5}, rng);
    const Tensor c = uniform_tensor({5}, rng, 0.5, 1.5);
    const Tensor w = uniform_tensor({5, 8}, rng);
    const auto fn = [&](const std::vector<Tensor> &in) {
        const Tensor m = matmul(in[0], in[1]);
        const Tensor s = softmax(m * in[2], 1);
        const Tensor t = tanh(m) + sigmoid(m) * softplus(m - in[2]) + exp(0.3 * m) / (1.0 + in[2]);
        const Tensor u = log(in[2] + 1.0) * sqrt(in[2]) + pow(in[2], reshape(in[2], {5}));
        const Tensor v = concat({slice(s, 1, 0, 3), slice(t, 1, 3, 5)}, 1) + u;
        const Tensor p = permute(v, {1, 0});
        return sum(p * w) + sum(sum(abs(m), 0) * in[2]) + mean(transpose(v));
    };
    return {check_gradients("tensor.composite", fn, {a, b, c}, options(kSmoothTol, true, 1))};
}

std::vector<GradcheckReport>
camera_suite() {
    std::mt19937_64 rng(202);
    const Intrinsics k = Intrinsics::centered(12.0, 7, 6);
    const Tensor depth = uniform_tensor({6, 7}, rng, 1.0, 3.0);
    const Tensor offset = uniform_tensor({6, 7, 3}, rng, -0.1, 0.1);
    const Tensor w = uniform_tensor({6, 7, 3}, rng);
    return {check_gradients(
        "camera.unproject", [&](const std::vector<Tensor> &in) { return sum(unproject(k, in[0], in[1]) * w); },
        {depth, offset}, options(kSmoothTol, false, 2))};
}

std::vector<GradcheckReport>
gaussians_suite() {
    std::mt19937_64 rng(303);
    const std::size_t kl = 2, h = 3, wd = 4;
    const Intrinsics k = Intrinsics::centered(5.0, static_cast<int>(wd), static_cast<int>(h));
    const RawParamMaps raw = random_raw(kl, h, wd, 1, rng);
    const Tensor depth = uniform_tensor({h, wd}, rng, 1.0, 3.0);
    const Tensor normals = unit_normals(h, wd, rng);
    const std::size_t n = kl * h * wd;
    std::vector<Tensor> ws{uniform_tensor({n}, rng),       uniform_tensor({n}, rng),
                           uniform_tensor({n, 3}, rng),    uniform_tensor({n, 3}, rng),
                           uniform_tensor({n, 4}, rng),    uniform_tensor({n, 3, 3}, rng),
                           uniform_tensor({n, 4, 3}, rng)};
    std::vector<GradcheckReport> out;
    out.push_back(check_gradients(
        "gaussians.decode_activations",
        [&](const std::vector<Tensor> &in) {
            RawParamMaps r{in[0], in[1], in[2], in[3], in[4], in[5]};
            const auto s = decode_activations(r, in[6], normals, k);
            return sum(s.opacity * ws[0]) + sum(s.depth * ws[1]) + sum(s.mean * ws[2]) + sum(s.scale * ws[3]) +
                   sum(s.rotation * ws[4]) + sum(s.covariance * ws[5]) + sum(s.sh * ws[6]);
        },
        {raw.opacity, raw.delta_depth, raw.offset, raw.scale, raw.rotation, raw.sh, depth},
        options(kSmoothTol, true, 3)));
    const Tensor scales = uniform_tensor({20, 3}, rng, 0.1, 2.0);
    const Tensor quats = uniform_tensor({20, 4}, rng);
    const Tensor wc = uniform_tensor({20, 3, 3}, rng);
    out.push_back(check_gradients(
        "gaussians.build_covariance",
        [&](const std::vector<Tensor> &in) { return sum(build_covariance(in[0], in[1]) * wc); }, {scales, quats},
        options(kSmoothTol, false, 4)));
    return out;
}

std::vector<GradcheckReport>
sh_suite() {
    std::mt19937_64 rng(404);
    const std::size_t n = 8;
    std::vector<GradcheckReport> out;
    for (int order = 1; order <= 2; ++order) {
        const Tensor coeffs = uniform_tensor({n, sh_basis_count(order), 3}, rng);
        std::vector<double> d;
        std::normal_distribution<double> g(0.0, 1.0);
        for (std::size_t i = 0; i < n; ++i) {
            Eigen::Vector3d v(g(rng), g(rng), g(rng));
            v.normalize();
            d.insert(d.end(), {v.x(), v.y(), v.z()});
        }
        const Tensor dirs({n, 3}, std::move(d));
        const Tensor w = uniform_tensor({n, 3}, rng);
        out.push_back(check_gradients(
            "sh.color_order" + std::to_string(order),
            [&](const std::vector<Tensor> &in) { return sum(sh_color(in[0], in[1], order) * w); }, {coeffs, dirs},
            options(kSmoothTol, false, 5 + static_cast<std::uint64_t>(order))));
    }
    return out;
}

std::vector<GradcheckReport>
gaf_suite() {
    std::mt19937_64 rng(505);
    const Bounds bounds{{-1.0, -1.0, 1.0}, {1.0, 1.0, 3.0}};
    std::vector<GradcheckReport> out;
    for (std::size_t res : {4u, 8u}) {
        const TriPlaneField field = TriPlaneField::random(3, res, bounds, rng, 1.0);
        std::vector<double> p;
        std::uniform_real_distribution<double> u(0.05, 0.95);
        for (int i = 0; i < 20; ++i) {
            for (int a = 0; a < 3; ++a) p.push_back(bounds.min[a] + u(rng) * (bounds.max[a] - bounds.min[a]));
        }
        const Tensor points({20, 3}, std::move(p));
        const Tensor w = uniform_tensor({20, 9}, rng);
        out.push_back(check_gradients(
            "gaf.query_r" + std::to_string(res),
            [&](const std::vector<Tensor> &in) { return sum(query(in[0], bounds, in[1]) * w); },
            {field.planes, points}, options(kSmoothTol, true, 7 + res)));
    }
    return out;
}

std::vector<GradcheckReport>
attention_suite() {
    std::mt19937_64 rng(606);
    AttentionBlock block = AttentionBlock::xavier({8, 2, 4, 2}, rng);
    for (auto &[name, t] : block.named_tensors()) {
        if (name.find(".b") != std::string::npos) *t = uniform_tensor(t->shape(), rng, -0.2, 0.2);
    }
    const Tensor x = uniform_tensor({1, 8, 3, 3}, rng);
    const Tensor w = uniform_tensor({1, 8, 3, 3}, rng);
    std::vector<Tensor> inputs{x};
    for (auto &[name, t] : block.named_tensors()) inputs.push_back(*t);
    return {check_gradients(
        "attention.forward",
        [&](const std::vector<Tensor> &in) {
            AttentionBlock local = block;
            auto named = local.named_tensors();
            for (std::size_t i = 0; i < named.size(); ++i) *named[i].second = in[i + 1];
            return sum(forward(local, in[0]) * w);
        },
        inputs, options(kSmoothTol, false, 9))};
}

std::vector<GradcheckReport>
decoder_suite() {
    std::mt19937_64 rng(707);
    std::vector<GradcheckReport> out;
    const Tensor x = uniform_tensor({3, 6, 6}, rng);
    const Tensor cw = uniform_tensor({4, 3, 3, 3}, rng, -0.5, 0.5);
    const Tensor cb = uniform_tensor({4}, rng, -0.1, 0.1);
    const Tensor w1 = uniform_tensor({4, 3, 3}, rng);
    out.push_back(check_gradients(
        "decoder.conv2d_stride2",
        [&](const std::vector<Tensor> &in) { return sum(conv2d(in[0], in[1], in[2], 2, 1) * w1); }, {x, cw, cb},
        options(kSmoothTol, false, 10)));

    DecoderConfig config;
    config.gaf_channels = 4;
    config.gaf_resolution = 4;
    config.attention = {kBottleneckChannels, 2, 8, 1};
    const Bounds bounds{{-1.0, -1.0, 1.0}, {1.0, 1.0, 3.0}};
    MiniDecoder decoder = MiniDecoder::init(config, bounds, 11);
    for (auto &[name, t] : decoder.named_tensors()) {
        if (name.find("bias") != std::string::npos) *t = uniform_tensor(t->shape(), rng, 0.05, 0.2);
    }
    const Tensor input = uniform_tensor({kDecoderInputChannels, 8, 8}, rng, 0.0, 1.0);
    const Tensor points = uniform_tensor({4, 3}, rng, -0.5, 0.5) + Tensor({3}, {0.0, 0.0, 2.0});
    const Tensor w = uniform_tensor({config.output_channels(), 8, 8}, rng);
    std::vector<Tensor> inputs{input};
    for (auto &[name, t] : decoder.named_tensors()) inputs.push_back(*t);
    auto opt = options(kSmoothTol, true, 12);
    opt.samples = 150;
    out.push_back(check_gradients(
        "decoder.mini_decoder",
        [&](const std::vector<Tensor> &in) {
            MiniDecoder local = decoder;
            auto named = local.named_tensors();
            for (std::size_t i = 0; i < named.size(); ++i) *named[i].second = in[i + 1];
            return sum(local.forward(in[0], points) * w);
        },
        inputs, opt));
    return out;
}

std::vector<GradcheckReport>
render_suite() {
    const Intrinsics k = Intrinsics::centered(30.0, 24, 24);
    RenderTarget t = RenderTarget::matching(k);
    t.tile_size = 8;
    t.background = {0.3, 0.1, 0.6};
    std::mt19937_64 rng(808);
    std::uniform_real_distribution<double> u(-1, 1), z(1.5, 3.0), sd(0.08, 0.2), op(0.2, 0.8);
    const std::size_t n = 8;
    std::vector<double> mu, sc, q, o, sh;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = z(rng);
        mu.insert(mu.end(), {u(rng) * 0.25 * d, u(rng) * 0.25 * d, d});
        for (int a = 0; a < 3; ++a) sc.push_back(std::log(std::pow(sd(rng), 2)));
        q.insert(q.end(), {1 + 0.3 * u(rng), 0.3 * u(rng), 0.3 * u(rng), 0.3 * u(rng)});
        o.push_back(op(rng));
        for (int j = 0; j < 12; ++j) sh.push_back(j < 3 ? (0.5 + 0.4 * u(rng)) / kShC0 : 0.3 * u(rng));
    }
    const Tensor weights = uniform_tensor({24, 24, 3}, rng);
    const Tensor aweights = uniform_tensor({24, 24}, rng);
    const Pose pose = Pose::looking_from(Eigen::AngleAxisd(0.1, Eigen::Vector3d::UnitY()).toRotationMatrix(),
                                         Eigen::Vector3d(0.05, 0.02, 0.0));
    auto opt = options(kSplatTol, true, 13);
    opt.samples = 150;
    return {check_gradients(
        "render.splat",
        [&](const std::vector<Tensor> &in) {
            SplatScene s{in[0], build_covariance(exp(in[1]), in[2]), in[3], in[4], 1};
            const auto out = render(s, pose, k, t);
            return sum(out.image * weights) + sum(out.alpha * aweights);
        },
        {Tensor({n, 3}, mu), Tensor({n, 3}, sc), Tensor({n, 4}, q), Tensor({n}, o), Tensor({n, 4, 3}, sh)}, opt)};
}

std::vector<GradcheckReport>
loss_suite() {
    std::mt19937_64 rng(909);
    const std::size_t h = 12, wd = 12;
    const Intrinsics k = Intrinsics::centered(10.0, static_cast<int>(wd), static_cast<int>(h));
    RawParamMaps raw = random_raw(2, h, wd, 1, rng);
    raw.scale = uniform_tensor({2, h, wd, 3}, rng, -3.0, 0.5);
    const Tensor depth = uniform_tensor({h, wd}, rng, 1.0, 3.0);
    const Tensor normals = unit_normals(h, wd, rng);
    const Tensor rendered = uniform_tensor({h, wd, 3}, rng, 0.1, 0.9);
    const Tensor target = uniform_tensor({h, wd, 3}, rng, 0.0, 1.0);
    LossConfig cfg;
    cfg.lambda1 = 1.0;
    cfg.lambda2 = 1.0;
    cfg.normal_blend_weight = 1.0;
    std::vector<GradcheckReport> out;
    out.push_back(check_gradients(
        "loss.total",
        [&](const std::vector<Tensor> &in) {
            RawParamMaps r = raw;
            r.offset = in[1];
            r.scale = in[2];
            r.rotation = in[3];
            const auto stack = decode_activations(r, depth, normals, k);
            return loss(in[0], target, stack, cfg).total;
        },
        {rendered, raw.offset, raw.scale, raw.rotation}, options(kSmoothTol, true, 14)));
    out.push_back(check_gradients(
        "loss.ssim", [&](const std::vector<Tensor> &in) { return ssim(in[0], target); }, {rendered},
        options(kSmoothTol, false, 15)));
    return out;
}

const std::map<std::string, std::function<std::vector<GradcheckReport>()>> &
suites() {
    static const std::map<std::string, std::function<std::vector<GradcheckReport>()>> table{
        {"tensor", tensor_suite}, {"camera", camera_suite},   {"gaussians", gaussians_suite},
        {"sh", sh_suite},         {"gaf", gaf_suite},         {"attention", attention_suite},
        {"decoder", decoder_suite}, {"render", render_suite}, {"loss", loss_suite},
    };
    return table;
}

} // namespace

std::vector<std::string>
gradcheck_suite_names() {
    return {"tensor", "camera", "gaussians", "sh", "gaf", "attention", "decoder", "render", "loss"};
}

std::vector<GradcheckReport>
run_gradcheck_suite(const std::string &name) {
    std::vector<GradcheckReport> out;
    for (const auto &suite : gradcheck_suite_names()) {
        if (!name.empty() && suite != name) continue;
        auto reports = suites().at(suite)();
        out.insert(out.end(), reports.begin(), reports.end());
    }
    if (out.empty()) {
        throw std::invalid_argument("unknown gradcheck suite '" + name + "'");
    }
    return out;
}

} // namespace layersplat
