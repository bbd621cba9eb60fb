// Copyright Contributors to the layersplat project
// SPDX-License-Identifier: Apache-2.0

// Runs every acceptance criterion and prints one PASS/FAIL line per criterion. Exits 0 iff
// all selected criteria pass. `--only <name>` (repeatable) restricts the run; `--list` prints
// the criterion names.

#include <layersplat/attention.hpp>
#include <layersplat/fit.hpp>
#include <layersplat/gaussians.hpp>
#include <layersplat/gradcheck.hpp>
#include <layersplat/io.hpp>
#include <layersplat/metrics.hpp>
#include <layersplat/ops.hpp>
#include <layersplat/render.hpp>
#include <layersplat/sh.hpp>
#include <layersplat/synthetic.hpp>
#include <layersplat/triplane.hpp>

#include "../support/oracles.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>

using namespace layersplat;
using oracle::random_tensor;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double
seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string
fmt(const char *format, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof(buf), format, args...);
    return buf;
}

Tensor
clamp01(const Tensor &t) {
    return clamp(t, 0.0, 1.0);
}

Outcome
gradient_suite() {
    const auto t0 = Clock::now();
    const auto reports = run_gradcheck_suite();
    const double secs = seconds_since(t0);
    bool ok = secs < 300.0;
    std::size_t min_checked = SIZE_MAX;
    std::string failed;
    double worst = 0.0;
    for (const auto &r : reports) {
        ok = ok && r.passed && r.checked >= 100;
        min_checked = std::min(min_checked, r.checked);
        worst = std::max(worst, r.max_rel_err);
        if (!r.passed || r.checked < 100) failed += " " + r.name;
    }
    std::string detail = fmt("%zu checks over %zu suites, min %zu coordinates, worst rel err %.2e, %.1f s (< 300 s)",
                             reports.size(), gradcheck_suite_names().size(), min_checked, worst, secs);
    if (!failed.empty()) detail += "; failing:" + failed;
    return {ok, detail};
}

SplatScene
random_splat_scene(std::mt19937_64 &rng, std::size_t n, int order) {
    std::uniform_real_distribution<double> u(-1, 1), z(0.8, 6.0), sd(0.01, 0.25), op(0.05, 0.99);
    const std::size_t nb = sh_basis_count(order);
    std::vector<double> mu, sc, q, o, sh;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = z(rng);
        mu.insert(mu.end(), {u(rng) * 0.7 * d, u(rng) * 0.7 * d, d});
        for (int a = 0; a < 3; ++a) sc.push_back(std::pow(sd(rng), 2));
        q.insert(q.end(), {u(rng), u(rng), u(rng), u(rng)});
        o.push_back(op(rng));
        for (std::size_t j = 0; j < nb * 3; ++j) sh.push_back(j < 3 ? (0.5 + 0.5 * u(rng)) / kShC0 : 0.3 * u(rng));
    }
    return {Tensor({n, 3}, mu), build_covariance(Tensor({n, 3}, sc), Tensor({n, 4}, q)), Tensor({n}, o),
            Tensor({n, nb, 3}, sh), order};
}

Outcome
renderer_oracle() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<std::size_t> count(200, 1000);
    std::uniform_real_distribution<double> u(-1, 1), bg(0, 1);
    const Intrinsics k = Intrinsics::centered(60.0, 64, 64);
    double worst = 0.0;
    std::size_t max_n = 0;
    for (int s = 0; s < 20; ++s) {
        const std::size_t n = count(rng);
        max_n = std::max(max_n, n);
        const SplatScene scene = random_splat_scene(rng, n, s % 3);
        RenderTarget t = RenderTarget::matching(k);
        t.background = {bg(rng), bg(rng), bg(rng)};
        const Pose pose = Pose::looking_from(
            Eigen::AngleAxisd(0.1 * u(rng), Eigen::Vector3d(u(rng), u(rng), u(rng)).normalized()).toRotationMatrix(),
            Eigen::Vector3d(0.1 * u(rng), 0.1 * u(rng), 0.1 * u(rng)));
        const auto a = render(scene, pose, k, t);
        const auto b = render_reference(scene, pose, k, t);
        for (std::size_t i = 0; i < a.image.numel(); ++i) worst = std::max(worst, std::abs(a.image[i] - b.image[i]));
        for (std::size_t i = 0; i < a.alpha.numel(); ++i) worst = std::max(worst, std::abs(a.alpha[i] - b.alpha[i]));
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-5 && secs < 120.0,
            fmt("20 scenes at 64x64, up to %zu Gaussians, max abs diff %.2e (<= 1e-5), %.1f s (< 120 s)", max_n, worst,
                secs)};
}

Outcome
structural_invariants() {
    std::mt19937_64 rng(77);
    std::uniform_int_distribution<int> layers(1, 4), order(0, 2);
    std::uniform_real_distribution<double> wide(-12, 12), dd(0.05, 50.0);
    std::normal_distribution<double> g(0, 1);
    std::size_t gaussians = 0, ordering_violations = 0, opacity_violations = 0, normal_violations = 0;
    double worst_sym = 0.0, worst_eig = 0.0;
    for (int trial = 0; trial < 10000; ++trial) {
        const std::size_t kl = static_cast<std::size_t>(layers(rng));
        const int lo = order(rng);
        const std::size_t h = 2, w = 2, nb = sh_basis_count(lo);
        RawParamMaps raw{random_tensor({kl, h, w}, rng, -15, 15), random_tensor({kl, h, w}, rng, -15, 15),
                         random_tensor({kl, h, w, 3}, rng, -15, 15), random_tensor({kl, h, w, 3}, rng, -14, 6),
                         random_tensor({kl, h, w, 4}, rng),        random_tensor({kl, h, w, nb, 3}, rng)};
        std::vector<double> depth(h * w), normal;
        for (auto &d : depth) d = dd(rng);
        for (std::size_t p = 0; p < h * w; ++p) {
            Eigen::Vector3d n(g(rng), g(rng), g(rng));
            n.normalize();
            normal.insert(normal.end(), {n.x(), n.y(), n.z()});
        }
        DecodeConfig cfg;
        cfg.k_layers = static_cast<int>(kl);
        cfg.sh_order = lo;
        const Intrinsics intr = Intrinsics::centered(3.0, 2, 2);
        const auto s = decode_activations(raw, Tensor({h, w}, depth), Tensor({h, w, 3}, normal), intr, cfg);
        for (std::size_t l = 0; l < kl; ++l) {
            for (std::size_t p = 0; p < h * w; ++p) {
                const std::size_t i = l * h * w + p;
                ++gaussians;
                if (l > 0 && !(s.depth[i] > s.depth[i - h * w])) ++ordering_violations;
                if (!(s.opacity[i] >= 0.0 && s.opacity[i] < 1.0)) ++opacity_violations;
                const Eigen::Vector3d n(s.normal[3 * i], s.normal[3 * i + 1], s.normal[3 * i + 2]);
                if (std::abs(n.norm() - 1.0) > 1e-12) ++normal_violations;
                Eigen::Matrix3d c;
                for (int r = 0; r < 3; ++r)
                    for (int q = 0; q < 3; ++q) c(r, q) = s.covariance[9 * i + 3 * r + q];
                worst_sym = std::max(worst_sym, (c - c.transpose()).cwiseAbs().maxCoeff());
                Eigen::Vector3d ev = Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(c).eigenvalues();
                Eigen::Vector3d sc(s.scale[3 * i], s.scale[3 * i + 1], s.scale[3 * i + 2]);
                std::sort(sc.data(), sc.data() + 3);
                worst_eig = std::max(worst_eig, (ev - sc).cwiseAbs().maxCoeff());
            }
        }
    }
    const bool ok = ordering_violations == 0 && opacity_violations == 0 && normal_violations == 0 &&
                    worst_sym == 0.0 && worst_eig <= 1e-9;
    return {ok, fmt("10000 decodes, %zu Gaussians: %zu ordering, %zu opacity, %zu normal violations; "
                    "asymmetry %.1e; eigenvalue error %.2e (<= 1e-9)",
                    gaussians, ordering_violations, opacity_violations, normal_violations, worst_sym, worst_eig)};
}

Outcome
sh_properties() {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g(0, 1);
    const std::size_t n = 1000;
    std::vector<double> d;
    for (std::size_t i = 0; i < n; ++i) {
        Eigen::Vector3d v(g(rng), g(rng), g(rng));
        v.normalize();
        d.insert(d.end(), {v.x(), v.y(), v.z()});
    }
    const Tensor dirs({n, 3}, d);
    bool invariant = true;
    double worst_lin = 0.0;
    for (int order = 0; order <= 2; ++order) {
        const std::size_t nb = sh_basis_count(order);
        std::vector<double> dc(n * nb * 3, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (int c = 0; c < 3; ++c) dc[i * nb * 3 + c] = 0.3 + 0.2 * c;
        const Tensor colors = sh_color(Tensor({n, nb, 3}, dc), dirs, order);
        for (std::size_t i = 1; i < n; ++i)
            for (int c = 0; c < 3; ++c) invariant = invariant && colors[3 * i + c] == colors[c];
        const Tensor c1 = random_tensor({n, nb, 3}, rng), c2 = random_tensor({n, nb, 3}, rng);
        const double a = 0.7, b = -1.3;
        const Tensor lhs = sh_color(a * c1 + b * c2, dirs, order);
        const Tensor rhs = a * sh_color(c1, dirs, order) + b * sh_color(c2, dirs, order);
        for (std::size_t i = 0; i < lhs.numel(); ++i) worst_lin = std::max(worst_lin, std::abs(lhs[i] - rhs[i]));
    }
    return {invariant && worst_lin <= 1e-12,
            fmt("band-0 invariance %s over 1000 directions; linearity error %.2e (<= 1e-12), orders 0-2",
                invariant ? "exact" : "BROKEN", worst_lin)};
}

Outcome
gaf_bruteforce() {
    std::mt19937_64 rng(9);
    const Bounds bounds{{-1.5, -1.0, 0.5}, {2.0, 1.0, 4.0}};
    double worst = 0.0;
    for (std::size_t res : {4u, 32u}) {
        const std::size_t ch = 5;
        const TriPlaneField field = TriPlaneField::random(ch, res, bounds, rng, 1.0);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        std::vector<double> p, norm;
        for (int i = 0; i < 1000; ++i) {
            for (int a = 0; a < 3; ++a) {
                const double t = u(rng);
                norm.push_back(t);
                p.push_back(bounds.min[a] + t * (bounds.max[a] - bounds.min[a]));
            }
        }
        const Tensor f = query(field, Tensor({1000, 3}, p));
        const int pairs[3][2] = {{0, 1}, {0, 2}, {1, 2}};
        for (int i = 0; i < 1000; ++i) {
            for (int plane = 0; plane < 3; ++plane) {
                const double gx = norm[3 * i + pairs[plane][0]] * (res - 1);
                const double gy = norm[3 * i + pairs[plane][1]] * (res - 1);
                const std::size_t x0 = std::min<std::size_t>(static_cast<std::size_t>(gx), res - 2);
                const std::size_t y0 = std::min<std::size_t>(static_cast<std::size_t>(gy), res - 2);
                const double fx = gx - x0, fy = gy - y0;
                for (std::size_t c = 0; c < ch; ++c) {
                    const auto node = [&](std::size_t y, std::size_t x) {
                        return field.planes[((plane * ch + c) * res + y) * res + x];
                    };
                    const double expect = (1 - fx) * (1 - fy) * node(y0, x0) + fx * (1 - fy) * node(y0, x0 + 1) +
                                          (1 - fx) * fy * node(y0 + 1, x0) + fx * fy * node(y0 + 1, x0 + 1);
                    worst = std::max(worst, std::abs(f[i * 3 * ch + plane * ch + c] - expect));
                }
            }
        }
    }
    return {worst <= 1e-12, fmt("1000 queries per resolution {4, 32}, max diff %.2e (<= 1e-12)", worst)};
}

Outcome
attention_properties() {
    std::mt19937_64 rng(13);
    const AttentionConfig cfg{8, 2, 4, 2};
    AttentionBlock block = AttentionBlock::xavier(cfg, rng);
    for (auto &[name, t] : block.named_tensors()) *t = random_tensor(t->shape(), rng, -0.6, 0.6);
    const std::size_t h = 3, w = 4, tokens = h * w;
    const Tensor x = random_tensor({2, 8, h, w}, rng);

    std::vector<std::size_t> perm(tokens);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto permute_tokens = [&](const Tensor &t) {
        std::vector<double> v(t.numel());
        for (std::size_t b = 0; b < 2; ++b)
            for (std::size_t c = 0; c < 8; ++c)
                for (std::size_t k = 0; k < tokens; ++k) v[(b * 8 + c) * tokens + k] = t[(b * 8 + c) * tokens + perm[k]];
        return Tensor(t.shape(), v);
    };
    AttentionTrace trace;
    const Tensor y = forward(block, x, &trace);
    const Tensor yp = forward(block, permute_tokens(x));
    const Tensor py = permute_tokens(y);
    double worst_perm = 0.0;
    for (std::size_t i = 0; i < y.numel(); ++i) worst_perm = std::max(worst_perm, std::abs(yp[i] - py[i]));

    double worst_row = 0.0;
    for (const auto &a : trace.weights) {
        for (std::size_t r = 0; r < tokens; ++r) {
            double s = 0.0;
            for (std::size_t c = 0; c < tokens; ++c) s += a[r * tokens + c];
            worst_row = std::max(worst_row, std::abs(s - 1.0));
        }
    }

    AttentionBlock zero = block;
    for (auto &layer : zero.layers) {
        layer.wv = Tensor::zeros(layer.wv.shape());
        layer.bv = Tensor::zeros(layer.bv.shape());
        layer.bo = Tensor::zeros(layer.bo.shape());
    }
    const Tensor z = forward(zero, x);
    bool passthrough = true;
    for (std::size_t i = 0; i < x.numel(); ++i) passthrough = passthrough && z[i] == x[i];

    return {worst_perm <= 1e-12 && passthrough && worst_row <= 1e-9,
            fmt("permutation error %.2e (<= 1e-12); zero-value passthrough %s; row-sum error %.2e (<= 1e-9) over %zu "
                "maps",
                worst_perm, passthrough ? "exact" : "BROKEN", worst_row, trace.weights.size())};
}

Outcome
overfit() {
    const auto t0 = Clock::now();
    const SceneBundle b = generate_scene(random_room(1, 3, 64, 64));
    ModelConfig mc;
    mc.mode = FitMode::direct;
    mc.decode.k_layers = 2;
    mc.decode.sh_order = 1;
    FitConfig fc;
    fc.steps = 2000;
    fc.adam.lr = 1e-3;
    fc.log_every = 1;
    const FitResult r = fit(b.sample, b.targets, SceneModel::create(b.sample, mc), fc);
    const double secs = seconds_since(t0);
    const double input_psnr = r.log.back().psnr;
    const Tensor held = clamp01(render_model(r.model, b.sample, b.heldout[0].pose).image);
    const double held_psnr = psnr(held, b.heldout[0].image);
    std::size_t rising_windows = 0;
    for (std::size_t s = 200; s + 50 < r.log.size(); ++s) {
        bool rising = true;
        for (std::size_t j = s; j < s + 50 && rising; ++j) rising = r.log[j + 1].loss_total > r.log[j].loss_total;
        if (rising) ++rising_windows;
    }
    const bool ok = !r.diverged && input_psnr >= 32.0 && held_psnr >= 24.0 && secs < 600.0;
    return {ok, fmt("input view %.2f dB (>= 32), held-out view %.2f dB (>= 24), %zu rising 50-step loss windows "
                    "after step 200, %.0f s (< 600 s)",
                    input_psnr, held_psnr, rising_windows, secs)};
}

Outcome
ablation() {
    const auto t0 = Clock::now();
    struct Variant {
        const char *name;
        bool normal, gaf, attention;
    };
    const Variant variants[] = {{"baseline", false, false, false},
                                {"+normal", true, false, false},
                                {"+normal+gaf", true, true, false},
                                {"full", true, true, true}};
    double mean[4][3] = {};
    for (int scene = 0; scene < 5; ++scene) {
        const SceneBundle b = generate_scene(random_room(100 + scene, 3, 32, 32));
        for (int v = 0; v < 4; ++v) {
            for (int seed = 0; seed < 3; ++seed) {
                ModelConfig mc;
                mc.mode = FitMode::network;
                mc.use_normal = variants[v].normal;
                mc.use_gaf = variants[v].gaf;
                mc.use_attention = variants[v].attention;
                mc.gaf_channels = 8;
                mc.gaf_resolution = 16;
                mc.attention = {32, 2, 8, 1};
                mc.seed = static_cast<std::uint64_t>(seed);
                FitConfig fc;
                fc.steps = 100;
                fc.adam.lr = 1e-3;
                fc.log_every = 0;
                const FitResult r = fit(b.sample, b.targets, SceneModel::create(b.sample, mc), fc);
                const Tensor held = clamp01(render_model(r.model, b.sample, b.heldout[0].pose).image);
                mean[v][seed] += psnr(held, b.heldout[0].image) / 5.0;
            }
        }
    }
    bool ok = true;
    double overall[4] = {};
    std::ostringstream detail;
    for (int v = 0; v < 4; ++v) {
        for (int seed = 0; seed < 3; ++seed) {
            overall[v] += mean[v][seed] / 3.0;
            if (v > 0 && mean[v][seed] < mean[0][seed] - 0.2) ok = false;
        }
    }
    ok = ok && overall[3] >= overall[0];
    detail << "mean held-out dB";
    for (int v = 0; v < 4; ++v) {
        detail << " " << variants[v].name << " " << fmt("%.2f", overall[v]) << " [";
        for (int seed = 0; seed < 3; ++seed) detail << (seed ? " " : "") << fmt("%.2f", mean[v][seed]);
        detail << "]";
    }
    detail << fmt("; 5 scenes x 3 seeds, %.0f s", seconds_since(t0));
    return {ok, detail.str()};
}

Outcome
metric_correctness() {
    std::mt19937_64 rng(31);
    double worst_psnr = 0.0, worst_ssim = 0.0;
    for (int i = 0; i < 50; ++i) {
        const std::size_t h = 11 + i % 9, w = 11 + (i * 7) % 13;
        const Tensor a = random_tensor({h, w, 3}, rng, 0, 1);
        const Tensor b = clamp01(a + random_tensor({h, w, 3}, rng, -0.4, 0.4));
        worst_psnr = std::max(worst_psnr, std::abs(psnr(a, b) - oracle::psnr(a, b)));
        worst_ssim = std::max(worst_ssim, std::abs(ssim_value(a, b) - oracle::ssim(a, b)));
    }
    const Tensor a = random_tensor({16, 16, 3}, rng, 0, 0.9);
    const double closed = std::abs(psnr(a, a + 0.1) - 20.0);
    return {worst_psnr <= 1e-9 && worst_ssim <= 1e-9 && closed <= 1e-9,
            fmt("50 pairs: psnr diff %.2e, ssim diff %.2e (<= 1e-9); uniform 0.1 offset off 20 dB by %.2e", worst_psnr,
                worst_ssim, closed)};
}

Outcome
determinism() {
    const auto root = std::filesystem::temp_directory_path() / "layersplat_acceptance_determinism";
    std::filesystem::remove_all(root);
    RoomSpec spec = random_room(4, 1, 32, 32);
    spec.random_boxes = 2;
    generate_scene_bundle(spec, 21, root / "a");
    generate_scene_bundle(spec, 21, root / "b");
    bool bundles = true;
    std::size_t files = 0;
    for (const auto &entry : std::filesystem::directory_iterator(root / "a")) {
        const auto name = entry.path().filename();
        bundles = bundles && read_bytes(root / "a" / name) == read_bytes(root / "b" / name);
        ++files;
    }
    const SceneBundle b = load_scene(root / "a");
    bool logs = true, checkpoints = true;
    for (FitMode mode : {FitMode::direct, FitMode::network}) {
        ModelConfig mc;
        mc.mode = mode;
        mc.gaf_channels = 8;
        mc.gaf_resolution = 8;
        mc.attention = {32, 2, 8, 1};
        mc.seed = 5;
        FitConfig fc;
        fc.steps = 6;
        fc.log_every = 2;
        fc.adam.lr = 1e-3;
        const FitResult r1 = fit(b.sample, b.targets, SceneModel::create(b.sample, mc), fc);
        const FitResult r2 = fit(b.sample, b.targets, SceneModel::create(b.sample, mc), fc);
        logs = logs && r1.log.size() == r2.log.size();
        for (std::size_t i = 0; logs && i < r1.log.size(); ++i) {
            logs = to_json_line(r1.log[i], false) == to_json_line(r2.log[i], false);
        }
        checkpoints = checkpoints && encode_checkpoint(Checkpoint::from_model(r1.model, b.sample, r1.steps_done)) ==
                                         encode_checkpoint(Checkpoint::from_model(r2.model, b.sample, r2.steps_done));
    }
    std::filesystem::remove_all(root);
    return {bundles && logs && checkpoints,
            fmt("bundles (%zu files) %s; metric logs %s; checkpoints %s (direct and network)", files,
                bundles ? "byte-identical" : "DIFFER", logs ? "identical" : "DIFFER",
                checkpoints ? "bit-identical" : "DIFFER")};
}

} // namespace

int
main(int argc, char **argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"gradient_suite", gradient_suite},
        {"renderer_oracle", renderer_oracle},
        {"structural_invariants", structural_invariants},
        {"sh_properties", sh_properties},
        {"gaf_bruteforce", gaf_bruteforce},
        {"attention_properties", attention_properties},
        {"overfit_calibration", overfit},
        {"ablation_directionality", ablation},
        {"metric_correctness", metric_correctness},
        {"determinism", determinism},
    };
    std::set<std::string> only;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--list") {
            for (const auto &[name, fn] : criteria) std::printf("%s\n", name.c_str());
            return 0;
        }
        if (arg == "--only" && i + 1 < argc) {
            only.insert(argv[++i]);
        } else {
            std::fprintf(stderr, "usage: %s [--list] [--only <criterion>]...\n", argv[0]);
            return 1;
        }
    }
    int failures = 0;
    for (const auto &[name, fn] : criteria) {
        if (!only.empty() && !only.contains(name)) continue;
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception &e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        std::printf("%s  %-24s %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
        std::fflush(stdout);
        failures += o.pass ? 0 : 1;
    }
    return failures == 0 ? 0 : 1;
}
