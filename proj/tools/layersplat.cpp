// Copyright Contributors to the layersplat project
// SPDX-License-Identifier: Apache-2.0

#include <layersplat/errors.hpp>
#include <layersplat/fit.hpp>
#include <layersplat/gradcheck.hpp>
#include <layersplat/io.hpp>
#include <layersplat/metrics.hpp>
#include <layersplat/ops.hpp>
#include <layersplat/synthetic.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

namespace {

using namespace layersplat;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

struct GenArgs {
    std::string spec;
    std::string out;
    std::uint64_t seed = 0;
};

struct FitArgs {
    std::string scene;
    std::string mode = "direct";
    std::size_t steps = 2000;
    std::string out;
    bool no_gaf = false;
    bool no_attention = false;
    bool no_normal = false;
    double lr = 1e-4;
    std::size_t log_every = 50;
    std::string log;
    int k_layers = 2;
    int sh_order = 1;
    std::uint64_t seed = 0;
};

struct RenderArgs {
    std::string ckpt;
    std::string pose;
    std::string out;
};

struct EvalArgs {
    std::string render;
    std::string target;
};

int
run_gen(const GenArgs &a) {
    RoomSpec spec;
    if (a.spec.empty()) {
        spec = random_room(a.seed);
    } else {
        const auto bytes = read_bytes(a.spec);
        spec = room_from_json(std::string(bytes.begin(), bytes.end()), a.spec);
    }
    generate_scene_bundle(spec, a.seed, a.out);
    std::cout << "wrote scene bundle to " << a.out << "\n";
    return kExitOk;
}

int
run_fit(const FitArgs &a) {
    const SceneBundle bundle = load_scene(a.scene);
    ModelConfig mc;
    mc.mode = parse_fit_mode(a.mode);
    mc.decode.k_layers = a.k_layers;
    mc.decode.sh_order = a.sh_order;
    mc.use_gaf = !a.no_gaf;
    mc.use_attention = !a.no_attention;
    mc.use_normal = !a.no_normal;
    mc.seed = a.seed;
    FitConfig fc;
    fc.steps = a.steps;
    fc.adam.lr = a.lr;
    fc.log_every = a.log_every;

    std::ofstream log_file;
    if (!a.log.empty()) {
        log_file.open(a.log, std::ios::app);
        if (!log_file) throw DataError("cannot open log file " + a.log);
    }
    std::ostream &log = a.log.empty() ? std::cout : log_file;
    const FitResult result = fit(bundle.sample, bundle.targets, SceneModel::create(bundle.sample, mc), fc,
                                 [&](const LogRecord &r) { log << to_json_line(r) << "\n" << std::flush; });
    write_checkpoint(a.out, Checkpoint::from_model(result.model, bundle.sample, result.steps_done));
    if (result.diverged) {
        std::cerr << "error: fit diverged: " << result.failure << "; last good checkpoint (step "
                  << result.steps_done << ") written to " << a.out << "\n";
        return kExitNumerical;
    }
    return kExitOk;
}

int
run_render(const RenderArgs &a) {
    const Checkpoint ckpt = read_checkpoint(a.ckpt);
    const CameraFile cam = read_camera_file(a.pose);
    if (!(cam.intr == ckpt.sample.intr)) {
        throw DataError(a.pose + ": intrinsics differ from the checkpoint's input camera");
    }
    const RenderOutput out = render_model(ckpt.model(), ckpt.sample, cam.pose);
    write_png(a.out, out.image);
    return kExitOk;
}

int
run_eval(const EvalArgs &a) {
    const Tensor r = read_png(a.render);
    const Tensor t = read_png(a.target);
    if (r.shape() != t.shape()) {
        throw DataError("image extents differ: " + shape_str(r.shape()) + " vs " + shape_str(t.shape()));
    }
    nlohmann::ordered_json j;
    j["psnr"] = psnr(r, t);
    j["ssim"] = ssim_value(r, t);
    std::cout << j.dump() << "\n";
    return kExitOk;
}

int
run_gradcheck(const std::string &module) {
    const auto names = gradcheck_suite_names();
    if (!module.empty() && std::find(names.begin(), names.end(), module) == names.end()) {
        std::cerr << "error: unknown module '" << module << "'\n";
        return kExitUsage;
    }
    bool ok = true;
    for (const auto &r : run_gradcheck_suite(module)) {
        std::printf("%-32s %s  checked %3zu  skipped %2zu  max_rel_err %.3e\n", r.name.c_str(),
                    r.passed ? "PASS" : "FAIL", r.checked, r.skipped, r.max_rel_err);
        ok = ok && r.passed;
    }
    return ok ? kExitOk : kExitNumerical;
}

} // namespace

int
main(int argc, char **argv) {
    CLI::App app{"Layered Gaussian splatting from a single image with depth and normals"};
    app.require_subcommand(1);

    GenArgs gen;
    auto *gen_cmd = app.add_subcommand("gen", "Generate a synthetic scene bundle");
    gen_cmd->add_option("--spec", gen.spec, "Room description (JSON); a random room when omitted");
    gen_cmd->add_option("--out", gen.out, "Output directory")->required();
    gen_cmd->add_option("--seed", gen.seed, "Seed for random boxes");

    FitArgs fit_args;
    auto *fit_cmd = app.add_subcommand("fit", "Fit layered Gaussians to a scene bundle");
    fit_cmd->add_option("--scene", fit_args.scene, "Scene bundle directory")->required();
    fit_cmd->add_option("--mode", fit_args.mode, "direct or network")->check(CLI::IsMember({"direct", "network"}));
    fit_cmd->add_option("--steps", fit_args.steps, "Adam steps");
    fit_cmd->add_option("--out", fit_args.out, "Checkpoint path")->required();
    fit_cmd->add_flag("--no-gaf", fit_args.no_gaf, "Disable the tri-plane field (network mode)");
    fit_cmd->add_flag("--no-attention", fit_args.no_attention, "Disable self-attention (network mode)");
    fit_cmd->add_flag("--no-normal", fit_args.no_normal, "Zero the normal input channel");
    fit_cmd->add_option("--lr", fit_args.lr, "Learning rate")->check(CLI::PositiveNumber);
    fit_cmd->add_option("--log-every", fit_args.log_every, "Steps between metric records");
    fit_cmd->add_option("--log", fit_args.log, "Append metric records (JSON lines) to this file");
    fit_cmd->add_option("--layers", fit_args.k_layers, "Gaussian layers per pixel")->check(CLI::Range(1, 8));
    fit_cmd->add_option("--sh-order", fit_args.sh_order, "Spherical harmonics order")->check(CLI::Range(0, 2));
    fit_cmd->add_option("--seed", fit_args.seed, "Network initialization seed");

    RenderArgs render_args;
    auto *render_cmd = app.add_subcommand("render", "Render a checkpoint at a camera");
    render_cmd->add_option("--ckpt", render_args.ckpt, "Checkpoint path")->required();
    render_cmd->add_option("--pose", render_args.pose, "Camera JSON")->required();
    render_cmd->add_option("--out", render_args.out, "Output PNG")->required();

    EvalArgs eval_args;
    auto *eval_cmd = app.add_subcommand("eval", "Print PSNR and SSIM of two PNG images as JSON");
    eval_cmd->add_option("--render", eval_args.render, "Rendered PNG")->required();
    eval_cmd->add_option("--target", eval_args.target, "Reference PNG")->required();

    std::string module;
    auto *grad_cmd = app.add_subcommand("gradcheck", "Run finite-difference gradient suites");
    grad_cmd->add_option("--module", module, "Single suite to run");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*gen_cmd) return run_gen(gen);
        if (*fit_cmd) return run_fit(fit_args);
        if (*render_cmd) return run_render(render_args);
        if (*eval_cmd) return run_eval(eval_args);
        return run_gradcheck(module);
    } catch (const NumericalError &e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const DataError &e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const ShapeError &e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::filesystem::filesystem_error &e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::invalid_argument &e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
}
