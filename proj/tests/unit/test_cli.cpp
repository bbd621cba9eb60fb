// Copyright Contributors to the layersplat project
// SPDX-License-Identifier: Apache-2.0

#include <layersplat/io.hpp>
#include <layersplat/ops.hpp>

#include <gtest/gtest.h>
#include <json.hpp>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

using namespace layersplat;

namespace {

struct Run {
    int code = -1;
    std::string out;
};

Run
cli(const std::string &args) {
    const std::string cmd = std::string(LAYERSPLAT_CLI) + " " + args + " 2>/dev/null";
    Run r;
    FILE *pipe = popen(cmd.c_str(), "r");
    std::array<char, 4096> buf{};
    while (std::fgets(buf.data(), buf.size(), pipe)) r.out += buf.data();
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::filesystem::path
scratch() {
    const auto dir = std::filesystem::temp_directory_path() / "layersplat_test_cli";
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace

TEST(Cli, EvalOnIdenticalImages) {
    write_png(scratch() / "same.png", Tensor::full({16, 16, 3}, 0.3));
    const auto r = cli("eval --render " + (scratch() / "same.png").string() + " --target " +
                       (scratch() / "same.png").string());
    EXPECT_EQ(r.code, 0);
    EXPECT_EQ(r.out, "{\"psnr\":99.0,\"ssim\":1.0}\n");
}

TEST(Cli, UsageErrorsExitWithOne) {
    EXPECT_EQ(cli("").code, 1);
    EXPECT_EQ(cli("frobnicate").code, 1);
    EXPECT_EQ(cli("render --ckpt x").code, 1);
    EXPECT_EQ(cli("fit --scene x --out y --mode joint").code, 1);
    EXPECT_EQ(cli("gradcheck --module nonexistent").code, 1);
}

TEST(Cli, DataErrorsExitWithTwo) {
    const auto d = scratch();
    EXPECT_EQ(cli("render --ckpt " + (d / "missing.ckpt").string() + " --pose x.json --out " +
                  (d / "o.png").string())
                  .code,
              2);
    EXPECT_EQ(cli("fit --scene " + (d / "no_scene").string() + " --out " + (d / "o.ckpt").string()).code, 2);
    EXPECT_EQ(cli("eval --render " + (d / "nope.png").string() + " --target " + (d / "nope.png").string()).code, 2);
    std::ofstream(d / "empty_room.json") << R"({"planes": []})";
    EXPECT_EQ(cli("gen --spec " + (d / "empty_room.json").string() + " --out " + (d / "empty").string()).code, 2);
}

TEST(Cli, GradcheckPassesOnACleanBuild) {
    const auto r = cli("gradcheck");
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
}

TEST(Cli, FitThenRenderReproducesTheLoggedPsnr) {
    const auto d = scratch();
    std::ofstream(d / "room.json") << R"({
        "width": 16, "height": 16, "fov_deg": 60,
        "planes": [{"axis": "y", "offset": 1.0, "color": [0.6, 0.5, 0.4]},
                   {"axis": "z", "offset": 4.0, "color": [0.2, 0.3, 0.7]},
                   {"axis": "x", "offset": -1.5, "color": [0.8, 0.8, 0.2]},
                   {"axis": "x", "offset": 1.5, "color": [0.3, 0.7, 0.3]},
                   {"axis": "y", "offset": -1.0, "color": [0.9, 0.9, 0.9]}],
        "random_boxes": 2})";
    std::filesystem::remove(d / "log.jsonl");
    ASSERT_EQ(cli("gen --spec " + (d / "room.json").string() + " --out " + (d / "scene").string() + " --seed 4").code,
              0);
    ASSERT_EQ(cli("fit --scene " + (d / "scene").string() + " --steps 30 --lr 1e-3 --log-every 10 --out " +
                  (d / "fit.ckpt").string() + " --log " + (d / "log.jsonl").string())
                  .code,
              0);
    std::ifstream log(d / "log.jsonl");
    std::string line, last;
    int records = 0;
    while (std::getline(log, line)) {
        last = line;
        ++records;
    }
    EXPECT_EQ(records, 4);
    const auto rec = nlohmann::json::parse(last);
    EXPECT_EQ(rec.at("step"), 30);
    ASSERT_EQ(cli("render --ckpt " + (d / "fit.ckpt").string() + " --pose " +
                  (d / "scene" / "input_camera.json").string() + " --out " + (d / "render.png").string())
                  .code,
              0);
    const auto r = cli("eval --render " + (d / "render.png").string() + " --target " +
                       (d / "scene" / "input.png").string());
    ASSERT_EQ(r.code, 0);
    const auto metrics = nlohmann::json::parse(r.out);
    EXPECT_NEAR(metrics.at("psnr").get<double>(), rec.at("psnr").get<double>(), 0.05);
}
