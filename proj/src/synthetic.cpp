// Copyright Contributors to the layersplat project
// SPDX-License-Identifier: Apache-2.0

#include <layersplat/errors.hpp>
#include <layersplat/io.hpp>
#include <layersplat/synthetic.hpp>

#include <json.hpp>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace layersplat {

namespace {

using Json = nlohmann::ordered_json;

Json
vec_json(const Eigen::Vector3d &v) {
    return Json::array({v.x(), v.y(), v.z()});
}

Eigen::Vector3d
json_vec(const nlohmann::json &j, const std::string &what) {
    const auto v = j.get<std::vector<double>>();
    if (v.size() != 3) {
        throw DataError(what + " needs 3 numbers");
    }
    return {v[0], v[1], v[2]};
}

Json
view_json(const ViewOffset &v) {
    return {{"yaw_deg", v.yaw_deg}, {"translation", vec_json(v.translation)}};
}

ViewOffset
json_view(const nlohmann::json &j) {
    ViewOffset v;
    v.yaw_deg = j.value("yaw_deg", 0.0);
    if (j.contains("translation")) v.translation = json_vec(j.at("translation"), "translation");
    return v;
}

double
uniform(std::mt19937_64 &rng, double lo, double hi) {
    // Fixed mapping from 53 random bits so bundles do not depend on the standard library.
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
}

Eigen::Vector3d
random_color(std::mt19937_64 &rng) {
    return {uniform(rng, 0.1, 0.9), uniform(rng, 0.1, 0.9), uniform(rng, 0.1, 0.9)};
}

RoomBox
random_box(std::mt19937_64 &rng, double floor_y) {
    const double sx = uniform(rng, 0.15, 0.35);
    const double sy = uniform(rng, 0.2, 0.6);
    const double sz = uniform(rng, 0.15, 0.35);
    const double x = uniform(rng, -0.8, 0.8);
    const double z = uniform(rng, 2.0, 3.2);
    RoomBox b;
    b.min = {x - sx, floor_y - 2.0 * sy, z - sz};
    b.max = {x + sx, floor_y, z + sz};
    b.color = random_color(rng);
    return b;
}

double
floor_level(const RoomSpec &spec) {
    for (const auto &p : spec.planes) {
        if (p.axis == 1 && p.offset > 0.0) return p.offset;
    }
    return 1.0;
}

} // namespace

Pose
ViewOffset::pose() const {
    const double a = yaw_deg * std::numbers::pi / 180.0;
    const Eigen::Matrix3d r = Eigen::AngleAxisd(a, Eigen::Vector3d::UnitY()).toRotationMatrix();
    return Pose::looking_from(r, translation);
}

Intrinsics
RoomSpec::intrinsics() const {
    const double f = 0.5 * width / std::tan(0.5 * fov_deg * std::numbers::pi / 180.0);
    return Intrinsics::centered(f, width, height);
}

void
RoomSpec::validate() const {
    if (width <= 0 || height <= 0) {
        throw DataError("room image extents must be positive");
    }
    if (!(fov_deg > 0.0 && fov_deg < 180.0)) {
        throw DataError("fov_deg must lie in (0, 180)");
    }
    if (planes.empty() && boxes.empty() && random_boxes == 0) {
        throw DataError("empty room: at least one plane or box is required");
    }
    if (planes.size() > kMaxRoomPlanes) {
        throw DataError("a room holds at most " + std::to_string(kMaxRoomPlanes) + " planes");
    }
    if (boxes.size() + random_boxes > kMaxRoomBoxes) {
        throw DataError("a room holds at most " + std::to_string(kMaxRoomBoxes) + " boxes");
    }
    for (const auto &p : planes) {
        if (p.axis < 0 || p.axis > 2) {
            throw DataError("plane axis must be 0, 1 or 2");
        }
    }
    for (const auto &b : boxes) {
        if (!(b.min.array() < b.max.array()).all()) {
            throw DataError("box min must be below max on every axis");
        }
    }
}

RoomSpec
random_room(std::uint64_t seed, std::size_t boxes, int width, int height) {
    std::mt19937_64 rng(seed ^ 0x5eed5eedULL);
    RoomSpec spec;
    spec.width = width;
    spec.height = height;
    const double half_w = uniform(rng, 1.3, 1.8);
    const double floor_y = uniform(rng, 0.8, 1.2);
    const double ceil_y = -uniform(rng, 0.9, 1.4);
    const double back_z = uniform(rng, 3.6, 4.5);
    spec.planes = {
        {1, floor_y, random_color(rng)}, {2, back_z, random_color(rng)}, {0, -half_w, random_color(rng)},
        {0, half_w, random_color(rng)},  {1, ceil_y, random_color(rng)},
    };
    for (std::size_t i = 0; i < boxes; ++i) spec.boxes.push_back(random_box(rng, floor_y));
    spec.validate();
    return spec;
}

std::string
room_to_json(const RoomSpec &spec) {
    Json j;
    j["width"] = spec.width;
    j["height"] = spec.height;
    j["fov_deg"] = spec.fov_deg;
    j["planes"] = Json::array();
    for (const auto &p : spec.planes) {
        j["planes"].push_back({{"axis", p.axis}, {"offset", p.offset}, {"color", vec_json(p.color)}});
    }
    j["boxes"] = Json::array();
    for (const auto &b : spec.boxes) {
        j["boxes"].push_back({{"min", vec_json(b.min)}, {"max", vec_json(b.max)}, {"color", vec_json(b.color)}});
    }
    j["random_boxes"] = spec.random_boxes;
    j["targets"] = Json::array();
    for (const auto &v : spec.targets) j["targets"].push_back(view_json(v));
    j["heldout"] = Json::array();
    for (const auto &v : spec.heldout) j["heldout"].push_back(view_json(v));
    return j.dump(2) + "\n";
}

RoomSpec
room_from_json(const std::string &text, const std::string &origin) {
    try {
        const auto j = nlohmann::json::parse(text);
        if (!j.is_object()) {
            throw DataError(origin + ": room spec must be a JSON object");
        }
        RoomSpec spec;
        spec.width = j.value("width", spec.width);
        spec.height = j.value("height", spec.height);
        spec.fov_deg = j.value("fov_deg", spec.fov_deg);
        if (j.contains("planes")) {
            for (const auto &p : j.at("planes")) {
                RoomPlane plane;
                const auto &axis = p.at("axis");
                if (axis.is_string()) {
                    const auto name = axis.get<std::string>();
                    if (name != "x" && name != "y" && name != "z") {
                        throw DataError(origin + ": plane axis must be x, y or z");
                    }
                    plane.axis = name[0] - 'x';
                } else {
                    plane.axis = axis.get<int>();
                }
                plane.offset = p.at("offset").get<double>();
                plane.color = json_vec(p.at("color"), origin + ": plane color");
                spec.planes.push_back(plane);
            }
        }
        if (j.contains("boxes")) {
            for (const auto &b : j.at("boxes")) {
                spec.boxes.push_back({json_vec(b.at("min"), origin + ": box min"),
                                      json_vec(b.at("max"), origin + ": box max"),
                                      json_vec(b.at("color"), origin + ": box color")});
            }
        }
        spec.random_boxes = j.value("random_boxes", std::size_t{0});
        if (j.contains("targets")) {
            spec.targets.clear();
            for (const auto &v : j.at("targets")) spec.targets.push_back(json_view(v));
        }
        if (j.contains("heldout")) {
            spec.heldout.clear();
            for (const auto &v : j.at("heldout")) spec.heldout.push_back(json_view(v));
        }
        spec.validate();
        return spec;
    } catch (const nlohmann::json::exception &e) {
        throw DataError(origin + ": invalid room spec: " + e.what());
    }
}

RoomSpec
resolve_room(const RoomSpec &spec, std::uint64_t seed) {
    spec.validate();
    RoomSpec out = spec;
    std::mt19937_64 rng(seed);
    const double floor_y = floor_level(spec);
    for (std::size_t i = 0; i < spec.random_boxes; ++i) out.boxes.push_back(random_box(rng, floor_y));
    out.random_boxes = 0;
    return out;
}

std::optional<SurfaceHit>
cast_ray(const RoomSpec &room, const Eigen::Vector3d &origin, const Eigen::Vector3d &dir) {
    std::optional<SurfaceHit> best;
    const auto consider = [&](double t, const Eigen::Vector3d &normal, const Eigen::Vector3d &color) {
        if (t > 1e-9 && (!best || t < best->t)) {
            best = SurfaceHit{t, normal.dot(dir) > 0.0 ? Eigen::Vector3d(-normal) : normal, color};
        }
    };
    for (const auto &p : room.planes) {
        const double d = dir[p.axis];
        if (d == 0.0) continue;
        consider((p.offset - origin[p.axis]) / d, Eigen::Vector3d::Unit(p.axis), p.color);
    }
    for (const auto &b : room.boxes) {
        double t_near = -std::numeric_limits<double>::infinity();
        double t_far = std::numeric_limits<double>::infinity();
        int near_axis = -1;
        bool miss = false;
        for (int a = 0; a < 3 && !miss; ++a) {
            if (dir[a] == 0.0) {
                miss = origin[a] < b.min[a] || origin[a] > b.max[a];
                continue;
            }
            double t0 = (b.min[a] - origin[a]) / dir[a];
            double t1 = (b.max[a] - origin[a]) / dir[a];
            if (t0 > t1) std::swap(t0, t1);
            if (t0 > t_near) {
                t_near = t0;
                near_axis = a;
            }
            t_far = std::min(t_far, t1);
            miss = t_near > t_far;
        }
        if (miss || near_axis < 0 || t_near <= 0.0) continue;
        consider(t_near, Eigen::Vector3d::Unit(near_axis), b.color);
    }
    return best;
}

GroundTruthView
render_ground_truth(const RoomSpec &room, const Intrinsics &intr, const Pose &pose) {
    intr.validate();
    const std::size_t h = static_cast<std::size_t>(intr.height);
    const std::size_t w = static_cast<std::size_t>(intr.width);
    std::vector<double> rgb(h * w * 3), depth(h * w), normal(h * w * 3);
    const Eigen::Matrix3d r = pose.rotation_matrix();
    const Eigen::Vector3d center = pose.camera_center();
    for (std::size_t i = 0; i < h; ++i) {
        for (std::size_t j = 0; j < w; ++j) {
            const auto ray = PixelRay::from_pixel(intr, static_cast<double>(j), static_cast<double>(i));
            const Eigen::Vector3d d_cam(ray.ux / intr.f, ray.uy / intr.f, 1.0);
            const auto hit = cast_ray(room, center, r.transpose() * d_cam);
            if (!hit) {
                throw DataError("ray through pixel (" + std::to_string(j) + ", " + std::to_string(i) +
                                ") hits no surface");
            }
            const std::size_t p = i * w + j;
            depth[p] = hit->t;
            const Eigen::Vector3d n = r * hit->normal;
            for (int c = 0; c < 3; ++c) {
                rgb[3 * p + c] = hit->color[c];
                normal[3 * p + c] = n[c];
            }
        }
    }
    return {Tensor({h, w, 3}, std::move(rgb)), Tensor({h, w}, std::move(depth)), Tensor({h, w, 3}, std::move(normal))};
}

SceneBundle
generate_scene(const RoomSpec &room) {
    room.validate();
    const Intrinsics intr = room.intrinsics();
    SceneBundle bundle;
    const auto input = render_ground_truth(room, intr, Pose::identity());
    bundle.sample = {input.image, input.depth, input.normal, intr};
    bundle.targets.push_back({input.image, Pose::identity()});
    for (const auto &v : room.targets) {
        const Pose pose = v.pose();
        bundle.targets.push_back({render_ground_truth(room, intr, pose).image, pose});
    }
    for (const auto &v : room.heldout) {
        const Pose pose = v.pose();
        bundle.heldout.push_back({render_ground_truth(room, intr, pose).image, pose});
    }
    return bundle;
}

void
generate_scene_bundle(const RoomSpec &spec, std::uint64_t seed, const std::filesystem::path &dir) {
    const RoomSpec room = resolve_room(spec, seed);
    const SceneBundle bundle = generate_scene(room);
    std::filesystem::create_directories(dir);
    const std::string json = room_to_json(room);
    write_bytes(dir / "scene.json", std::vector<std::uint8_t>(json.begin(), json.end()));
    write_png(dir / "input.png", bundle.sample.image);
    write_tensor_file(dir / "input.niag", bundle.sample.image);
    write_tensor_file(dir / "depth.niag", bundle.sample.depth);
    write_tensor_file(dir / "normal.niag", bundle.sample.normal);
    write_camera_file(dir / "input_camera.json", {bundle.sample.intr, Pose::identity()});
    const auto write_views = [&](const std::vector<TargetView> &views, const std::string &prefix) {
        for (std::size_t i = 0; i < views.size(); ++i) {
            const std::string stem = prefix + "_" + std::to_string(i);
            write_png(dir / (stem + ".png"), views[i].image);
            write_tensor_file(dir / (stem + ".niag"), views[i].image);
            write_camera_file(dir / (stem + "_camera.json"), {bundle.sample.intr, views[i].pose});
        }
    };
    write_views(bundle.targets, "target");
    write_views(bundle.heldout, "heldout");
}

SceneBundle
load_scene(const std::filesystem::path &dir) {
    if (!std::filesystem::is_directory(dir)) {
        throw DataError("scene directory " + dir.string() + " does not exist");
    }
    SceneBundle bundle;
    const CameraFile input_cam = read_camera_file(dir / "input_camera.json");
    bundle.sample.image = read_tensor_file(dir / "input.niag");
    bundle.sample.depth = read_tensor_file(dir / "depth.niag");
    bundle.sample.normal = read_tensor_file(dir / "normal.niag");
    bundle.sample.intr = input_cam.intr;
    bundle.sample.validate();
    const auto read_views = [&](const std::string &prefix) {
        std::vector<TargetView> views;
        for (std::size_t i = 0;; ++i) {
            const std::string stem = prefix + "_" + std::to_string(i);
            if (!std::filesystem::exists(dir / (stem + ".niag"))) break;
            const CameraFile cam = read_camera_file(dir / (stem + "_camera.json"));
            views.push_back({read_tensor_file(dir / (stem + ".niag")), cam.pose});
        }
        return views;
    };
    bundle.targets = read_views("target");
    bundle.heldout = read_views("heldout");
    if (bundle.targets.empty()) {
        throw DataError("scene directory " + dir.string() + " holds no target views");
    }
    return bundle;
}

} // namespace layersplat
