// Copyright Contributors to the layersplat project
// SPDX-License-Identifier: Apache-2.0

#include <layersplat/errors.hpp>
#include <layersplat/io.hpp>

#include <json.hpp>
#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

namespace layersplat {

namespace {

using Bytes = std::vector<std::uint8_t>;

class Writer {
  public:
    void raw(const void *p, std::size_t n) {
        const auto *b = static_cast<const std::uint8_t *>(p);
        out.insert(out.end(), b, b + n);
    }
    template <typename T> void le(T v) {
        using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                     std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
        U u = std::bit_cast<U>(v);
        for (std::size_t i = 0; i < sizeof(U); ++i) {
            out.push_back(static_cast<std::uint8_t>(u & 0xff));
            if constexpr (sizeof(U) > 1) u >>= 8;
        }
    }
    void str(const std::string &s) {
        le(static_cast<std::uint32_t>(s.size()));
        raw(s.data(), s.size());
    }
    Bytes out;
};

class Reader {
  public:
    Reader(const Bytes &bytes, std::string origin) : b_(bytes), origin_(std::move(origin)) {}
    void need(std::size_t n) const {
        if (b_.size() - pos_ < n) {
            throw DataError(origin_ + ": truncated (needed " + std::to_string(n) + " more bytes at offset " +
                            std::to_string(pos_) + ", file has " + std::to_string(b_.size()) + ")");
        }
    }
    std::string raw(std::size_t n) {
        need(n);
        std::string s(b_.begin() + static_cast<std::ptrdiff_t>(pos_), b_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
        pos_ += n;
        return s;
    }
    template <typename T> T le() {
        using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                     std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
        need(sizeof(U));
        U u = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) u |= static_cast<U>(static_cast<U>(b_[pos_ + i]) << (8 * i));
        pos_ += sizeof(U);
        return std::bit_cast<T>(u);
    }
    std::string str() { return raw(le<std::uint32_t>()); }
    bool done() const { return pos_ == b_.size(); }
    const std::string &origin() const { return origin_; }

  private:
    const Bytes &b_;
    std::string origin_;
    std::size_t pos_ = 0;
};

void
write_shape(Writer &w, const Shape &shape) {
    w.le(static_cast<std::uint32_t>(shape.size()));
    for (auto e : shape) w.le(static_cast<std::uint32_t>(e));
}

Shape
read_shape(Reader &r) {
    const auto rank = r.le<std::uint32_t>();
    if (rank > 16) {
        throw DataError(r.origin() + ": implausible tensor rank " + std::to_string(rank));
    }
    Shape s(rank);
    for (auto &e : s) e = r.le<std::uint32_t>();
    return s;
}

nlohmann::ordered_json
config_to_json(const ModelConfig &c) {
    nlohmann::ordered_json j;
    j["mode"] = to_string(c.mode);
    j["k_layers"] = c.decode.k_layers;
    j["sh_order"] = c.decode.sh_order;
    j["opacity_eps"] = c.decode.opacity_eps;
    j["depth_eps"] = c.decode.depth_eps;
    j["offset_cap"] = c.decode.offset_cap;
    j["scale_unit"] = c.decode.scale_unit;
    j["raw_scale_min"] = c.decode.raw_scale_min;
    j["raw_scale_max"] = c.decode.raw_scale_max;
    j["use_normal"] = c.use_normal;
    j["use_gaf"] = c.use_gaf;
    j["use_attention"] = c.use_attention;
    j["gaf_channels"] = c.gaf_channels;
    j["gaf_resolution"] = c.gaf_resolution;
    j["attention"] = {{"channels", c.attention.channels},
                      {"heads", c.attention.heads},
                      {"head_dim", c.attention.head_dim},
                      {"layers", c.attention.layers}};
    j["seed"] = c.seed;
    return j;
}

ModelConfig
config_from_json(const nlohmann::json &j) {
    ModelConfig c;
    c.mode = parse_fit_mode(j.at("mode").get<std::string>());
    c.decode.k_layers = j.at("k_layers").get<int>();
    c.decode.sh_order = j.at("sh_order").get<int>();
    c.decode.opacity_eps = j.at("opacity_eps").get<double>();
    c.decode.depth_eps = j.at("depth_eps").get<double>();
    c.decode.offset_cap = j.at("offset_cap").get<double>();
    c.decode.scale_unit = j.at("scale_unit").get<double>();
    c.decode.raw_scale_min = j.at("raw_scale_min").get<double>();
    c.decode.raw_scale_max = j.at("raw_scale_max").get<double>();
    c.use_normal = j.at("use_normal").get<bool>();
    c.use_gaf = j.at("use_gaf").get<bool>();
    c.use_attention = j.at("use_attention").get<bool>();
    c.gaf_channels = j.at("gaf_channels").get<std::size_t>();
    c.gaf_resolution = j.at("gaf_resolution").get<std::size_t>();
    const auto &a = j.at("attention");
    c.attention = {a.at("channels").get<std::size_t>(), a.at("heads").get<std::size_t>(),
                   a.at("head_dim").get<std::size_t>(), a.at("layers").get<std::size_t>()};
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

} // namespace

Bytes
read_bytes(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void
write_bytes(const std::filesystem::path &path, const Bytes &bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw DataError("failed writing " + path.string());
    }
}

Bytes
encode_tensor(const Tensor &t) {
    Writer w;
    w.raw("NIAG", 4);
    w.le(kTensorFileVersion);
    write_shape(w, t.shape());
    for (double v : t.data()) w.le(static_cast<float>(v));
    return w.out;
}

Tensor
decode_tensor(const Bytes &bytes, const std::string &origin) {
    Reader r(bytes, origin);
    if (bytes.size() < 4 || r.raw(4) != "NIAG") {
        throw DataError(origin + ": bad magic, expected \"NIAG\"");
    }
    const auto version = r.le<std::uint32_t>();
    if (version != kTensorFileVersion) {
        throw DataError(origin + ": unsupported NIAG version " + std::to_string(version));
    }
    Shape shape = read_shape(r);
    const std::size_t n = shape_numel(shape);
    r.need(4 * n);
    std::vector<double> v(n);
    for (auto &x : v) x = static_cast<double>(r.le<float>());
    if (!r.done()) {
        throw DataError(origin + ": trailing bytes after payload");
    }
    return Tensor(std::move(shape), std::move(v));
}

void
write_tensor_file(const std::filesystem::path &path, const Tensor &t) {
    write_bytes(path, encode_tensor(t));
}

Tensor
read_tensor_file(const std::filesystem::path &path) {
    return decode_tensor(read_bytes(path), path.string());
}

std::string
camera_to_json(const CameraFile &camera) {
    nlohmann::ordered_json j;
    j["fx"] = camera.intr.f;
    j["cx"] = camera.intr.cx;
    j["cy"] = camera.intr.cy;
    j["width"] = camera.intr.width;
    j["height"] = camera.intr.height;
    const auto &q = camera.pose.rotation;
    const auto &t = camera.pose.translation;
    j["pose"] = {{"quat", {q.w(), q.x(), q.y(), q.z()}}, {"t", {t.x(), t.y(), t.z()}}};
    return j.dump(2) + "\n";
}

CameraFile
camera_from_json(const std::string &text, const std::string &origin) {
    try {
        const auto j = nlohmann::json::parse(text);
        CameraFile c;
        c.intr.f = j.at("fx").get<double>();
        c.intr.cx = j.at("cx").get<double>();
        c.intr.cy = j.at("cy").get<double>();
        c.intr.width = j.at("width").get<int>();
        c.intr.height = j.at("height").get<int>();
        const auto q = j.at("pose").at("quat").get<std::vector<double>>();
        const auto t = j.at("pose").at("t").get<std::vector<double>>();
        if (q.size() != 4 || t.size() != 3) {
            throw DataError(origin + ": pose.quat needs 4 numbers and pose.t needs 3");
        }
        const Eigen::Quaterniond quat(q[0], q[1], q[2], q[3]);
        if (!(quat.norm() > 0.0) || !std::isfinite(quat.norm())) {
            throw DataError(origin + ": pose.quat must be a nonzero finite quaternion");
        }
        c.pose.rotation = quat.normalized();
        c.pose.translation = {t[0], t[1], t[2]};
        c.intr.validate();
        return c;
    } catch (const nlohmann::json::exception &e) {
        throw DataError(origin + ": invalid camera JSON: " + e.what());
    }
}

void
write_camera_file(const std::filesystem::path &path, const CameraFile &camera) {
    const std::string s = camera_to_json(camera);
    write_bytes(path, Bytes(s.begin(), s.end()));
}

CameraFile
read_camera_file(const std::filesystem::path &path) {
    const Bytes b = read_bytes(path);
    return camera_from_json(std::string(b.begin(), b.end()), path.string());
}

void
write_png(const std::filesystem::path &path, const Tensor &image) {
    if (image.rank() != 3 || image.shape()[2] != 3) {
        throw ShapeError("write_png expects [H,W,3], got " + shape_str(image.shape()));
    }
    const std::size_t h = image.shape()[0];
    const std::size_t w = image.shape()[1];
    std::vector<std::uint8_t> pixels(h * w * 3);
    const auto v = image.data();
    for (std::size_t i = 0; i < pixels.size(); ++i) {
        pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v[i], 0.0, 1.0)));
    }
    png_image img;
    std::memset(&img, 0, sizeof(img));
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(w);
    img.height = static_cast<png_uint_32>(h);
    img.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&img, path.c_str(), 0, pixels.data(), 0, nullptr)) {
        const std::string msg = img.message;
        png_image_free(&img);
        throw DataError("cannot write PNG " + path.string() + ": " + msg);
    }
}

Tensor
read_png(const std::filesystem::path &path) {
    png_image img;
    std::memset(&img, 0, sizeof(img));
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.c_str())) {
        const std::string msg = img.message;
        png_image_free(&img);
        throw DataError("cannot read PNG " + path.string() + ": " + msg);
    }
    img.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, pixels.data(), 0, nullptr)) {
        const std::string msg = img.message;
        png_image_free(&img);
        throw DataError("cannot decode PNG " + path.string() + ": " + msg);
    }
    const std::size_t h = img.height;
    const std::size_t w = img.width;
    std::vector<double> v(h * w * 3);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = pixels[i] / 255.0;
    return Tensor({h, w, 3}, std::move(v));
}

Checkpoint
Checkpoint::from_model(const SceneModel &model, const SceneSample &sample, std::uint64_t step) {
    return {model.config, sample, model.gaf_bounds, step, model.params};
}

SceneModel
Checkpoint::model() const {
    SceneModel m = SceneModel::skeleton(sample, config, gaf_bounds);
    for (auto &p : m.params) {
        const Tensor &stored = find_parameter(params, p.name);
        if (stored.shape() != p.value.shape()) {
            throw DataError("checkpoint parameter '" + p.name + "' has shape " + shape_str(stored.shape()) +
                            ", model expects " + shape_str(p.value.shape()));
        }
        p.value = stored;
    }
    if (m.params.size() != params.size()) {
        throw DataError("checkpoint holds " + std::to_string(params.size()) + " parameters, model expects " +
                        std::to_string(m.params.size()));
    }
    return m;
}

Bytes
encode_checkpoint(const Checkpoint &ckpt) {
    Writer w;
    w.raw("NIACKPT", 7);
    w.le(kCheckpointVersion);
    w.le(static_cast<std::uint8_t>(ckpt.config.mode == FitMode::direct ? 0 : 1));
    w.le(ckpt.config.seed);
    w.le(ckpt.step);
    w.le(ckpt.sample.intr.f);
    w.le(ckpt.sample.intr.cx);
    w.le(ckpt.sample.intr.cy);
    w.le(static_cast<std::uint32_t>(ckpt.sample.intr.width));
    w.le(static_cast<std::uint32_t>(ckpt.sample.intr.height));
    w.str(config_to_json(ckpt.config).dump());

    std::vector<std::pair<std::string, Tensor>> tensors;
    for (const auto &p : ckpt.params) tensors.emplace_back("param/" + p.name, p.value);
    tensors.emplace_back("input/image", ckpt.sample.image);
    tensors.emplace_back("input/depth", ckpt.sample.depth);
    tensors.emplace_back("input/normal", ckpt.sample.normal);
    const auto &b = ckpt.gaf_bounds;
    tensors.emplace_back("gaf/bounds", Tensor({2, 3}, {b.min.x(), b.min.y(), b.min.z(), b.max.x(), b.max.y(), b.max.z()}));
    w.le(static_cast<std::uint32_t>(tensors.size()));
    for (const auto &[name, t] : tensors) {
        w.str(name);
        write_shape(w, t.shape());
        for (double v : t.data()) w.le(v);
    }
    return w.out;
}

Checkpoint
decode_checkpoint(const Bytes &bytes, const std::string &origin) {
    Reader r(bytes, origin);
    if (bytes.size() < 7 || r.raw(7) != "NIACKPT") {
        throw DataError(origin + ": bad magic, expected \"NIACKPT\"");
    }
    const auto version = r.le<std::uint32_t>();
    if (version != kCheckpointVersion) {
        throw DataError(origin + ": unsupported checkpoint version " + std::to_string(version));
    }
    Checkpoint c;
    const auto mode = r.le<std::uint8_t>();
    if (mode > 1) {
        throw DataError(origin + ": unknown mode tag " + std::to_string(mode));
    }
    const auto seed = r.le<std::uint64_t>();
    c.step = r.le<std::uint64_t>();
    c.sample.intr.f = r.le<double>();
    c.sample.intr.cx = r.le<double>();
    c.sample.intr.cy = r.le<double>();
    c.sample.intr.width = static_cast<int>(r.le<std::uint32_t>());
    c.sample.intr.height = static_cast<int>(r.le<std::uint32_t>());
    try {
        c.config = config_from_json(nlohmann::json::parse(r.str()));
    } catch (const nlohmann::json::exception &e) {
        throw DataError(origin + ": invalid config block: " + e.what());
    } catch (const std::invalid_argument &e) {
        throw DataError(origin + ": " + e.what());
    }
    if (c.config.seed != seed || (c.config.mode == FitMode::direct) != (mode == 0)) {
        throw DataError(origin + ": header disagrees with the config block");
    }
    const auto count = r.le<std::uint32_t>();
    bool have_bounds = false;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string name = r.str();
        Shape shape = read_shape(r);
        const std::size_t n = shape_numel(shape);
        r.need(8 * n);
        std::vector<double> v(n);
        for (auto &x : v) x = r.le<double>();
        Tensor t(std::move(shape), std::move(v));
        if (name.rfind("param/", 0) == 0) {
            c.params.push_back({name.substr(6), t});
        } else if (name == "input/image") {
            c.sample.image = t;
        } else if (name == "input/depth") {
            c.sample.depth = t;
        } else if (name == "input/normal") {
            c.sample.normal = t;
        } else if (name == "gaf/bounds" && t.numel() == 6) {
            c.gaf_bounds.min = {t[0], t[1], t[2]};
            c.gaf_bounds.max = {t[3], t[4], t[5]};
            have_bounds = true;
        } else {
            throw DataError(origin + ": unexpected tensor '" + name + "'");
        }
    }
    if (!r.done()) {
        throw DataError(origin + ": trailing bytes after tensors");
    }
    if (!have_bounds) {
        throw DataError(origin + ": missing tri-plane bounds");
    }
    c.sample.validate();
    return c;
}

void
write_checkpoint(const std::filesystem::path &path, const Checkpoint &ckpt) {
    write_bytes(path, encode_checkpoint(ckpt));
}

Checkpoint
read_checkpoint(const std::filesystem::path &path) {
    return decode_checkpoint(read_bytes(path), path.string());
}

} // namespace layersplat
