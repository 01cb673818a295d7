#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "advtex/error.hpp"
#include "advtex/image.hpp"

namespace advtex {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// Deterministic 64-bit generator used everywhere a seed is accepted.
/// mt19937_64 plus our own real conversion, so streams replay identically
/// across standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    std::uint64_t next() { return engine_(); }
    /// Uniform in [0, 1).
    double uniform() { return double(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [lo, hi].
    int uniform_int(int lo, int hi) {
        const auto span = std::uint64_t(std::int64_t(hi) - lo + 1);
        return int(std::int64_t(lo) + std::int64_t(engine_() % span));
    }
    double normal() {
        // Box-Muller; u1 in (0,1].
        const double u1 = 1.0 - uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

private:
    std::mt19937_64 engine_;
};

// ---------------------------------------------------------------------------
// Mesh

struct Mesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> triangles;
    std::vector<Vec3> normals; ///< per triangle, derived by finalize()

    static constexpr double kMinArea = 1e-12;

    [[nodiscard]] std::size_t size() const { return triangles.size(); }

    [[nodiscard]] Vec3 corner(std::size_t tri, int k) const { return vertices[triangles[tri][k]]; }

    [[nodiscard]] Vec3 centroid(std::size_t tri) const {
        return (corner(tri, 0) + corner(tri, 1) + corner(tri, 2)) / 3.0;
    }

    [[nodiscard]] double area(std::size_t tri) const {
        return 0.5 * (corner(tri, 1) - corner(tri, 0)).cross(corner(tri, 2) - corner(tri, 0)).norm();
    }

    /// Validates indices and areas, then derives unit normals from winding.
    void finalize() {
        normals.resize(triangles.size());
        for (std::size_t i = 0; i < triangles.size(); ++i) {
            for (int k = 0; k < 3; ++k) {
                const int v = triangles[i][k];
                if (v < 0 || std::size_t(v) >= vertices.size())
                    throw ValidationError("triangle " + std::to_string(i) + " references vertex " + std::to_string(v) +
                                          " but mesh has " + std::to_string(vertices.size()) + " vertices");
            }
            const Vec3 n = (corner(i, 1) - corner(i, 0)).cross(corner(i, 2) - corner(i, 0));
            if (0.5 * n.norm() <= kMinArea) throw ValidationError("triangle " + std::to_string(i) + " is degenerate");
            normals[i] = n.normalized();
        }
    }
};

inline Mesh read_obj(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open '" + path.string() + "'");
    Mesh mesh;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag) || tag[0] == '#') continue;
        if (tag == "v") {
            Vec3 v;
            if (!(ls >> v.x() >> v.y() >> v.z()))
                throw IoError(path.string() + ":" + std::to_string(lineno) + ": bad vertex record");
            mesh.vertices.push_back(v);
        } else if (tag == "f") {
            std::vector<int> idx;
            std::string tok;
            while (ls >> tok) {
                // accept "i", "i/t", "i/t/n", "i//n"
                const int v = std::stoi(tok.substr(0, tok.find('/')));
                idx.push_back(v > 0 ? v - 1 : int(mesh.vertices.size()) + v);
            }
            if (idx.size() < 3) throw IoError(path.string() + ":" + std::to_string(lineno) + ": face with < 3 vertices");
            for (std::size_t k = 1; k + 1 < idx.size(); ++k) mesh.triangles.push_back({idx[0], idx[k], idx[k + 1]});
        }
    }
    mesh.finalize();
    return mesh;
}

inline void write_obj(const std::filesystem::path& path, const Mesh& mesh) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    os.precision(17);
    for (const Vec3& v : mesh.vertices) os << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
    for (const auto& t : mesh.triangles) os << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
}

// ---------------------------------------------------------------------------
// Camera

/// R = Rx(rx) * Ry(ry) * Rz(rz): intrinsic X-Y-Z rotations.
inline Mat3 euler_to_matrix(const Vec3& euler) {
    const Mat3 rx = Eigen::AngleAxisd(euler.x(), Vec3::UnitX()).toRotationMatrix();
    const Mat3 ry = Eigen::AngleAxisd(euler.y(), Vec3::UnitY()).toRotationMatrix();
    const Mat3 rz = Eigen::AngleAxisd(euler.z(), Vec3::UnitZ()).toRotationMatrix();
    return rx * ry * rz;
}

inline Vec3 matrix_to_euler(const Mat3& r) {
    const double sy = std::clamp(r(0, 2), -1.0, 1.0);
    const double ry = std::asin(sy);
    if (std::abs(sy) < 1.0 - 1e-12) return {std::atan2(-r(1, 2), r(2, 2)), ry, std::atan2(-r(0, 1), r(0, 0))};
    // Gimbal lock: only rx + rz (or rx - rz) is observable; put it all in rz.
    return {0.0, ry, std::atan2(r(1, 0), r(1, 1))};
}

/// Camera-to-world rigid transform. Camera looks down +Z, +X right, +Y down.
struct CameraPose {
    Vec3 euler = Vec3::Zero();       ///< (rx, ry, rz) radians
    Vec3 translation = Vec3::Zero(); ///< camera center in world, meters
    Mat3 rotation = Mat3::Identity();

    CameraPose() = default;
    CameraPose(const Vec3& e, const Vec3& t) : euler(e), translation(t), rotation(euler_to_matrix(e)) {}

    static CameraPose from_matrix(const Mat4& m) {
        CameraPose pose;
        pose.rotation = m.topLeftCorner<3, 3>();
        pose.translation = m.topRightCorner<3, 1>();
        pose.euler = matrix_to_euler(pose.rotation);
        return pose;
    }

    /// Camera at `eye` looking at `target`; `up` is the world up direction.
    static CameraPose look_at(const Vec3& eye, const Vec3& target, const Vec3& up = Vec3::UnitZ()) {
        const Vec3 z = (target - eye).normalized();
        const Vec3 x = z.cross(up).normalized();
        const Vec3 y = z.cross(x);
        Mat3 r;
        r.col(0) = x;
        r.col(1) = y;
        r.col(2) = z;
        return CameraPose(matrix_to_euler(r), eye);
    }

    [[nodiscard]] Mat4 matrix() const {
        Mat4 m = Mat4::Identity();
        m.topLeftCorner<3, 3>() = rotation;
        m.topRightCorner<3, 1>() = translation;
        return m;
    }

    [[nodiscard]] Vec3 world_to_camera(const Vec3& p) const { return rotation.transpose() * (p - translation); }
    [[nodiscard]] const Vec3& center() const { return translation; }
};

struct Intrinsics {
    double fx = 0, fy = 0, cx = 0, cy = 0;
    int width = 0, height = 0;

    void validate(const std::string& where) const {
        if (!(fx > 0 && fy > 0)) throw ValidationError(where + ": focal lengths must be positive");
        if (width <= 0 || height <= 0) throw ValidationError(where + ": image size must be positive");
        if (!(cx >= 0 && cx < width && cy >= 0 && cy < height))
            throw ValidationError(where + ": principal point outside the image");
    }
};

struct Frame {
    ImageF rgb;   ///< H x W x 3 in [0,1]
    ImageF depth; ///< H x W meters, 0 = invalid
    CameraPose pose;
    Intrinsics intrinsics;
    int index = 0; ///< capture order

    void validate() const {
        const std::string where = "frame " + std::to_string(index);
        intrinsics.validate(where);
        if (rgb.channels != 3) throw ValidationError(where + ": rgb must have 3 channels");
        if (rgb.width != depth.width || rgb.height != depth.height)
            throw ValidationError(where + ": depth size " + std::to_string(depth.width) + "x" +
                                  std::to_string(depth.height) + " does not match rgb size " +
                                  std::to_string(rgb.width) + "x" + std::to_string(rgb.height));
        if (rgb.width != intrinsics.width || rgb.height != intrinsics.height)
            throw ValidationError(where + ": image size does not match intrinsics");
        for (float d : depth.data)
            if (!(d >= 0.0f)) throw ValidationError(where + ": negative or NaN depth");
    }
};

/// Positions into Scene::frames.
struct Split {
    std::vector<int> train;
    std::vector<int> eval;
};

struct Scene {
    Mesh mesh;
    std::vector<Frame> frames;
    Split split;

    [[nodiscard]] bool is_split() const { return !split.train.empty() || !split.eval.empty(); }

    /// Checks the train/eval lists form a disjoint exhaustive partition.
    void validate_split() const {
        std::vector<int> seen(frames.size(), 0);
        for (int f : split.train) {
            if (f < 0 || std::size_t(f) >= frames.size()) throw ValidationError("split references missing frame");
            ++seen[f];
        }
        for (int f : split.eval) {
            if (f < 0 || std::size_t(f) >= frames.size()) throw ValidationError("split references missing frame");
            ++seen[f];
        }
        for (std::size_t f = 0; f < frames.size(); ++f)
            if (seen[f] != 1) throw ValidationError("split is not a partition at frame " + std::to_string(f));
    }
};

// ---------------------------------------------------------------------------
// Dataset I/O

inline Mat4 read_pose_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open '" + path.string() + "'");
    Mat4 m;
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c)
            if (!(is >> m(r, c))) throw IoError("'" + path.string() + "' must contain 16 numbers");
    return m;
}

inline void write_pose_file(const std::filesystem::path& path, const Mat4& m) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    os.precision(17);
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) os << m(r, c) << (c == 3 ? '\n' : ' ');
    }
}

inline Scene load_scene(const std::filesystem::path& manifest_path) {
    std::ifstream is(manifest_path);
    if (!is) throw IoError("cannot open manifest '" + manifest_path.string() + "'");
    nlohmann::json manifest;
    try {
        is >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed manifest '" + manifest_path.string() + "': " + e.what());
    }
    const auto base = manifest_path.parent_path();
    auto resolve = [&](const nlohmann::json& j, const char* key) {
        if (!j.contains(key) || !j[key].is_string())
            throw ValidationError(std::string("manifest entry missing string field '") + key + "'");
        const std::filesystem::path p = j[key].get<std::string>();
        return p.is_absolute() ? p : base / p;
    };

    Scene scene;
    scene.mesh = read_obj(resolve(manifest, "mesh"));
    if (!manifest.contains("frames") || !manifest["frames"].is_array())
        throw ValidationError("manifest has no 'frames' array");
    int position = 0;
    for (const auto& jf : manifest["frames"]) {
        Frame frame;
        frame.index = jf.value("index", position);
        frame.rgb = read_png(resolve(jf, "rgb"));
        frame.depth = read_depth(resolve(jf, "depth"));
        frame.pose = CameraPose::from_matrix(read_pose_file(resolve(jf, "pose")));
        if (!jf.contains("intrinsics")) throw ValidationError("frame " + std::to_string(frame.index) + " lacks intrinsics");
        const auto& ji = jf["intrinsics"];
        try {
            frame.intrinsics = {ji.at("fx").get<double>(), ji.at("fy").get<double>(), ji.at("cx").get<double>(),
                                ji.at("cy").get<double>(), ji.at("width").get<int>(), ji.at("height").get<int>()};
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError("frame " + std::to_string(frame.index) + ": bad intrinsics: " + e.what());
        }
        frame.validate();
        scene.frames.push_back(std::move(frame));
        ++position;
    }
    std::stable_sort(scene.frames.begin(), scene.frames.end(),
                     [](const Frame& a, const Frame& b) { return a.index < b.index; });
    return scene;
}

/// Writes `scene` in the dataset-directory layout read by load_scene.
inline void save_scene(const Scene& scene, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "frames");
    write_obj(dir / "mesh.obj", scene.mesh);
    nlohmann::json manifest;
    manifest["mesh"] = "mesh.obj";
    manifest["frames"] = nlohmann::json::array();
    for (const Frame& f : scene.frames) {
        char stem[32];
        std::snprintf(stem, sizeof stem, "frames/%05d", f.index);
        const std::string s = stem;
        write_png(dir / (s + "_rgb.png"), f.rgb);
        write_depth(dir / (s + "_depth.bin"), f.depth);
        write_pose_file(dir / (s + "_pose.txt"), f.pose.matrix());
        const auto& k = f.intrinsics;
        manifest["frames"].push_back({{"index", f.index},
                                      {"rgb", s + "_rgb.png"},
                                      {"depth", s + "_depth.bin"},
                                      {"pose", s + "_pose.txt"},
                                      {"intrinsics",
                                       {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy},
                                        {"width", k.width}, {"height", k.height}}}});
    }
    std::ofstream os(dir / "manifest.json");
    if (!os) throw IoError("cannot write manifest in '" + dir.string() + "'");
    os << manifest.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Split / subsample / corruption

/// Every round(1/eval_fraction)-th frame in capture order, starting at 0, is
/// held out for evaluation.
inline Scene split_views(Scene scene, double eval_fraction) {
    if (!(eval_fraction > 0.0 && eval_fraction < 1.0)) throw ArgumentError("eval_fraction must lie in (0, 1)");
    if (scene.frames.size() < 2) throw ArgumentError("split_views needs at least 2 frames");
    const int stride = std::max(1, int(std::lround(1.0 / eval_fraction)));
    scene.split = {};
    for (int f = 0; f < int(scene.frames.size()); ++f) (f % stride == 0 ? scene.split.eval : scene.split.train).push_back(f);
    return scene;
}

inline Scene subsample_train_views(Scene scene, int k) {
    if (k < 1) throw ArgumentError("subsample stride k must be >= 1");
    if (!scene.is_split()) throw ArgumentError("subsample_train_views requires a split scene");
    std::vector<int> kept;
    for (std::size_t i = 0; i < scene.split.train.size(); i += std::size_t(k)) kept.push_back(scene.split.train[i]);
    scene.split.train = std::move(kept);
    return scene;
}

namespace detail {

inline double perturb_component(double v, double fraction, Rng& rng) {
    const double bound = fraction * std::abs(v);
    const double u = rng.uniform(); // always drawn so the stream layout is independent of the values
    if (bound == 0.0) return v;
    return std::clamp(v + (2.0 * u - 1.0) * bound, v - bound, v + bound);
}

} // namespace detail

/// Adds U(-fraction|c|, fraction|c|) to each Euler angle and translation
/// component of every train pose. Draw order: frames in train order, then
/// rx, ry, rz, tx, ty, tz. An unsplit scene is treated as all-train.
inline Scene perturb_poses(Scene scene, double fraction, std::uint64_t seed) {
    if (!(fraction >= 0.0)) throw ArgumentError("pose-noise fraction must be >= 0");
    if (fraction == 0.0) return scene;
    std::vector<int> targets = scene.split.train;
    if (!scene.is_split()) {
        targets.resize(scene.frames.size());
        std::iota(targets.begin(), targets.end(), 0);
    }
    Rng rng(seed);
    for (int f : targets) {
        CameraPose& pose = scene.frames[f].pose;
        Vec3 e = pose.euler, t = pose.translation;
        for (int k = 0; k < 3; ++k) e[k] = detail::perturb_component(e[k], fraction, rng);
        for (int k = 0; k < 3; ++k) t[k] = detail::perturb_component(t[k], fraction, rng);
        pose = CameraPose(e, t);
    }
    return scene;
}

} // namespace advtex
