#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "advtex/atlas.hpp"
#include "advtex/error.hpp"
#include "advtex/parallel.hpp"
#include "advtex/raster.hpp"
#include "advtex/scene.hpp"

namespace advtex {

enum class SynthTexture { Checker, Noise };

struct SynthSpec {
    Vec3 room = {4.0, 3.5, 2.6}; ///< extent along x, y, z (z up), meters
    int subdivisions = 6;        ///< quads per face side
    SynthTexture texture = SynthTexture::Checker;
    double cell = 0.2;           ///< texture cell size, meters
    double softness = 0.04;      ///< checker edge transition width, meters
    int views = 20;
    double orbit_radius = 0.9;
    double camera_height = 1.3;
    int width = 320, height = 240;
    double focal = 260.0;
    std::uint64_t seed = 0;
};

struct SynthScene {
    Scene scene;      ///< unsplit
    TextureAtlas gt;  ///< texels the frames were rendered from
};

/// Closed box with all normals facing inward, each face split into an
/// n x n grid of quads (two triangles each). Vertices are shared along edges.
inline Mesh make_room(const Vec3& extent, int subdivisions) {
    if (subdivisions < 1) throw ArgumentError("room subdivisions must be >= 1");
    if (!(extent.minCoeff() > 0.0)) throw ArgumentError("room extent must be positive");
    const double l = extent.x(), d = extent.y(), h = extent.z();
    // origin, edge a, edge b with a x b pointing into the room
    const std::array<std::array<Vec3, 3>, 6> faces = {{
        {Vec3(0, 0, 0), Vec3(l, 0, 0), Vec3(0, d, 0)}, // floor
        {Vec3(0, 0, h), Vec3(0, d, 0), Vec3(l, 0, 0)}, // ceiling
        {Vec3(0, 0, 0), Vec3(0, d, 0), Vec3(0, 0, h)}, // x = 0
        {Vec3(l, 0, 0), Vec3(0, 0, h), Vec3(0, d, 0)}, // x = l
        {Vec3(0, 0, 0), Vec3(0, 0, h), Vec3(l, 0, 0)}, // y = 0
        {Vec3(0, d, 0), Vec3(l, 0, 0), Vec3(0, 0, h)}, // y = d
    }};
    const int n = subdivisions;
    Mesh mesh;
    std::map<std::tuple<long, long, long>, int> index;
    auto vertex = [&](const Vec3& p) {
        const auto key = std::make_tuple(std::lround(p.x() * 1e6), std::lround(p.y() * 1e6), std::lround(p.z() * 1e6));
        auto [it, fresh] = index.try_emplace(key, int(mesh.vertices.size()));
        if (fresh) mesh.vertices.push_back(p);
        return it->second;
    };
    for (const auto& [o, a, b] : faces) {
        std::vector<int> grid((n + 1) * (n + 1));
        for (int j = 0; j <= n; ++j)
            for (int i = 0; i <= n; ++i) grid[j * (n + 1) + i] = vertex(o + a * (double(i) / n) + b * (double(j) / n));
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                const int v00 = grid[j * (n + 1) + i], v10 = grid[j * (n + 1) + i + 1];
                const int v01 = grid[(j + 1) * (n + 1) + i], v11 = grid[(j + 1) * (n + 1) + i + 1];
                mesh.triangles.push_back({v00, v10, v11});
                mesh.triangles.push_back({v00, v11, v01});
            }
    }
    mesh.finalize();
    return mesh;
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline double hash_unit(std::uint64_t seed, int chart, long i, long j, int channel) {
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ std::uint64_t(chart));
    h = splitmix64(h ^ std::uint64_t(i));
    h = splitmix64(h ^ std::uint64_t(j));
    h = splitmix64(h ^ std::uint64_t(channel));
    return double(h >> 11) * 0x1.0p-53;
}

inline double smoothstep(double e0, double e1, double x) {
    if (e1 <= e0) return x < e0 ? 0.0 : 1.0;
    const double t = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
}

} // namespace detail

/// Procedural surface color at plane coordinates (u, v) of a chart. Cells
/// carry random colors (alternating bright/dark for the checker) blended
/// across cell borders over `softness` meters; the noise variant blends
/// across the whole cell.
inline std::array<float, 3> synth_color(const SynthSpec& spec, int chart, double u, double v) {
    const double tx = u / spec.cell - 0.5, ty = v / spec.cell - 0.5;
    const long i0 = long(std::floor(tx)), j0 = long(std::floor(ty));
    const double beta = spec.texture == SynthTexture::Noise ? 0.5 : std::min(0.5, spec.softness / (2.0 * spec.cell));
    const double wx = detail::smoothstep(0.5 - beta, 0.5 + beta, tx - i0);
    const double wy = detail::smoothstep(0.5 - beta, 0.5 + beta, ty - j0);
    auto cell = [&](long i, long j, int c) {
        const double r = detail::hash_unit(spec.seed, chart, i, j, c);
        if (spec.texture == SynthTexture::Noise) return 0.1 + 0.8 * r;
        const double base = ((i + j) & 1) ? 0.25 : 0.7;
        return base + 0.3 * (r - 0.5);
    };
    std::array<float, 3> out{};
    for (int c = 0; c < 3; ++c) {
        const double top = (1 - wx) * cell(i0, j0, c) + wx * cell(i0 + 1, j0, c);
        const double bot = (1 - wx) * cell(i0, j0 + 1, c) + wx * cell(i0 + 1, j0 + 1, c);
        out[c] = float(std::clamp((1 - wy) * top + wy * bot, 0.0, 1.0));
    }
    return out;
}

/// Fills every chart texel (gutters included) with the procedural texture.
inline void paint_atlas(TextureAtlas& atlas, const SynthSpec& spec) {
    for (int l = 0; l < int(atlas.charts.size()); ++l) {
        const Chart& ch = atlas.charts[l];
        for (int y = ch.y; y < ch.y + ch.size; ++y)
            for (int x = ch.x; x < ch.x + ch.size; ++x) {
                const Vec2 q = ch.to_plane({x + 0.5, y + 0.5});
                const auto c = synth_color(spec, l, q.x(), q.y());
                for (int k = 0; k < 3; ++k) atlas.texels.at(x, y, k) = c[k];
            }
    }
}

/// Camera poses on a horizontal circle around the room center, each looking
/// across the room with jittered yaw and a pitch cycling through steep and
/// shallow down / up angles.
inline std::vector<CameraPose> synth_orbit(const SynthSpec& spec) {
    Rng rng(spec.seed ^ 0x6f72626974ULL);
    const Vec3 center(spec.room.x() / 2, spec.room.y() / 2, 0.0);
    constexpr std::array<double, 4> pitch = {-0.6, 0.15, 0.6, -0.15};
    std::vector<CameraPose> poses;
    for (int v = 0; v < spec.views; ++v) {
        const double theta = 2.0 * M_PI * v / spec.views;
        const Vec3 eye = center + Vec3(spec.orbit_radius * std::cos(theta), spec.orbit_radius * std::sin(theta),
                                       spec.camera_height + rng.uniform(-0.1, 0.1));
        const double yaw = theta + M_PI + rng.uniform(-0.15, 0.15);
        const double p = pitch[v % pitch.size()] + rng.uniform(-0.08, 0.08);
        const Vec3 dir(std::cos(p) * std::cos(yaw), std::cos(p) * std::sin(yaw), std::sin(p));
        poses.push_back(CameraPose::look_at(eye, eye + dir));
    }
    return poses;
}

/// Textured box room seen from an orbit of cameras. Frames are rendered from
/// the ground-truth atlas; depth is the rendered camera Z (0 where empty).
inline SynthScene make_scene(const SynthSpec& spec, int threads = 1) {
    if (spec.views < 1) throw ArgumentError("synth: views must be >= 1");
    if (spec.width < 8 || spec.height < 8) throw ArgumentError("synth: frames must be at least 8x8");
    if (!(spec.cell > 0.0)) throw ArgumentError("synth: cell size must be positive");
    SynthScene out;
    Scene& scene = out.scene;
    scene.mesh = make_room(spec.room, spec.subdivisions);
    const Intrinsics intr{spec.focal, spec.focal, (spec.width - 1) / 2.0, (spec.height - 1) / 2.0, spec.width,
                          spec.height};
    const auto poses = synth_orbit(spec);
    scene.frames.resize(poses.size());
    for (std::size_t v = 0; v < poses.size(); ++v) {
        Frame& f = scene.frames[v];
        f.index = int(v);
        f.pose = poses[v];
        f.intrinsics = intr;
        f.rgb = ImageF(spec.width, spec.height, 3);
    }
    out.gt = build_atlas(scene.mesh, resolution_policy(scene.frames));
    paint_atlas(out.gt, spec);
    parallel_for(scene.frames.size(), threads, [&](std::size_t v) {
        Frame& f = scene.frames[v];
        const RenderBuffers r = rasterize(scene.mesh, out.gt.uv, out.gt.texels, f.pose, f.intrinsics);
        f.rgb = r.rgb;
        f.depth = ImageF(spec.width, spec.height, 1);
        for (std::size_t p = 0; p < r.mask.size(); ++p)
            if (r.mask[p]) f.depth.data[p] = float(r.depth[p]);
    });
    return out;
}

struct PixelShift {
    int dx = 0, dy = 0;
    bool operator==(const PixelShift&) const = default;
};

/// Circularly shifts the rgb of every train frame by an integer offset drawn
/// uniformly from [-max_shift, max_shift]^2 (draw order: train frames in
/// order, dx then dy). An unsplit scene uses the split_views(eval_fraction)
/// partition to decide which frames are train. Returns one shift per frame;
/// eval frames get (0, 0).
inline std::vector<PixelShift> inject_misalignment(Scene& scene, int max_shift, std::uint64_t seed,
                                                   double eval_fraction = 0.1) {
    if (max_shift < 0) throw ArgumentError("max_shift must be >= 0");
    const std::vector<int> train = scene.is_split() ? scene.split.train : split_views(scene, eval_fraction).split.train;
    std::vector<PixelShift> shifts(scene.frames.size());
    Rng rng(seed);
    for (int f : train) {
        PixelShift s{rng.uniform_int(-max_shift, max_shift), rng.uniform_int(-max_shift, max_shift)};
        shifts[f] = s;
        if (s.dx || s.dy) scene.frames[f].rgb = circular_shift(scene.frames[f].rgb, s.dx, s.dy);
    }
    return shifts;
}

} // namespace advtex
