#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "advtex/raster.hpp"
#include "advtex/scene.hpp"

namespace advtex::fixture {

/// Axis-aligned square in the plane z = `z`, facing a camera at the origin
/// that looks down +Z.
inline Mesh facing_quad(double z, double half, Vec2 center = Vec2::Zero()) {
    Mesh m;
    const double x = center.x(), y = center.y();
    m.vertices = {{x - half, y - half, z}, {x + half, y - half, z}, {x + half, y + half, z}, {x - half, y + half, z}};
    m.triangles = {{0, 2, 1}, {0, 3, 2}};
    m.finalize();
    return m;
}

inline Mesh merge(const Mesh& a, const Mesh& b) {
    Mesh m = a;
    const int base = int(m.vertices.size());
    m.vertices.insert(m.vertices.end(), b.vertices.begin(), b.vertices.end());
    for (auto t : b.triangles) m.triangles.push_back({t[0] + base, t[1] + base, t[2] + base});
    m.finalize();
    return m;
}

inline Intrinsics intrinsics(int w, int h, double f) { return {f, f, (w - 1) / 2.0, (h - 1) / 2.0, w, h}; }

/// Whole-atlas UV square [0,1]^2 mapped onto quad corners in vertex order.
inline TriangleUVs quad_uvs(const Mesh& quad) {
    const std::array<Vec2, 4> corner = {Vec2(0, 0), Vec2(1, 0), Vec2(1, 1), Vec2(0, 1)};
    TriangleUVs uv;
    for (auto t : quad.triangles) uv.push_back({corner[t[0] % 4], corner[t[1] % 4], corner[t[2] % 4]});
    return uv;
}

inline ImageF textured(int w, int h, std::uint64_t seed, int cell = 8) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> noise(-0.05f, 0.05f);
    std::uniform_real_distribution<float> color(0.1f, 0.9f);
    ImageF img(w, h, 3);
    std::vector<float> cells(std::size_t((w / cell + 1) * (h / cell + 1)) * 3);
    for (auto& c : cells) c = color(rng);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                const float base = cells[(std::size_t((y / cell) * (w / cell + 1) + x / cell)) * 3 + c];
                img.at(x, y, c) = std::clamp(base + noise(rng), 0.0f, 1.0f);
            }
    return img;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("advtex_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace advtex::fixture
