#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "advtex/image.hpp"
#include "advtex/scene.hpp"

namespace advtex {

/// Per-triangle texture coordinates, one (u, v) per corner, atlas-normalized.
using TriangleUVs = std::vector<std::array<Vec2, 3>>;

inline constexpr double kNearPlane = 0.01;   // meters; geometry closer is clipped
inline constexpr double kBehindCamera = 1e-9;

struct Projection {
    Vec2 pixel = Vec2::Zero();
    double depth = 0.0;
    bool behind = false; ///< Z <= 1e-9; pixel is meaningless
};

/// Pinhole projection. Pixel centers sit on integer coordinates.
inline Projection project(const Vec3& world, const CameraPose& pose, const Intrinsics& intr) {
    const Vec3 p = pose.world_to_camera(world);
    Projection out;
    out.depth = p.z();
    if (p.z() <= kBehindCamera) {
        out.behind = true;
        return out;
    }
    out.pixel = {intr.fx * p.x() / p.z() + intr.cx, intr.fy * p.y() / p.z() + intr.cy};
    return out;
}

struct RenderBuffers {
    int width = 0, height = 0;
    ImageF rgb;                             ///< zero where mask is false
    std::vector<double> depth;              ///< camera Z, +inf where empty
    std::vector<std::uint8_t> mask;
    std::vector<std::int32_t> tri_id;       ///< -1 where empty
    std::vector<std::array<double, 3>> bary; ///< corner weights of tri_id

    RenderBuffers() = default;
    RenderBuffers(int w, int h)
        : width(w), height(h), rgb(w, h, 3), depth(std::size_t(w) * h, std::numeric_limits<double>::infinity()),
          mask(std::size_t(w) * h, 0), tri_id(std::size_t(w) * h, -1), bary(std::size_t(w) * h, {0.0, 0.0, 0.0}) {}

    [[nodiscard]] std::size_t covered() const {
        std::size_t n = 0;
        for (auto m : mask) n += m;
        return n;
    }
};

/// Camera-to-world tolerance for agreeing with measured depth.
struct DepthTolerance {
    double absolute = 0.02; ///< meters
    double relative = 0.02; ///< fraction of measured depth
    [[nodiscard]] double at(double measured) const { return std::max(absolute, relative * measured); }
};

namespace detail {

struct ClipVertex {
    Vec3 cam;
    std::array<double, 3> bary;
};

/// Sutherland-Hodgman against Z >= near.
inline std::vector<ClipVertex> clip_near(const std::array<ClipVertex, 3>& tri, double near) {
    std::vector<ClipVertex> out;
    out.reserve(4);
    for (int k = 0; k < 3; ++k) {
        const ClipVertex& a = tri[k];
        const ClipVertex& b = tri[(k + 1) % 3];
        const bool ain = a.cam.z() >= near;
        const bool bin = b.cam.z() >= near;
        if (ain) out.push_back(a);
        if (ain != bin) {
            const double t = (near - a.cam.z()) / (b.cam.z() - a.cam.z());
            ClipVertex c;
            c.cam = a.cam + t * (b.cam - a.cam);
            c.cam.z() = near;
            for (int j = 0; j < 3; ++j) c.bary[j] = a.bary[j] + t * (b.bary[j] - a.bary[j]);
            out.push_back(c);
        }
    }
    return out;
}

inline std::vector<ClipVertex> camera_polygon(const Mesh& mesh, std::size_t tri, const CameraPose& pose) {
    std::array<ClipVertex, 3> cv;
    for (int k = 0; k < 3; ++k) {
        cv[k].cam = pose.world_to_camera(mesh.corner(tri, k));
        cv[k].bary = {0.0, 0.0, 0.0};
        cv[k].bary[k] = 1.0;
    }
    return clip_near(cv, kNearPlane);
}

inline Vec2 to_screen(const Vec3& cam, const Intrinsics& intr) {
    return {intr.fx * cam.x() / cam.z() + intr.cx, intr.fy * cam.y() / cam.z() + intr.cy};
}

inline double polygon_area(const std::vector<Vec2>& poly) {
    double a = 0.0;
    for (std::size_t i = 0; i < poly.size(); ++i) {
        const Vec2& p = poly[i];
        const Vec2& q = poly[(i + 1) % poly.size()];
        a += p.x() * q.y() - q.x() * p.y();
    }
    return 0.5 * std::abs(a);
}

/// Clips a convex or simple polygon to an axis-aligned rectangle.
inline std::vector<Vec2> clip_to_rect(std::vector<Vec2> poly, double x0, double y0, double x1, double y1) {
    auto clip = [&](auto inside, auto intersect) {
        std::vector<Vec2> out;
        for (std::size_t i = 0; i < poly.size(); ++i) {
            const Vec2& a = poly[i];
            const Vec2& b = poly[(i + 1) % poly.size()];
            const bool ain = inside(a), bin = inside(b);
            if (ain) out.push_back(a);
            if (ain != bin) out.push_back(intersect(a, b));
        }
        poly = std::move(out);
    };
    auto at_x = [](double x) {
        return [x](const Vec2& a, const Vec2& b) {
            const double t = (x - a.x()) / (b.x() - a.x());
            return Vec2(x, a.y() + t * (b.y() - a.y()));
        };
    };
    auto at_y = [](double y) {
        return [y](const Vec2& a, const Vec2& b) {
            const double t = (y - a.y()) / (b.y() - a.y());
            return Vec2(a.x() + t * (b.x() - a.x()), y);
        };
    };
    clip([&](const Vec2& p) { return p.x() >= x0; }, at_x(x0));
    if (poly.empty()) return poly;
    clip([&](const Vec2& p) { return p.x() <= x1; }, at_x(x1));
    if (poly.empty()) return poly;
    clip([&](const Vec2& p) { return p.y() >= y0; }, at_y(y0));
    if (poly.empty()) return poly;
    clip([&](const Vec2& p) { return p.y() <= y1; }, at_y(y1));
    return poly;
}

// Fixed-point screen coordinates: 8 fractional bits. Coverage is decided on
// exact integer edge functions so shared edges never double-cover or crack;
// interpolation uses the unsnapped doubles.
inline constexpr int kSubpixelBits = 8;
inline constexpr double kSubpixelScale = double(1 << kSubpixelBits);
inline constexpr double kGuardBand = double(1 << 20);

struct FixedPoint {
    std::int64_t x, y;
};

inline FixedPoint to_fixed(const Vec2& p) {
    return {std::llround(std::clamp(p.x(), -kGuardBand, kGuardBand) * kSubpixelScale),
            std::llround(std::clamp(p.y(), -kGuardBand, kGuardBand) * kSubpixelScale)};
}

inline std::int64_t edge(const FixedPoint& a, const FixedPoint& b, std::int64_t px, std::int64_t py) {
    return (b.x - a.x) * (py - a.y) - (b.y - a.y) * (px - a.x);
}

inline double edge(const Vec2& a, const Vec2& b, const Vec2& p) {
    return (b.x() - a.x()) * (p.y() - a.y()) - (b.y() - a.y()) * (p.x() - a.x());
}

/// Top-left rule for an edge of a positively oriented triangle.
inline bool owns_edge(const FixedPoint& a, const FixedPoint& b) {
    const std::int64_t dy = b.y - a.y;
    const std::int64_t dx = b.x - a.x;
    return dy < 0 || (dy == 0 && dx > 0);
}

inline bool inside_edge(std::int64_t w, bool owned) { return w > 0 || (w == 0 && owned); }

/// Scan-converts one screen-space triangle, calling
/// fragment(x, y, depth, original_bary) for every covered pixel center.
template <class Fn>
void raster_clip_triangle(const ClipVertex& c0, const ClipVertex& c1, const ClipVertex& c2, const Intrinsics& intr,
                          Fn&& fragment) {
    std::array<const ClipVertex*, 3> v = {&c0, &c1, &c2};
    std::array<Vec2, 3> s = {to_screen(c0.cam, intr), to_screen(c1.cam, intr), to_screen(c2.cam, intr)};
    std::array<FixedPoint, 3> f = {to_fixed(s[0]), to_fixed(s[1]), to_fixed(s[2])};
    const std::int64_t area = edge(f[0], f[1], f[2].x, f[2].y);
    if (area == 0) return;
    if (area < 0) {
        std::swap(v[1], v[2]);
        std::swap(s[1], s[2]);
        std::swap(f[1], f[2]);
    }
    const bool own0 = owns_edge(f[1], f[2]);
    const bool own1 = owns_edge(f[2], f[0]);
    const bool own2 = owns_edge(f[0], f[1]);

    const std::int64_t minx = std::min({f[0].x, f[1].x, f[2].x});
    const std::int64_t maxx = std::max({f[0].x, f[1].x, f[2].x});
    const std::int64_t miny = std::min({f[0].y, f[1].y, f[2].y});
    const std::int64_t maxy = std::max({f[0].y, f[1].y, f[2].y});
    const auto ceil_div = [](std::int64_t a) { return int(std::ceil(double(a) / kSubpixelScale)); };
    const auto floor_div = [](std::int64_t a) { return int(std::floor(double(a) / kSubpixelScale)); };
    const int x0 = std::max(0, ceil_div(minx));
    const int x1 = std::min(intr.width - 1, floor_div(maxx));
    const int y0 = std::max(0, ceil_div(miny));
    const int y1 = std::min(intr.height - 1, floor_div(maxy));
    if (x0 > x1 || y0 > y1) return;

    const double iz0 = 1.0 / v[0]->cam.z(), iz1 = 1.0 / v[1]->cam.z(), iz2 = 1.0 / v[2]->cam.z();
    for (int y = y0; y <= y1; ++y) {
        const std::int64_t py = std::int64_t(y) << kSubpixelBits;
        for (int x = x0; x <= x1; ++x) {
            const std::int64_t px = std::int64_t(x) << kSubpixelBits;
            const std::int64_t w0 = edge(f[1], f[2], px, py);
            const std::int64_t w1 = edge(f[2], f[0], px, py);
            const std::int64_t w2 = edge(f[0], f[1], px, py);
            if (!inside_edge(w0, own0) || !inside_edge(w1, own1) || !inside_edge(w2, own2)) continue;

            const Vec2 p(x, y);
            double l0 = edge(s[1], s[2], p), l1 = edge(s[2], s[0], p), l2 = edge(s[0], s[1], p);
            const double lsum = l0 + l1 + l2;
            if (lsum != 0.0) {
                l0 = std::max(0.0, l0 / lsum);
                l1 = std::max(0.0, l1 / lsum);
                l2 = std::max(0.0, l2 / lsum);
            } else {
                l0 = l1 = l2 = 1.0 / 3.0;
            }
            // Perspective-correct: interpolate 1/Z linearly in screen space.
            const double w0p = l0 * iz0, w1p = l1 * iz1, w2p = l2 * iz2;
            const double inv_z = w0p + w1p + w2p;
            if (!(inv_z > 0.0)) continue;
            const double b0 = w0p / inv_z, b1 = w1p / inv_z, b2 = w2p / inv_z;
            std::array<double, 3> bary;
            double bsum = 0.0;
            for (int j = 0; j < 3; ++j) {
                bary[j] = std::max(0.0, b0 * v[0]->bary[j] + b1 * v[1]->bary[j] + b2 * v[2]->bary[j]);
                bsum += bary[j];
            }
            for (double& b : bary) b /= bsum;
            fragment(x, y, 1.0 / inv_z, bary);
        }
    }
}

} // namespace detail

/// Calls fragment(x, y, tri, depth, bary) for every pixel each triangle covers,
/// in triangle order. No depth test; callers build their own.
template <class Fn>
void for_each_fragment(const Mesh& mesh, const CameraPose& pose, const Intrinsics& intr, Fn&& fragment) {
    for (std::size_t t = 0; t < mesh.size(); ++t) {
        const auto poly = detail::camera_polygon(mesh, t, pose);
        for (std::size_t k = 1; k + 1 < poly.size(); ++k) {
            detail::raster_clip_triangle(poly[0], poly[k], poly[k + 1], intr,
                                         [&](int x, int y, double z, const std::array<double, 3>& b) {
                                             fragment(x, y, int(t), z, b);
                                         });
        }
    }
}

/// Area in pixels of a triangle's projection after near-plane clipping,
/// optionally also clipped to the viewport.
inline double projected_area(const Mesh& mesh, std::size_t tri, const CameraPose& pose, const Intrinsics& intr,
                             bool clip_to_viewport = false) {
    const auto poly = detail::camera_polygon(mesh, tri, pose);
    if (poly.size() < 3) return 0.0;
    std::vector<Vec2> screen;
    for (const auto& v : poly) screen.push_back(detail::to_screen(v.cam, intr));
    if (clip_to_viewport) screen = detail::clip_to_rect(screen, -0.5, -0.5, intr.width - 0.5, intr.height - 0.5);
    return screen.size() < 3 ? 0.0 : detail::polygon_area(screen);
}

/// Z-buffered depth / coverage / triangle-id / barycentric pass (no color).
inline RenderBuffers rasterize_geometry(const Mesh& mesh, const CameraPose& pose, const Intrinsics& intr,
                                        std::vector<std::int64_t>* candidate_counts = nullptr) {
    RenderBuffers buf(intr.width, intr.height);
    if (candidate_counts) candidate_counts->assign(mesh.size(), 0);
    for_each_fragment(mesh, pose, intr, [&](int x, int y, int tri, double z, const std::array<double, 3>& b) {
        if (candidate_counts) ++(*candidate_counts)[tri];
        const std::size_t p = std::size_t(y) * intr.width + x;
        if (z < buf.depth[p]) {
            buf.depth[p] = z;
            buf.tri_id[p] = tri;
            buf.bary[p] = b;
            buf.mask[p] = 1;
        }
    });
    return buf;
}

/// UV of a covered pixel.
inline Vec2 pixel_uv(const RenderBuffers& buf, std::size_t p, const TriangleUVs& uv) {
    const auto& b = buf.bary[p];
    const auto& t = uv[buf.tri_id[p]];
    return b[0] * t[0] + b[1] * t[1] + b[2] * t[2];
}

/// Converts atlas-normalized UV to texel-center coordinates of `texture`.
inline Vec2 uv_to_texel(const Vec2& uv, int width, int height) {
    return {uv.x() * width - 0.5, uv.y() * height - 0.5};
}

/// Fills buf.rgb by bilinear texture lookup at every covered pixel.
inline void shade(RenderBuffers& buf, const TriangleUVs& uv, const ImageF& texture) {
    buf.rgb = ImageF(buf.width, buf.height, 3);
    if (texture.empty()) return;
    for (std::size_t p = 0; p < buf.mask.size(); ++p) {
        if (!buf.mask[p]) continue;
        const Vec2 t = uv_to_texel(pixel_uv(buf, p, uv), texture.width, texture.height);
        sample_bilinear(texture, t.x(), t.y(), &buf.rgb.data[p * 3]);
    }
}

inline RenderBuffers rasterize(const Mesh& mesh, const TriangleUVs& uv, const ImageF& texture, const CameraPose& pose,
                               const Intrinsics& intr) {
    RenderBuffers buf = rasterize_geometry(mesh, pose, intr);
    shade(buf, uv, texture);
    return buf;
}

inline bool back_facing(const Mesh& mesh, std::size_t tri, const CameraPose& pose) {
    return mesh.normals[tri].dot(mesh.centroid(tri) - pose.center()) >= 0.0;
}

/// Per-triangle visible fraction: pixels that win the z-buffer (and agree
/// with `frame_depth` when given) over the triangle's full projected
/// footprint, where the off-screen part of the footprint is counted
/// analytically. Back-facing triangles report 0.
inline std::vector<double> visibility(const Mesh& mesh, const CameraPose& pose, const Intrinsics& intr,
                                      const ImageF* frame_depth = nullptr, DepthTolerance tol = {}) {
    if (frame_depth && (frame_depth->width != intr.width || frame_depth->height != intr.height))
        throw ArgumentError("visibility: frame depth size does not match intrinsics");
    std::vector<std::int64_t> candidates;
    const RenderBuffers buf = rasterize_geometry(mesh, pose, intr, &candidates);
    std::vector<std::int64_t> visible(mesh.size(), 0);
    for (std::size_t p = 0; p < buf.mask.size(); ++p) {
        if (!buf.mask[p]) continue;
        if (frame_depth) {
            const double measured = frame_depth->data[p];
            // 0 = no measurement; nothing to disagree with.
            if (measured > 0.0 && std::abs(buf.depth[p] - measured) > tol.at(measured)) continue;
        }
        ++visible[buf.tri_id[p]];
    }
    std::vector<double> fraction(mesh.size(), 0.0);
    for (std::size_t t = 0; t < mesh.size(); ++t) {
        if (visible[t] == 0 || back_facing(mesh, t, pose)) continue;
        const double offscreen =
            std::max(0.0, projected_area(mesh, t, pose, intr) - projected_area(mesh, t, pose, intr, true));
        const double footprint = double(candidates[t]) + offscreen;
        fraction[t] = footprint > 0.0 ? std::min(1.0, double(visible[t]) / footprint) : 0.0;
    }
    return fraction;
}

} // namespace advtex
