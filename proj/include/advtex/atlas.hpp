#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "advtex/error.hpp"
#include "advtex/image.hpp"
#include "advtex/mrf.hpp"
#include "advtex/raster.hpp"
#include "advtex/scene.hpp"

namespace advtex {

using Adjacency = std::vector<std::pair<int, int>>;

/// Pairs of triangles sharing an edge, each unordered pair once, sorted.
inline Adjacency triangle_adjacency(const Mesh& mesh) {
    std::unordered_map<std::uint64_t, std::vector<int>> by_edge;
    for (std::size_t t = 0; t < mesh.size(); ++t) {
        for (int k = 0; k < 3; ++k) {
            auto a = std::uint32_t(mesh.triangles[t][k]);
            auto b = std::uint32_t(mesh.triangles[t][(k + 1) % 3]);
            if (a == b) continue;
            if (a > b) std::swap(a, b);
            by_edge[(std::uint64_t(a) << 32) | b].push_back(int(t));
        }
    }
    Adjacency out;
    for (const auto& [key, tris] : by_edge)
        for (std::size_t i = 0; i < tris.size(); ++i)
            for (std::size_t j = i + 1; j < tris.size(); ++j)
                if (tris[i] != tris[j]) out.emplace_back(std::min(tris[i], tris[j]), std::max(tris[i], tris[j]));
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

/// Orthographic projection plane: direction is the plane normal.
struct Plane {
    Vec3 direction = Vec3::UnitZ();
    Vec3 axis_u = Vec3::UnitX();
    Vec3 axis_v = Vec3::UnitY();

    static Plane from_direction(const Vec3& d) {
        Plane p;
        p.direction = d.normalized();
        const Vec3 helper = std::abs(p.direction.z()) < 0.9 ? Vec3::UnitZ() : Vec3::UnitX();
        p.axis_u = helper.cross(p.direction).normalized();
        p.axis_v = p.direction.cross(p.axis_u);
        return p;
    }

    [[nodiscard]] Vec2 project(const Vec3& x) const { return {x.dot(axis_u), x.dot(axis_v)}; }
};

inline std::vector<Vec3> axis_directions() {
    return {Vec3::UnitX(), -Vec3::UnitX(), Vec3::UnitY(), -Vec3::UnitY(), Vec3::UnitZ(), -Vec3::UnitZ()};
}

struct PlaneAssignment {
    std::vector<int> label;    ///< per triangle, index into planes
    std::vector<Plane> planes; ///< every plane owns >= 1 triangle

    [[nodiscard]] std::size_t plane_count() const { return planes.size(); }
};

struct PlaneWeights {
    double unary = 1.0;    ///< w_u on n_i . d_y
    double pairwise = 0.5; ///< w_p Potts bonus over the adjacency
};

inline PottsProblem plane_problem(const Mesh& mesh, const std::vector<Vec3>& directions, PlaneWeights w,
                                  const Adjacency& adjacency) {
    PottsProblem p;
    p.nodes = int(mesh.size());
    p.labels = int(directions.size());
    p.unary.resize(std::size_t(p.nodes) * p.labels);
    for (int i = 0; i < p.nodes; ++i)
        for (int l = 0; l < p.labels; ++l)
            p.unary[std::size_t(i) * p.labels + l] = w.unary * mesh.normals[i].dot(directions[l].normalized());
    p.edges = adjacency;
    p.weight = w.pairwise;
    return p;
}

/// Plane labeling by ICM from the unary argmax, then compaction to used planes
/// (original direction order preserved).
inline PlaneAssignment assign_planes(const Mesh& mesh, const std::vector<Vec3>& directions = axis_directions(),
                                     PlaneWeights weights = {}) {
    if (mesh.size() == 0) throw ArgumentError("assign_planes: empty mesh");
    if (directions.empty()) throw ArgumentError("assign_planes: empty plane set");
    const PottsProblem problem = plane_problem(mesh, directions, weights, triangle_adjacency(mesh));
    const IcmResult res = icm(problem, unary_argmax(problem));

    std::vector<int> remap(directions.size(), -1);
    PlaneAssignment out;
    out.label.resize(mesh.size());
    for (std::size_t i = 0; i < mesh.size(); ++i) remap[res.labels[i]] = 0;
    for (std::size_t d = 0; d < directions.size(); ++d) {
        if (remap[d] < 0) continue;
        remap[d] = int(out.planes.size());
        out.planes.push_back(Plane::from_direction(directions[d]));
    }
    for (std::size_t i = 0; i < mesh.size(); ++i) out.label[i] = remap[res.labels[i]];
    return out;
}

// ---------------------------------------------------------------------------
// Overlap detection

inline constexpr double kOverlapArea = 1e-9;

namespace detail {

using Tri2 = std::array<Vec2, 3>;

inline double signed_area2(const Tri2& t) {
    return (t[1] - t[0]).x() * (t[2] - t[0]).y() - (t[1] - t[0]).y() * (t[2] - t[0]).x();
}

/// Area of the intersection of two triangles (convex clip).
inline double intersection_area(Tri2 a, Tri2 b) {
    if (signed_area2(b) < 0) std::swap(b[1], b[2]);
    std::vector<Vec2> poly(a.begin(), a.end());
    for (int k = 0; k < 3 && !poly.empty(); ++k) {
        const Vec2 e0 = b[k], e1 = b[(k + 1) % 3];
        auto side = [&](const Vec2& p) { return (e1 - e0).x() * (p - e0).y() - (e1 - e0).y() * (p - e0).x(); };
        std::vector<Vec2> out;
        for (std::size_t i = 0; i < poly.size(); ++i) {
            const Vec2& p = poly[i];
            const Vec2& q = poly[(i + 1) % poly.size()];
            const double sp = side(p), sq = side(q);
            if (sp >= 0) out.push_back(p);
            if ((sp >= 0) != (sq >= 0)) out.push_back(p + (q - p) * (sp / (sp - sq)));
        }
        poly = std::move(out);
    }
    return poly.size() < 3 ? 0.0 : polygon_area(poly);
}

/// Uniform grid over triangle bounding boxes for overlap queries.
class TriGrid {
public:
    explicit TriGrid(double cell) : cell_(cell > 0 ? cell : 1.0) {}

    void insert(int id, const Tri2& t) {
        for_cells(t, [&](std::int64_t key) { cells_[key].push_back(id); });
    }

    template <class Fn>
    void query(const Tri2& t, Fn&& fn) const {
        std::vector<int> seen;
        for_cells(t, [&](std::int64_t key) {
            auto it = cells_.find(key);
            if (it == cells_.end()) return;
            for (int id : it->second)
                if (std::find(seen.begin(), seen.end(), id) == seen.end()) {
                    seen.push_back(id);
                    fn(id);
                }
        });
    }

private:
    template <class Fn>
    void for_cells(const Tri2& t, Fn&& fn) const {
        const double minx = std::min({t[0].x(), t[1].x(), t[2].x()});
        const double maxx = std::max({t[0].x(), t[1].x(), t[2].x()});
        const double miny = std::min({t[0].y(), t[1].y(), t[2].y()});
        const double maxy = std::max({t[0].y(), t[1].y(), t[2].y()});
        const auto x0 = std::int64_t(std::floor(minx / cell_)), x1 = std::int64_t(std::floor(maxx / cell_));
        const auto y0 = std::int64_t(std::floor(miny / cell_)), y1 = std::int64_t(std::floor(maxy / cell_));
        for (auto y = y0; y <= y1; ++y)
            for (auto x = x0; x <= x1; ++x) fn((y << 32) ^ (x & 0xffffffff));
    }

    double cell_;
    std::unordered_map<std::int64_t, std::vector<int>> cells_;
};

inline Tri2 project_triangle(const Mesh& mesh, std::size_t t, const Plane& plane) {
    return {plane.project(mesh.corner(t, 0)), plane.project(mesh.corner(t, 1)), plane.project(mesh.corner(t, 2))};
}

} // namespace detail

/// Splits plane charts until no two triangles in a plane overlap in
/// projection. Connected components (adjacency restricted to the plane) are
/// visited in order of their lowest triangle index; a component touching an
/// already accepted one moves wholesale to a fresh duplicate plane, and a
/// self-overlapping component sheds its higher-index offenders.
inline PlaneAssignment detect_overlaps(PlaneAssignment assignment, const Mesh& mesh) {
    const Adjacency adjacency = triangle_adjacency(mesh);
    std::vector<std::vector<int>> nb(mesh.size());
    for (auto [a, b] : adjacency) {
        nb[a].push_back(b);
        nb[b].push_back(a);
    }
    std::size_t created = 0;
    for (std::size_t label = 0; label < assignment.planes.size(); ++label) {
        const Plane plane = assignment.planes[label];
        std::vector<int> members;
        for (std::size_t t = 0; t < mesh.size(); ++t)
            if (assignment.label[t] == int(label)) members.push_back(int(t));
        if (members.empty()) continue;

        std::vector<detail::Tri2> proj(mesh.size());
        double extent = 0.0;
        for (int t : members) {
            proj[t] = detail::project_triangle(mesh, t, plane);
            extent += std::sqrt(std::abs(detail::signed_area2(proj[t])));
        }

        // Components in order of lowest member index (members is sorted).
        std::vector<int> comp(mesh.size(), -1);
        std::vector<std::vector<int>> components;
        for (int seed : members) {
            if (comp[seed] >= 0) continue;
            const int id = int(components.size());
            components.emplace_back();
            std::vector<int> stack = {seed};
            comp[seed] = id;
            while (!stack.empty()) {
                const int t = stack.back();
                stack.pop_back();
                components[id].push_back(t);
                for (int n : nb[t])
                    if (comp[n] < 0 && assignment.label[n] == int(label)) {
                        comp[n] = id;
                        stack.push_back(n);
                    }
            }
            std::sort(components[id].begin(), components[id].end());
        }

        detail::TriGrid grid(std::max(1e-6, 2.0 * extent / double(members.size())));
        std::vector<int> moved;
        auto overlaps_accepted = [&](int t) {
            bool hit = false;
            grid.query(proj[t], [&](int other) {
                if (!hit && detail::intersection_area(proj[t], proj[other]) > kOverlapArea) hit = true;
            });
            return hit;
        };
        for (const auto& c : components) {
            bool clash = false;
            for (int t : c)
                if ((clash = overlaps_accepted(t))) break;
            if (clash) {
                moved.insert(moved.end(), c.begin(), c.end());
                continue;
            }
            // Self-overlap within the component: accept in index order.
            detail::TriGrid local(std::max(1e-6, 2.0 * extent / double(members.size())));
            std::vector<int> kept;
            for (int t : c) {
                bool self = false;
                local.query(proj[t], [&](int other) {
                    if (!self && detail::intersection_area(proj[t], proj[other]) > kOverlapArea) self = true;
                });
                if (self) {
                    moved.push_back(t);
                } else {
                    local.insert(t, proj[t]);
                    kept.push_back(t);
                }
            }
            for (int t : kept) grid.insert(t, proj[t]);
        }
        if (!moved.empty()) {
            if (++created > mesh.size()) throw ComputeError("detect_overlaps did not terminate");
            const int fresh = int(assignment.planes.size());
            assignment.planes.push_back(plane);
            for (int t : moved) assignment.label[t] = fresh;
        }
    }
    return assignment;
}

/// Largest projected-overlap area between any two triangles sharing a plane.
inline double max_plane_overlap(const PlaneAssignment& a, const Mesh& mesh) {
    double worst = 0.0;
    for (std::size_t i = 0; i < mesh.size(); ++i)
        for (std::size_t j = i + 1; j < mesh.size(); ++j) {
            if (a.label[i] != a.label[j]) continue;
            const Plane& p = a.planes[a.label[i]];
            worst = std::max(worst, detail::intersection_area(detail::project_triangle(mesh, i, p),
                                                              detail::project_triangle(mesh, j, p)));
        }
    return worst;
}

// ---------------------------------------------------------------------------
// Resolution and packing

/// Chart side from the most common frame resolution: larger side 480 -> 512,
/// 960 -> 1024, 1920 -> 2048; other sizes snap to the nearest of those
/// (equidistant goes up). Ties in frequency go to the larger resolution.
inline int resolution_policy(const std::vector<Frame>& frames) {
    if (frames.empty()) throw ArgumentError("resolution_policy: no frames");
    std::map<std::pair<int, int>, int> counts;
    for (const Frame& f : frames) ++counts[{f.rgb.width, f.rgb.height}];
    std::pair<int, int> major{};
    int best = -1;
    for (const auto& [res, n] : counts) // ascending, so >= prefers larger
        if (n >= best) {
            best = n;
            major = res;
        }
    const int side = std::max(major.first, major.second);
    constexpr std::array<std::pair<int, int>, 3> table = {{{480, 512}, {960, 1024}, {1920, 2048}}};
    int chosen = table[0].second;
    int dist = std::abs(side - table[0].first);
    for (const auto& [key, s] : table)
        if (std::abs(side - key) <= dist) {
            dist = std::abs(side - key);
            chosen = s;
        }
    return chosen;
}

struct Chart {
    Plane plane;
    int x = 0, y = 0, size = 0; ///< texel rectangle in the atlas
    Vec2 origin = Vec2::Zero(); ///< plane coordinate mapped to the chart's inner corner
    double scale = 1.0;         ///< texels per meter
    int margin = 0;

    /// Continuous atlas texel coordinate of a plane point.
    [[nodiscard]] Vec2 to_texel(const Vec2& plane_xy) const {
        return {x + margin + (plane_xy.x() - origin.x()) * scale, y + margin + (plane_xy.y() - origin.y()) * scale};
    }
    [[nodiscard]] Vec2 to_plane(const Vec2& texel) const {
        return {origin.x() + (texel.x() - x - margin) / scale, origin.y() + (texel.y() - y - margin) / scale};
    }
};

struct TextureAtlas {
    int width = 0, height = 0, side = 0;
    ImageF texels;                 ///< height x width x 3
    TriangleUVs uv;                ///< atlas-normalized
    std::vector<Chart> charts;     ///< indexed by plane label
    std::vector<int> triangle_chart;

    /// Continuous texel coordinates (not centers) of triangle corners.
    [[nodiscard]] std::array<Vec2, 3> texel_corners(std::size_t tri) const {
        return {Vec2(uv[tri][0].x() * width, uv[tri][0].y() * height),
                Vec2(uv[tri][1].x() * width, uv[tri][1].y() * height),
                Vec2(uv[tri][2].x() * width, uv[tri][2].y() * height)};
    }

    /// Area of a triangle's UV footprint in texels^2.
    [[nodiscard]] double texel_area(std::size_t tri) const {
        const auto c = texel_corners(tri);
        return 0.5 * std::abs(detail::signed_area2({c[0], c[1], c[2]}));
    }
};

inline constexpr int kChartMargin = 2;

/// One S x S chart per plane, tiled row-major in ceil(sqrt(|Y|)) columns.
inline TextureAtlas pack_atlas(const PlaneAssignment& assignment, const Mesh& mesh, int side) {
    if (side <= 2 * kChartMargin + 1) throw ArgumentError("pack_atlas: chart side too small");
    const int planes = int(assignment.planes.size());
    const int cols = int(std::ceil(std::sqrt(double(planes)) - 1e-12));
    const int rows = (planes + cols - 1) / cols;
    TextureAtlas atlas;
    atlas.side = side;
    atlas.width = cols * side;
    atlas.height = rows * side;
    atlas.texels = ImageF(atlas.width, atlas.height, 3, 0.5f);
    atlas.triangle_chart = assignment.label;
    atlas.uv.resize(mesh.size());

    for (int l = 0; l < planes; ++l) {
        Chart chart;
        chart.plane = assignment.planes[l];
        chart.x = (l % cols) * side;
        chart.y = (l / cols) * side;
        chart.size = side;
        chart.margin = kChartMargin;
        Vec2 lo(std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity());
        Vec2 hi = -lo;
        for (std::size_t t = 0; t < mesh.size(); ++t) {
            if (assignment.label[t] != l) continue;
            for (int k = 0; k < 3; ++k) {
                const Vec2 p = chart.plane.project(mesh.corner(t, k));
                lo = lo.cwiseMin(p);
                hi = hi.cwiseMax(p);
            }
        }
        if (!std::isfinite(lo.x())) lo = hi = Vec2::Zero();
        const double extent = std::max(hi.x() - lo.x(), hi.y() - lo.y());
        chart.origin = lo;
        chart.scale = extent > 0 ? double(side - 2 * kChartMargin) / extent : 1.0;
        atlas.charts.push_back(chart);
    }
    for (std::size_t t = 0; t < mesh.size(); ++t) {
        const Chart& chart = atlas.charts[assignment.label[t]];
        for (int k = 0; k < 3; ++k) {
            const Vec2 tx = chart.to_texel(chart.plane.project(mesh.corner(t, k)));
            atlas.uv[t][k] = {tx.x() / atlas.width, tx.y() / atlas.height};
        }
    }
    return atlas;
}

/// Calls fn(x, y, bary) for each texel whose center (x+0.5, y+0.5) lies in
/// the triangle with continuous texel-space corners c, using the same
/// fixed-point top-left rule as the view rasterizer.
template <class Fn>
void for_each_texel(const std::array<Vec2, 3>& c, int width, int height, Fn&& fn) {
    using detail::FixedPoint;
    std::array<Vec2, 3> s = c;
    std::array<FixedPoint, 3> f = {detail::to_fixed(s[0]), detail::to_fixed(s[1]), detail::to_fixed(s[2])};
    const std::int64_t area = detail::edge(f[0], f[1], f[2].x, f[2].y);
    if (area == 0) return;
    std::array<int, 3> order = {0, 1, 2};
    if (area < 0) {
        std::swap(s[1], s[2]);
        std::swap(f[1], f[2]);
        std::swap(order[1], order[2]);
    }
    const bool own0 = detail::owns_edge(f[1], f[2]);
    const bool own1 = detail::owns_edge(f[2], f[0]);
    const bool own2 = detail::owns_edge(f[0], f[1]);
    const double minx = std::min({s[0].x(), s[1].x(), s[2].x()}), maxx = std::max({s[0].x(), s[1].x(), s[2].x()});
    const double miny = std::min({s[0].y(), s[1].y(), s[2].y()}), maxy = std::max({s[0].y(), s[1].y(), s[2].y()});
    const int x0 = std::max(0, int(std::floor(minx - 0.5))), x1 = std::min(width - 1, int(std::ceil(maxx - 0.5)));
    const int y0 = std::max(0, int(std::floor(miny - 0.5))), y1 = std::min(height - 1, int(std::ceil(maxy - 0.5)));
    const std::int64_t half = std::int64_t(1) << (detail::kSubpixelBits - 1);
    for (int y = y0; y <= y1; ++y) {
        const std::int64_t py = (std::int64_t(y) << detail::kSubpixelBits) + half;
        for (int x = x0; x <= x1; ++x) {
            const std::int64_t px = (std::int64_t(x) << detail::kSubpixelBits) + half;
            const std::int64_t w0 = detail::edge(f[1], f[2], px, py);
            const std::int64_t w1 = detail::edge(f[2], f[0], px, py);
            const std::int64_t w2 = detail::edge(f[0], f[1], px, py);
            if (!detail::inside_edge(w0, own0) || !detail::inside_edge(w1, own1) || !detail::inside_edge(w2, own2))
                continue;
            const Vec2 p(x + 0.5, y + 0.5);
            double l[3] = {detail::edge(s[1], s[2], p), detail::edge(s[2], s[0], p), detail::edge(s[0], s[1], p)};
            const double sum = l[0] + l[1] + l[2];
            std::array<double, 3> bary{};
            double bsum = 0;
            for (int k = 0; k < 3; ++k) {
                bary[order[k]] = std::max(0.0, l[k] / sum);
                bsum += bary[order[k]];
            }
            for (double& b : bary) b /= bsum;
            fn(x, y, bary);
        }
    }
}

/// Texel -> owning triangle (-1 for gutter / empty texels), plus the texel
/// center's barycentric coordinates in that triangle.
struct TexelOwnership {
    std::vector<int> owner;
    std::vector<std::array<double, 3>> bary;
};

inline TexelOwnership texel_ownership(const TextureAtlas& atlas) {
    TexelOwnership own;
    own.owner.assign(std::size_t(atlas.width) * atlas.height, -1);
    own.bary.assign(own.owner.size(), {0, 0, 0});
    for (std::size_t t = 0; t < atlas.uv.size(); ++t) {
        for_each_texel(atlas.texel_corners(t), atlas.width, atlas.height,
                       [&](int x, int y, const std::array<double, 3>& b) {
                           const std::size_t p = std::size_t(y) * atlas.width + x;
                           if (own.owner[p] < 0) {
                               own.owner[p] = int(t);
                               own.bary[p] = b;
                           }
                       });
    }
    return own;
}

/// Chart index of a texel, from the tiling.
inline int chart_of_texel(const TextureAtlas& atlas, int x, int y) {
    const int cols = atlas.width / atlas.side;
    const int idx = (y / atlas.side) * cols + x / atlas.side;
    return idx < int(atlas.charts.size()) ? idx : -1;
}

/// Grows filled texels by `rings` 8-neighbor rings inside each chart;
/// each new texel takes the mean of its filled neighbors.
inline void dilate_charts(TextureAtlas& atlas, std::vector<std::uint8_t>& filled, int rings = 1) {
    const int w = atlas.width, h = atlas.height;
    for (int r = 0; r < rings; ++r) {
        std::vector<std::uint8_t> next = filled;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const std::size_t p = std::size_t(y) * w + x;
                if (filled[p]) continue;
                const int chart = chart_of_texel(atlas, x, y);
                if (chart < 0) continue;
                double acc[3] = {0, 0, 0};
                int n = 0;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int nx = x + dx, ny = y + dy;
                        if ((dx == 0 && dy == 0) || nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                        const std::size_t q = std::size_t(ny) * w + nx;
                        if (!filled[q] || chart_of_texel(atlas, nx, ny) != chart) continue;
                        for (int c = 0; c < 3; ++c) acc[c] += atlas.texels.data[q * 3 + c];
                        ++n;
                    }
                if (n == 0) continue;
                for (int c = 0; c < 3; ++c) atlas.texels.data[p * 3 + c] = float(acc[c] / n);
                next[p] = 1;
            }
        filled.swap(next);
    }
}

// ---------------------------------------------------------------------------
// Export: PNG texels + JSON sidecar with charts and per-triangle UVs.

inline std::filesystem::path atlas_sidecar(std::filesystem::path png) { return png.replace_extension(".json"); }

inline nlohmann::json atlas_metadata(const TextureAtlas& atlas) {
    nlohmann::json j;
    j["width"] = atlas.width;
    j["height"] = atlas.height;
    j["side"] = atlas.side;
    auto vec = [](const Vec3& v) { return nlohmann::json::array({v.x(), v.y(), v.z()}); };
    j["charts"] = nlohmann::json::array();
    for (const Chart& c : atlas.charts)
        j["charts"].push_back({{"x", c.x},
                               {"y", c.y},
                               {"size", c.size},
                               {"margin", c.margin},
                               {"scale", c.scale},
                               {"origin", {c.origin.x(), c.origin.y()}},
                               {"direction", vec(c.plane.direction)},
                               {"axis_u", vec(c.plane.axis_u)},
                               {"axis_v", vec(c.plane.axis_v)}});
    j["triangle_chart"] = atlas.triangle_chart;
    j["uvs"] = nlohmann::json::array();
    for (const auto& t : atlas.uv)
        j["uvs"].push_back({t[0].x(), t[0].y(), t[1].x(), t[1].y(), t[2].x(), t[2].y()});
    return j;
}

inline void write_atlas(const std::filesystem::path& png, const TextureAtlas& atlas) {
    write_png(png, atlas.texels);
    std::ofstream os(atlas_sidecar(png));
    if (!os) throw IoError("cannot write atlas sidecar for '" + png.string() + "'");
    os << atlas_metadata(atlas).dump() << '\n';
}

inline TextureAtlas read_atlas(const std::filesystem::path& png) {
    TextureAtlas atlas;
    atlas.texels = read_png(png);
    std::ifstream is(atlas_sidecar(png));
    if (!is) throw IoError("missing atlas sidecar '" + atlas_sidecar(png).string() + "'");
    nlohmann::json j;
    try {
        is >> j;
        atlas.width = j.at("width").get<int>();
        atlas.height = j.at("height").get<int>();
        atlas.side = j.at("side").get<int>();
        auto vec = [](const nlohmann::json& a) { return Vec3(a[0].get<double>(), a[1].get<double>(), a[2].get<double>()); };
        for (const auto& jc : j.at("charts")) {
            Chart c;
            c.x = jc.at("x");
            c.y = jc.at("y");
            c.size = jc.at("size");
            c.margin = jc.at("margin");
            c.scale = jc.at("scale");
            c.origin = {jc.at("origin")[0].get<double>(), jc.at("origin")[1].get<double>()};
            c.plane.direction = vec(jc.at("direction"));
            c.plane.axis_u = vec(jc.at("axis_u"));
            c.plane.axis_v = vec(jc.at("axis_v"));
            atlas.charts.push_back(c);
        }
        atlas.triangle_chart = j.at("triangle_chart").get<std::vector<int>>();
        for (const auto& u : j.at("uvs"))
            atlas.uv.push_back({Vec2(u[0].get<double>(), u[1].get<double>()), Vec2(u[2].get<double>(), u[3].get<double>()),
                                Vec2(u[4].get<double>(), u[5].get<double>())});
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed atlas sidecar '" + atlas_sidecar(png).string() + "': " + e.what());
    }
    if (atlas.texels.width != atlas.width || atlas.texels.height != atlas.height)
        throw ValidationError("atlas PNG size does not match its sidecar");
    return atlas;
}

/// Mesh -> planes -> overlap-free planes -> packed atlas.
inline TextureAtlas build_atlas(const Mesh& mesh, int side, const std::vector<Vec3>& directions = axis_directions(),
                                PlaneWeights weights = {}) {
    return pack_atlas(detect_overlaps(assign_planes(mesh, directions, weights), mesh), mesh, side);
}

} // namespace advtex
