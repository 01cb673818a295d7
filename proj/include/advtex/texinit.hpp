#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include <nlohmann/json.hpp>

#include "advtex/atlas.hpp"
#include "advtex/mrf.hpp"
#include "advtex/parallel.hpp"
#include "advtex/raster.hpp"
#include "advtex/scene.hpp"

namespace advtex {

struct CueWeights {
    double visibility = 1.0; ///< omega_1
    double angle = 1.0;      ///< omega_2
    double resolution = 1.0; ///< omega_3
};

/// Unary cues for every (triangle, train frame) pair.
struct CueTable {
    int triangles = 0;
    std::vector<int> frames; ///< column -> position in Scene::frames
    std::vector<double> c1, c2, c3, psi; ///< triangles x frames, row-major
    CueWeights weights;

    [[nodiscard]] int columns() const { return int(frames.size()); }
    [[nodiscard]] std::size_t at(int tri, int col) const { return std::size_t(tri) * frames.size() + col; }

    void resize(int tris, std::vector<int> cols) {
        triangles = tris;
        frames = std::move(cols);
        const std::size_t n = std::size_t(tris) * frames.size();
        c1.assign(n, 0.0);
        c2.assign(n, 0.0);
        c3.assign(n, 0.0);
        psi.assign(n, 0.0);
    }

    /// psi = w1 c1 + w2 c2 + w3 c3, forced to 0 where c1 == 0.
    void combine() {
        for (std::size_t k = 0; k < psi.size(); ++k)
            psi[k] = c1[k] > 0.0 ? weights.visibility * c1[k] + weights.angle * c2[k] + weights.resolution * c3[k] : 0.0;
    }
};

/// Per-triangle source frame (position in Scene::frames) or kNoLabel.
struct LabelAssignment {
    std::vector<int> frame;
    bool operator==(const LabelAssignment&) const = default;
};

/// c1: depth-checked visible fraction; c2: squared cosine between the normal
/// and the direction back to the camera; c3: projected pixel area over UV
/// texel area, capped at 1.
inline CueTable compute_cues(const Scene& scene, const TextureAtlas& atlas, CueWeights weights = {},
                             DepthTolerance tol = {}, int threads = 1) {
    const Mesh& mesh = scene.mesh;
    CueTable cues;
    cues.weights = weights;
    cues.resize(int(mesh.size()), scene.split.train);
    parallel_for(cues.frames.size(), threads, [&](std::size_t col) {
        const Frame& frame = scene.frames[cues.frames[col]];
        const auto vis = visibility(mesh, frame.pose, frame.intrinsics, &frame.depth, tol);
        for (std::size_t t = 0; t < mesh.size(); ++t) {
            const std::size_t k = cues.at(int(t), int(col));
            cues.c1[k] = vis[t];
            const Vec3 view = (mesh.centroid(t) - frame.pose.center()).normalized();
            const double facing = std::max(0.0, -mesh.normals[t].dot(view));
            cues.c2[k] = facing * facing;
            const double texels = atlas.texel_area(t);
            const double pixels = projected_area(mesh, t, frame.pose, frame.intrinsics);
            cues.c3[k] = texels > 0.0 ? std::min(1.0, pixels / texels) : 0.0;
        }
    });
    cues.combine();
    return cues;
}

inline PottsProblem cue_problem(const CueTable& cues, const Adjacency& adjacency, double omega4) {
    PottsProblem p;
    p.nodes = cues.triangles;
    p.labels = cues.columns();
    p.unary = cues.psi;
    p.allowed.resize(cues.psi.size());
    for (std::size_t k = 0; k < cues.psi.size(); ++k) p.allowed[k] = cues.psi[k] > 0.0;
    p.edges = adjacency;
    p.weight = omega4;
    return p;
}

inline LabelAssignment to_frames(const CueTable& cues, const std::vector<int>& columns) {
    LabelAssignment out;
    out.frame.resize(columns.size());
    for (std::size_t i = 0; i < columns.size(); ++i)
        out.frame[i] = columns[i] == kNoLabel ? kNoLabel : cues.frames[columns[i]];
    return out;
}

/// Independent per-triangle argmax of psi; lowest frame wins ties.
inline LabelAssignment solve_unary(const CueTable& cues) {
    return to_frames(cues, unary_argmax(cue_problem(cues, {}, 0.0)));
}

struct PairwiseSolution {
    LabelAssignment assignment;
    std::vector<double> objective_trace;
    int sweeps = 0;
};

/// Unary cues plus omega4 * [t_i == t_j] over the adjacency, by ICM started
/// from the unary solution.
inline PairwiseSolution solve_pairwise(const CueTable& cues, const Adjacency& adjacency, double omega4) {
    if (!(omega4 >= 0.0)) throw ArgumentError("omega4 must be >= 0");
    const PottsProblem problem = cue_problem(cues, adjacency, omega4);
    IcmResult res = icm(problem, unary_argmax(problem));
    return {to_frames(cues, res.labels), std::move(res.objective_trace), res.sweeps};
}

struct BakeOptions {
    int diffusion_passes = 64;
    int gutter = 1;
    DepthTolerance tolerance;
};

namespace detail {

/// Samples frame `f` at the projection of `x`; false when the point falls
/// outside the frame, behind the camera or disagrees with measured depth.
inline bool sample_frame(const Frame& f, const Vec3& x, const DepthTolerance& tol, float* out) {
    const Projection pr = project(x, f.pose, f.intrinsics);
    if (pr.behind) return false;
    const double u = pr.pixel.x(), v = pr.pixel.y();
    if (u < -0.5 || v < -0.5 || u > f.rgb.width - 0.5 || v > f.rgb.height - 0.5) return false;
    const int px = std::clamp(int(std::lround(u)), 0, f.rgb.width - 1);
    const int py = std::clamp(int(std::lround(v)), 0, f.rgb.height - 1);
    const double measured = f.depth.at(px, py);
    if (measured > 0.0 && std::abs(pr.depth - measured) > tol.at(measured)) return false;
    sample_bilinear(f.rgb, u, v, out);
    return true;
}

} // namespace detail

/// Fills the atlas from each triangle's chosen frame. With `cues`, a texel
/// the chosen frame cannot see falls back to the triangle's other frames in
/// decreasing psi. Texels still unsampled are filled by 4-neighbor diffusion
/// from sampled texels of the same chart, then mid-gray. `sampled`, when
/// given, receives the mask of directly sampled texels.
inline TextureAtlas bake(const Scene& scene, TextureAtlas atlas, const LabelAssignment& t, BakeOptions opt = {},
                         const CueTable* cues = nullptr, std::vector<std::uint8_t>* sampled = nullptr) {
    const Mesh& mesh = scene.mesh;
    if (t.frame.size() != mesh.size()) throw ArgumentError("bake: assignment size does not match mesh");
    if (cues && cues->triangles != int(mesh.size())) throw ArgumentError("bake: cue table does not match mesh");
    const int w = atlas.width, h = atlas.height;
    std::fill(atlas.texels.data.begin(), atlas.texels.data.end(), 0.5f);
    const TexelOwnership own = texel_ownership(atlas);
    std::vector<std::uint8_t> filled(own.owner.size(), 0);

    // Fallback order per triangle: remaining frames with psi > 0, best first.
    std::vector<std::vector<int>> fallback(mesh.size());
    if (cues)
        for (int tri = 0; tri < int(mesh.size()); ++tri) {
            std::vector<int> cols;
            for (int c = 0; c < cues->columns(); ++c)
                if (cues->psi[cues->at(tri, c)] > 0.0 && cues->frames[c] != t.frame[tri]) cols.push_back(c);
            std::stable_sort(cols.begin(), cols.end(),
                             [&](int a, int b) { return cues->psi[cues->at(tri, a)] > cues->psi[cues->at(tri, b)]; });
            for (int c : cols) fallback[tri].push_back(cues->frames[c]);
        }

    for (std::size_t p = 0; p < own.owner.size(); ++p) {
        const int tri = own.owner[p];
        if (tri < 0 || t.frame[tri] == kNoLabel) continue;
        const auto& b = own.bary[p];
        const Vec3 x = b[0] * mesh.corner(tri, 0) + b[1] * mesh.corner(tri, 1) + b[2] * mesh.corner(tri, 2);
        float* out = &atlas.texels.data[p * 3];
        if (detail::sample_frame(scene.frames[t.frame[tri]], x, opt.tolerance, out)) {
            filled[p] = 1;
            continue;
        }
        for (int f : fallback[tri])
            if (detail::sample_frame(scene.frames[f], x, opt.tolerance, out)) {
                filled[p] = 1;
                break;
            }
    }
    if (sampled) *sampled = filled;

    // Diffuse into owned-but-unsampled texels.
    for (int pass = 0; pass < opt.diffusion_passes; ++pass) {
        std::vector<std::uint8_t> next = filled;
        bool progress = false;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const std::size_t p = std::size_t(y) * w + x;
                if (filled[p] || own.owner[p] < 0) continue;
                const int chart = chart_of_texel(atlas, x, y);
                double acc[3] = {0, 0, 0};
                int n = 0;
                constexpr int dx[4] = {1, -1, 0, 0}, dy[4] = {0, 0, 1, -1};
                for (int k = 0; k < 4; ++k) {
                    const int nx = x + dx[k], ny = y + dy[k];
                    if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                    const std::size_t q = std::size_t(ny) * w + nx;
                    if (!filled[q] || chart_of_texel(atlas, nx, ny) != chart) continue;
                    for (int c = 0; c < 3; ++c) acc[c] += atlas.texels.data[q * 3 + c];
                    ++n;
                }
                if (n == 0) continue;
                for (int c = 0; c < 3; ++c) atlas.texels.data[p * 3 + c] = float(acc[c] / n);
                next[p] = 1;
                progress = true;
            }
        filled.swap(next);
        if (!progress) break;
    }
    for (std::size_t p = 0; p < own.owner.size(); ++p)
        if (own.owner[p] >= 0) filled[p] = 1; // leftovers stay mid-gray
    dilate_charts(atlas, filled, opt.gutter);
    return atlas;
}

inline void write_cues_csv(const std::filesystem::path& path, const CueTable& cues) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write '" + path.string() + "'");
    os << "triangle,frame,c1,c2,c3,psi\n";
    os.precision(9);
    for (int t = 0; t < cues.triangles; ++t)
        for (int c = 0; c < cues.columns(); ++c) {
            const auto k = cues.at(t, c);
            os << t << ',' << cues.frames[c] << ',' << cues.c1[k] << ',' << cues.c2[k] << ',' << cues.c3[k] << ','
               << cues.psi[k] << '\n';
        }
}

/// {"assignment": [frame index per triangle, -1 = none]} using capture indices.
inline void write_assignment_json(const std::filesystem::path& path, const Scene& scene, const LabelAssignment& a) {
    nlohmann::json j;
    std::vector<int> idx;
    for (int f : a.frame) idx.push_back(f == kNoLabel ? -1 : scene.frames[f].index);
    j["assignment"] = idx;
    std::ofstream os(path);
    if (!os) throw IoError("cannot write '" + path.string() + "'");
    os << j.dump() << '\n';
}

} // namespace advtex
