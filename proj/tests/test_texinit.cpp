#include <gtest/gtest.h>

#include "advtex/metrics.hpp"
#include "advtex/synth.hpp"
#include "advtex/texinit.hpp"
#include "test_util.hpp"

using namespace advtex;

namespace {

/// One triangle facing the origin with its centroid on the optical axis.
Mesh axis_triangle(double z) {
    Mesh m;
    m.vertices = {{-0.3, -0.2, z}, {0.3, -0.2, z}, {0.0, 0.4, z}};
    m.triangles = {{0, 2, 1}};
    m.finalize();
    return m;
}

Frame frame_at(const CameraPose& pose, const Mesh& mesh, int w = 64, int h = 64, double f = 40.0,
               std::array<float, 3> color = {1.0f, 0.0f, 0.0f}) {
    Frame fr;
    fr.pose = pose;
    fr.intrinsics = fixture::intrinsics(w, h, f);
    const RenderBuffers r = rasterize_geometry(mesh, pose, fr.intrinsics);
    fr.rgb = ImageF(w, h, 3);
    fr.depth = ImageF(w, h, 1);
    for (std::size_t p = 0; p < r.mask.size(); ++p) {
        for (int c = 0; c < 3; ++c) fr.rgb.data[p * 3 + c] = color[c];
        if (r.mask[p]) fr.depth.data[p] = float(r.depth[p]);
    }
    return fr;
}

CueTable random_cues(int tris, int frames, std::mt19937_64& rng, double zero_rate = 0.2) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    CueTable c;
    std::vector<int> cols(frames);
    std::iota(cols.begin(), cols.end(), 0);
    c.resize(tris, cols);
    for (std::size_t k = 0; k < c.psi.size(); ++k) {
        if (u(rng) < zero_rate) continue;
        c.c1[k] = u(rng);
        c.c2[k] = u(rng);
        c.c3[k] = u(rng);
    }
    c.combine();
    return c;
}

double pairwise_objective(const CueTable& c, const Adjacency& adj, double w, const std::vector<int>& t) {
    double total = 0.0;
    for (int i = 0; i < c.triangles; ++i)
        if (t[i] != kNoLabel) total += c.psi[c.at(i, t[i])];
    for (auto [a, b] : adj)
        if (t[a] != kNoLabel && t[a] == t[b]) total += w;
    return total;
}

/// Exhaustive optimum over labelings that only use frames with psi > 0.
double exhaustive_pairwise(const CueTable& c, const Adjacency& adj, double w) {
    std::vector<std::vector<int>> options(c.triangles);
    for (int i = 0; i < c.triangles; ++i) {
        for (int f = 0; f < c.columns(); ++f)
            if (c.psi[c.at(i, f)] > 0.0) options[i].push_back(f);
        if (options[i].empty()) options[i].push_back(kNoLabel);
    }
    std::vector<std::size_t> idx(c.triangles, 0);
    std::vector<int> t(c.triangles);
    double best = -1.0;
    while (true) {
        for (int i = 0; i < c.triangles; ++i) t[i] = options[i][idx[i]];
        best = std::max(best, pairwise_objective(c, adj, w, t));
        int k = 0;
        while (k < c.triangles && ++idx[k] == options[k].size()) idx[k++] = 0;
        if (k == c.triangles) break;
    }
    return best;
}

Adjacency chain(int n) {
    Adjacency a;
    for (int i = 0; i + 1 < n; ++i) a.emplace_back(i, i + 1);
    return a;
}

} // namespace

TEST(Cues, HeadOnTriangle) {
    Scene s;
    s.mesh = axis_triangle(2.0);
    s.frames = {frame_at(CameraPose(), s.mesh)};
    s.split.train = {0};
    const TextureAtlas atlas = build_atlas(s.mesh, 512);
    const CueTable c = compute_cues(s, atlas);
    EXPECT_NEAR(c.c1[0], 1.0, 1e-9);
    EXPECT_NEAR(c.c2[0], 1.0, 1e-12);
    EXPECT_GT(c.psi[0], 2.0);
}

TEST(Cues, BackFacingGatesPsi) {
    Scene s;
    s.mesh = axis_triangle(2.0);
    const CameraPose behind(Vec3(0, M_PI, 0), Vec3(0, 0, 4));
    s.frames = {frame_at(behind, s.mesh)};
    s.split.train = {0};
    const CueTable c = compute_cues(s, build_atlas(s.mesh, 512));
    EXPECT_EQ(c.c1[0], 0.0);
    EXPECT_EQ(c.psi[0], 0.0);
    EXPECT_EQ(solve_unary(c).frame[0], kNoLabel);
}

TEST(Cues, NearerFrameSamplesMoreDensely) {
    Scene s;
    s.mesh = axis_triangle(0.0);
    const double f = 40.0;
    const CameraPose near_pose(Vec3::Zero(), Vec3(0, 0, -2)), far_pose(Vec3::Zero(), Vec3(0, 0, -4));
    s.frames = {frame_at(near_pose, s.mesh, 64, 64, f), frame_at(far_pose, s.mesh, 64, 64, f)};
    s.split.train = {0, 1};
    const TextureAtlas atlas = build_atlas(s.mesh, 1024);
    const CueTable c = compute_cues(s, atlas);
    // oracle: a fronto-parallel triangle of area A at depth Z covers A f^2 / Z^2 pixels
    const double area = s.mesh.area(0);
    const double texels = area * std::pow(atlas.charts[0].scale, 2);
    for (auto [col, z] : {std::pair{0, 2.0}, std::pair{1, 4.0}})
        EXPECT_NEAR(c.c3[c.at(0, col)], std::min(1.0, area * f * f / (z * z) / texels), 1e-9);
    EXPECT_GT(c.c3[c.at(0, 0)], c.c3[c.at(0, 1)]);
}

TEST(SolveUnary, OneFrameSeesEverything) {
    CueTable c;
    c.resize(5, {0, 1, 2});
    for (int t = 0; t < 5; ++t) c.c1[c.at(t, 1)] = 0.5;
    c.combine();
    EXPECT_EQ(solve_unary(c).frame, std::vector<int>(5, 1));
}

TEST(SolveUnary, UnseenTriangleIsNone) {
    CueTable c;
    c.resize(2, {0, 1});
    c.c1[c.at(0, 0)] = 1.0;
    c.combine();
    EXPECT_EQ(solve_unary(c).frame, (std::vector<int>{0, kNoLabel}));
}

TEST(SolveUnary, MatchesExhaustivePerTriangleMax) {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 1000; ++trial) {
        const CueTable c = random_cues(8, 3, rng);
        const LabelAssignment a = solve_unary(c);
        for (int t = 0; t < 8; ++t) {
            int best = kNoLabel;
            for (int f = 0; f < 3; ++f)
                if (c.psi[c.at(t, f)] > 0.0 && (best == kNoLabel || c.psi[c.at(t, f)] > c.psi[c.at(t, best)])) best = f;
            ASSERT_EQ(a.frame[t], best) << "trial " << trial << " triangle " << t;
        }
    }
}

TEST(SolvePairwise, ZeroWeightIsUnary) {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 50; ++trial) {
        const CueTable c = random_cues(8, 3, rng);
        EXPECT_EQ(solve_pairwise(c, chain(8), 0.0).assignment, solve_unary(c));
    }
}

TEST(SolvePairwise, AdjacencyBonusOutweighsSmallMargin) {
    CueTable c;
    c.resize(2, {0, 1});
    c.psi = {0.6, 0.5, 0.5, 0.6};
    c.c1 = c.psi;
    const Adjacency adj{{0, 1}};
    const auto sol = solve_pairwise(c, adj, 1.0);
    EXPECT_EQ(sol.assignment.frame[0], sol.assignment.frame[1]);
    EXPECT_NEAR(pairwise_objective(c, adj, 1.0, sol.assignment.frame), exhaustive_pairwise(c, adj, 1.0), 1e-12);
}

TEST(SolvePairwise, ReachesSingleMoveLocalOptimum) {
    std::mt19937_64 rng(9);
    std::uniform_int_distribution<int> pick(0, 7);
    for (int trial = 0; trial < 200; ++trial) {
        const CueTable c = random_cues(8, 3, rng);
        Adjacency adj = chain(8);
        for (int e = 0; e < 3; ++e) {
            const int a = pick(rng), b = pick(rng);
            if (a != b) adj.emplace_back(std::min(a, b), std::max(a, b));
        }
        std::sort(adj.begin(), adj.end());
        adj.erase(std::unique(adj.begin(), adj.end()), adj.end());
        const auto sol = solve_pairwise(c, adj, 1.0);
        for (std::size_t k = 1; k < sol.objective_trace.size(); ++k)
            EXPECT_GE(sol.objective_trace[k], sol.objective_trace[k - 1]);
        const std::vector<int>& t = sol.assignment.frame;
        const double obj = pairwise_objective(c, adj, 1.0, t);
        EXPECT_LE(obj, exhaustive_pairwise(c, adj, 1.0) + 1e-12);
        for (int i = 0; i < 8; ++i)
            for (int f = 0; f < 3; ++f) {
                if (c.psi[c.at(i, f)] <= 0.0) continue;
                std::vector<int> moved = t;
                moved[i] = f;
                EXPECT_LE(pairwise_objective(c, adj, 1.0, moved), obj + 1e-12) << "trial " << trial << " tri " << i;
            }
    }
}

TEST(SolvePairwise, ExactWhenUnaryDominates) {
    std::mt19937_64 rng(10);
    for (int trial = 0; trial < 200; ++trial) {
        CueTable c = random_cues(8, 3, rng, 0.0);
        const double w = 0.01; // far below the typical unary gap
        const auto sol = solve_pairwise(c, chain(8), w);
        EXPECT_NEAR(pairwise_objective(c, chain(8), w, sol.assignment.frame), exhaustive_pairwise(c, chain(8), w), 1e-12)
            << "trial " << trial;
    }
}

TEST(SolvePairwise, NegativeWeightRejected) {
    CueTable c;
    c.resize(1, {0});
    EXPECT_THROW(solve_pairwise(c, {}, -1.0), ArgumentError);
}

TEST(Bake, FrontoParallelRedQuad) {
    Scene s;
    s.mesh = fixture::facing_quad(2.0, 0.5);
    s.frames = {frame_at(CameraPose(), s.mesh)};
    s.split.train = {0};
    const TextureAtlas atlas = build_atlas(s.mesh, 64);
    const TextureAtlas baked = bake(s, atlas, LabelAssignment{{0, 0}});
    const TexelOwnership own = texel_ownership(baked);
    int owned = 0;
    for (std::size_t p = 0; p < own.owner.size(); ++p) {
        if (own.owner[p] < 0) continue;
        ++owned;
        EXPECT_NEAR(baked.texels.data[p * 3 + 0], 1.0f, 1.0 / 255);
        EXPECT_NEAR(baked.texels.data[p * 3 + 1], 0.0f, 1.0 / 255);
        EXPECT_NEAR(baked.texels.data[p * 3 + 2], 0.0f, 1.0 / 255);
    }
    EXPECT_GT(owned, 1000);
    EXPECT_EQ(bake(s, atlas, LabelAssignment{{0, 0}}).texels, baked.texels);
}

TEST(Bake, UnseenTriangleDiffusesFromNeighbors) {
    Scene s;
    s.mesh = fixture::facing_quad(2.0, 0.5);
    s.frames = {frame_at(CameraPose(), s.mesh)};
    s.split.train = {0};
    const TextureAtlas atlas = build_atlas(s.mesh, 64);
    const TextureAtlas baked = bake(s, atlas, LabelAssignment{{0, kNoLabel}});
    const TexelOwnership own = texel_ownership(baked);
    int checked = 0;
    for (std::size_t p = 0; p < own.owner.size(); ++p) {
        if (own.owner[p] != 1) continue;
        ++checked;
        EXPECT_NEAR(baked.texels.data[p * 3 + 0], 1.0f, 1e-6);
        EXPECT_NEAR(baked.texels.data[p * 3 + 1], 0.0f, 1e-6);
    }
    EXPECT_GT(checked, 500);
}

TEST(Bake, NothingSeenStaysMidGray) {
    Scene s;
    s.mesh = fixture::facing_quad(2.0, 0.5);
    s.frames = {frame_at(CameraPose(), s.mesh)};
    s.split.train = {0};
    const TextureAtlas baked = bake(s, build_atlas(s.mesh, 32), LabelAssignment{{kNoLabel, kNoLabel}});
    for (float v : baked.texels.data) EXPECT_EQ(v, 0.5f);
}

TEST(Bake, SyntheticRoomMatchesGroundTruth) {
    SynthSpec spec;
    spec.seed = 1;
    const SynthScene syn = make_scene(spec);
    const Scene s = split_views(syn.scene, 0.1);
    TextureAtlas atlas = build_atlas(s.mesh, resolution_policy(s.frames));
    const CueTable cues = compute_cues(s, atlas);
    const LabelAssignment t = solve_unary(cues);
    std::vector<std::uint8_t> sampled;
    const TextureAtlas baked = bake(s, atlas, t, {}, &cues, &sampled);
    const TexelOwnership own = texel_ownership(baked);
    std::vector<std::uint8_t> covered(own.owner.size());
    for (std::size_t p = 0; p < covered.size(); ++p) covered[p] = own.owner[p] >= 0;
    const double db = psnr(baked.texels, syn.gt.texels, &covered);
    RecordProperty("texel_psnr", std::to_string(db));
    EXPECT_GE(db, 30.0);
    EXPECT_GE(psnr(baked.texels, syn.gt.texels, &sampled), db);
    for (std::size_t i = 0; i < t.frame.size(); ++i) {
        ASSERT_NE(t.frame[i], kNoLabel) << "triangle " << i;
        EXPECT_GT(cues.c1[cues.at(int(i), int(std::find(cues.frames.begin(), cues.frames.end(), t.frame[i]) -
                                                  cues.frames.begin()))],
                  0.0);
    }
}
