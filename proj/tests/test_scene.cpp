#include <gtest/gtest.h>

#include <fstream>

#include "advtex/scene.hpp"
#include "test_util.hpp"

using namespace advtex;

namespace {

Scene scene_with_frames(int n, int w = 8, int h = 6) {
    Scene s;
    s.mesh = fixture::facing_quad(2.0, 1.0);
    for (int i = 0; i < n; ++i) {
        Frame f;
        f.index = i;
        f.rgb = ImageF(w, h, 3, 0.25f);
        f.depth = ImageF(w, h, 1, 2.0f);
        f.intrinsics = fixture::intrinsics(w, h, 10.0);
        f.pose = CameraPose(Vec3(0.1 * i, -0.2, 0.3 + i), Vec3(1.0 + i, -2.0, 0.5));
        s.frames.push_back(f);
    }
    return s;
}

} // namespace

TEST(Mesh, NormalsAreUnit) {
    const Mesh m = fixture::facing_quad(1.0, 0.5);
    for (const auto& n : m.normals) EXPECT_NEAR(n.norm(), 1.0, 1e-9);
    EXPECT_NEAR(m.normals[0].z(), -1.0, 1e-12);
}

TEST(Mesh, RejectsBadIndexAndDegenerateTriangle) {
    Mesh m;
    m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    m.triangles = {{0, 1, 3}};
    EXPECT_THROW(m.finalize(), ValidationError);
    m.triangles = {{0, 1, 1}};
    EXPECT_THROW(m.finalize(), ValidationError);
}

TEST(CameraPose, RotationIsOrthonormal) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> ang(-3.0, 3.0);
    for (int i = 0; i < 100; ++i) {
        const CameraPose p(Vec3(ang(rng), ang(rng) / 2, ang(rng)), Vec3::Zero());
        EXPECT_LT((p.rotation * p.rotation.transpose() - Mat3::Identity()).norm(), 1e-9);
        EXPECT_NEAR(p.rotation.determinant(), 1.0, 1e-9);
    }
}

TEST(CameraPose, EulerRoundTripThroughMatrix) {
    const CameraPose p(Vec3(0.3, -0.7, 1.2), Vec3(1, 2, 3));
    const CameraPose q = CameraPose::from_matrix(p.matrix());
    EXPECT_LT((q.euler - p.euler).norm(), 1e-12);
    EXPECT_LT((q.rotation - p.rotation).norm(), 1e-12);
}

TEST(CameraPose, IntrinsicXyzOrder) {
    // Rx * Ry * Rz applied to +X: Rz(90) takes X to Y, then Rx(90) takes Y to Z.
    const CameraPose p(Vec3(M_PI / 2, 0, M_PI / 2), Vec3::Zero());
    EXPECT_LT((p.rotation * Vec3::UnitX() - Vec3::UnitZ()).norm(), 1e-12);
}

TEST(CameraPose, LookAtPointsOpticalAxisAtTarget) {
    const CameraPose p = CameraPose::look_at(Vec3(1, 1, 1), Vec3(3, 1, 1));
    const Vec3 c = p.world_to_camera(Vec3(3, 1, 1));
    EXPECT_NEAR(c.x(), 0.0, 1e-12);
    EXPECT_NEAR(c.y(), 0.0, 1e-12);
    EXPECT_NEAR(c.z(), 2.0, 1e-12);
    // world up maps to image up (-Y)
    EXPECT_LT(p.world_to_camera(Vec3(3, 1, 2)).y(), 0.0);
}

TEST(LoadScene, RoundTripKeepsFramesInCaptureOrder) {
    Scene s = scene_with_frames(20);
    const auto dir = fixture::scratch_dir("scene_roundtrip");
    save_scene(s, dir);
    const Scene r = load_scene(dir / "manifest.json");
    ASSERT_EQ(r.frames.size(), 20u);
    for (int i = 0; i < 20; ++i) {
        EXPECT_EQ(r.frames[i].index, i);
        EXPECT_LT((r.frames[i].pose.rotation - s.frames[i].pose.rotation).norm(), 1e-12);
        EXPECT_EQ(r.frames[i].depth, s.frames[i].depth);
    }
    EXPECT_EQ(r.mesh.triangles, s.mesh.triangles);
}

TEST(LoadScene, DepthSizeMismatchNamesFrame) {
    Scene s = scene_with_frames(3);
    s.frames[2].depth = ImageF(4, 4, 1, 1.0f);
    const auto dir = fixture::scratch_dir("scene_depth_mismatch");
    save_scene(s, dir);
    try {
        load_scene(dir / "manifest.json");
        FAIL() << "expected a validation error";
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("frame 2"), std::string::npos) << e.what();
    }
}

TEST(LoadScene, TriangleIndexOutOfRange) {
    Scene s = scene_with_frames(2);
    const auto dir = fixture::scratch_dir("scene_bad_index");
    save_scene(s, dir);
    std::ofstream(dir / "mesh.obj", std::ios::app) << "f 1 2 9\n";
    EXPECT_THROW(load_scene(dir / "manifest.json"), ValidationError);
}

TEST(LoadScene, MissingManifestIsIoError) {
    try {
        load_scene("/nonexistent/advtex/manifest.json");
        FAIL();
    } catch (const IoError& e) {
        EXPECT_NE(std::string(e.what()).find("/nonexistent/advtex/manifest.json"), std::string::npos);
    }
}

TEST(SplitViews, TwentyFrames) {
    const Scene s = split_views(scene_with_frames(20), 0.1);
    EXPECT_EQ(s.split.eval, (std::vector<int>{0, 10}));
    EXPECT_EQ(s.split.train.size(), 18u);
    s.validate_split();
}

TEST(SplitViews, TenFrames) {
    const Scene s = split_views(scene_with_frames(10), 0.1);
    EXPECT_EQ(s.split.eval, (std::vector<int>{0}));
    EXPECT_EQ(s.split.train.size(), 9u);
}

TEST(SplitViews, LargeCaptureCounts) {
    Scene s;
    s.frames.resize(2807);
    s = split_views(std::move(s), 0.1);
    EXPECT_EQ(s.split.eval.size(), 281u);
    EXPECT_EQ(s.split.train.size(), 2526u);
}

TEST(SplitViews, Errors) {
    EXPECT_THROW(split_views(scene_with_frames(1), 0.1), ArgumentError);
    EXPECT_THROW(split_views(scene_with_frames(4), 0.0), ArgumentError);
    EXPECT_THROW(split_views(scene_with_frames(4), 1.0), ArgumentError);
}

TEST(Subsample, Strides) {
    const Scene s = split_views(scene_with_frames(20), 0.1);
    EXPECT_EQ(subsample_train_views(s, 1).split.train, s.split.train);
    EXPECT_EQ(subsample_train_views(s, 3).split.train.size(), 6u);
    const Scene k5 = subsample_train_views(s, 5);
    EXPECT_EQ(k5.split.train, (std::vector<int>{s.split.train[0], s.split.train[5], s.split.train[10], s.split.train[15]}));
    EXPECT_EQ(k5.split.eval, s.split.eval);
    EXPECT_THROW(subsample_train_views(s, 0), ArgumentError);
}

TEST(PerturbPoses, ZeroFractionIsIdentity) {
    const Scene s = split_views(scene_with_frames(10), 0.1);
    const Scene p = perturb_poses(s, 0.0, 5);
    for (std::size_t i = 0; i < s.frames.size(); ++i) {
        EXPECT_EQ(p.frames[i].pose.euler, s.frames[i].pose.euler);
        EXPECT_EQ(p.frames[i].pose.translation, s.frames[i].pose.translation);
    }
}

TEST(PerturbPoses, BoundedDeterministicTrainOnly) {
    const Scene s = split_views(scene_with_frames(10), 0.1);
    const Scene a = perturb_poses(s, 0.05, 9), b = perturb_poses(s, 0.05, 9);
    for (std::size_t i = 0; i < s.frames.size(); ++i) {
        const auto& o = s.frames[i].pose;
        const auto& p = a.frames[i].pose;
        EXPECT_EQ(p.euler, b.frames[i].pose.euler);
        EXPECT_EQ(p.translation, b.frames[i].pose.translation);
        for (int k = 0; k < 3; ++k) {
            EXPECT_LE(std::abs(p.euler[k] - o.euler[k]), 0.05 * std::abs(o.euler[k]));
            EXPECT_LE(std::abs(p.translation[k] - o.translation[k]), 0.05 * std::abs(o.translation[k]));
        }
        EXPECT_LT((p.rotation * p.rotation.transpose() - Mat3::Identity()).norm(), 1e-9);
    }
    // frame 0 is eval
    EXPECT_EQ(a.frames[0].pose.translation, s.frames[0].pose.translation);
    EXPECT_NE(a.frames[1].pose.euler.x(), s.frames[1].pose.euler.x());
    // a zero component has a zero noise bound
    Scene z = scene_with_frames(3);
    z.frames[1].pose = CameraPose(Vec3(0.0, 1.0, 0.0), Vec3(0, 0, 1));
    z = perturb_poses(split_views(z, 0.5), 0.05, 1);
    EXPECT_EQ(z.frames[1].pose.euler.x(), 0.0);
    EXPECT_GE(z.frames[1].pose.euler.y(), 0.95);
    EXPECT_LE(z.frames[1].pose.euler.y(), 1.05);
}

TEST(Rng, UniformConversionIsTopFiftyThreeBits) {
    Rng a(42);
    std::mt19937_64 b(42);
    for (int i = 0; i < 10; ++i) EXPECT_EQ(a.uniform(), double(b() >> 11) / 9007199254740992.0);
}
