#include <gtest/gtest.h>

#include "advtex/fourier_align.hpp"
#include "advtex/synth.hpp"
#include "test_util.hpp"

using namespace advtex;

namespace {

ImageD checker_noise(int w, int h, std::uint64_t seed, int cell = 8, double sigma = 0.05) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, sigma);
    ImageD img(w, h, 1);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) img.at(x, y) = (((x / cell) + (y / cell)) & 1 ? 0.8 : 0.2) + n(rng);
    return img;
}

ImageD add_noise(const ImageD& img, double sigma, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, sigma);
    ImageD out = img;
    for (double& v : out.data) v += n(rng);
    return out;
}

Frame frame_from(const RenderBuffers& r) {
    Frame f;
    f.rgb = r.rgb;
    f.depth = ImageF(r.width, r.height, 1);
    f.intrinsics = fixture::intrinsics(r.width, r.height, 100.0);
    return f;
}

} // namespace

TEST(PhaseCorrelate, IdenticalImages) {
    const ImageD a = checker_noise(64, 48, 1);
    const Offset2D o = phase_correlate(a, a);
    EXPECT_EQ(o.dx, 0.0);
    EXPECT_EQ(o.dy, 0.0);
    EXPECT_GT(o.confidence, 0.99);
}

TEST(PhaseCorrelate, CheckerPlusNoiseShift) {
    const ImageD a = checker_noise(96, 80, 2);
    const ImageD b = circular_shift(a, 5, -3);
    const Offset2D back = phase_correlate(a, b);
    EXPECT_EQ(back.dx, -5.0);
    EXPECT_EQ(back.dy, 3.0);
    const Offset2D fwd = phase_correlate(b, a);
    EXPECT_EQ(fwd.dx, 5.0);
    EXPECT_EQ(fwd.dy, -3.0);
}

TEST(PhaseCorrelate, RandomShiftsRecoveredExactly) {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> shift(-32, 32);
    int exact = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const ImageD a = luma(fixture::textured(128, 128, 100 + trial, 4));
        const int sx = shift(rng), sy = shift(rng);
        const Offset2D o = phase_correlate(a, circular_shift(a, sx, sy));
        exact += o.dx == -sx && o.dy == -sy;
    }
    EXPECT_EQ(exact, 100);
}

TEST(PhaseCorrelate, Antisymmetric) {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        const ImageD a = luma(fixture::textured(64, 64, 200 + trial, 4));
        const ImageD b = add_noise(circular_shift(a, trial % 7 - 3, 5 - trial % 11), 0.02, rng);
        const Offset2D ab = phase_correlate(a, b), ba = phase_correlate(b, a);
        EXPECT_EQ(ab.dx, -ba.dx);
        EXPECT_EQ(ab.dy, -ba.dy);
    }
}

TEST(PhaseCorrelate, ConstantImageHasNoConfidence) {
    const ImageD flat(32, 32, 1, 0.4);
    const Offset2D o = phase_correlate(flat, checker_noise(32, 32, 5));
    EXPECT_EQ(o.dx, 0.0);
    EXPECT_EQ(o.dy, 0.0);
    EXPECT_EQ(o.confidence, 0.0);
}

TEST(PhaseCorrelate, ConfidenceDropsWithNoise) {
    std::mt19937_64 rng(6);
    const std::vector<double> sigmas = {0.0, 0.05, 0.1, 0.2, 0.4};
    std::vector<double> mean(sigmas.size(), 0.0);
    for (int trial = 0; trial < 50; ++trial) {
        const ImageD a = checker_noise(64, 64, 300 + trial);
        for (std::size_t k = 0; k < sigmas.size(); ++k)
            mean[k] += phase_correlate(a, add_noise(a, sigmas[k], rng)).confidence / 50.0;
    }
    for (std::size_t k = 1; k < sigmas.size(); ++k) EXPECT_LE(mean[k], mean[k - 1]) << "sigma " << sigmas[k];
}

TEST(PhaseCorrelate, SubpixelRefinementStaysNearInteger) {
    const ImageD a = checker_noise(64, 64, 7);
    PhaseCorrelationOptions opt;
    opt.subpixel = true;
    const Offset2D o = phase_correlate(a, circular_shift(a, 3, 2), nullptr, opt);
    EXPECT_NEAR(o.dx, -3.0, 0.5);
    EXPECT_NEAR(o.dy, -2.0, 0.5);
}

TEST(PhaseCorrelate, Errors) {
    EXPECT_THROW(phase_correlate(ImageD(8, 8, 1), ImageD(9, 8, 1)), ArgumentError);
    EXPECT_THROW(phase_correlate(ImageD(4, 8, 1), ImageD(4, 8, 1)), ArgumentError);
}

class SyntheticAlignment : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        SynthSpec spec;
        spec.seed = 4;
        syn_ = new SynthScene(make_scene(spec));
    }
    static void TearDownTestSuite() { delete syn_; }
    static RenderBuffers render(int view) {
        const Frame& f = syn_->scene.frames[view];
        return rasterize(syn_->scene.mesh, syn_->gt.uv, syn_->gt.texels, f.pose, f.intrinsics);
    }
    static SynthScene* syn_;
};
SynthScene* SyntheticAlignment::syn_ = nullptr;

TEST_F(SyntheticAlignment, UnshiftedViewsAlignAtZero) {
    for (int v : {1, 2, 3, 7}) {
        const Offset2D o = align_frame(syn_->scene.frames[v], render(v));
        EXPECT_EQ(o.dx, 0.0) << "view " << v;
        EXPECT_EQ(o.dy, 0.0) << "view " << v;
    }
}

TEST_F(SyntheticAlignment, InjectedShiftIsCorrected) {
    const RenderBuffers r = render(3);
    Frame gt = syn_->scene.frames[3];
    gt.rgb = circular_shift(gt.rgb, 4, 2);
    const Offset2D o = align_frame(gt, r);
    EXPECT_EQ(o.dx, -4.0);
    EXPECT_EQ(o.dy, -2.0);
}

TEST_F(SyntheticAlignment, AlignedDifferenceNeverExceedsUnaligned) {
    Scene s = syn_->scene;
    const auto shifts = inject_misalignment(s, 3, 11);
    for (std::size_t v = 0; v < s.frames.size(); ++v) {
        const RenderBuffers r = render(int(v));
        const Offset2D o = align_frame(s.frames[v], r);
        EXPECT_EQ(o.dx, -shifts[v].dx) << "view " << v;
        EXPECT_EQ(o.dy, -shifts[v].dy) << "view " << v;
        std::vector<std::uint8_t> valid;
        const ImageF aligned = translate(s.frames[v].rgb, o.dx, o.dy, &valid);
        for (std::size_t p = 0; p < valid.size(); ++p) valid[p] = valid[p] && r.mask[p];
        EXPECT_LE(sum_abs_diff(aligned, r.rgb, valid), sum_abs_diff(s.frames[v].rgb, r.rgb, valid)) << "view " << v;
    }
}

TEST_F(SyntheticAlignment, LowCoverageIsUnusable) {
    RenderBuffers r = render(2);
    std::fill(r.mask.begin(), r.mask.end(), 0);
    for (std::size_t p = 0; p < r.mask.size() / 25; ++p) r.mask[p] = 1; // 4%
    const Offset2D o = align_frame(syn_->scene.frames[2], r);
    EXPECT_EQ(o.dx, 0.0);
    EXPECT_EQ(o.confidence, 0.0);
}

TEST(Patchwise, GlobalShiftSeenByEveryPatch) {
    RenderBuffers r(128, 96);
    r.rgb = fixture::textured(128, 96, 21, 4);
    std::fill(r.mask.begin(), r.mask.end(), 1);
    Frame gt = frame_from(r);
    gt.rgb = circular_shift(r.rgb, 2, -1);
    const PatchOffsets p = patchwise_align(gt, r, 32);
    EXPECT_EQ(p.cols, 4);
    EXPECT_EQ(p.rows, 3);
    for (const auto& c : p.cells) {
        EXPECT_EQ(c.dx, -2.0);
        EXPECT_EQ(c.dy, 1.0);
    }
}

TEST(Patchwise, TexturelessCellHasNoConfidence) {
    RenderBuffers r(64, 64);
    r.rgb = fixture::textured(64, 64, 22, 4);
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x)
            for (int c = 0; c < 3; ++c) r.rgb.at(x, y, c) = 0.5f;
    std::fill(r.mask.begin(), r.mask.end(), 1);
    const Frame gt = frame_from(r);
    const PatchOffsets p = patchwise_align(gt, r, 32);
    EXPECT_NEAR(p.cell(0, 0).confidence, 0.0, 1e-12);
    EXPECT_GT(p.cell(1, 1).confidence, 0.5);
}

TEST(Patchwise, Errors) {
    RenderBuffers r(64, 64);
    const Frame gt = frame_from(r);
    EXPECT_THROW(patchwise_align(gt, r, 7), ArgumentError);
    EXPECT_THROW(patchwise_align(gt, r, 65), ArgumentError);
}

TEST(Translate, IntegerShiftMatchesCircularInside) {
    const ImageF img = fixture::textured(20, 16, 30);
    std::vector<std::uint8_t> valid;
    const ImageF t = translate(img, 3.0, -2.0, &valid);
    const ImageF c = circular_shift(img, 3, -2);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 20; ++x) {
            const bool inside = x - 3 >= 0 && y + 2 <= 15;
            EXPECT_EQ(bool(valid[std::size_t(y) * 20 + x]), inside);
            if (inside) {
                for (int k = 0; k < 3; ++k) EXPECT_EQ(t.at(x, y, k), c.at(x, y, k));
            }
        }
}
