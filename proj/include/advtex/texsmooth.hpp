#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "advtex/atlas.hpp"
#include "advtex/diff.hpp"
#include "advtex/discriminator.hpp"
#include "advtex/error.hpp"
#include "advtex/fourier_align.hpp"
#include "advtex/parallel.hpp"
#include "advtex/raster.hpp"
#include "advtex/scene.hpp"

namespace advtex {

enum class AlignMode { Off, Global, Patchwise };

inline std::string to_string(AlignMode m) {
    switch (m) {
    case AlignMode::Off: return "off";
    case AlignMode::Global: return "global";
    case AlignMode::Patchwise: return "patchwise";
    }
    return "off";
}

inline AlignMode parse_align_mode(const std::string& s) {
    if (s == "off") return AlignMode::Off;
    if (s == "global") return AlignMode::Global;
    if (s == "patchwise") return AlignMode::Patchwise;
    throw ArgumentError("unknown alignment mode '" + s + "' (expected off, global or patchwise)");
}

struct OptimConfig {
    double lambda0 = 10.0;
    double lambda_decay = 0.8;
    int decay_every = 960;
    double lr_texture = 1e-3;
    double lr_discriminator = 1e-4;
    int iterations = 4000;
    int crop_side = 256;
    std::uint64_t seed = 0;
    double gan_weight = 1.0;
    int refresh_every = 960; ///< alignment refresh period, steps
    int patch = 0;           ///< patchwise cell side; 0 = quarter of the smaller frame side
    bool subpixel = false;   ///< parabolic subpixel peak in alignment

    void validate() const {
        if (!(lambda0 > 0 && lambda_decay > 0 && lr_texture > 0 && lr_discriminator > 0))
            throw ArgumentError("optimizer weights and learning rates must be positive");
        if (decay_every < 1 || refresh_every < 1) throw ArgumentError("decay and refresh periods must be >= 1");
        if (iterations < 1) throw ArgumentError("iterations must be >= 1");
        if (crop_side < Discriminator<double>::min_input_side())
            throw ArgumentError("crop side must be >= " + std::to_string(Discriminator<double>::min_input_side()));
        if (!(gan_weight >= 0)) throw ArgumentError("gan weight must be >= 0");
        if (patch != 0 && patch < 8) throw ArgumentError("patch side must be 0 (auto) or >= 8");
    }
};

/// lambda0 * decay^floor(step / decay_every)
inline double lambda_at(int step, const OptimConfig& cfg = {}) {
    if (step < 0) throw ArgumentError("step must be >= 0");
    return cfg.lambda0 * std::pow(cfg.lambda_decay, double(step / cfg.decay_every));
}

struct TrainStepRecord {
    int step = 0;
    double lambda = 0.0;
    double l1 = 0.0;
    double d_loss = 0.0;
    double g_loss = 0.0;
    int view = -1; ///< capture index
    double dx = 0.0, dy = 0.0;
    bool skipped = false;
    bool operator==(const TrainStepRecord&) const = default;
};

inline void write_train_log(const std::filesystem::path& path, const std::vector<TrainStepRecord>& log) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write '" + path.string() + "'");
    os.precision(10);
    os << "step,lambda,l1,d_loss,g_loss,view,dx,dy,skipped\n";
    for (const auto& r : log)
        os << r.step << ',' << r.lambda << ',' << r.l1 << ',' << r.d_loss << ',' << r.g_loss << ',' << r.view << ','
           << r.dx << ',' << r.dy << ',' << int(r.skipped) << '\n';
}

/// Alternating discriminator / texture optimization over train views.
template <class T>
class TexSmooth {
public:
    TexSmooth(const Scene& scene, const TextureAtlas& init, OptimConfig cfg, AlignMode mode, int threads = 1)
        : scene_(scene), atlas_(init), cfg_(cfg), mode_(mode), threads_(threads),
          discriminator_(cfg.seed ^ 0x64697363ULL), rng_(cfg.seed),
          tex_adam_(init.texels.data.size(), AdamConfig{cfg.lr_texture}, T(0), T(1)) {
        cfg_.validate();
        if (scene.split.train.empty()) throw ValidationError("texsmooth: train split is empty");
        const auto& tex = init.texels;
        texture_ = DiffTensor<T>::parameter({tex.height, tex.width, 3}, std::vector<T>(tex.data.begin(), tex.data.end()));
        texel_stamp_.assign(std::size_t(tex.width) * tex.height, 0);
        views_.resize(scene.split.train.size());
        parallel_for(views_.size(), threads_, [&](std::size_t i) {
            const Frame& f = scene.frames[scene.split.train[i]];
            views_[i].geometry = rasterize_geometry(scene.mesh, f.pose, f.intrinsics);
        });
        d_state_.resize(discriminator_.parameters().size());
    }

    /// Re-estimates per-view offsets against renders of the current texture.
    void refresh_offsets() {
        if (mode_ == AlignMode::Off) return;
        const ImageF tex = texture_image();
        parallel_for(views_.size(), threads_, [&](std::size_t i) {
            View& v = views_[i];
            const Frame& f = scene_.frames[scene_.split.train[i]];
            RenderBuffers r = v.geometry;
            shade(r, atlas_.uv, tex);
            const PhaseCorrelationOptions opt{true, cfg_.subpixel};
            if (mode_ == AlignMode::Global) {
                v.global = align_frame(f, r, opt);
            } else {
                const int patch = cfg_.patch ? cfg_.patch : std::max(8, std::min(f.rgb.width, f.rgb.height) / 4);
                v.patches = patchwise_align(f, r, patch, opt);
            }
        });
    }

    TrainStepRecord step(int s) {
        if (s % cfg_.refresh_every == 0) refresh_offsets();
        const std::size_t vi = std::size_t(s) % views_.size();
        View& view = views_[vi];
        const Frame& frame = scene_.frames[scene_.split.train[vi]];
        TrainStepRecord rec;
        rec.step = s;
        rec.lambda = lambda_at(s, cfg_);
        rec.view = frame.index;

        const int w = frame.rgb.width, h = frame.rgb.height;
        const int side = std::min({cfg_.crop_side, w, h});
        const int x0 = rng_.uniform_int(0, w - side), y0 = rng_.uniform_int(0, h - side);
        const Offset2D center = offset_at(view, x0 + side / 2, y0 + side / 2);
        rec.dx = center.dx;
        rec.dy = center.dy;

        std::vector<std::uint32_t> pix;
        std::vector<Vec2> uv;
        std::vector<T> target;
        for (int cy = 0; cy < side; ++cy)
            for (int cx = 0; cx < side; ++cx) {
                const int x = x0 + cx, y = y0 + cy;
                const std::size_t p = std::size_t(y) * w + x;
                if (!view.geometry.mask[p]) continue;
                const Offset2D o = offset_at(view, x, y);
                const double sx = x - o.dx, sy = y - o.dy;
                if (sx < 0 || sy < 0 || sx > w - 1 || sy > h - 1) continue;
                float c[3];
                sample_bilinear(frame.rgb, sx, sy, c);
                pix.push_back(std::uint32_t(cy * side + cx));
                uv.push_back(pixel_uv(view.geometry, p, atlas_.uv));
                target.insert(target.end(), {T(c[0]), T(c[1]), T(c[2])});
            }
        if (pix.empty() || (cfg_.gan_weight > 0 && side < Discriminator<T>::min_input_side())) {
            rec.skipped = true;
            return rec;
        }
        collect_touched(uv);

        const int n = int(pix.size());
        const auto colors = sample_texture_diff(texture_, std::span<const Vec2>(uv));
        const auto gt = DiffTensor<T>::constant({n, 3}, std::move(target));
        const auto l1 = l1_loss(colors, gt);
        rec.l1 = double(l1.item());
        DiffTensor<T> total = scale(l1, T(rec.lambda));

        if (cfg_.gan_weight > 0) {
            const std::span<const std::uint32_t> idx(pix);
            const auto render_img = pixels_to_image(colors, idx, side, side);
            const auto gt_img = pixels_to_image(gt, idx, side, side);
            const auto real = concat_channels(gt_img, gt_img);

            // Discriminator update on a detached render.
            const auto d_loss = gan_d_loss(discriminator_(real), discriminator_(concat_channels(detach(render_img), gt_img)));
            rec.d_loss = double(d_loss.item());
            discriminator_.zero_grad();
            backward(d_loss);
            auto params = discriminator_.parameters();
            const AdamConfig d_cfg{cfg_.lr_discriminator};
            for (std::size_t k = 0; k < params.size(); ++k)
                adam_step(std::span<T>(params[k].value()), std::span<const T>(params[k].grad()), d_state_[k], d_cfg);

            // Generator term; discriminator weights stay frozen until the
            // texture backward pass is done.
            for (auto& p : params) p.set_requires_grad(false);
            const auto g_loss = gan_g_loss(discriminator_(concat_channels(render_img, gt_img)));
            rec.g_loss = double(g_loss.item());
            total = add(total, scale(g_loss, T(cfg_.gan_weight)));
        }

        backward(total);
        for (auto& p : discriminator_.parameters()) p.set_requires_grad(true);
        auto& grad = texture_.grad();
        tex_adam_.step(std::span<T>(texture_.value()), std::span<const T>(grad), std::span<const std::uint32_t>(touched_));
        for (std::uint32_t i : touched_) grad[i] = T(0);
        return rec;
    }

    std::vector<TrainStepRecord> run() {
        std::vector<TrainStepRecord> log;
        log.reserve(cfg_.iterations);
        for (int s = 0; s < cfg_.iterations; ++s) log.push_back(step(s));
        return log;
    }

    /// Current texels (pending optimizer steps applied).
    [[nodiscard]] ImageF texture_image() {
        tex_adam_.flush(std::span<T>(texture_.value()));
        ImageF img(atlas_.width, atlas_.height, 3);
        const auto& v = texture_.value();
        for (std::size_t i = 0; i < v.size(); ++i) img.data[i] = float(v[i]);
        return img;
    }

    [[nodiscard]] TextureAtlas atlas() {
        TextureAtlas out = atlas_;
        out.texels = texture_image();
        return out;
    }

    [[nodiscard]] const Discriminator<T>& discriminator() const { return discriminator_; }

    /// Offset applied to the ground truth at pixel (x, y) of train view `i`.
    [[nodiscard]] Offset2D offset(std::size_t i, int x, int y) const { return offset_at(views_[i], x, y); }

private:
    struct View {
        RenderBuffers geometry;
        Offset2D global;
        PatchOffsets patches;
    };

    [[nodiscard]] Offset2D offset_at(const View& v, int x, int y) const {
        switch (mode_) {
        case AlignMode::Global: return v.global;
        case AlignMode::Patchwise: return v.patches.cells.empty() ? Offset2D{} : v.patches.at(x, y);
        case AlignMode::Off: break;
        }
        return {};
    }

    /// Texel-channel entries read by bilinear lookups at `uv`, each once.
    void collect_touched(const std::vector<Vec2>& uv) {
        const int w = atlas_.width, h = atlas_.height;
        ++stamp_;
        touched_.clear();
        for (const Vec2& u : uv) {
            const Vec2 t = uv_to_texel(u, w, h);
            const int x0 = std::clamp(int(std::floor(t.x())), 0, w - 1), y0 = std::clamp(int(std::floor(t.y())), 0, h - 1);
            for (int dy = 0; dy <= 1; ++dy)
                for (int dx = 0; dx <= 1; ++dx) {
                    const std::size_t p = std::size_t(std::min(y0 + dy, h - 1)) * w + std::min(x0 + dx, w - 1);
                    if (texel_stamp_[p] == stamp_) continue;
                    texel_stamp_[p] = stamp_;
                    for (int c = 0; c < 3; ++c) touched_.push_back(std::uint32_t(p * 3 + c));
                }
        }
    }

    const Scene& scene_;
    TextureAtlas atlas_;
    OptimConfig cfg_;
    AlignMode mode_;
    int threads_;
    Discriminator<T> discriminator_;
    Rng rng_;
    DiffTensor<T> texture_;
    LazyAdam<T> tex_adam_;
    std::vector<AdamState<T>> d_state_;
    std::vector<View> views_;
    std::vector<std::uint32_t> texel_stamp_;
    std::uint32_t stamp_ = 0;
    std::vector<std::uint32_t> touched_;
};

struct TexSmoothResult {
    TextureAtlas atlas;
    std::vector<TrainStepRecord> log;
};

template <class T = float>
TexSmoothResult run_texsmooth(const Scene& scene, const TextureAtlas& init, const OptimConfig& cfg, AlignMode mode,
                              int threads = 1, const std::filesystem::path& checkpoint = {}) {
    TexSmooth<T> opt(scene, init, cfg, mode, threads);
    TexSmoothResult out;
    out.log = opt.run();
    out.atlas = opt.atlas();
    if (!checkpoint.empty()) opt.discriminator().save(checkpoint);
    return out;
}

} // namespace advtex
