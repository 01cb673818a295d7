#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <mutex>
#include <vector>

#include <fftw3.h>

#include "advtex/error.hpp"
#include "advtex/image.hpp"
#include "advtex/raster.hpp"
#include "advtex/scene.hpp"

namespace advtex {

/// Translation, in pixels, to apply to the second image so it matches the
/// first. Centered wrap-around convention: |dx| <= W/2, |dy| <= H/2.
struct Offset2D {
    double dx = 0.0;
    double dy = 0.0;
    double confidence = 0.0;
};

struct PhaseCorrelationOptions {
    bool hann = true;
    bool subpixel = false;
};

/// Minimum rendered coverage for a view to be aligned.
inline constexpr double kMinAlignCoverage = 0.05;

namespace detail {

// FFTW's planner is not re-entrant; execution is.
inline std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

struct FftwFree {
    void operator()(void* p) const { fftw_free(p); }
};

class Fft2d {
public:
    Fft2d(int h, int w) : h_(h), w_(w), wc_(w / 2 + 1) {
        real_.reset(static_cast<double*>(fftw_malloc(sizeof(double) * std::size_t(h) * w)));
        spec_.reset(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * std::size_t(h) * wc_)));
        std::lock_guard lock(fftw_planner_mutex());
        forward_ = fftw_plan_dft_r2c_2d(h, w, real_.get(), spec_.get(), FFTW_ESTIMATE);
        inverse_ = fftw_plan_dft_c2r_2d(h, w, spec_.get(), real_.get(), FFTW_ESTIMATE);
    }
    ~Fft2d() {
        std::lock_guard lock(fftw_planner_mutex());
        fftw_destroy_plan(forward_);
        fftw_destroy_plan(inverse_);
    }
    Fft2d(const Fft2d&) = delete;
    Fft2d& operator=(const Fft2d&) = delete;

    std::vector<std::complex<double>> forward(const std::vector<double>& in) {
        std::copy(in.begin(), in.end(), real_.get());
        fftw_execute(forward_);
        std::vector<std::complex<double>> out(std::size_t(h_) * wc_);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = {spec_.get()[i][0], spec_.get()[i][1]};
        return out;
    }

    /// Unnormalized inverse.
    std::vector<double> inverse(const std::vector<std::complex<double>>& in) {
        for (std::size_t i = 0; i < in.size(); ++i) {
            spec_.get()[i][0] = in[i].real();
            spec_.get()[i][1] = in[i].imag();
        }
        fftw_execute(inverse_);
        return {real_.get(), real_.get() + std::size_t(h_) * w_};
    }

private:
    int h_, w_, wc_;
    std::unique_ptr<double, FftwFree> real_;
    std::unique_ptr<fftw_complex, FftwFree> spec_;
    fftw_plan forward_{};
    fftw_plan inverse_{};
};

/// Mean-fill masked pixels, remove the mean, apply the window. Returns the
/// prepared signal and whether it carries any energy.
inline std::pair<std::vector<double>, bool> prepare(const ImageD& img, const std::uint8_t* mask, bool hann) {
    const int w = img.width, h = img.height;
    const std::size_t n = img.pixel_count();
    double sum = 0.0;
    std::size_t valid = 0;
    for (std::size_t p = 0; p < n; ++p)
        if (!mask || mask[p]) {
            sum += img.data[p];
            ++valid;
        }
    const double mean = valid ? sum / double(valid) : 0.0;
    std::vector<double> out(n);
    bool energy = false;
    for (int y = 0; y < h; ++y) {
        const double wy = hann ? 0.5 - 0.5 * std::cos(2.0 * M_PI * (y + 0.5) / h) : 1.0;
        for (int x = 0; x < w; ++x) {
            const std::size_t p = std::size_t(y) * w + x;
            const double v = (!mask || mask[p]) ? img.data[p] - mean : 0.0;
            const double wx = hann ? 0.5 - 0.5 * std::cos(2.0 * M_PI * (x + 0.5) / w) : 1.0;
            out[p] = v * wx * wy;
            if (std::abs(out[p]) > 1e-12) energy = true;
        }
    }
    return {std::move(out), energy};
}

inline double parabolic_peak(double left, double center, double right) {
    const double denom = left - 2.0 * center + right;
    if (std::abs(denom) < 1e-15) return 0.0;
    return std::clamp(0.5 * (left - right) / denom, -0.5, 0.5);
}

} // namespace detail

/// Normalized cross-power spectrum peak. `mask` (optional, same size) marks
/// valid pixels in both images.
inline Offset2D phase_correlate(const ImageD& a, const ImageD& b, const std::vector<std::uint8_t>* mask = nullptr,
                                PhaseCorrelationOptions opt = {}) {
    if (a.width != b.width || a.height != b.height) throw ArgumentError("phase_correlate: image sizes differ");
    if (a.width < 8 || a.height < 8) throw ArgumentError("phase_correlate: images must be at least 8x8");
    if (mask && mask->size() != a.pixel_count()) throw ArgumentError("phase_correlate: mask size mismatch");
    const int w = a.width, h = a.height;
    const std::uint8_t* m = mask ? mask->data() : nullptr;
    auto [pa, ea] = detail::prepare(a, m, opt.hann);
    auto [pb, eb] = detail::prepare(b, m, opt.hann);
    if (!ea || !eb) return {};

    detail::Fft2d fft(h, w);
    const auto fa = fft.forward(pa);
    const auto fb = fft.forward(pb);
    std::vector<std::complex<double>> cross(fa.size());
    double max_mag = 0.0;
    for (std::size_t i = 0; i < fa.size(); ++i) {
        cross[i] = fa[i] * std::conj(fb[i]);
        max_mag = std::max(max_mag, std::abs(cross[i]));
    }
    if (max_mag == 0.0) return {};
    for (auto& c : cross) {
        const double mag = std::abs(c);
        c = mag > 1e-12 * max_mag ? c / mag : std::complex<double>(0.0, 0.0);
    }
    std::vector<double> r = fft.inverse(cross);
    const double n = double(w) * h;
    double energy = 0.0;
    std::size_t peak = 0;
    for (std::size_t i = 0; i < r.size(); ++i) {
        r[i] /= n;
        energy += r[i] * r[i];
        if (r[i] > r[peak]) peak = i;
    }
    const int px = int(peak % w), py = int(peak / w);
    Offset2D out;
    out.dx = px > w / 2 ? px - w : px;
    out.dy = py > h / 2 ? py - h : py;
    out.confidence = energy > 0.0 ? std::clamp(r[peak] / std::sqrt(energy), 0.0, 1.0) : 0.0;
    if (opt.subpixel) {
        auto at = [&](int x, int y) { return r[std::size_t((y + h) % h) * w + (x + w) % w]; };
        out.dx += detail::parabolic_peak(at(px - 1, py), r[peak], at(px + 1, py));
        out.dy += detail::parabolic_peak(at(px, py - 1), r[peak], at(px, py + 1));
    }
    return out;
}

/// Aligns a captured frame to a render made at its pose. The offset moves
/// the frame onto the render.
inline Offset2D align_frame(const Frame& gt, const RenderBuffers& render, PhaseCorrelationOptions opt = {}) {
    if (gt.rgb.width != render.width || gt.rgb.height != render.height)
        throw ArgumentError("align_frame: render size does not match frame");
    if (double(render.covered()) < kMinAlignCoverage * double(render.mask.size())) return {};
    return phase_correlate(luma(render.rgb), luma(gt.rgb), &render.mask, opt);
}

/// Non-overlapping square cells, each aligned independently.
struct PatchOffsets {
    int patch = 0, cols = 0, rows = 0;
    std::vector<Offset2D> cells;

    [[nodiscard]] const Offset2D& cell(int cx, int cy) const { return cells[std::size_t(cy) * cols + cx]; }
    /// Offset governing pixel (x, y); pixels past the last full cell use the nearest one.
    [[nodiscard]] const Offset2D& at(int x, int y) const {
        return cell(std::min(x / patch, cols - 1), std::min(y / patch, rows - 1));
    }
};

inline PatchOffsets patchwise_align(const Frame& gt, const RenderBuffers& render, int patch,
                                    PhaseCorrelationOptions opt = {}) {
    if (patch < 8) throw ArgumentError("patchwise_align: patch side must be >= 8");
    const int w = render.width, h = render.height;
    if (gt.rgb.width != w || gt.rgb.height != h) throw ArgumentError("patchwise_align: size mismatch");
    PatchOffsets out;
    out.patch = patch;
    out.cols = w / patch;
    out.rows = h / patch;
    if (out.cols < 1 || out.rows < 1) throw ArgumentError("patchwise_align: patch larger than the image");
    const ImageD la = luma(render.rgb), lb = luma(gt.rgb);
    for (int cy = 0; cy < out.rows; ++cy)
        for (int cx = 0; cx < out.cols; ++cx) {
            ImageD pa(patch, patch, 1), pb(patch, patch, 1);
            std::vector<std::uint8_t> pm(std::size_t(patch) * patch);
            std::size_t covered = 0;
            for (int y = 0; y < patch; ++y)
                for (int x = 0; x < patch; ++x) {
                    const std::size_t src = std::size_t(cy * patch + y) * w + cx * patch + x;
                    const std::size_t dst = std::size_t(y) * patch + x;
                    pa.data[dst] = la.data[src];
                    pb.data[dst] = lb.data[src];
                    pm[dst] = render.mask[src];
                    covered += pm[dst];
                }
            Offset2D o;
            if (double(covered) >= kMinAlignCoverage * double(pm.size())) o = phase_correlate(pa, pb, &pm, opt);
            out.cells.push_back(o);
        }
    return out;
}

/// out(p) = img(p - offset) with bilinear lookup; `valid` marks pixels whose
/// source lies inside the image.
template <class T>
Image<T> translate(const Image<T>& img, double dx, double dy, std::vector<std::uint8_t>* valid = nullptr) {
    Image<T> out(img.width, img.height, img.channels);
    if (valid) valid->assign(img.pixel_count(), 0);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const double sx = x - dx, sy = y - dy;
            const bool inside = sx >= 0 && sy >= 0 && sx <= img.width - 1 && sy <= img.height - 1;
            if (valid) (*valid)[std::size_t(y) * img.width + x] = inside;
            sample_bilinear(img, sx, sy, &out.at(x, y));
        }
    return out;
}

/// Sum of absolute RGB differences over pixels where `mask` is set.
inline double sum_abs_diff(const ImageF& a, const ImageF& b, const std::vector<std::uint8_t>& mask) {
    double s = 0.0;
    for (std::size_t p = 0; p < mask.size(); ++p)
        if (mask[p])
            for (int c = 0; c < a.channels; ++c) s += std::abs(double(a.data[p * a.channels + c]) - b.data[p * b.channels + c]);
    return s;
}

/// |a - b| per pixel (RGB), zero outside `mask`.
inline ImageF abs_diff_image(const ImageF& a, const ImageF& b, const std::vector<std::uint8_t>& mask) {
    ImageF out(a.width, a.height, 3);
    for (std::size_t p = 0; p < mask.size(); ++p)
        if (mask[p])
            for (int c = 0; c < 3; ++c) out.data[p * 3 + c] = std::abs(a.data[p * 3 + c] - b.data[p * 3 + c]);
    return out;
}

} // namespace advtex
