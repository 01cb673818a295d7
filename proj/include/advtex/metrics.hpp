#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <vector>

#include "advtex/atlas.hpp"
#include "advtex/error.hpp"
#include "advtex/image.hpp"
#include "advtex/parallel.hpp"
#include "advtex/raster.hpp"
#include "advtex/scene.hpp"

namespace advtex {

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;

/// Normalized 1-D Gaussian taps of the SSIM window.
inline std::vector<double> ssim_taps() {
    std::vector<double> g(kSsimWindow);
    const int r = kSsimWindow / 2;
    double sum = 0.0;
    for (int i = 0; i < kSsimWindow; ++i) {
        g[i] = std::exp(-double((i - r) * (i - r)) / (2.0 * kSsimSigma * kSsimSigma));
        sum += g[i];
    }
    for (double& v : g) v /= sum;
    return g;
}

namespace detail {

/// VALID separable filter of a single-channel plane.
inline std::vector<double> filter_valid(const std::vector<double>& in, int w, int h, const std::vector<double>& g) {
    const int k = int(g.size()), wo = w - k + 1, ho = h - k + 1;
    std::vector<double> tmp(std::size_t(h) * wo), out(std::size_t(ho) * wo);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < wo; ++x) {
            double s = 0.0;
            for (int i = 0; i < k; ++i) s += g[i] * in[std::size_t(y) * w + x + i];
            tmp[std::size_t(y) * wo + x] = s;
        }
    for (int y = 0; y < ho; ++y)
        for (int x = 0; x < wo; ++x) {
            double s = 0.0;
            for (int i = 0; i < k; ++i) s += g[i] * tmp[std::size_t(y + i) * wo + x];
            out[std::size_t(y) * wo + x] = s;
        }
    return out;
}

template <class T>
std::vector<double> luma_plane(const Image<T>& img) {
    if (img.channels != 1) return luma(img).data;
    return {img.data.begin(), img.data.end()};
}

} // namespace detail

/// Mean SSIM on luma over every full 11x11 window; windows touching a pixel
/// outside `mask` are skipped. Returns 0 when no window qualifies.
template <class T>
double ssim(const Image<T>& a, const Image<T>& b, const std::vector<std::uint8_t>* mask = nullptr) {
    if (a.width != b.width || a.height != b.height || a.channels != b.channels)
        throw ArgumentError("ssim: image shapes differ");
    if (mask && mask->size() != a.pixel_count()) throw ArgumentError("ssim: mask size mismatch");
    const int w = a.width, h = a.height;
    if (w < kSsimWindow || h < kSsimWindow) return 0.0;
    const std::vector<double> x = detail::luma_plane(a), y = detail::luma_plane(b);
    std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
    }
    const auto g = ssim_taps();
    const auto mx = detail::filter_valid(x, w, h, g), my = detail::filter_valid(y, w, h, g);
    const auto sxx = detail::filter_valid(xx, w, h, g), syy = detail::filter_valid(yy, w, h, g);
    const auto sxy = detail::filter_valid(xy, w, h, g);

    // Invalid-pixel counts per window via a summed-area table.
    const int wo = w - kSsimWindow + 1, ho = h - kSsimWindow + 1;
    std::vector<int> sat;
    if (mask) {
        sat.assign(std::size_t(w + 1) * (h + 1), 0);
        for (int yy2 = 0; yy2 < h; ++yy2)
            for (int xx2 = 0; xx2 < w; ++xx2)
                sat[std::size_t(yy2 + 1) * (w + 1) + xx2 + 1] = int(!(*mask)[std::size_t(yy2) * w + xx2]) +
                                                                 sat[std::size_t(yy2) * (w + 1) + xx2 + 1] +
                                                                 sat[std::size_t(yy2 + 1) * (w + 1) + xx2] -
                                                                 sat[std::size_t(yy2) * (w + 1) + xx2];
    }
    const double c1 = (kSsimK1) * (kSsimK1), c2 = (kSsimK2) * (kSsimK2);
    double sum = 0.0;
    std::size_t n = 0;
    for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
            if (mask) {
                const auto at = [&](int xx2, int yy2) { return sat[std::size_t(yy2) * (w + 1) + xx2]; };
                const int bad = at(ox + kSsimWindow, oy + kSsimWindow) - at(ox, oy + kSsimWindow) -
                                at(ox + kSsimWindow, oy) + at(ox, oy);
                if (bad) continue;
            }
            const std::size_t i = std::size_t(oy) * wo + ox;
            const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i], cxy = sxy[i] - mx[i] * my[i];
            sum += ((2 * mx[i] * my[i] + c1) * (2 * cxy + c2)) / ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
            ++n;
        }
    return n ? sum / double(n) : 0.0;
}

/// Mean 3x3 Sobel gradient magnitude of luma on a 0..255 scale, borders
/// wrapping around. With a mask, only pixels whose full stencil is inside
/// the mask count.
template <class T>
double grad_sharpness(const Image<T>& img, const std::vector<std::uint8_t>* mask = nullptr) {
    const int w = img.width, h = img.height;
    if (w == 0 || h == 0) return 0.0;
    if (mask && mask->size() != img.pixel_count()) throw ArgumentError("grad_sharpness: mask size mismatch");
    std::vector<double> l = detail::luma_plane(img);
    for (double& v : l) v *= 255.0;
    const auto at = [&](int x, int y) { return l[std::size_t((y + h) % h) * w + (x + w) % w]; };
    const auto ok = [&](int x, int y) {
        if (!mask) return true;
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const int sx = x + dx, sy = y + dy;
                if (sx < 0 || sy < 0 || sx >= w || sy >= h || !(*mask)[std::size_t(sy) * w + sx]) return false;
            }
        return true;
    };
    double sum = 0.0;
    std::size_t n = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (!ok(x, y)) continue;
            const double gx = (at(x + 1, y - 1) + 2 * at(x + 1, y) + at(x + 1, y + 1)) -
                              (at(x - 1, y - 1) + 2 * at(x - 1, y) + at(x - 1, y + 1));
            const double gy = (at(x - 1, y + 1) + 2 * at(x, y + 1) + at(x + 1, y + 1)) -
                              (at(x - 1, y - 1) + 2 * at(x, y - 1) + at(x + 1, y - 1));
            sum += std::sqrt(gx * gx + gy * gy);
            ++n;
        }
    return n ? sum / double(n) : 0.0;
}

/// PSNR in dB for values in [0, 1] over masked pixels (all channels).
/// Identical inputs give +inf.
template <class T>
double psnr(const Image<T>& a, const Image<T>& b, const std::vector<std::uint8_t>* mask = nullptr) {
    if (a.width != b.width || a.height != b.height || a.channels != b.channels)
        throw ArgumentError("psnr: image shapes differ");
    double se = 0.0;
    std::size_t n = 0;
    for (std::size_t p = 0; p < a.pixel_count(); ++p) {
        if (mask && !(*mask)[p]) continue;
        for (int c = 0; c < a.channels; ++c) {
            const double d = double(a.data[p * a.channels + c]) - double(b.data[p * b.channels + c]);
            se += d * d;
        }
        n += a.channels;
    }
    if (n == 0) return 0.0;
    if (se == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(double(n) / se);
}

struct ViewMetrics {
    int view_index = 0; ///< capture index; -1 on the mean row
    double ssim = 0.0, grad = 0.0, psnr = 0.0, coverage = 0.0;
};

struct EvalReport {
    std::vector<ViewMetrics> views;
    ViewMetrics mean;
};

/// Renders every eval view from the atlas and scores it against the
/// captured frame over the rendered coverage.
inline EvalReport evaluate(const Scene& scene, const TextureAtlas& atlas, int threads = 1) {
    if (scene.split.eval.empty()) throw ValidationError("evaluate: eval split is empty");
    EvalReport report;
    report.views.resize(scene.split.eval.size());
    parallel_for(scene.split.eval.size(), threads, [&](std::size_t i) {
        const Frame& f = scene.frames[scene.split.eval[i]];
        const RenderBuffers r = rasterize(scene.mesh, atlas.uv, atlas.texels, f.pose, f.intrinsics);
        ViewMetrics& m = report.views[i];
        m.view_index = f.index;
        m.ssim = ssim(r.rgb, f.rgb, &r.mask);
        m.grad = grad_sharpness(r.rgb, &r.mask);
        m.psnr = psnr(r.rgb, f.rgb, &r.mask);
        m.coverage = double(r.covered()) / double(r.mask.size());
    });
    report.mean.view_index = -1;
    for (const auto& m : report.views) {
        report.mean.ssim += m.ssim;
        report.mean.grad += m.grad;
        report.mean.psnr += m.psnr;
        report.mean.coverage += m.coverage;
    }
    const double n = double(report.views.size());
    report.mean.ssim /= n;
    report.mean.grad /= n;
    report.mean.psnr /= n;
    report.mean.coverage /= n;
    return report;
}

inline void write_metrics_csv(std::ostream& os, const EvalReport& report) {
    const auto precision = os.precision(10);
    os << "view_index,ssim,grad,psnr,coverage\n";
    for (const auto& m : report.views)
        os << m.view_index << ',' << m.ssim << ',' << m.grad << ',' << m.psnr << ',' << m.coverage << '\n';
    const auto& m = report.mean;
    os << "MEAN," << m.ssim << ',' << m.grad << ',' << m.psnr << ',' << m.coverage << '\n';
    os.precision(precision);
}

inline void write_metrics_csv(const std::filesystem::path& path, const EvalReport& report) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write '" + path.string() + "'");
    write_metrics_csv(os, report);
}

} // namespace advtex
