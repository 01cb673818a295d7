#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include <Eigen/Core>

#include "advtex/error.hpp"
#include "advtex/raster.hpp"

namespace advtex {

using Shape = std::vector<int>;

inline std::size_t shape_size(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, [](std::size_t a, int b) { return a * std::size_t(b); });
}

inline std::string shape_string(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
    return out + "]";
}

namespace detail {

inline std::uint64_t next_node_id() {
    static std::atomic<std::uint64_t> counter{0};
    return ++counter;
}

template <class T>
struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad; ///< allocated lazily, same size as value
    bool requires_grad = false;
    std::uint64_t id = next_node_id();
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(const std::vector<T>&)> backward; ///< pushes this node's grad into parents

    std::vector<T>& ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), T(0));
        return grad;
    }
};

} // namespace detail

/// Dense n-d array with a gradient accumulator, recording the ops that
/// produced it. Copies share the underlying node.
template <class T>
class DiffTensor {
public:
    using Node = detail::Node<T>;

    DiffTensor() = default;
    explicit DiffTensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

    static DiffTensor constant(Shape shape, std::vector<T> values) { return make(std::move(shape), std::move(values), false); }
    static DiffTensor parameter(Shape shape, std::vector<T> values) { return make(std::move(shape), std::move(values), true); }
    static DiffTensor zeros(Shape shape, bool requires_grad = false) {
        const std::size_t n = shape_size(shape);
        return make(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
    }

    [[nodiscard]] bool defined() const { return bool(node_); }
    [[nodiscard]] const Shape& shape() const { return node_->shape; }
    [[nodiscard]] int dim(std::size_t i) const { return node_->shape[i]; }
    [[nodiscard]] std::size_t size() const { return node_->value.size(); }
    [[nodiscard]] std::vector<T>& value() { return node_->value; }
    [[nodiscard]] const std::vector<T>& value() const { return node_->value; }
    [[nodiscard]] std::vector<T>& grad() { return node_->ensure_grad(); }
    [[nodiscard]] bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool on) { node_->requires_grad = on; }
    [[nodiscard]] std::uint64_t id() const { return node_->id; }
    [[nodiscard]] T item() const { return node_->value.at(0); }
    void zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), T(0)); }
    [[nodiscard]] const std::shared_ptr<Node>& node() const { return node_; }

private:
    static DiffTensor make(Shape shape, std::vector<T> values, bool requires_grad) {
        if (shape_size(shape) != values.size())
            throw ArgumentError("tensor shape " + shape_string(shape) + " does not match " + std::to_string(values.size()) +
                                " values");
        auto n = std::make_shared<Node>();
        n->shape = std::move(shape);
        n->value = std::move(values);
        n->requires_grad = requires_grad;
        return DiffTensor(std::move(n));
    }

    std::shared_ptr<Node> node_;
};

namespace detail {

template <class T>
void check_finite(const std::vector<T>& v, const char* op) {
    for (const T& x : v)
        if (!std::isfinite(x)) throw ComputeError(std::string("non-finite value produced by ") + op);
}

/// Builds an op result; the graph edge is only kept when some input needs a gradient.
template <class T>
DiffTensor<T> make_result(const char* op, Shape shape, std::vector<T> values,
                          std::vector<std::shared_ptr<Node<T>>> parents,
                          std::function<void(const std::vector<T>&)> backward) {
    check_finite(values, op);
    auto n = std::make_shared<Node<T>>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    n->requires_grad = std::any_of(parents.begin(), parents.end(), [](const auto& p) { return p->requires_grad; });
    if (n->requires_grad) {
        n->parents = std::move(parents);
        n->backward = std::move(backward);
    }
    return DiffTensor<T>(std::move(n));
}

} // namespace detail

/// Reverse-mode sweep from a scalar. Each reachable node is visited once,
/// in reverse topological order. Returns the number of nodes visited.
template <class T>
std::size_t backward(DiffTensor<T> loss) {
    if (loss.size() != 1) throw ArgumentError("backward expects a scalar");
    using Node = detail::Node<T>;
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    // Iterative post-order DFS.
    std::vector<std::pair<Node*, std::size_t>> stack;
    if (loss.requires_grad()) {
        stack.emplace_back(loss.node().get(), 0);
        seen.insert(loss.node().get());
    }
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* parent = node->parents[next++].get();
            if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    for (Node* n : order) n->ensure_grad();
    loss.grad()[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->backward) (*it)->backward((*it)->grad);
    return order.size();
}

template <class T>
DiffTensor<T> detach(const DiffTensor<T>& x) {
    return DiffTensor<T>::constant(x.shape(), x.value());
}

// ---------------------------------------------------------------------------
// Elementwise

template <class T>
DiffTensor<T> leaky_relu(const DiffTensor<T>& x, T slope = T(0.2)) {
    std::vector<T> out(x.size());
    const auto& v = x.value();
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] > T(0) ? v[i] : slope * v[i];
    auto xn = x.node();
    return detail::make_result<T>("leaky_relu", x.shape(), std::move(out), {xn}, [xn, slope](const std::vector<T>& g) {
        auto& gx = xn->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += xn->value[i] > T(0) ? g[i] : slope * g[i];
    });
}

template <class T>
DiffTensor<T> sigmoid(const DiffTensor<T>& x) {
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = T(1) / (T(1) + std::exp(-x.value()[i]));
    auto xn = x.node();
    auto y = std::make_shared<std::vector<T>>(out);
    return detail::make_result<T>("sigmoid", x.shape(), std::move(out), {xn}, [xn, y](const std::vector<T>& g) {
        auto& gx = xn->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (*y)[i] * (T(1) - (*y)[i]);
    });
}

template <class T>
DiffTensor<T> scale(const DiffTensor<T>& x, T k) {
    std::vector<T> out(x.value());
    for (T& v : out) v *= k;
    auto xn = x.node();
    return detail::make_result<T>("scale", x.shape(), std::move(out), {xn}, [xn, k](const std::vector<T>& g) {
        auto& gx = xn->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += k * g[i];
    });
}

template <class T>
DiffTensor<T> add(const DiffTensor<T>& a, const DiffTensor<T>& b) {
    if (a.shape() != b.shape()) throw ArgumentError("add: shape mismatch");
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
    auto an = a.node(), bn = b.node();
    return detail::make_result<T>("add", a.shape(), std::move(out), {an, bn}, [an, bn](const std::vector<T>& g) {
        if (an->requires_grad) {
            auto& ga = an->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (bn->requires_grad) {
            auto& gb = bn->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
        }
    });
}

template <class T>
DiffTensor<T> mean(const DiffTensor<T>& x) {
    const T s = std::accumulate(x.value().begin(), x.value().end(), T(0)) / T(x.size());
    auto xn = x.node();
    return detail::make_result<T>("mean", {1}, {s}, {xn}, [xn](const std::vector<T>& g) {
        auto& gx = xn->ensure_grad();
        const T d = g[0] / T(gx.size());
        for (T& v : gx) v += d;
    });
}

/// Concatenates two NCHW tensors along C.
template <class T>
DiffTensor<T> concat_channels(const DiffTensor<T>& a, const DiffTensor<T>& b) {
    if (a.shape().size() != 4 || b.shape().size() != 4 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) ||
        a.dim(3) != b.dim(3))
        throw ArgumentError("concat_channels: incompatible shapes " + shape_string(a.shape()) + " and " +
                            shape_string(b.shape()));
    const int n = a.dim(0), ca = a.dim(1), cb = b.dim(1);
    const std::size_t plane = std::size_t(a.dim(2)) * a.dim(3);
    std::vector<T> out;
    out.reserve(a.size() + b.size());
    for (int i = 0; i < n; ++i) {
        out.insert(out.end(), a.value().begin() + i * ca * plane, a.value().begin() + (i + 1) * ca * plane);
        out.insert(out.end(), b.value().begin() + i * cb * plane, b.value().begin() + (i + 1) * cb * plane);
    }
    auto an = a.node(), bn = b.node();
    return detail::make_result<T>(
        "concat_channels", {n, ca + cb, a.dim(2), a.dim(3)}, std::move(out), {an, bn},
        [an, bn, n, ca, cb, plane](const std::vector<T>& g) {
            for (int i = 0; i < n; ++i) {
                const std::size_t base = std::size_t(i) * (ca + cb) * plane;
                if (an->requires_grad) {
                    auto& ga = an->ensure_grad();
                    for (std::size_t k = 0; k < ca * plane; ++k) ga[i * ca * plane + k] += g[base + k];
                }
                if (bn->requires_grad) {
                    auto& gb = bn->ensure_grad();
                    for (std::size_t k = 0; k < cb * plane; ++k) gb[i * cb * plane + k] += g[base + ca * plane + k];
                }
            }
        });
}

// ---------------------------------------------------------------------------
// Convolution

/// VALID cross-correlation, NCHW input, weight [O, C, K, K], bias [O].
template <class T>
DiffTensor<T> conv2d(const DiffTensor<T>& x, const DiffTensor<T>& weight, const DiffTensor<T>& bias, int stride) {
    using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using CMapM = Eigen::Map<const Mat>;
    if (x.shape().size() != 4 || weight.shape().size() != 4) throw ArgumentError("conv2d expects NCHW input and OCKK weight");
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int o = weight.dim(0), k = weight.dim(2);
    if (weight.dim(1) != c) throw ArgumentError("conv2d: input has " + std::to_string(c) + " channels, layer expects " +
                                                std::to_string(weight.dim(1)));
    if (weight.dim(3) != k || bias.size() != std::size_t(o)) throw ArgumentError("conv2d: bad weight/bias shape");
    if (h < k || w < k) throw ArgumentError("conv2d: spatial size " + std::to_string(h) + "x" + std::to_string(w) +
                                            " smaller than kernel");
    if (stride < 1) throw ArgumentError("conv2d: stride must be >= 1");
    const int ho = (h - k) / stride + 1, wo = (w - k) / stride + 1;
    const int kk = c * k * k, pp = ho * wo;

    // aligned Eigen storage keeps GEMM summation order fixed across runs
    auto cols = std::make_shared<std::vector<Mat>>(n, Mat(kk, pp));
    for (int b = 0; b < n; ++b) {
        T* col = (*cols)[b].data();
        const T* src = x.value().data() + std::size_t(b) * c * h * w;
        for (int ci = 0; ci < c; ++ci)
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                    T* row = col + std::size_t((ci * k + ky) * k + kx) * pp;
                    for (int oy = 0; oy < ho; ++oy) {
                        const T* in = src + (std::size_t(ci) * h + oy * stride + ky) * w + kx;
                        for (int ox = 0; ox < wo; ++ox) row[oy * wo + ox] = in[ox * stride];
                    }
                }
    }
    const Mat wm = CMapM(weight.value().data(), o, kk);
    std::vector<T> out(std::size_t(n) * o * pp);
    for (int b = 0; b < n; ++b) {
        Mat om = wm * (*cols)[b];
        for (int oc = 0; oc < o; ++oc) om.row(oc).array() += bias.value()[oc];
        std::copy(om.data(), om.data() + om.size(), out.begin() + std::ptrdiff_t(b) * o * pp);
    }
    auto xn = x.node(), wn = weight.node(), bn = bias.node();
    return detail::make_result<T>(
        "conv2d", {n, o, ho, wo}, std::move(out), {xn, wn, bn},
        [=](const std::vector<T>& g) {
            const Mat wt = CMapM(wn->value.data(), o, kk).transpose();
            for (int b = 0; b < n; ++b) {
                const Mat gm = CMapM(g.data() + std::size_t(b) * o * pp, o, pp);
                const Mat& col = (*cols)[b];
                if (wn->requires_grad) {
                    const Mat gw = gm * col.transpose();
                    auto& dw = wn->ensure_grad();
                    for (std::size_t i = 0; i < dw.size(); ++i) dw[i] += gw.data()[i];
                }
                if (bn->requires_grad) {
                    auto& gb = bn->ensure_grad();
                    for (int oc = 0; oc < o; ++oc) gb[oc] += gm.row(oc).sum();
                }
                if (xn->requires_grad) {
                    const Mat gcol = wt * gm;
                    T* dst = xn->ensure_grad().data() + std::size_t(b) * c * h * w;
                    for (int ci = 0; ci < c; ++ci)
                        for (int ky = 0; ky < k; ++ky)
                            for (int kx = 0; kx < k; ++kx) {
                                const T* row = gcol.data() + std::size_t((ci * k + ky) * k + kx) * pp;
                                for (int oy = 0; oy < ho; ++oy) {
                                    T* in = dst + (std::size_t(ci) * h + oy * stride + ky) * w + kx;
                                    for (int ox = 0; ox < wo; ++ox) in[ox * stride] += row[oy * wo + ox];
                                }
                            }
                }
            }
        });
}

// ---------------------------------------------------------------------------
// Losses

inline constexpr double kScoreClamp = 1e-7;

/// mean |a - b|
template <class T>
DiffTensor<T> l1_loss(const DiffTensor<T>& a, const DiffTensor<T>& b) {
    if (a.size() != b.size()) throw ArgumentError("l1_loss: size mismatch");
    T s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a.value()[i] - b.value()[i]);
    const T inv = T(1) / T(a.size());
    auto an = a.node(), bn = b.node();
    return detail::make_result<T>("l1_loss", {1}, {s * inv}, {an, bn}, [an, bn, inv](const std::vector<T>& g) {
        for (std::size_t i = 0; i < an->value.size(); ++i) {
            const T d = an->value[i] - bn->value[i];
            const T sgn = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
            if (an->requires_grad) an->ensure_grad()[i] += g[0] * inv * sgn;
            if (bn->requires_grad) bn->ensure_grad()[i] -= g[0] * inv * sgn;
        }
    });
}

namespace detail {

/// -mean log(s) (positive = true) or -mean log(1 - s), scores clamped.
template <class T>
DiffTensor<T> bce_term(const DiffTensor<T>& s, bool positive) {
    const T lo = T(kScoreClamp), hi = T(1 - kScoreClamp);
    T acc = 0;
    for (T v : s.value()) {
        const T c = std::clamp(v, lo, hi);
        acc -= positive ? std::log(c) : std::log(T(1) - c);
    }
    const T inv = T(1) / T(s.size());
    auto sn = s.node();
    return make_result<T>("gan_loss", {1}, {acc * inv}, {sn}, [sn, positive, inv, lo, hi](const std::vector<T>& g) {
        auto& gs = sn->ensure_grad();
        for (std::size_t i = 0; i < gs.size(); ++i) {
            const T v = sn->value[i];
            if (v < lo || v > hi) continue; // clamped: flat
            gs[i] += g[0] * inv * (positive ? -T(1) / v : T(1) / (T(1) - v));
        }
    });
}

} // namespace detail

/// -mean log D(real) - mean log(1 - D(fake))
template <class T>
DiffTensor<T> gan_d_loss(const DiffTensor<T>& real_scores, const DiffTensor<T>& fake_scores) {
    return add(detail::bce_term(real_scores, true), detail::bce_term(fake_scores, false));
}

/// -mean log D(fake)
template <class T>
DiffTensor<T> gan_g_loss(const DiffTensor<T>& fake_scores) {
    return detail::bce_term(fake_scores, true);
}

// ---------------------------------------------------------------------------
// Texture sampling

/// Bilinear lookup of an [H, W, C] texel tensor at atlas-normalized UVs
/// (texel centers at (i + 0.5) / W), clamp-to-edge. Output [N, C].
template <class T>
DiffTensor<T> sample_texture_diff(const DiffTensor<T>& texels, std::span<const Vec2> uv) {
    if (texels.shape().size() != 3) throw ArgumentError("sample_texture_diff expects [H, W, C] texels");
    const int h = texels.dim(0), w = texels.dim(1), ch = texels.dim(2);
    struct Tap {
        std::uint32_t idx[4];
        T wt[4];
    };
    auto taps = std::make_shared<std::vector<Tap>>(uv.size());
    std::vector<T> out(uv.size() * ch);
    const T* tex = texels.value().data();
    for (std::size_t i = 0; i < uv.size(); ++i) {
        const Vec2 t = uv_to_texel(uv[i], w, h);
        const double x = std::clamp(t.x(), 0.0, double(w - 1)), y = std::clamp(t.y(), 0.0, double(h - 1));
        const int x0 = std::min(int(std::floor(x)), w - 1), y0 = std::min(int(std::floor(y)), h - 1);
        const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
        const T fx = T(x - x0), fy = T(y - y0);
        Tap& tap = (*taps)[i];
        tap.idx[0] = std::uint32_t(y0 * w + x0);
        tap.idx[1] = std::uint32_t(y0 * w + x1);
        tap.idx[2] = std::uint32_t(y1 * w + x0);
        tap.idx[3] = std::uint32_t(y1 * w + x1);
        tap.wt[0] = (1 - fx) * (1 - fy);
        tap.wt[1] = fx * (1 - fy);
        tap.wt[2] = (1 - fx) * fy;
        tap.wt[3] = fx * fy;
        for (int c = 0; c < ch; ++c) {
            T v = 0;
            for (int k = 0; k < 4; ++k) v += tap.wt[k] * tex[std::size_t(tap.idx[k]) * ch + c];
            out[i * ch + c] = v;
        }
    }
    auto tn = texels.node();
    return detail::make_result<T>("sample_texture", {int(uv.size()), ch}, std::move(out), {tn},
                                  [tn, taps, ch](const std::vector<T>& g) {
                                      auto& gt = tn->ensure_grad();
                                      for (std::size_t i = 0; i < taps->size(); ++i) {
                                          const Tap& tap = (*taps)[i];
                                          for (int k = 0; k < 4; ++k) {
                                              if (tap.wt[k] == T(0)) continue;
                                              for (int c = 0; c < ch; ++c)
                                                  gt[std::size_t(tap.idx[k]) * ch + c] += tap.wt[k] * g[i * ch + c];
                                          }
                                      }
                                  });
}

/// Scatters [N, C] colors to pixel positions of a [1, C, H, W] image; other
/// pixels are 0.
template <class T>
DiffTensor<T> pixels_to_image(const DiffTensor<T>& colors, std::span<const std::uint32_t> pixel, int h, int w) {
    const int ch = colors.dim(1);
    if (std::size_t(colors.dim(0)) != pixel.size()) throw ArgumentError("pixels_to_image: count mismatch");
    const std::size_t plane = std::size_t(h) * w;
    std::vector<T> out(plane * ch, T(0));
    for (std::size_t i = 0; i < pixel.size(); ++i)
        for (int c = 0; c < ch; ++c) out[c * plane + pixel[i]] = colors.value()[i * ch + c];
    auto cn = colors.node();
    auto idx = std::make_shared<std::vector<std::uint32_t>>(pixel.begin(), pixel.end());
    return detail::make_result<T>("pixels_to_image", {1, ch, h, w}, std::move(out), {cn},
                                  [cn, idx, ch, plane](const std::vector<T>& g) {
                                      auto& gc = cn->ensure_grad();
                                      for (std::size_t i = 0; i < idx->size(); ++i)
                                          for (int c = 0; c < ch; ++c) gc[i * ch + c] += g[c * plane + (*idx)[i]];
                                  });
}

// ---------------------------------------------------------------------------
// Adam

template <class T>
struct AdamState {
    std::vector<T> m, v;
    long step = 0;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;
};

namespace detail {

template <class T>
inline void adam_update(T& p, T g, T& m, T& v, T b1, T b2, T step_size, T bc2_sqrt, T eps) {
    m = b1 * m + (T(1) - b1) * g;
    v = b2 * v + (T(1) - b2) * g * g;
    p -= step_size * m / (std::sqrt(v) / bc2_sqrt + eps);
}

} // namespace detail

/// One bias-corrected Adam step over every parameter.
template <class T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamState<T>& state, const AdamConfig& cfg) {
    if (params.size() != grads.size()) throw ArgumentError("adam_step: params/grads size mismatch");
    if (state.m.size() != params.size()) {
        state.m.assign(params.size(), T(0));
        state.v.assign(params.size(), T(0));
    }
    ++state.step;
    const T b1 = T(cfg.beta1), b2 = T(cfg.beta2);
    const T step_size = T(cfg.lr / (1.0 - std::pow(cfg.beta1, double(state.step))));
    const T bc2_sqrt = T(std::sqrt(1.0 - std::pow(cfg.beta2, double(state.step))));
    for (std::size_t i = 0; i < params.size(); ++i)
        detail::adam_update(params[i], grads[i], state.m[i], state.v[i], b1, b2, step_size, bc2_sqrt, T(cfg.eps));
}

/// Dense Adam (optionally followed by a clamp) evaluated lazily: an entry is
/// only brought up to date when it receives a gradient or on flush(). The
/// skipped steps are replayed with zero gradient through the same update, so
/// the parameters match calling adam_step + clamp on every entry every step.
template <class T>
class LazyAdam {
public:
    LazyAdam(std::size_t n, AdamConfig cfg, T lo = -std::numeric_limits<T>::infinity(),
             T hi = std::numeric_limits<T>::infinity())
        : cfg_(cfg), lo_(lo), hi_(hi), m_(n, T(0)), v_(n, T(0)), last_(n, 0) {}

    [[nodiscard]] long steps() const { return step_; }

    /// One optimizer step. `touched` lists each index with a (possibly zero)
    /// gradient at most once; every other entry's gradient must be zero.
    void step(std::span<T> params, std::span<const T> grads, std::span<const std::uint32_t> touched) {
        ++step_;
        extend_tables();
        for (std::uint32_t i : touched) {
            catch_up(params, i, step_ - 1);
            apply(params, i, grads[i], step_);
            last_[i] = step_;
        }
    }

    /// Brings every entry up to the current step.
    void flush(std::span<T> params) {
        for (std::size_t i = 0; i < params.size(); ++i) catch_up(params, i, step_);
    }

private:
    void extend_tables() {
        while (long(step_size_.size()) <= step_) {
            const double k = double(step_size_.size());
            step_size_.push_back(T(cfg_.lr / (1.0 - std::pow(cfg_.beta1, k))));
            bc2_sqrt_.push_back(T(std::sqrt(1.0 - std::pow(cfg_.beta2, k))));
        }
    }

    void apply(std::span<T> params, std::size_t i, T g, long k) {
        detail::adam_update(params[i], g, m_[i], v_[i], T(cfg_.beta1), T(cfg_.beta2), step_size_[k], bc2_sqrt_[k],
                            T(cfg_.eps));
        if (!std::isfinite(params[i])) throw ComputeError("optimizer produced a non-finite parameter");
        params[i] = std::clamp(params[i], lo_, hi_);
    }

    void catch_up(std::span<T> params, std::size_t i, long target) {
        long k = last_[i] + 1;
        for (; k <= target && m_[i] != T(0); ++k) apply(params, i, T(0), k);
        // With m == 0 a zero-gradient step leaves the parameter as is and only decays v.
        const T b2 = T(cfg_.beta2);
        for (; k <= target; ++k) v_[i] *= b2;
        last_[i] = std::max(last_[i], target);
    }

    AdamConfig cfg_;
    T lo_, hi_;
    std::vector<T> m_, v_;
    std::vector<long> last_;
    long step_ = 0;
    std::vector<T> step_size_{T(0)}, bc2_sqrt_{T(0)};
};

} // namespace advtex
