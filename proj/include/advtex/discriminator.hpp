#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "advtex/diff.hpp"
#include "advtex/scene.hpp"

namespace advtex {

inline constexpr int kConvKernel = 4;

struct ConvSpec {
    int in_channels, out_channels, stride;
};

/// (in, out, stride) of the five discriminator layers.
inline constexpr std::array<ConvSpec, 5> kDiscriminatorLayers = {{
    {6, 64, 2},
    {64, 128, 2},
    {128, 128, 2},
    {128, 128, 1},
    {128, 1, 1},
}};

template <class T>
struct ConvLayer {
    ConvSpec spec{};
    DiffTensor<T> weight; ///< [out, in, 4, 4]
    DiffTensor<T> bias;   ///< [out]

    ConvLayer() = default;
    /// Weights and bias uniform in +-sqrt(1 / (in * 16)).
    ConvLayer(ConvSpec s, Rng& rng) : spec(s) {
        const int fan_in = s.in_channels * kConvKernel * kConvKernel;
        const double bound = std::sqrt(1.0 / fan_in);
        std::vector<T> w(std::size_t(s.out_channels) * fan_in), b(s.out_channels);
        for (T& v : w) v = T(rng.uniform(-bound, bound));
        for (T& v : b) v = T(rng.uniform(-bound, bound));
        weight = DiffTensor<T>::parameter({s.out_channels, s.in_channels, kConvKernel, kConvKernel}, std::move(w));
        bias = DiffTensor<T>::parameter({s.out_channels}, std::move(b));
    }

    DiffTensor<T> operator()(const DiffTensor<T>& x) const { return conv2d(x, weight, bias, spec.stride); }
};

/// Spatial size after one VALID 4x4 layer.
inline int conv_output_size(int in, int stride) { return (in - kConvKernel) / stride + 1; }

/// Conditional patch discriminator over 6-channel (render, ground truth)
/// stacks. Scores are per-patch probabilities.
template <class T>
class Discriminator {
public:
    explicit Discriminator(std::uint64_t seed = 0) {
        Rng rng(seed);
        for (const ConvSpec& s : kDiscriminatorLayers) layers_.emplace_back(s, rng);
    }

    DiffTensor<T> forward(const DiffTensor<T>& x) const {
        DiffTensor<T> h = x;
        for (std::size_t i = 0; i + 1 < layers_.size(); ++i) h = leaky_relu(layers_[i](h), T(0.2));
        return sigmoid(layers_.back()(h));
    }
    DiffTensor<T> operator()(const DiffTensor<T>& x) const { return forward(x); }

    /// Smallest input side accepted by the stack.
    static int min_input_side() {
        int s = 1;
        for (auto it = kDiscriminatorLayers.rbegin(); it != kDiscriminatorLayers.rend(); ++it)
            s = (s - 1) * it->stride + kConvKernel;
        return s;
    }

    static int output_side(int in) {
        for (const ConvSpec& s : kDiscriminatorLayers) in = conv_output_size(in, s.stride);
        return in;
    }

    [[nodiscard]] std::vector<DiffTensor<T>> parameters() const {
        std::vector<DiffTensor<T>> out;
        for (const auto& l : layers_) {
            out.push_back(l.weight);
            out.push_back(l.bias);
        }
        return out;
    }

    [[nodiscard]] std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& p : parameters()) n += p.size();
        return n;
    }

    void zero_grad() {
        for (auto& p : parameters()) p.zero_grad();
    }

    [[nodiscard]] const std::vector<ConvLayer<T>>& layers() const { return layers_; }

    /// Flat little-endian float64 blob plus `<blob>.json` shape manifest.
    void save(const std::filesystem::path& blob) const {
        std::ofstream os(blob, std::ios::binary);
        if (!os) throw IoError("cannot write '" + blob.string() + "'");
        nlohmann::json manifest;
        manifest["dtype"] = "float64-le";
        manifest["tensors"] = nlohmann::json::array();
        std::size_t offset = 0;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            const auto& l = layers_[i];
            for (const auto* t : {&l.weight, &l.bias}) {
                const char* name = t == &l.weight ? "weight" : "bias";
                manifest["tensors"].push_back(
                    {{"name", "conv" + std::to_string(i) + "." + name}, {"shape", t->shape()}, {"offset", offset}});
                for (T v : t->value()) write_f64(os, double(v));
                offset += t->size();
            }
        }
        if (!os) throw IoError("failed writing '" + blob.string() + "'");
        std::ofstream ms(std::filesystem::path(blob).replace_extension(".json"));
        if (!ms) throw IoError("cannot write manifest for '" + blob.string() + "'");
        ms << manifest.dump(2) << '\n';
    }

    void load(const std::filesystem::path& blob) {
        std::ifstream ms(std::filesystem::path(blob).replace_extension(".json"));
        if (!ms) throw IoError("missing manifest for '" + blob.string() + "'");
        nlohmann::json manifest;
        try {
            ms >> manifest;
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError("bad discriminator manifest: " + std::string(e.what()));
        }
        std::ifstream is(blob, std::ios::binary);
        if (!is) throw IoError("cannot read '" + blob.string() + "'");
        std::vector<char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
        const auto& tensors = manifest.at("tensors");
        if (tensors.size() != layers_.size() * 2) throw ValidationError("discriminator manifest tensor count mismatch");
        std::size_t k = 0;
        for (auto& l : layers_)
            for (auto* t : {&l.weight, &l.bias}) {
                const auto& entry = tensors[k++];
                if (entry.at("shape").get<Shape>() != t->shape())
                    throw ValidationError("discriminator checkpoint shape mismatch for " +
                                          entry.at("name").get<std::string>());
                const std::size_t offset = entry.at("offset").get<std::size_t>();
                if ((offset + t->size()) * 8 > bytes.size()) throw ValidationError("discriminator blob truncated");
                for (std::size_t i = 0; i < t->size(); ++i) t->value()[i] = T(read_f64(bytes.data() + (offset + i) * 8));
            }
    }

private:
    static void write_f64(std::ostream& os, double v) {
        auto bits = std::bit_cast<std::uint64_t>(v);
        char b[8];
        for (int i = 0; i < 8; ++i) b[i] = char((bits >> (8 * i)) & 0xff);
        os.write(b, 8);
    }
    static double read_f64(const char* b) {
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= std::uint64_t(static_cast<unsigned char>(b[i])) << (8 * i);
        return std::bit_cast<double>(bits);
    }

    std::vector<ConvLayer<T>> layers_;
};

} // namespace advtex
