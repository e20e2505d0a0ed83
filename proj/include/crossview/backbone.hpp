#pragma once

#include <string>
#include <vector>

#include "crossview/conv.hpp"
#include "crossview/params.hpp"

namespace crossview {

// Stage layout of the convolutional feature extractor: each stage applies
// `convs_per_stage` 3x3/pad-1 convolutions with ReLU, then a 2x2 max-pool, so
// the total stride is 2^#stages. The final 1x1 projection produces the
// Transformer input width.
struct BackboneConfig {
    std::vector<int> widths{16, 32, 64};
    int convs_per_stage = 2;
    int in_channels = 3;
    int proj_dim = 64;

    static constexpr int kKernel = 3;

    int out_channels() const { return widths.back(); }
    int stride() const { return 1 << static_cast<int>(widths.size()); }

    void validate() const {
        if (widths.empty()) throw ConfigError("backbone: no stage widths");
        for (int w : widths) {
            if (w < 1) throw ConfigError("backbone: non-positive stage width");
        }
        if (convs_per_stage < 1) throw ConfigError("backbone: convs_per_stage must be >= 1");
        if (in_channels != 1 && in_channels != 3) throw ConfigError("backbone: in_channels must be 1 or 3");
        if (proj_dim < 1) throw ConfigError("backbone: proj_dim must be >= 1");
    }
};

template <typename T>
struct ConvLayerParams {
    Var<T> w;
    Var<T> b;
};

template <typename T>
struct BackboneParams {
    std::vector<std::vector<ConvLayerParams<T>>> stages;
    ConvLayerParams<T> proj;

    static BackboneParams make(const BackboneConfig& cfg) {
        cfg.validate();
        BackboneParams p;
        int cin = cfg.in_channels;
        for (int width : cfg.widths) {
            std::vector<ConvLayerParams<T>> stage;
            for (int c = 0; c < cfg.convs_per_stage; ++c) {
                stage.push_back({Var<T>::leaf(Tensor<T>({width, cin, 3, 3}), true),
                                 Var<T>::leaf(Tensor<T>({width}), true)});
                cin = width;
            }
            p.stages.push_back(std::move(stage));
        }
        p.proj = {Var<T>::leaf(Tensor<T>({cfg.proj_dim, cin, 1, 1}), true),
                  Var<T>::leaf(Tensor<T>({cfg.proj_dim}), true)};
        return p;
    }

    void register_params(const std::string& prefix, ParamList<T>& out) const {
        for (std::size_t s = 0; s < stages.size(); ++s) {
            for (std::size_t c = 0; c < stages[s].size(); ++c) {
                const std::string base =
                    prefix + "/backbone/s" + std::to_string(s) + "/c" + std::to_string(c);
                out.push_back({base + "/w", stages[s][c].w, ParamKind::ConvKernel});
                out.push_back({base + "/b", stages[s][c].b, ParamKind::Bias});
            }
        }
        out.push_back({prefix + "/proj/w", proj.w, ParamKind::ConvKernel});
        out.push_back({prefix + "/proj/b", proj.b, ParamKind::Bias});
    }
};

// Local feature map F at stride-reduced resolution.
template <typename T>
Var<T> backbone_forward(const Var<T>& image, const BackboneConfig& cfg,
                        const BackboneParams<T>& params) {
    cfg.validate();
    const auto& shape = image.shape();
    if (shape.size() != 3 || shape[0] != cfg.in_channels) {
        throw ConfigError("backbone: expected " + std::to_string(cfg.in_channels) +
                          "-channel CHW input, got " + shape_str(shape));
    }
    if (shape[1] % cfg.stride() != 0 || shape[2] % cfg.stride() != 0) {
        throw ConfigError("backbone: input " + shape_str(shape) + " not divisible by stride " +
                          std::to_string(cfg.stride()));
    }
    Var<T> x = image;
    for (const auto& stage : params.stages) {
        for (const auto& conv : stage) {
            x = relu(bias_add_chw(conv2d(x, conv.w, 1, 1), conv.b));
        }
        x = maxpool2d(x, 2, 2);
    }
    return x;
}

// F -> F_a channel projection (1x1 convolution).
template <typename T>
Var<T> backbone_project(const Var<T>& feature, const BackboneParams<T>& params) {
    return bias_add_chw(conv2d(feature, params.proj.w, 1, 0), params.proj.b);
}

// Exact trainable-scalar count of the extractor including the projection.
inline long long backbone_param_count(const BackboneConfig& cfg) {
    cfg.validate();
    long long total = 0;
    long long cin = cfg.in_channels;
    for (int width : cfg.widths) {
        for (int c = 0; c < cfg.convs_per_stage; ++c) {
            total += static_cast<long long>(width) * cin * 9 + width;
            cin = width;
        }
    }
    total += static_cast<long long>(cfg.proj_dim) * cin + cfg.proj_dim;
    return total;
}

} // namespace crossview
