#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "crossview/conv.hpp"
#include "crossview/ops.hpp"
#include "crossview/params.hpp"

namespace crossview {

// Vertical slicing of the token grid into `parts` disjoint column bands of
// `width` columns each.
struct PartitionSpec {
    int parts = 1;
    int width = 1;

    static PartitionSpec make(int grid_w, int parts) {
        if (parts < 1) throw ConfigError("partition: part count must be >= 1");
        if (grid_w % parts != 0) {
            throw ConfigError("partition: grid width " + std::to_string(grid_w) +
                              " is not divisible into " + std::to_string(parts) + " parts");
        }
        return {parts, grid_w / parts};
    }

    int offset(int j) const { return width * j; } // first column of part j (0-based)
};

// Token matrix [H*W, D] plus the grid geometry needed to go back to a map.
// Token t = i*W + j holds the channel vector of cell (i, j).
template <typename T>
struct TokenSeq {
    Var<T> x;
    int grid_h = 0;
    int grid_w = 0;

    int count() const { return grid_h * grid_w; }
    int dim() const { return x.shape()[1]; }
};

template <typename T>
TokenSeq<T> tokenize(const Var<T>& fmap) {
    const auto& s = fmap.shape();
    if (s.size() != 3) throw DimError("tokenize: expected CHW map, got " + shape_str(s));
    return {chw_to_tokens(fmap), s[1], s[2]};
}

template <typename T>
Var<T> detokenize(const TokenSeq<T>& tokens) {
    return tokens_to_chw(tokens.x, tokens.grid_h, tokens.grid_w);
}

// Collected attention rows (post-softmax), for diagnostics and invariants.
template <typename T>
struct AttnProbe {
    std::vector<Tensor<T>> matrices;
};

template <typename T>
struct ShsaParams {
    Var<T> wq, wk, wv;
};

// Single-head self-attention: Softmax(Q K^T / sqrt(D)) V with Q = X Wq,
// K = X Wk, V = X Wv. No output projection, no positional encodings.
template <typename T>
Var<T> shsa(const Var<T>& x, const ShsaParams<T>& p, AttnProbe<T>* probe = nullptr) {
    const auto& s = x.shape();
    if (s.size() != 2) throw DimError("shsa: expected token matrix, got " + shape_str(s));
    const int d = s[1];
    if (p.wq.shape() != Shape{d, d} || p.wk.shape() != Shape{d, d} || p.wv.shape() != Shape{d, d}) {
        throw DimError("shsa: projections must be " + std::to_string(d) + "x" + std::to_string(d));
    }
    auto q = matmul(x, p.wq);
    auto k = matmul(x, p.wk);
    auto v = matmul(x, p.wv);
    auto logits = scale(matmul(q, transpose2d(k)), T(1) / std::sqrt(static_cast<T>(d)));
    auto attn = softmax_last(logits);
    if (probe) probe->matrices.push_back(attn.value());
    return matmul(attn, v);
}

template <typename T>
struct BlockParams {
    Var<T> ln1_gain, ln1_bias;
    ShsaParams<T> attn;
    Var<T> ln2_gain, ln2_bias;
    Var<T> mlp_w1, mlp_b1, mlp_w2, mlp_b2;

    static BlockParams make(int d, int mlp_ratio) {
        const int hidden = d * mlp_ratio;
        BlockParams p;
        p.ln1_gain = Var<T>::leaf(Tensor<T>({d}), true);
        p.ln1_bias = Var<T>::leaf(Tensor<T>({d}), true);
        p.attn = {Var<T>::leaf(Tensor<T>({d, d}), true), Var<T>::leaf(Tensor<T>({d, d}), true),
                  Var<T>::leaf(Tensor<T>({d, d}), true)};
        p.ln2_gain = Var<T>::leaf(Tensor<T>({d}), true);
        p.ln2_bias = Var<T>::leaf(Tensor<T>({d}), true);
        p.mlp_w1 = Var<T>::leaf(Tensor<T>({d, hidden}), true);
        p.mlp_b1 = Var<T>::leaf(Tensor<T>({hidden}), true);
        p.mlp_w2 = Var<T>::leaf(Tensor<T>({hidden, d}), true);
        p.mlp_b2 = Var<T>::leaf(Tensor<T>({d}), true);
        return p;
    }

    void register_params(const std::string& prefix, ParamList<T>& out) const {
        out.push_back({prefix + "/ln1/g", ln1_gain, ParamKind::LnGain});
        out.push_back({prefix + "/ln1/b", ln1_bias, ParamKind::Bias});
        out.push_back({prefix + "/wq", attn.wq, ParamKind::DenseWeight});
        out.push_back({prefix + "/wk", attn.wk, ParamKind::DenseWeight});
        out.push_back({prefix + "/wv", attn.wv, ParamKind::DenseWeight});
        out.push_back({prefix + "/ln2/g", ln2_gain, ParamKind::LnGain});
        out.push_back({prefix + "/ln2/b", ln2_bias, ParamKind::Bias});
        out.push_back({prefix + "/mlp/w1", mlp_w1, ParamKind::DenseWeight});
        out.push_back({prefix + "/mlp/b1", mlp_b1, ParamKind::Bias});
        out.push_back({prefix + "/mlp/w2", mlp_w2, ParamKind::DenseWeight});
        out.push_back({prefix + "/mlp/b2", mlp_b2, ParamKind::Bias});
    }
};

template <typename T>
Var<T> mlp_forward(const Var<T>& x, const BlockParams<T>& p) {
    auto h = gelu(add_rowvec(matmul(x, p.mlp_w1), p.mlp_b1));
    return add_rowvec(matmul(h, p.mlp_w2), p.mlp_b2);
}

// Pre-LN encoder block: z' = SHSA(LN(z)) + z; out = MLP(LN(z')) + z'.
template <typename T>
TokenSeq<T> vit_block(const TokenSeq<T>& z, const BlockParams<T>& p, AttnProbe<T>* probe = nullptr) {
    auto h = add(shsa(layer_norm(z.x, p.ln1_gain, p.ln1_bias), p.attn, probe), z.x);
    auto out = add(mlp_forward(layer_norm(h, p.ln2_gain, p.ln2_bias), p), h);
    return {out, z.grid_h, z.grid_w};
}

// Token indices of part j: rows sweep first, columns within the band second.
inline std::vector<int> partition_token_indices(const PartitionSpec& spec, int grid_h, int grid_w,
                                                int j) {
    std::vector<int> idx;
    idx.reserve(static_cast<std::size_t>(grid_h) * spec.width);
    for (int i = 0; i < grid_h; ++i) {
        for (int c = 0; c < spec.width; ++c) {
            idx.push_back(i * grid_w + spec.offset(j) + c);
        }
    }
    return idx;
}

template <typename T>
std::vector<TokenSeq<T>> split_parts(const TokenSeq<T>& z, const PartitionSpec& spec) {
    if (spec.parts * spec.width != z.grid_w) {
        throw ConfigError("split_parts: partition spec does not cover grid width " +
                          std::to_string(z.grid_w));
    }
    std::vector<TokenSeq<T>> parts;
    parts.reserve(static_cast<std::size_t>(spec.parts));
    for (int j = 0; j < spec.parts; ++j) {
        parts.push_back(
            {gather_rows(z.x, partition_token_indices(spec, z.grid_h, z.grid_w, j)), z.grid_h,
             spec.width});
    }
    return parts;
}

// Exact inverse of split_parts: every token returns to its original position.
template <typename T>
TokenSeq<T> merge_parts(const std::vector<TokenSeq<T>>& parts, const PartitionSpec& spec) {
    if (static_cast<int>(parts.size()) != spec.parts) {
        throw UsageError("merge_parts: expected " + std::to_string(spec.parts) + " parts, got " +
                         std::to_string(parts.size()));
    }
    const int grid_h = parts.front().grid_h;
    const int d = parts.front().dim();
    std::vector<Var<T>> xs;
    for (const auto& p : parts) {
        if (p.grid_h != grid_h || p.grid_w != spec.width || p.dim() != d) {
            throw UsageError("merge_parts: inconsistent part shape " + shape_str(p.x.shape()));
        }
        xs.push_back(p.x);
    }
    auto cat = concat(xs, 0);
    const int grid_w = spec.parts * spec.width;
    std::vector<int> order(static_cast<std::size_t>(grid_h) * grid_w);
    for (int t = 0; t < grid_h * grid_w; ++t) {
        const int i = t / grid_w;
        const int col = t % grid_w;
        const int j = col / spec.width;
        order[static_cast<std::size_t>(t)] = j * grid_h * spec.width + i * spec.width + col % spec.width;
    }
    return {gather_rows(cat, order), grid_h, grid_w};
}

// Part-level block: per-partition pre-LN SHSA with shared weights plus
// residual, merge, then token-wise MLP with residual.
template <typename T>
TokenSeq<T> part_block(const TokenSeq<T>& z, const PartitionSpec& spec, const BlockParams<T>& p,
                       AttnProbe<T>* probe = nullptr) {
    auto parts = split_parts(z, spec);
    std::vector<TokenSeq<T>> attended;
    attended.reserve(parts.size());
    for (const auto& part : parts) {
        auto a = add(shsa(layer_norm(part.x, p.ln1_gain, p.ln1_bias), p.attn, probe), part.x);
        attended.push_back({a, part.grid_h, part.grid_w});
    }
    auto merged = merge_parts(attended, spec);
    auto out = add(mlp_forward(layer_norm(merged.x, p.ln2_gain, p.ln2_bias), p), merged.x);
    return {out, z.grid_h, z.grid_w};
}

template <typename T>
struct SeParams {
    Var<T> w1, b1, w2, b2;

    static SeParams make(int d, int reduction) {
        if (reduction < 1 || d % reduction != 0) {
            throw ConfigError("se: channel count " + std::to_string(d) +
                              " is not divisible by reduction " + std::to_string(reduction));
        }
        const int mid = d / reduction;
        return {Var<T>::leaf(Tensor<T>({d, mid}), true), Var<T>::leaf(Tensor<T>({mid}), true),
                Var<T>::leaf(Tensor<T>({mid, d}), true), Var<T>::leaf(Tensor<T>({d}), true)};
    }

    void register_params(const std::string& prefix, ParamList<T>& out) const {
        out.push_back({prefix + "/w1", w1, ParamKind::DenseWeight});
        out.push_back({prefix + "/b1", b1, ParamKind::Bias});
        out.push_back({prefix + "/w2", w2, ParamKind::DenseWeight});
        out.push_back({prefix + "/b2", b2, ParamKind::Bias});
    }
};

// Squeeze-and-excitation: spatial average squeeze, bottleneck excitation,
// sigmoid channel gate.
template <typename T>
Var<T> se_block(const Var<T>& fmap, const SeParams<T>& p) {
    const int d = fmap.shape()[0];
    auto squeezed = reshape(global_avg_pool(fmap), {1, d});
    auto hidden = relu(add_rowvec(matmul(squeezed, p.w1), p.b1));
    auto gate = sigmoid(add_rowvec(matmul(hidden, p.w2), p.b2));
    return scale_channels_chw(fmap, reshape(gate, {d}));
}

template <typename T>
struct HeadParams {
    std::vector<BlockParams<T>> global_blocks;
    std::vector<BlockParams<T>> part_blocks;
    SeParams<T> se;

    static HeadParams make(int d, int depth, int mlp_ratio, int se_reduction) {
        if (depth < 1) throw ConfigError("head: depth must be >= 1");
        if (mlp_ratio < 1) throw ConfigError("head: mlp_ratio must be >= 1");
        HeadParams p;
        for (int l = 0; l < depth; ++l) {
            p.global_blocks.push_back(BlockParams<T>::make(d, mlp_ratio));
            p.part_blocks.push_back(BlockParams<T>::make(d, mlp_ratio));
        }
        p.se = SeParams<T>::make(d, se_reduction);
        return p;
    }

    void register_params(const std::string& prefix, ParamList<T>& out) const {
        for (std::size_t l = 0; l < global_blocks.size(); ++l) {
            global_blocks[l].register_params(prefix + "/head/global" + std::to_string(l), out);
        }
        for (std::size_t l = 0; l < part_blocks.size(); ++l) {
            part_blocks[l].register_params(prefix + "/head/part" + std::to_string(l), out);
        }
        se.register_params(prefix + "/head/se", out);
    }
};

// Dual-branch head: G from whole-map attention, P from partition-restricted
// attention with shared per-block weights, fused as SE(G + P).
template <typename T>
Var<T> head_forward(const Var<T>& fmap, const HeadParams<T>& params, const PartitionSpec& spec,
                    AttnProbe<T>* probe = nullptr) {
    if (params.global_blocks.empty() || params.global_blocks.size() != params.part_blocks.size()) {
        throw ConfigError("head: global/part depths must match and be >= 1");
    }
    auto tokens = tokenize(fmap);
    TokenSeq<T> g = tokens;
    for (const auto& block : params.global_blocks) g = vit_block(g, block, probe);
    TokenSeq<T> p = tokens;
    for (const auto& block : params.part_blocks) p = part_block(p, spec, block, probe);
    auto fused = add(detokenize(g), detokenize(p));
    return se_block(fused, params.se);
}

} // namespace crossview
