#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "crossview/backbone.hpp"
#include "crossview/fcu.hpp"
#include "crossview/image.hpp"
#include "crossview/transformer.hpp"

namespace crossview {

struct ModelConfig {
    BackboneConfig backbone;
    int depth_l = 2;
    int parts_w = 5;
    int mlp_ratio = 4;
    int se_reduction = 4;
    int attn_k = 4;
    double gamma = 10.0;
    // Both branches consume the same input size; aerial tiles are polar-warped
    // to the ground geometry before embedding.
    int input_w = 320;
    int input_h = 64;

    int grid_h() const { return input_h / backbone.stride(); }
    int grid_w() const { return input_w / backbone.stride(); }
    int descriptor_dim() const { return backbone.out_channels() * attn_k; }

    void validate() const {
        backbone.validate();
        if (input_w < 1 || input_h < 1) throw ConfigError("model: input size must be positive");
        if (input_w % backbone.stride() != 0 || input_h % backbone.stride() != 0) {
            throw ConfigError("model: input " + std::to_string(input_w) + "x" +
                              std::to_string(input_h) + " is not divisible by backbone stride " +
                              std::to_string(backbone.stride()));
        }
        PartitionSpec::make(grid_w(), parts_w);
        if (depth_l < 1) throw ConfigError("model: depth_l must be >= 1");
        if (mlp_ratio < 1) throw ConfigError("model: mlp_ratio must be >= 1");
        if (se_reduction < 1 || backbone.proj_dim % se_reduction != 0) {
            throw ConfigError("model: proj_dim " + std::to_string(backbone.proj_dim) +
                              " is not divisible by se_reduction " + std::to_string(se_reduction));
        }
        if (attn_k < 1) throw ConfigError("model: attn_k must be >= 1");
        if (!(gamma > 0)) throw ConfigError("model: gamma must be positive");
    }
};

template <typename T>
struct BranchParams {
    BackboneParams<T> backbone;
    HeadParams<T> head;
    FcuParams<T> fcu;

    static BranchParams make(const ModelConfig& cfg) {
        return {BackboneParams<T>::make(cfg.backbone),
                HeadParams<T>::make(cfg.backbone.proj_dim, cfg.depth_l, cfg.mlp_ratio,
                                    cfg.se_reduction),
                FcuParams<T>::make(cfg.attn_k, cfg.backbone.proj_dim)};
    }

    void register_params(const std::string& prefix, ParamList<T>& out) const {
        backbone.register_params(prefix, out);
        head.register_params(prefix, out);
        fcu.register_params(prefix, out);
    }
};

enum class View { Ground, Aerial };

inline const char* view_name(View v) { return v == View::Ground ? "ground" : "aerial"; }

// Two branches of identical architecture with disjoint parameter sets.
template <typename T>
class SiameseModel {
public:
    explicit SiameseModel(ModelConfig cfg) : cfg_(std::move(cfg)) {
        cfg_.validate();
        ground_ = BranchParams<T>::make(cfg_);
        aerial_ = BranchParams<T>::make(cfg_);
        ground_.register_params("ground", params_);
        aerial_.register_params("aerial", params_);
    }

    const ModelConfig& config() const { return cfg_; }
    ParamList<T>& params() { return params_; }
    const ParamList<T>& params() const { return params_; }
    BranchParams<T>& branch(View v) { return v == View::Ground ? ground_ : aerial_; }
    const BranchParams<T>& branch(View v) const { return v == View::Ground ? ground_ : aerial_; }

    struct BranchOutputs {
        Var<T> feature;       // F
        Var<T> global_map;    // M
        Var<T> attention;     // A
        Var<T> descriptor;    // f
    };

    BranchOutputs forward_all(const Tensor<T>& input, View v, AttnProbe<T>* probe = nullptr) const {
        const auto& br = v == View::Ground ? ground_ : aerial_;
        auto x = Var<T>::leaf(input);
        BranchOutputs out;
        out.feature = backbone_forward(x, cfg_.backbone, br.backbone);
        auto projected = backbone_project(out.feature, br.backbone);
        out.global_map = head_forward(projected, br.head,
                                      PartitionSpec::make(cfg_.grid_w(), cfg_.parts_w), probe);
        out.attention = attention_project(out.global_map, br.fcu);
        out.descriptor = l2_normalize(couple(out.feature, out.attention));
        return out;
    }

    // Unit descriptor of length C*K from a centered CHW input tensor.
    Var<T> embed_tensor(const Tensor<T>& input, View v, AttnProbe<T>* probe = nullptr) const {
        return forward_all(input, v, probe).descriptor;
    }

    // Spatial attention maps A = Conv1x1(M) for an input image, [K, H, W].
    Tensor<T> attention_maps(const Image& img, View v) const {
        check_input(img, v);
        NoGradGuard ng;
        return forward_all(image_to_tensor<T>(img, true), v).attention.value();
    }

    Var<T> embed(const Image& img, View v, AttnProbe<T>* probe = nullptr) const {
        check_input(img, v);
        return embed_tensor(image_to_tensor<T>(img, /*centered=*/true), v, probe);
    }

    Var<T> embed_ground(const Image& img) const { return embed(img, View::Ground); }
    Var<T> embed_aerial(const Image& polar_img) const { return embed(polar_img, View::Aerial); }

    long long param_count() const {
        long long total = 0;
        for (const auto& p : params_) total += static_cast<long long>(p.var.size());
        return total;
    }

private:
    void check_input(const Image& img, View v) const {
        if (img.width() != cfg_.input_w || img.height() != cfg_.input_h ||
            img.channels() != cfg_.backbone.in_channels) {
            throw ConfigError(std::string("embed: ") + view_name(v) + " input is " +
                              std::to_string(img.width()) + "x" + std::to_string(img.height()) +
                              "x" + std::to_string(img.channels()) + ", config expects " +
                              std::to_string(cfg_.input_w) + "x" + std::to_string(cfg_.input_h) +
                              "x" + std::to_string(cfg_.backbone.in_channels));
        }
    }

    ModelConfig cfg_;
    BranchParams<T> ground_;
    BranchParams<T> aerial_;
    ParamList<T> params_;
};

// ---------------------------------------------------------------------------
// Triplet mining and losses
// ---------------------------------------------------------------------------

struct Triplet {
    View anchor_view;
    int anchor;
    int positive;
    int negative;
};

// All 2B(B-1) anchor/positive/negative combinations within a batch of B
// matched pairs: every ground anchor against each non-matching aerial, and
// symmetrically for aerial anchors.
inline std::vector<Triplet> mine_exhaustive(int batch) {
    std::vector<Triplet> out;
    if (batch < 1) return out;
    out.reserve(static_cast<std::size_t>(2) * batch * (batch - 1));
    for (int i = 0; i < batch; ++i) {
        for (int j = 0; j < batch; ++j) {
            if (j != i) out.push_back({View::Ground, i, i, j});
        }
    }
    for (int i = 0; i < batch; ++i) {
        for (int j = 0; j < batch; ++j) {
            if (j != i) out.push_back({View::Aerial, i, i, j});
        }
    }
    return out;
}

namespace detail {
template <typename T>
T softplus(T x) {
    return std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x)));
}
template <typename T>
T logistic(T x) {
    return x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
}
} // namespace detail

// Weighted soft-margin ranking loss log(1 + e^{gamma (d_pos - d_neg)}),
// evaluated in softplus form to survive large |gamma * margin|.
template <typename T>
T triplet_loss(T d_pos, T d_neg, T gamma) {
    return detail::softplus(gamma * (d_pos - d_neg));
}

// All-pairs L2 distance matrix between two descriptor stacks.
template <typename T>
Var<T> pairwise_l2(const Var<T>& q, const Var<T>& g) {
    const auto& qs = q.shape();
    const auto& gs = g.shape();
    if (qs.size() != 2 || gs.size() != 2 || qs[1] != gs[1]) {
        throw DimError("pairwise_l2: incompatible shapes " + shape_str(qs) + " and " +
                       shape_str(gs));
    }
    const int n = qs[0], m = gs[0], d = qs[1];
    Tensor<T> out({n, m});
    for (int i = 0; i < n; ++i) {
        const T* qi = q.value().data() + static_cast<std::size_t>(i) * d;
        for (int j = 0; j < m; ++j) {
            const T* gj = g.value().data() + static_cast<std::size_t>(j) * d;
            T s = T(0);
            for (int c = 0; c < d; ++c) {
                const T diff = qi[c] - gj[c];
                s += diff * diff;
            }
            out(i, j) = std::sqrt(s);
        }
    }
    return Var<T>::op(std::move(out), {q, g}, [&](Node<T>* o) {
        o->backward_fn = [qn = q.node_ptr(), gn = g.node_ptr(), o, n, m, d]() {
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < m; ++j) {
                    const T dist = o->value(i, j);
                    const T gout = o->grad(i, j);
                    if (dist <= T(0) || gout == T(0)) continue; // zero-distance subgradient
                    const T coef = gout / dist;
                    const T* qi = qn->value.data() + static_cast<std::size_t>(i) * d;
                    const T* gj = gn->value.data() + static_cast<std::size_t>(j) * d;
                    if (qn->requires_grad) {
                        T* dq = qn->grad_acc().data() + static_cast<std::size_t>(i) * d;
                        for (int c = 0; c < d; ++c) dq[c] += coef * (qi[c] - gj[c]);
                    }
                    if (gn->requires_grad) {
                        T* dg = gn->grad_acc().data() + static_cast<std::size_t>(j) * d;
                        for (int c = 0; c < d; ++c) dg[c] -= coef * (qi[c] - gj[c]);
                    }
                }
            }
        };
    });
}

// Mean soft-margin loss over all mined triplets, as a function of the
// ground-by-aerial distance matrix.
template <typename T>
Var<T> triplet_batch_loss(const Var<T>& dist, T gamma, const std::vector<Triplet>& triplets) {
    const auto& s = dist.shape();
    if (s.size() != 2 || s[0] != s[1]) {
        throw DimError("triplet_batch_loss: expected square distance matrix, got " + shape_str(s));
    }
    if (triplets.empty()) throw UsageError("triplet_batch_loss: no triplets");
    const T inv_count = T(1) / static_cast<T>(triplets.size());
    T total = T(0);
    for (const auto& t : triplets) {
        // dist rows index ground descriptors, columns aerial descriptors.
        const T d_pos = dist.value()(t.anchor, t.anchor);
        const T d_neg = t.anchor_view == View::Ground ? dist.value()(t.anchor, t.negative)
                                                      : dist.value()(t.negative, t.anchor);
        total += detail::softplus(gamma * (d_pos - d_neg));
    }
    return Var<T>::op(Tensor<T>::scalar(total * inv_count), {dist}, [&](Node<T>* o) {
        o->backward_fn = [dn = dist.node_ptr(), o, gamma, triplets, inv_count]() {
            if (!dn->requires_grad) return;
            auto& g = dn->grad_acc();
            const T upstream = o->grad[0] * inv_count * gamma;
            const int b = dn->value.dim(0);
            for (const auto& t : triplets) {
                const int pos_r = t.anchor, pos_c = t.anchor;
                const int neg_r = t.anchor_view == View::Ground ? t.anchor : t.negative;
                const int neg_c = t.anchor_view == View::Ground ? t.negative : t.anchor;
                const T d_pos = dn->value(pos_r, pos_c);
                const T d_neg = dn->value(neg_r, neg_c);
                const T sig = detail::logistic(gamma * (d_pos - d_neg));
                g[static_cast<std::size_t>(pos_r) * b + pos_c] += upstream * sig;
                g[static_cast<std::size_t>(neg_r) * b + neg_c] -= upstream * sig;
            }
        };
    });
}

// Stacks per-image descriptors and averages the soft-margin loss over the
// exhaustive 2B(B-1) triplet set.
template <typename T>
Var<T> batch_loss(const std::vector<Var<T>>& ground, const std::vector<Var<T>>& aerial, T gamma) {
    if (ground.size() != aerial.size()) {
        throw UsageError("batch_loss: ground/aerial counts differ");
    }
    const int b = static_cast<int>(ground.size());
    if (b < 2) throw UsageError("batch_loss: need at least 2 pairs, got " + std::to_string(b));
    const int dim = static_cast<int>(ground.front().size());
    std::vector<Var<T>> q_rows, g_rows;
    q_rows.reserve(ground.size());
    g_rows.reserve(aerial.size());
    for (const auto& v : ground) q_rows.push_back(reshape(v, {1, dim}));
    for (const auto& v : aerial) g_rows.push_back(reshape(v, {1, dim}));
    auto dist = pairwise_l2(concat(q_rows, 0), concat(g_rows, 0));
    return triplet_batch_loss(dist, gamma, mine_exhaustive(b));
}

} // namespace crossview
