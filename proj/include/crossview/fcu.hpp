#pragma once

#include <string>

#include "crossview/conv.hpp"
#include "crossview/ops.hpp"
#include "crossview/params.hpp"

namespace crossview {

// 1x1 projection of the global representation into K spatial attention maps.
template <typename T>
struct FcuParams {
    Var<T> w; // [K, d, 1, 1]
    Var<T> b; // [K]

    static FcuParams make(int attn_k, int d) {
        if (attn_k < 1) throw ConfigError("fcu: attention channel count must be >= 1");
        return {Var<T>::leaf(Tensor<T>({attn_k, d, 1, 1}), true),
                Var<T>::leaf(Tensor<T>({attn_k}), true)};
    }

    void register_params(const std::string& prefix, ParamList<T>& out) const {
        out.push_back({prefix + "/fcu/w", w, ParamKind::ConvKernel});
        out.push_back({prefix + "/fcu/b", b, ParamKind::Bias});
    }
};

template <typename T>
Var<T> attention_project(const Var<T>& global_map, const FcuParams<T>& params) {
    return bias_add_chw(conv2d(global_map, params.w, 1, 0), params.b);
}

// Frobenius coupling: f[i*C + c] = sum_{h,w} F[c,h,w] * A[i,h,w]. The layout
// groups all C channel responses of attention map 1 first, then map 2, etc.
template <typename T>
Var<T> couple(const Var<T>& feature, const Var<T>& attention) {
    const auto& fs = feature.shape();
    const auto& as = attention.shape();
    if (fs.size() != 3 || as.size() != 3 || fs[1] != as[1] || fs[2] != as[2]) {
        throw DimError("couple: grid mismatch between feature " + shape_str(fs) +
                       " and attention " + shape_str(as));
    }
    const int c = fs[0], k = as[0];
    const int hw = fs[1] * fs[2];
    Tensor<T> out({k * c});
    // out viewed [K, C] = A[K, HW] * F[C, HW]^T
    MatMap<T>(out.data(), k, c).noalias() =
        ConstMatMap<T>(attention.value().data(), k, hw) *
        ConstMatMap<T>(feature.value().data(), c, hw).transpose();
    return Var<T>::op(std::move(out), {feature, attention}, [&](Node<T>* o) {
        o->backward_fn = [fn = feature.node_ptr(), an = attention.node_ptr(), o, c, k, hw]() {
            ConstMatMap<T> g(o->grad.data(), k, c);
            if (fn->requires_grad) {
                MatMap<T>(fn->grad_acc().data(), c, hw).noalias() +=
                    g.transpose() * ConstMatMap<T>(an->value.data(), k, hw);
            }
            if (an->requires_grad) {
                MatMap<T>(an->grad_acc().data(), k, hw).noalias() +=
                    g * ConstMatMap<T>(fn->value.data(), c, hw);
            }
        };
    });
}

// Full coupling path: attention maps from M, Frobenius pooling of F against
// them, unit-normalized descriptor of length C*K.
template <typename T>
Var<T> fcu_descriptor(const Var<T>& feature, const Var<T>& global_map, const FcuParams<T>& params) {
    return l2_normalize(couple(feature, attention_project(global_map, params)));
}

} // namespace crossview
