#pragma once

#include <vector>

#include "crossview/ops.hpp"

namespace crossview {

namespace detail {

// Lowers [C,H,W] to a [C*kh*kw, oh*ow] patch matrix (zero-filled outside the
// padded input) so convolution forward/backward become single GEMMs.
template <typename T>
void im2col(const Tensor<T>& x, int kh, int kw, int stride, int pad, int oh, int ow,
            std::vector<T>& cols) {
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    cols.assign(static_cast<std::size_t>(c) * kh * kw * oh * ow, T(0));
    std::size_t r = 0;
    for (int ch = 0; ch < c; ++ch) {
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx, ++r) {
                T* dst = cols.data() + r * oh * ow;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    const T* src = x.data() + (static_cast<std::size_t>(ch) * h + iy) * w;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < w) dst[static_cast<std::size_t>(oy) * ow + ox] = src[ix];
                    }
                }
            }
        }
    }
}

// Scatter-add inverse of im2col.
template <typename T>
void col2im(const std::vector<T>& cols, int c, int h, int w, int kh, int kw, int stride, int pad,
            int oh, int ow, Tensor<T>& out) {
    std::size_t r = 0;
    for (int ch = 0; ch < c; ++ch) {
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx, ++r) {
                const T* src = cols.data() + r * oh * ow;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    T* dst = out.data() + (static_cast<std::size_t>(ch) * h + iy) * w;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < w) dst[ix] += src[static_cast<std::size_t>(oy) * ow + ox];
                    }
                }
            }
        }
    }
}

inline int conv_out_dim(int in, int k, int stride, int pad, const char* axis) {
    const int span = in + 2 * pad - k;
    if (span < 0 || span % stride != 0) {
        throw ConfigError(std::string("conv2d: non-integral output ") + axis + " for input " +
                          std::to_string(in) + ", kernel " + std::to_string(k) + ", stride " +
                          std::to_string(stride) + ", pad " + std::to_string(pad));
    }
    return span / stride + 1;
}

} // namespace detail

// Cross-correlation (no kernel flip). x: [C_in,H,W], kernel: [C_out,C_in,kh,kw].
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& kernel, int stride, int pad) {
    const auto& xv = x.value();
    const auto& kv = kernel.value();
    if (xv.rank() != 3 || kv.rank() != 4 || xv.dim(0) != kv.dim(1)) {
        throw DimError("conv2d: incompatible input " + shape_str(xv.shape()) + " and kernel " +
                       shape_str(kv.shape()));
    }
    if (stride < 1 || pad < 0) throw ConfigError("conv2d: stride must be >= 1 and pad >= 0");
    const int cin = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
    const int cout = kv.dim(0), kh = kv.dim(2), kw = kv.dim(3);
    const int oh = detail::conv_out_dim(h, kh, stride, pad, "height");
    const int ow = detail::conv_out_dim(w, kw, stride, pad, "width");
    const int ckk = cin * kh * kw;
    const int ohw = oh * ow;

    std::vector<T> cols;
    detail::im2col(xv, kh, kw, stride, pad, oh, ow, cols);
    Tensor<T> out({cout, oh, ow});
    MatMap<T>(out.data(), cout, ohw).noalias() =
        ConstMatMap<T>(kv.data(), cout, ckk) * ConstMatMap<T>(cols.data(), ckk, ohw);

    return Var<T>::op(std::move(out), {x, kernel}, [&](Node<T>* o) {
        o->backward_fn = [xn = x.node_ptr(), kn = kernel.node_ptr(), o, stride, pad, cin, h, w,
                          cout, kh, kw, oh, ow, ckk, ohw]() {
            ConstMatMap<T> g(o->grad.data(), cout, ohw);
            if (kn->requires_grad) {
                std::vector<T> cols;
                detail::im2col(xn->value, kh, kw, stride, pad, oh, ow, cols);
                MatMap<T>(kn->grad_acc().data(), cout, ckk).noalias() +=
                    g * ConstMatMap<T>(cols.data(), ckk, ohw).transpose();
            }
            if (xn->requires_grad) {
                std::vector<T> dcols(static_cast<std::size_t>(ckk) * ohw);
                MatMap<T>(dcols.data(), ckk, ohw).noalias() =
                    ConstMatMap<T>(kn->value.data(), cout, ckk).transpose() * g;
                detail::col2im(dcols, cin, h, w, kh, kw, stride, pad, oh, ow, xn->grad_acc());
            }
        };
    });
}

template <typename T>
Var<T> bias_add_chw(const Var<T>& x, const Var<T>& b) {
    const auto& xv = x.value();
    if (xv.rank() != 3 || b.value().rank() != 1 || b.value().dim(0) != xv.dim(0)) {
        throw DimError("bias_add_chw: cannot add bias " + shape_str(b.value().shape()) + " to " +
                       shape_str(xv.shape()));
    }
    const int c = xv.dim(0);
    const std::size_t plane = static_cast<std::size_t>(xv.dim(1)) * xv.dim(2);
    Tensor<T> out(xv.shape());
    for (int ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < plane; ++i)
            out[ch * plane + i] = xv[ch * plane + i] + b.value()[ch];
    return Var<T>::op(std::move(out), {x, b}, [&](Node<T>* o) {
        o->backward_fn = [xn = x.node_ptr(), bn = b.node_ptr(), o, c, plane]() {
            if (xn->requires_grad) {
                auto& g = xn->grad_acc();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
            }
            if (bn->requires_grad) {
                auto& g = bn->grad_acc();
                for (int ch = 0; ch < c; ++ch) {
                    T s = T(0);
                    for (std::size_t i = 0; i < plane; ++i) s += o->grad[ch * plane + i];
                    g[ch] += s;
                }
            }
        };
    });
}

// Per-channel multiplicative gate, the excitation step of an SE block.
template <typename T>
Var<T> scale_channels_chw(const Var<T>& x, const Var<T>& gate) {
    const auto& xv = x.value();
    if (xv.rank() != 3 || gate.value().rank() != 1 || gate.value().dim(0) != xv.dim(0)) {
        throw DimError("scale_channels_chw: cannot scale " + shape_str(xv.shape()) + " by " +
                       shape_str(gate.value().shape()));
    }
    const int c = xv.dim(0);
    const std::size_t plane = static_cast<std::size_t>(xv.dim(1)) * xv.dim(2);
    Tensor<T> out(xv.shape());
    for (int ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < plane; ++i)
            out[ch * plane + i] = xv[ch * plane + i] * gate.value()[ch];
    return Var<T>::op(std::move(out), {x, gate}, [&](Node<T>* o) {
        o->backward_fn = [xn = x.node_ptr(), gn = gate.node_ptr(), o, c, plane]() {
            if (xn->requires_grad) {
                auto& g = xn->grad_acc();
                for (int ch = 0; ch < c; ++ch)
                    for (std::size_t i = 0; i < plane; ++i)
                        g[ch * plane + i] += o->grad[ch * plane + i] * gn->value[ch];
            }
            if (gn->requires_grad) {
                auto& g = gn->grad_acc();
                for (int ch = 0; ch < c; ++ch) {
                    T s = T(0);
                    for (std::size_t i = 0; i < plane; ++i)
                        s += o->grad[ch * plane + i] * xn->value[ch * plane + i];
                    g[ch] += s;
                }
            }
        };
    });
}

template <typename T>
Var<T> maxpool2d(const Var<T>& x, int k, int stride) {
    const auto& xv = x.value();
    if (xv.rank() != 3) throw DimError("maxpool2d: expected rank-3, got " + shape_str(xv.shape()));
    if (k < 1 || stride < 1) throw ConfigError("maxpool2d: window and stride must be >= 1");
    const int c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
    if ((h - k) % stride != 0 || (w - k) % stride != 0 || h < k || w < k) {
        throw ConfigError("maxpool2d: window " + std::to_string(k) + "/stride " +
                          std::to_string(stride) + " does not tile " + shape_str(xv.shape()));
    }
    const int oh = (h - k) / stride + 1;
    const int ow = (w - k) / stride + 1;
    Tensor<T> out({c, oh, ow});
    std::vector<std::size_t> argmax(static_cast<std::size_t>(c) * oh * ow);
    std::size_t oi = 0;
    for (int ch = 0; ch < c; ++ch) {
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox, ++oi) {
                T best = xv((int)ch, oy * stride, ox * stride);
                std::size_t best_i =
                    (static_cast<std::size_t>(ch) * h + oy * stride) * w + ox * stride;
                for (int ky = 0; ky < k; ++ky) {
                    for (int kx = 0; kx < k; ++kx) {
                        const std::size_t idx =
                            (static_cast<std::size_t>(ch) * h + oy * stride + ky) * w +
                            ox * stride + kx;
                        if (xv[idx] > best) {
                            best = xv[idx];
                            best_i = idx;
                        }
                    }
                }
                out[oi] = best;
                argmax[oi] = best_i;
            }
        }
    }
    return Var<T>::op(std::move(out), {x}, [&](Node<T>* o) {
        o->backward_fn = [xn = x.node_ptr(), o, argmax = std::move(argmax)]() {
            if (!xn->requires_grad) return;
            auto& g = xn->grad_acc();
            for (std::size_t i = 0; i < argmax.size(); ++i) g[argmax[i]] += o->grad[i];
        };
    });
}

template <typename T>
Var<T> global_avg_pool(const Var<T>& x) {
    const auto& xv = x.value();
    if (xv.rank() != 3) throw DimError("global_avg_pool: expected rank-3, got " + shape_str(xv.shape()));
    const int c = xv.dim(0);
    const std::size_t plane = static_cast<std::size_t>(xv.dim(1)) * xv.dim(2);
    Tensor<T> out({c});
    for (int ch = 0; ch < c; ++ch) {
        T s = T(0);
        for (std::size_t i = 0; i < plane; ++i) s += xv[ch * plane + i];
        out[ch] = s / static_cast<T>(plane);
    }
    return Var<T>::op(std::move(out), {x}, [&](Node<T>* o) {
        o->backward_fn = [xn = x.node_ptr(), o, c, plane]() {
            if (!xn->requires_grad) return;
            auto& g = xn->grad_acc();
            for (int ch = 0; ch < c; ++ch) {
                const T gv = o->grad[ch] / static_cast<T>(plane);
                for (std::size_t i = 0; i < plane; ++i) g[ch * plane + i] += gv;
            }
        };
    });
}

} // namespace crossview
