#pragma once

#include <Eigen/Core>
#include <cmath>
#include <vector>

#include "crossview/autograd.hpp"

namespace crossview {

template <typename T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using ConstMatMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

namespace detail {

template <typename T>
ConstMatMap<T> as_mat(const Tensor<T>& t, int rows, int cols) {
    return ConstMatMap<T>(t.data(), rows, cols);
}
template <typename T>
MatMap<T> as_mat(Tensor<T>& t, int rows, int cols) {
    return MatMap<T>(t.data(), rows, cols);
}

// Number of leading rows when the last axis is treated as the feature axis.
template <typename T>
int leading_rows(const Tensor<T>& t) {
    return static_cast<int>(t.size()) / t.dim(t.rank() - 1);
}

} // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
    const auto& av = a.value();
    const auto& bv = b.value();
    if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
        throw DimError("matmul: incompatible shapes " + shape_str(av.shape()) + " and " +
                       shape_str(bv.shape()));
    }
    const int m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    Tensor<T> out({m, n});
    detail::as_mat(out, m, n).noalias() = detail::as_mat(av, m, k) * detail::as_mat(bv, k, n);
    return Var<T>::op(std::move(out), {a, b}, [&](Node<T>* o) {
        o->backward_fn = [an = a.node_ptr(), bn = b.node_ptr(), o, m, k, n]() {
            ConstMatMap<T> g(o->grad.data(), m, n);
            if (an->requires_grad) {
                detail::as_mat(an->grad_acc(), m, k).noalias() +=
                    g * detail::as_mat(bn->value, k, n).transpose();
            }
            if (bn->requires_grad) {
                detail::as_mat(bn->grad_acc(), k, n).noalias() +=
                    detail::as_mat(an->value, m, k).transpose() * g;
            }
        };
    });
}

template <typename T>
Var<T> transpose2d(const Var<T>& x) {
    const auto& xv = x.value();
    if (xv.rank() != 2) throw DimError("transpose2d: expected rank-2, got " + shape_str(xv.shape()));
    const int m = xv.dim(0), n = xv.dim(1);
    Tensor<T> out({n, m});
    detail::as_mat(out, n, m).noalias() = detail::as_mat(xv, m, n).transpose();
    return Var<T>::op(std::move(out), {x}, [&](Node<T>* o) {
        o->backward_fn = [xn = x.node_ptr(), o, m, n]() {
            if (!xn->requires_grad) return;
            detail::as_mat(xn->grad_acc(), m, n).noalias() +=
                ConstMatMap<T>(o->grad.data(), n, m).transpose();
        };
    });
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
    const auto& xv = x.value();
    if (shape_numel(shape) != xv.size()) {
        throw DimError("reshape: cannot view " + shape_str(xv.shape()) + " as " + shape_str(shape));
    }
    Tensor<T> out(std::move(shape), xv.vec());
    return Var<T>::op(std::move(out), {x}, [&](Node<T>* o) {
        o->backward_fn = [xn = x.node_ptr(), o]() {
            if (!xn->requires_grad) return;
            auto& g = xn->grad_acc();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
        };
    });
}

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                       shape_str(b.shape()));
    }
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    check_same_shape(a.value(), b.value(), "add");
    Tensor<T> out(a.value().shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
    return Var<T>::op(std::move(out), {a, b}, [&](Node<T>* o) {
        o->backward_fn = [an = a.node_ptr(), bn = b.node_ptr(), o]() {
            if (an->requires_grad) {
                auto& g = an->grad_acc();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
            }
            if (bn->requires_grad) {
                auto& g = bn->grad_acc();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
            }
        };
    });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
    check_same_shape(a.value(), b.value(), "sub");
    Tensor<T> out(a.value().shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
    return Var<T>::op(std::move(out), {a, b}, [&](Node<T>* o) {
        o->backward_fn = [an = a.node_ptr(), bn = b.node_ptr(), o]() {
            if (an->requires_grad) {
                auto& g = an->grad_acc();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
            }
            if (bn->requires_grad) {
                auto& g = bn->grad_acc();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] -= o->grad[i];
            }
        };
    });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
    check_same_shape(a.value(), b.value(), "mul");
    Tensor<T> out(a.value().shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
    return Var<T>::op(std::move(out), {a, b}, [&](Node<T>* o) {
        o->backward_fn = [an = a.node_ptr(), bn = b.node_ptr(), o]() {
            if (an->requires_grad) {
                auto& g = an->grad_acc();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] * bn->value[i];
            }
            if (bn->requires_grad) {
                auto& g = bn->grad_acc();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] * an->value[i];
            }
        };
    });
}

template <typename T>
Var<T> scale(const Var<T>& x, T c) {
    Tensor<T> out(x.value().shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.value()[i] * c;
    return Var<T>::op(std::move(out), {x}, [&](Node<T>* o) {
        o->backward_fn = [xn = x.node_ptr(), o, c]() {
            if (!xn->requires_grad) return;
            auto& g = xn->grad_acc();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] * c;
        };
    });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
    Tensor<T> out(x.value().shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.value()[i] > T(0) ? x.value()[i] : T(0);
    return Var<T>::op(std::move(out), {x}, [&](Node<T>* o) {
        o->backward_fn = [xn = x.node_ptr(), o]() {
            if (!xn->requires_grad) return;
            auto& g = xn->grad_acc();
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (xn->value[i] > T(0)) g[i] += o->grad[i];
            }
        };
    });
}

// Tanh approximation of GELU.
template <typename T>
Var<T> gelu(const Var<T>& x) {
    const T c = T(0.7978845608028654); // sqrt(2/pi)
    const T a = T(0.044715);
    Tensor<T> out(x.value().shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const T v = x.value()[i];
        out[i] = T(0.5) * v * (T(1) + std::tanh(c * (v + a * v * v * v)));
    }
    return Var<T>::op(std::move(out), {x}, [&](Node<T>* o) {
        o->backward_fn = [xn = x.node_ptr(), o, c, a]() {
            if (!xn->requires_grad) return;
            auto& g = xn->grad_acc();
            for (std::size_t i = 0; i < g.size(); ++i) {
                const T v = xn->value[i];
                const T th = std::tanh(c * (v + a * v * v * v));
                const T d = T(0.5) * (T(1) + th) +
                            T(0.5) * v * (T(1) - th * th) * c * (T(1) + T(3) * a * v * v);
                g[i] += o->grad[i] * d;
            }
        };
    });
}

template <typename T>
Var<T> log(const Var<T>& x) {
    Tensor<T> out(x.value().shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!(x.value()[i] > T(0))) throw NumericError("log: non-positive input");
        out[i] = std::log(x.value()[i]);
    }
    return Var<T>::op(std::move(out), {x}, [&](Node<T>* o) {
        o->backward_fn = [xn = x.node_ptr(), o]() {
            if (!xn->requires_grad) return;
            auto& g = xn->grad_acc();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] / xn->value[i];
        };
    });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
    Tensor<T> out(x.value().shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const T v = x.value()[i];
        out[i] = v >= T(0) ? T(1) / (T(1) + std::exp(-v))
                           : std::exp(v) / (T(1) + std::exp(v));
    }
    return Var<T>::op(std::move(out), {x}, [&](Node<T>* o) {
        o->backward_fn = [xn = x.node_ptr(), o]() {
            if (!xn->requires_grad) return;
            auto& g = xn->grad_acc();
            for (std::size_t i = 0; i < g.size(); ++i) {
                const T s = o->value[i];
                g[i] += o->grad[i] * s * (T(1) - s);
            }
        };
    });
}

// ---------------------------------------------------------------------------
// Trailing-axis affine broadcasts (the only broadcasting in the library)
// ---------------------------------------------------------------------------

template <typename T>
void check_rowvec(const Tensor<T>& x, const Tensor<T>& v, const char* op) {
    if (x.rank() < 1 || v.rank() != 1 || x.dim(x.rank() - 1) != v.dim(0)) {
        throw DimError(std::string(op) + ": cannot broadcast " + shape_str(v.shape()) + " over " +
                       shape_str(x.shape()));
    }
}

template <typename T>
Var<T> add_rowvec(const Var<T>& x, const Var<T>& v) {
    check_rowvec(x.value(), v.value(), "add_rowvec");
    const int cols = v.value().dim(0);
    const int rows = detail::leading_rows(x.value());
    Tensor<T> out(x.value().shape());
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            out[static_cast<std::size_t>(r) * cols + c] =
                x.value()[static_cast<std::size_t>(r) * cols + c] + v.value()[c];
    return Var<T>::op(std::move(out), {x, v}, [&](Node<T>* o) {
        o->backward_fn = [xn = x.node_ptr(), vn = v.node_ptr(), o, rows, cols]() {
            if (xn->requires_grad) {
                auto& g = xn->grad_acc();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
            }
            if (vn->requires_grad) {
                auto& g = vn->grad_acc();
                for (int r = 0; r < rows; ++r)
                    for (int c = 0; c < cols; ++c)
                        g[c] += o->grad[static_cast<std::size_t>(r) * cols + c];
            }
        };
    });
}

template <typename T>
Var<T> mul_rowvec(const Var<T>& x, const Var<T>& v) {
    check_rowvec(x.value(), v.value(), "mul_rowvec");
    const int cols = v.value().dim(0);
    const int rows = detail::leading_rows(x.value());
    Tensor<T> out(x.value().shape());
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            out[static_cast<std::size_t>(r) * cols + c] =
                x.value()[static_cast<std::size_t>(r) * cols + c] * v.value()[c];
    return Var<T>::op(std::move(out), {x, v}, [&](Node<T>* o) {
        o->backward_fn = [xn = x.node_ptr(), vn = v.node_ptr(), o, rows, cols]() {
            if (xn->requires_grad) {
                auto& g = xn->grad_acc();
                for (int r = 0; r < rows; ++r)
                    for (int c = 0; c < cols; ++c)
                        g[static_cast<std::size_t>(r) * cols + c] +=
                            o->grad[static_cast<std::size_t>(r) * cols + c] * vn->value[c];
            }
            if (vn->requires_grad) {
                auto& g = vn->grad_acc();
                for (int r = 0; r < rows; ++r)
                    for (int c = 0; c < cols; ++c)
                        g[c] += o->grad[static_cast<std::size_t>(r) * cols + c] *
                                xn->value[static_cast<std::size_t>(r) * cols + c];
            }
        };
    });
}

// ---------------------------------------------------------------------------
// Normalizations and softmax
// ---------------------------------------------------------------------------

template <typename T>
Var<T> softmax_last(const Var<T>& x) {
    const auto& xv = x.value();
    if (xv.rank() < 1) throw DimError("softmax_last: scalar input");
    const int n = xv.dim(xv.rank() - 1);
    const int rows = detail::leading_rows(xv);
    for (std::size_t i = 0; i < xv.size(); ++i) {
        if (!std::isfinite(xv[i])) throw NumericError("softmax_last: non-finite input");
    }
    Tensor<T> out(xv.shape());
    for (int r = 0; r < rows; ++r) {
        const T* in = xv.data() + static_cast<std::size_t>(r) * n;
        T* y = out.data() + static_cast<std::size_t>(r) * n;
        T mx = in[0];
        for (int c = 1; c < n; ++c) mx = std::max(mx, in[c]);
        T sum = T(0);
        for (int c = 0; c < n; ++c) {
            y[c] = std::exp(in[c] - mx);
            sum += y[c];
        }
        for (int c = 0; c < n; ++c) y[c] /= sum;
    }
    return Var<T>::op(std::move(out), {x}, [&](Node<T>* o) {
        o->backward_fn = [xn = x.node_ptr(), o, rows, n]() {
            if (!xn->requires_grad) return;
            auto& g = xn->grad_acc();
            for (int r = 0; r < rows; ++r) {
                const T* y = o->value.data() + static_cast<std::size_t>(r) * n;
                const T* gy = o->grad.data() + static_cast<std::size_t>(r) * n;
                T* gx = g.data() + static_cast<std::size_t>(r) * n;
                T dot = T(0);
                for (int c = 0; c < n; ++c) dot += gy[c] * y[c];
                for (int c = 0; c < n; ++c) gx[c] += y[c] * (gy[c] - dot);
            }
        };
    });
}

template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gain, const Var<T>& bias, T eps = T(1e-5)) {
    const auto& xv = x.value();
    check_rowvec(xv, gain.value(), "layer_norm");
    check_rowvec(xv, bias.value(), "layer_norm");
    if (!(eps > T(0))) throw ConfigError("layer_norm: eps must be positive");
    const int d = xv.dim(xv.rank() - 1);
    const int rows = detail::leading_rows(xv);
    Tensor<T> out(xv.shape());
    Tensor<T> xhat(xv.shape());
    Tensor<T> inv_std({rows});
    for (int r = 0; r < rows; ++r) {
        const T* in = xv.data() + static_cast<std::size_t>(r) * d;
        T mu = T(0);
        for (int c = 0; c < d; ++c) mu += in[c];
        mu /= T(d);
        T var = T(0);
        for (int c = 0; c < d; ++c) var += (in[c] - mu) * (in[c] - mu);
        var /= T(d);
        const T inv = T(1) / std::sqrt(var + eps);
        inv_std[r] = inv;
        T* xh = xhat.data() + static_cast<std::size_t>(r) * d;
        T* y = out.data() + static_cast<std::size_t>(r) * d;
        for (int c = 0; c < d; ++c) {
            xh[c] = (in[c] - mu) * inv;
            y[c] = xh[c] * gain.value()[c] + bias.value()[c];
        }
    }
    return Var<T>::op(std::move(out), {x, gain, bias}, [&](Node<T>* o) {
        o->backward_fn = [xn = x.node_ptr(), gn = gain.node_ptr(), bn = bias.node_ptr(), o,
                          xhat = std::move(xhat), inv_std = std::move(inv_std), rows, d]() {
            for (int r = 0; r < rows; ++r) {
                const T* xh = xhat.data() + static_cast<std::size_t>(r) * d;
                const T* gy = o->grad.data() + static_cast<std::size_t>(r) * d;
                if (gn->requires_grad) {
                    auto& gg = gn->grad_acc();
                    for (int c = 0; c < d; ++c) gg[c] += gy[c] * xh[c];
                }
                if (bn->requires_grad) {
                    auto& gb = bn->grad_acc();
                    for (int c = 0; c < d; ++c) gb[c] += gy[c];
                }
                if (xn->requires_grad) {
                    auto& gx = xn->grad_acc();
                    T* gxr = gx.data() + static_cast<std::size_t>(r) * d;
                    T mean_gyg = T(0), mean_gyg_xh = T(0);
                    for (int c = 0; c < d; ++c) {
                        const T t = gy[c] * gn->value[c];
                        mean_gyg += t;
                        mean_gyg_xh += t * xh[c];
                    }
                    mean_gyg /= T(d);
                    mean_gyg_xh /= T(d);
                    for (int c = 0; c < d; ++c) {
                        const T t = gy[c] * gn->value[c];
                        gxr[c] += inv_std[r] * (t - mean_gyg - xh[c] * mean_gyg_xh);
                    }
                }
            }
        };
    });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <typename T>
Var<T> sum(const Var<T>& x) {
    T s = T(0);
    for (std::size_t i = 0; i < x.size(); ++i) s += x.value()[i];
    return Var<T>::op(Tensor<T>::scalar(s), {x}, [&](Node<T>* o) {
        o->backward_fn = [xn = x.node_ptr(), o]() {
            if (!xn->requires_grad) return;
            auto& g = xn->grad_acc();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[0];
        };
    });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
    T s = T(0);
    for (std::size_t i = 0; i < x.size(); ++i) s += x.value()[i];
    const T n = static_cast<T>(x.size());
    return Var<T>::op(Tensor<T>::scalar(s / n), {x}, [&](Node<T>* o) {
        o->backward_fn = [xn = x.node_ptr(), o, n]() {
            if (!xn->requires_grad) return;
            auto& g = xn->grad_acc();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[0] / n;
        };
    });
}

// ---------------------------------------------------------------------------
// Gather / concat / token layout
// ---------------------------------------------------------------------------

template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, int axis) {
    if (parts.empty()) throw UsageError("concat: no inputs");
    const auto& first = parts.front().value();
    if (axis < 0 || axis >= first.rank()) throw DimError("concat: invalid axis");
    Shape out_shape = first.shape();
    for (std::size_t p = 1; p < parts.size(); ++p) {
        const auto& s = parts[p].value().shape();
        if (static_cast<int>(s.size()) != first.rank()) {
            throw DimError("concat: rank mismatch " + shape_str(s) + " vs " + shape_str(first.shape()));
        }
        for (int i = 0; i < first.rank(); ++i) {
            if (i != axis && s[static_cast<std::size_t>(i)] != first.dim(i)) {
                throw DimError("concat: shape mismatch " + shape_str(s) + " vs " +
                               shape_str(first.shape()) + " on axis " + std::to_string(i));
            }
        }
        out_shape[static_cast<std::size_t>(axis)] += s[static_cast<std::size_t>(axis)];
    }

    std::size_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(first.dim(i));
    for (int i = axis + 1; i < first.rank(); ++i) inner *= static_cast<std::size_t>(first.dim(i));

    Tensor<T> out(out_shape);
    const std::size_t out_axis = static_cast<std::size_t>(out_shape[static_cast<std::size_t>(axis)]);
    std::vector<std::size_t> offsets(parts.size());
    {
        std::size_t off = 0;
        for (std::size_t p = 0; p < parts.size(); ++p) {
            offsets[p] = off;
            const std::size_t ax = static_cast<std::size_t>(
                parts[p].value().dim(axis));
            for (std::size_t o = 0; o < outer; ++o) {
                const T* src = parts[p].value().data() + o * ax * inner;
                T* dst = out.data() + (o * out_axis + off) * inner;
                std::copy(src, src + ax * inner, dst);
            }
            off += ax;
        }
    }

    Var<T> result = Var<T>::leaf(std::move(out), false);
    if (!grad_enabled()) return result;
    bool wants = false;
    for (const auto& p : parts) wants = wants || p.requires_grad();
    if (!wants) return result;

    Node<T>* o = result.node();
    o->requires_grad = true;
    std::vector<std::shared_ptr<Node<T>>> pn;
    pn.reserve(parts.size());
    for (const auto& p : parts) {
        o->parents.push_back(p.node_ptr());
        pn.push_back(p.node_ptr());
    }
    o->backward_fn = [pn = std::move(pn), offsets, o, outer, inner, out_axis, axis]() {
        for (std::size_t p = 0; p < pn.size(); ++p) {
            if (!pn[p]->requires_grad) continue;
            auto& g = pn[p]->grad_acc();
            const std::size_t ax = static_cast<std::size_t>(pn[p]->value.dim(axis));
            for (std::size_t ou = 0; ou < outer; ++ou) {
                const T* src = o->grad.data() + (ou * out_axis + offsets[p]) * inner;
                T* dst = g.data() + ou * ax * inner;
                for (std::size_t i = 0; i < ax * inner; ++i) dst[i] += src[i];
            }
        }
    };
    return result;
}

template <typename T>
Var<T> gather_rows(const Var<T>& x, std::vector<int> idx) {
    const auto& xv = x.value();
    if (xv.rank() != 2) throw DimError("gather_rows: expected rank-2, got " + shape_str(xv.shape()));
    const int n = xv.dim(0), d = xv.dim(1);
    for (int i : idx) {
        if (i < 0 || i >= n) throw UsageError("gather_rows: row index " + std::to_string(i) + " out of range");
    }
    const int m = static_cast<int>(idx.size());
    Tensor<T> out({m, d});
    for (int r = 0; r < m; ++r) {
        const T* src = xv.data() + static_cast<std::size_t>(idx[static_cast<std::size_t>(r)]) * d;
        std::copy(src, src + d, out.data() + static_cast<std::size_t>(r) * d);
    }
    return Var<T>::op(std::move(out), {x}, [&](Node<T>* o) {
        o->backward_fn = [xn = x.node_ptr(), o, idx = std::move(idx), d]() {
            if (!xn->requires_grad) return;
            auto& g = xn->grad_acc();
            for (std::size_t r = 0; r < idx.size(); ++r) {
                const T* src = o->grad.data() + r * d;
                T* dst = g.data() + static_cast<std::size_t>(idx[r]) * d;
                for (int c = 0; c < d; ++c) dst[c] += src[c];
            }
        };
    });
}

// [C,H,W] feature map -> [H*W, C] token matrix, row-major over (row, col).
template <typename T>
Var<T> chw_to_tokens(const Var<T>& x) {
    const auto& xv = x.value();
    if (xv.rank() != 3) throw DimError("chw_to_tokens: expected rank-3, got " + shape_str(xv.shape()));
    const int c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
    const int n = h * w;
    Tensor<T> out({n, c});
    for (int ch = 0; ch < c; ++ch)
        for (int t = 0; t < n; ++t)
            out[static_cast<std::size_t>(t) * c + ch] = xv[static_cast<std::size_t>(ch) * n + t];
    return Var<T>::op(std::move(out), {x}, [&](Node<T>* o) {
        o->backward_fn = [xn = x.node_ptr(), o, c, n]() {
            if (!xn->requires_grad) return;
            auto& g = xn->grad_acc();
            for (int ch = 0; ch < c; ++ch)
                for (int t = 0; t < n; ++t)
                    g[static_cast<std::size_t>(ch) * n + t] += o->grad[static_cast<std::size_t>(t) * c + ch];
        };
    });
}

template <typename T>
Var<T> tokens_to_chw(const Var<T>& x, int h, int w) {
    const auto& xv = x.value();
    if (xv.rank() != 2 || xv.dim(0) != h * w) {
        throw DimError("tokens_to_chw: cannot view " + shape_str(xv.shape()) + " as a " +
                       std::to_string(h) + "x" + std::to_string(w) + " grid");
    }
    const int c = xv.dim(1);
    const int n = h * w;
    Tensor<T> out({c, h, w});
    for (int t = 0; t < n; ++t)
        for (int ch = 0; ch < c; ++ch)
            out[static_cast<std::size_t>(ch) * n + t] = xv[static_cast<std::size_t>(t) * c + ch];
    return Var<T>::op(std::move(out), {x}, [&](Node<T>* o) {
        o->backward_fn = [xn = x.node_ptr(), o, c, n]() {
            if (!xn->requires_grad) return;
            auto& g = xn->grad_acc();
            for (int t = 0; t < n; ++t)
                for (int ch = 0; ch < c; ++ch)
                    g[static_cast<std::size_t>(t) * c + ch] += o->grad[static_cast<std::size_t>(ch) * n + t];
        };
    });
}

// ---------------------------------------------------------------------------
// Vector normalization
// ---------------------------------------------------------------------------

template <typename T>
Var<T> l2_normalize(const Var<T>& x) {
    const auto& xv = x.value();
    if (xv.rank() != 1) throw DimError("l2_normalize: expected rank-1, got " + shape_str(xv.shape()));
    T n2 = T(0);
    for (std::size_t i = 0; i < xv.size(); ++i) n2 += xv[i] * xv[i];
    const T norm = std::sqrt(n2);
    if (!(norm > T(0))) throw NumericError("l2_normalize: degenerate zero-norm vector");
    Tensor<T> out(xv.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] / norm;
    return Var<T>::op(std::move(out), {x}, [&](Node<T>* o) {
        o->backward_fn = [xn = x.node_ptr(), o, norm]() {
            if (!xn->requires_grad) return;
            auto& g = xn->grad_acc();
            T dot = T(0);
            for (std::size_t i = 0; i < g.size(); ++i) dot += o->grad[i] * o->value[i];
            for (std::size_t i = 0; i < g.size(); ++i) {
                g[i] += (o->grad[i] - o->value[i] * dot) / norm;
            }
        };
    });
}

} // namespace crossview
