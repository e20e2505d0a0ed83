#pragma once

#include <cmath>
#include <vector>

#include "crossview/params.hpp"

namespace crossview {

template <typename T>
struct AdamWConfig {
    T lr = T(1e-3);
    T weight_decay = T(0);
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T eps = T(1e-8);

    void validate() const {
        if (!(lr >= T(0))) throw ConfigError("adamw: lr must be >= 0");
        if (!(beta1 > T(0) && beta1 < T(1)) || !(beta2 > T(0) && beta2 < T(1))) {
            throw ConfigError("adamw: betas must lie in (0, 1)");
        }
        if (!(eps > T(0))) throw ConfigError("adamw: eps must be positive");
        if (!(weight_decay >= T(0))) throw ConfigError("adamw: weight decay must be >= 0");
    }
};

// Adam with decoupled weight decay:
//   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
//   theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + lambda * theta)
template <typename T>
class AdamW {
public:
    AdamW(AdamWConfig<T> cfg, const ParamList<T>& params) : cfg_(cfg) {
        cfg_.validate();
        m_.reserve(params.size());
        v_.reserve(params.size());
        for (const auto& p : params) {
            m_.emplace_back(p.var.shape());
            v_.emplace_back(p.var.shape());
        }
    }

    // Parameters without a gradient this step are left untouched.
    void step(ParamList<T>& params) {
        if (params.size() != m_.size()) {
            throw DimError("adamw: parameter list size changed");
        }
        ++t_;
        const T bc1 = T(1) - std::pow(cfg_.beta1, static_cast<T>(t_));
        const T bc2 = T(1) - std::pow(cfg_.beta2, static_cast<T>(t_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto& var = params[i].var;
            if (!var.has_grad()) continue;
            const auto& g = var.grad();
            auto& theta = var.value();
            if (g.shape() != m_[i].shape()) {
                throw DimError("adamw: gradient shape " + shape_str(g.shape()) +
                               " does not match state " + shape_str(m_[i].shape()));
            }
            auto& m = m_[i];
            auto& v = v_[i];
            for (std::size_t j = 0; j < theta.size(); ++j) {
                m[j] = cfg_.beta1 * m[j] + (T(1) - cfg_.beta1) * g[j];
                v[j] = cfg_.beta2 * v[j] + (T(1) - cfg_.beta2) * g[j] * g[j];
                const T m_hat = m[j] / bc1;
                const T v_hat = v[j] / bc2;
                theta[j] -= cfg_.lr * (m_hat / (std::sqrt(v_hat) + cfg_.eps) +
                                       cfg_.weight_decay * theta[j]);
            }
        }
    }

    long long step_count() const { return t_; }
    void set_step_count(long long t) { t_ = t; }

    std::size_t state_count() const { return m_.size(); }
    Tensor<T>& moment1(std::size_t i) { return m_[i]; }
    Tensor<T>& moment2(std::size_t i) { return v_[i]; }
    const Tensor<T>& moment1(std::size_t i) const { return m_[i]; }
    const Tensor<T>& moment2(std::size_t i) const { return v_[i]; }
    const AdamWConfig<T>& config() const { return cfg_; }

private:
    AdamWConfig<T> cfg_;
    long long t_ = 0;
    std::vector<Tensor<T>> m_;
    std::vector<Tensor<T>> v_;
};

} // namespace crossview
