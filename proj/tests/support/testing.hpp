#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "crossview/autograd.hpp"
#include "crossview/ops.hpp"
#include "crossview/tensor.hpp"

namespace crossview::testsupport {

inline Tensor<double> random_tensor(Shape shape, std::mt19937& rng, double lo = -1.0,
                                    double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Tensor<double> t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
    return t;
}

// Values spaced at least `gap` apart (random order), for kinked ops such as
// relu/maxpool where finite differences need the argmax/sign to be stable.
inline Tensor<double> random_tensor_spaced(Shape shape, std::mt19937& rng, double gap = 0.05) {
    Tensor<double> t(std::move(shape));
    const std::size_t n = t.size();
    std::vector<double> vals(n);
    std::uniform_real_distribution<double> jitter(0.3 * gap, 0.7 * gap);
    for (std::size_t i = 0; i < n; ++i) vals[i] = (static_cast<double>(i) + 1.0) * gap + jitter(rng);
    std::shuffle(vals.begin(), vals.end(), rng);
    std::uniform_int_distribution<int> sign(0, 1);
    for (std::size_t i = 0; i < n; ++i) t[i] = sign(rng) ? vals[i] : -vals[i];
    return t;
}

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::size_t checked = 0;
};

// Central finite differences against the recorded gradients. `forward` must
// rebuild the graph from the leaves on every call and return a scalar loss.
// Relative error uses an absolute floor so near-zero components are judged
// against 1e-4 * floor.
inline GradCheckResult grad_check(std::vector<Var<double>>& leaves,
                                  const std::function<Var<double>()>& forward, double h = 1e-5,
                                  double floor = 1e-2) {
    Var<double> loss = forward();
    backward(loss);

    std::vector<Tensor<double>> analytic;
    analytic.reserve(leaves.size());
    for (auto& leaf : leaves) {
        analytic.push_back(leaf.has_grad() ? leaf.grad() : Tensor<double>(leaf.shape()));
        leaf.clear_grad();
    }

    GradCheckResult res;
    NoGradGuard ng;
    for (std::size_t p = 0; p < leaves.size(); ++p) {
        auto& value = leaves[p].value();
        for (std::size_t i = 0; i < value.size(); ++i) {
            const double keep = value[i];
            value[i] = keep + h;
            const double up = forward().value()[0];
            value[i] = keep - h;
            const double down = forward().value()[0];
            value[i] = keep;
            const double fd = (up - down) / (2.0 * h);
            const double ga = analytic[p][i];
            const double denom = std::max({std::abs(fd), std::abs(ga), floor});
            res.max_rel_err = std::max(res.max_rel_err, std::abs(fd - ga) / denom);
            ++res.checked;
        }
    }
    return res;
}

// Weighted-sum head turning a tensor output into a scalar so the full Jacobian
// is exercised (plain sum lets sign errors cancel). Weights are a fixed
// function of the element index so repeated forward calls see the same loss.
inline Var<double> weighted_sum(const Var<double>& out) {
    Tensor<double> w(out.shape());
    for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = 0.25 + static_cast<double>((i * 2654435761u) % 97) / 97.0;
    }
    return sum(mul(out, Var<double>::leaf(std::move(w))));
}

} // namespace crossview::testsupport
