#include <gtest/gtest.h>

#include <random>

#include "crossview/conv.hpp"
#include "crossview/ops.hpp"
#include "support/testing.hpp"

using namespace crossview;
using crossview::testsupport::grad_check;
using crossview::testsupport::random_tensor;
using crossview::testsupport::random_tensor_spaced;
using crossview::testsupport::weighted_sum;

namespace {

constexpr int kInstances = 20;
constexpr double kTol = 1e-4;

int rand_dim(std::mt19937& rng, int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

} // namespace

TEST(GradCheck, Matmul) {
    std::mt19937 rng(101);
    for (int i = 0; i < kInstances; ++i) {
        const int m = rand_dim(rng, 1, 4), k = rand_dim(rng, 1, 4), n = rand_dim(rng, 1, 4);
        std::vector<Var<double>> leaves{Var<double>::leaf(random_tensor({m, k}, rng), true),
                                        Var<double>::leaf(random_tensor({k, n}, rng), true)};
        auto res = grad_check(leaves, [&] { return weighted_sum(matmul(leaves[0], leaves[1])); });
        EXPECT_LE(res.max_rel_err, kTol);
    }
}

TEST(GradCheck, TransposeAndReshape) {
    std::mt19937 rng(102);
    for (int i = 0; i < kInstances; ++i) {
        const int m = rand_dim(rng, 1, 4), n = rand_dim(rng, 1, 5);
        std::vector<Var<double>> leaves{Var<double>::leaf(random_tensor({m, n}, rng), true)};
        auto res = grad_check(leaves, [&] {
            return weighted_sum(reshape(transpose2d(leaves[0]), {m * n}));
        });
        EXPECT_LE(res.max_rel_err, kTol);
    }
}

TEST(GradCheck, ElementwiseAddSubMulScale) {
    std::mt19937 rng(103);
    for (int i = 0; i < kInstances; ++i) {
        const int n = rand_dim(rng, 1, 8);
        std::vector<Var<double>> leaves{Var<double>::leaf(random_tensor({n}, rng), true),
                                        Var<double>::leaf(random_tensor({n}, rng), true)};
        auto res = grad_check(leaves, [&] {
            auto s = add(mul(leaves[0], leaves[1]), sub(leaves[0], leaves[1]));
            return weighted_sum(scale(s, 1.75));
        });
        EXPECT_LE(res.max_rel_err, kTol);
    }
}

TEST(GradCheck, Activations) {
    std::mt19937 rng(104);
    for (int i = 0; i < kInstances; ++i) {
        const int n = rand_dim(rng, 2, 10);
        // Keep relu inputs away from the kink.
        std::vector<Var<double>> leaves{Var<double>::leaf(random_tensor_spaced({n}, rng), true)};
        auto res = grad_check(leaves, [&] {
            auto y = add(relu(leaves[0]), add(gelu(leaves[0]), sigmoid(leaves[0])));
            return weighted_sum(y);
        });
        EXPECT_LE(res.max_rel_err, kTol);
    }
}

TEST(GradCheck, RowvecBroadcasts) {
    std::mt19937 rng(105);
    for (int i = 0; i < kInstances; ++i) {
        const int r = rand_dim(rng, 1, 4), c = rand_dim(rng, 1, 5);
        std::vector<Var<double>> leaves{Var<double>::leaf(random_tensor({r, c}, rng), true),
                                        Var<double>::leaf(random_tensor({c}, rng), true),
                                        Var<double>::leaf(random_tensor({c}, rng), true)};
        auto res = grad_check(leaves, [&] {
            return weighted_sum(mul_rowvec(add_rowvec(leaves[0], leaves[1]), leaves[2]));
        });
        EXPECT_LE(res.max_rel_err, kTol);
    }
}

TEST(GradCheck, SoftmaxLast) {
    std::mt19937 rng(106);
    for (int i = 0; i < kInstances; ++i) {
        const int r = rand_dim(rng, 1, 4), n = rand_dim(rng, 2, 6);
        std::vector<Var<double>> leaves{Var<double>::leaf(random_tensor({r, n}, rng, -2, 2), true)};
        auto res = grad_check(leaves, [&] { return weighted_sum(softmax_last(leaves[0])); });
        EXPECT_LE(res.max_rel_err, kTol);
    }
}

TEST(GradCheck, SoftmaxCrossEntropyToy) {
    // -log softmax(x)[target] against central differences.
    std::mt19937 rng(107);
    for (int i = 0; i < kInstances; ++i) {
        const int n = rand_dim(rng, 2, 6);
        const int target = rand_dim(rng, 0, n - 1);
        std::vector<Var<double>> leaves{Var<double>::leaf(random_tensor({n}, rng, -2, 2), true)};
        Tensor<double> one_hot({n});
        one_hot[static_cast<std::size_t>(target)] = 1.0;
        auto res = grad_check(leaves, [&] {
            auto p = softmax_last(leaves[0]);
            auto p_t = sum(mul(p, Var<double>::leaf(one_hot)));
            return scale(log(p_t), -1.0);
        });
        EXPECT_LE(res.max_rel_err, kTol);
    }
}

TEST(GradCheck, LayerNorm) {
    std::mt19937 rng(108);
    for (int i = 0; i < kInstances; ++i) {
        const int r = rand_dim(rng, 1, 3), d = rand_dim(rng, 2, 6);
        std::vector<Var<double>> leaves{Var<double>::leaf(random_tensor({r, d}, rng), true),
                                        Var<double>::leaf(random_tensor({d}, rng, 0.5, 1.5), true),
                                        Var<double>::leaf(random_tensor({d}, rng), true)};
        auto res = grad_check(leaves, [&] {
            return weighted_sum(layer_norm(leaves[0], leaves[1], leaves[2]));
        });
        EXPECT_LE(res.max_rel_err, kTol);
    }
}

TEST(GradCheck, Reductions) {
    std::mt19937 rng(109);
    for (int i = 0; i < kInstances; ++i) {
        const int n = rand_dim(rng, 1, 9);
        std::vector<Var<double>> leaves{Var<double>::leaf(random_tensor({n}, rng), true)};
        auto res = grad_check(leaves, [&] { return add(sum(mul(leaves[0], leaves[0])), mean(leaves[0])); });
        EXPECT_LE(res.max_rel_err, kTol);
    }
}

TEST(GradCheck, ConcatAndGather) {
    std::mt19937 rng(110);
    for (int i = 0; i < kInstances; ++i) {
        const int d = rand_dim(rng, 1, 4);
        const int n1 = rand_dim(rng, 1, 3), n2 = rand_dim(rng, 1, 3);
        std::vector<Var<double>> leaves{Var<double>::leaf(random_tensor({n1, d}, rng), true),
                                        Var<double>::leaf(random_tensor({n2, d}, rng), true)};
        std::vector<int> idx;
        for (int r = 0; r < n1 + n2; ++r) idx.push_back((n1 + n2) - 1 - r);
        idx.push_back(0); // repeated row exercises gradient accumulation
        auto res = grad_check(leaves, [&] {
            auto cat = concat<double>({leaves[0], leaves[1]}, 0);
            return weighted_sum(gather_rows(cat, idx));
        });
        EXPECT_LE(res.max_rel_err, kTol);
    }
}

TEST(GradCheck, TokenLayout) {
    std::mt19937 rng(111);
    for (int i = 0; i < kInstances; ++i) {
        const int c = rand_dim(rng, 1, 4), h = rand_dim(rng, 1, 3), w = rand_dim(rng, 1, 3);
        std::vector<Var<double>> leaves{Var<double>::leaf(random_tensor({c, h, w}, rng), true)};
        auto res = grad_check(leaves, [&] {
            return weighted_sum(tokens_to_chw(chw_to_tokens(leaves[0]), h, w));
        });
        EXPECT_LE(res.max_rel_err, kTol);
    }
}

TEST(GradCheck, L2Normalize) {
    std::mt19937 rng(112);
    for (int i = 0; i < kInstances; ++i) {
        const int n = rand_dim(rng, 2, 8);
        auto t = random_tensor({n}, rng);
        t[0] += 2.0; // keep the norm well away from zero
        std::vector<Var<double>> leaves{Var<double>::leaf(std::move(t), true)};
        auto res = grad_check(leaves, [&] { return weighted_sum(l2_normalize(leaves[0])); });
        EXPECT_LE(res.max_rel_err, kTol);
    }
}

TEST(GradCheck, Conv2d) {
    std::mt19937 rng(113);
    for (int i = 0; i < kInstances; ++i) {
        const int cin = rand_dim(rng, 1, 2), cout = rand_dim(rng, 1, 2);
        const int h = rand_dim(rng, 3, 5), w = rand_dim(rng, 3, 5);
        std::vector<Var<double>> leaves{
            Var<double>::leaf(random_tensor({cin, h, w}, rng), true),
            Var<double>::leaf(random_tensor({cout, cin, 3, 3}, rng), true),
            Var<double>::leaf(random_tensor({cout}, rng), true)};
        auto res = grad_check(leaves, [&] {
            return weighted_sum(bias_add_chw(conv2d(leaves[0], leaves[1], 1, 1), leaves[2]));
        });
        EXPECT_LE(res.max_rel_err, kTol);
    }
}

TEST(GradCheck, ScaleChannels) {
    std::mt19937 rng(114);
    for (int i = 0; i < kInstances; ++i) {
        const int c = rand_dim(rng, 1, 3), h = rand_dim(rng, 1, 3), w = rand_dim(rng, 1, 3);
        std::vector<Var<double>> leaves{Var<double>::leaf(random_tensor({c, h, w}, rng), true),
                                        Var<double>::leaf(random_tensor({c}, rng), true)};
        auto res = grad_check(leaves, [&] {
            return weighted_sum(scale_channels_chw(leaves[0], leaves[1]));
        });
        EXPECT_LE(res.max_rel_err, kTol);
    }
}

TEST(GradCheck, MaxpoolAndGlobalAvg) {
    std::mt19937 rng(115);
    for (int i = 0; i < kInstances; ++i) {
        const int c = rand_dim(rng, 1, 2);
        // Spaced values keep the argmax stable under the probe step.
        std::vector<Var<double>> leaves{Var<double>::leaf(random_tensor_spaced({c, 4, 4}, rng), true)};
        auto res = grad_check(leaves, [&] {
            auto p = maxpool2d(leaves[0], 2, 2);
            return weighted_sum(global_avg_pool(p));
        });
        EXPECT_LE(res.max_rel_err, kTol);
    }
}
