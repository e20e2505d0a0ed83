#include <gtest/gtest.h>

#include <random>

#include "crossview/fcu.hpp"
#include "crossview/model.hpp"
#include "support/reference.hpp"
#include "support/testing.hpp"

using namespace crossview;

namespace {

template <typename T>
ParamList<T> collect(FcuParams<T>& p) {
    ParamList<T> list;
    p.register_params("f", list);
    return list;
}

} // namespace

TEST(AttentionProjectTest, ZeroParamsGiveZeroMaps) {
    auto params = FcuParams<double>::make(3, 4);
    std::mt19937 rng(1);
    auto m = Var<double>::leaf(testsupport::random_tensor({4, 2, 3}, rng));
    auto a = attention_project(m, params);
    EXPECT_EQ(a.shape(), (Shape{3, 2, 3}));
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.value()[i], 0.0);
}

TEST(AttentionProjectTest, IdentityKernelCopiesMap) {
    auto params = FcuParams<double>::make(4, 4);
    for (int i = 0; i < 4; ++i) params.w.value()(i, i, 0, 0) = 1.0;
    std::mt19937 rng(2);
    auto m = Var<double>::leaf(testsupport::random_tensor({4, 3, 5}, rng));
    auto a = attention_project(m, params);
    EXPECT_EQ(a.value(), m.value());
}

TEST(AttentionProjectTest, MatchesPerPixelOracle) {
    auto params = FcuParams<double>::make(3, 5);
    auto list = collect(params);
    testsupport::randomize_params(list, 3);
    std::mt19937 rng(5);
    auto m = Var<double>::leaf(testsupport::random_tensor({5, 2, 4}, rng));
    auto a = attention_project(m, params);
    for (int k = 0; k < 3; ++k)
        for (int y = 0; y < 2; ++y)
            for (int x = 0; x < 4; ++x) {
                double s = params.b.value()[k];
                for (int c = 0; c < 5; ++c) s += params.w.value()(k, c, 0, 0) * m.value()(c, y, x);
                EXPECT_NEAR(a.value()(k, y, x), s, 1e-6);
            }
}

TEST(AttentionProjectTest, ChannelMismatchIsError) {
    auto params = FcuParams<double>::make(3, 5);
    EXPECT_THROW(attention_project(Var<double>::leaf(Tensor<double>({4, 2, 2})), params), DimError);
}

TEST(CoupleTest, AllOnesAttentionIsSumPooling) {
    std::mt19937 rng(7);
    const auto f = testsupport::random_tensor({3, 2, 4}, rng);
    auto a = Var<double>::leaf(Tensor<double>::ones({2, 2, 4}));
    auto out = couple(Var<double>::leaf(f), a);
    ASSERT_EQ(out.shape(), (Shape{6}));
    for (int c = 0; c < 3; ++c) {
        double s = 0.0;
        for (int y = 0; y < 2; ++y)
            for (int x = 0; x < 4; ++x) s += f(c, y, x);
        EXPECT_NEAR(out.value()[c], s, 1e-9);      // block of attention map 1
        EXPECT_NEAR(out.value()[3 + c], s, 1e-9);  // block of attention map 2
    }
}

TEST(CoupleTest, ZeroFeaturesGiveZeroDescriptor) {
    std::mt19937 rng(11);
    auto f = Var<double>::leaf(Tensor<double>({3, 2, 2}));
    auto a = Var<double>::leaf(testsupport::random_tensor({2, 2, 2}, rng));
    auto out = couple(f, a);
    for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out.value()[i], 0.0);
}

TEST(CoupleTest, BruteForceEnumerationOracle) {
    std::mt19937 rng(13);
    const auto f = testsupport::random_tensor({2, 2, 2}, rng);
    const auto a = testsupport::random_tensor({2, 2, 2}, rng);
    auto out = couple(Var<double>::leaf(f), Var<double>::leaf(a));
    for (int i = 0; i < 2; ++i)
        for (int c = 0; c < 2; ++c) {
            double s = 0.0;
            for (int y = 0; y < 2; ++y)
                for (int x = 0; x < 2; ++x) s += f(c, y, x) * a(i, y, x);
            EXPECT_NEAR(out.value()[static_cast<std::size_t>(i) * 2 + c], s, 1e-9);
        }
}

TEST(CoupleTest, GridMismatchIsError) {
    EXPECT_THROW(couple(Var<double>::leaf(Tensor<double>({2, 2, 3})),
                        Var<double>::leaf(Tensor<double>({2, 2, 2}))),
                 DimError);
}

TEST(CoupleTest, Bilinearity) {
    std::mt19937 rng(17);
    const auto f = testsupport::random_tensor({3, 2, 3}, rng);
    const auto a1 = testsupport::random_tensor({2, 2, 3}, rng);
    const auto a2 = testsupport::random_tensor({2, 2, 3}, rng);

    auto scaled_f = f;
    for (std::size_t i = 0; i < scaled_f.size(); ++i) scaled_f[i] *= 2.5;
    const auto lhs = couple(Var<double>::leaf(scaled_f), Var<double>::leaf(a1)).value();
    const auto base = couple(Var<double>::leaf(f), Var<double>::leaf(a1)).value();
    for (std::size_t i = 0; i < lhs.size(); ++i) EXPECT_NEAR(lhs[i], 2.5 * base[i], 1e-6);

    auto a_sum = a1;
    for (std::size_t i = 0; i < a_sum.size(); ++i) a_sum[i] += a2[i];
    const auto both = couple(Var<double>::leaf(f), Var<double>::leaf(a_sum)).value();
    const auto second = couple(Var<double>::leaf(f), Var<double>::leaf(a2)).value();
    for (std::size_t i = 0; i < both.size(); ++i) {
        EXPECT_NEAR(both[i], base[i] + second[i], 1e-6);
    }
}

TEST(CoupleTest, GradientMatchesFiniteDifferences) {
    std::mt19937 rng(19);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<Var<double>> leaves{
            Var<double>::leaf(testsupport::random_tensor({2, 2, 3}, rng), true),
            Var<double>::leaf(testsupport::random_tensor({3, 2, 3}, rng), true)};
        auto res = testsupport::grad_check(
            leaves, [&] { return testsupport::weighted_sum(couple(leaves[0], leaves[1])); });
        EXPECT_LE(res.max_rel_err, 1e-4);
    }
}

TEST(NormalizeTest, KnownValuesAndInvariances) {
    auto y = l2_normalize(Var<double>::leaf(Tensor<double>({2}, {3, 4})));
    EXPECT_DOUBLE_EQ(y.value()[0], 0.6);
    EXPECT_DOUBLE_EQ(y.value()[1], 0.8);

    // Already-unit vector is unchanged.
    auto u = l2_normalize(Var<double>::leaf(Tensor<double>({2}, {0.6, 0.8})));
    EXPECT_NEAR(u.value()[0], 0.6, 1e-7);
    EXPECT_NEAR(u.value()[1], 0.8, 1e-7);

    // Scale invariance for positive alpha.
    std::mt19937 rng(23);
    const auto v = testsupport::random_tensor({5}, rng);
    auto scaled = v;
    for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] *= 17.0;
    const auto n1 = l2_normalize(Var<double>::leaf(v)).value();
    const auto n2 = l2_normalize(Var<double>::leaf(scaled)).value();
    for (std::size_t i = 0; i < n1.size(); ++i) EXPECT_NEAR(n1[i], n2[i], 1e-9);
}

TEST(DescriptorTest, LengthIsChannelsTimesAttentionMaps) {
    // Desk scale: C=64, K=4 -> 256. Paper scale: C=512, K=8 -> 4096.
    ModelConfig desk;
    EXPECT_EQ(desk.descriptor_dim(), 64 * 4);
    ModelConfig paper;
    paper.backbone.widths = {64, 128, 256, 512};
    paper.backbone.proj_dim = 768;
    paper.se_reduction = 16;
    paper.attn_k = 8;
    paper.parts_w = 5;
    paper.input_w = 512;
    paper.input_h = 128;
    EXPECT_EQ(paper.descriptor_dim(), 4096);
}

TEST(DescriptorTest, FullPathIsUnitNorm) {
    std::mt19937 rng(29);
    auto params = FcuParams<double>::make(2, 4);
    auto list = collect(params);
    testsupport::randomize_params(list, 31);
    auto f = Var<double>::leaf(testsupport::random_tensor({3, 2, 4}, rng));
    auto m = Var<double>::leaf(testsupport::random_tensor({4, 2, 4}, rng));
    auto desc = fcu_descriptor(f, m, params);
    ASSERT_EQ(desc.shape(), (Shape{6}));
    double norm = 0.0;
    for (std::size_t i = 0; i < desc.size(); ++i) norm += desc.value()[i] * desc.value()[i];
    EXPECT_NEAR(std::sqrt(norm), 1.0, 1e-6);
}
