#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <random>

#include "crossview/retrieval.hpp"
#include "crossview/trainer.hpp"
#include "support/testing.hpp"

using namespace crossview;

namespace {

DescriptorDb random_db(int n, int dim, unsigned seed, const std::string& prefix = "q") {
    std::mt19937 rng(seed);
    std::normal_distribution<float> dist;
    DescriptorDb db;
    db.dim = dim;
    for (int i = 0; i < n; ++i) {
        std::vector<float> row(static_cast<std::size_t>(dim));
        float norm = 0;
        for (auto& v : row) {
            v = dist(rng);
            norm += v * v;
        }
        norm = std::sqrt(norm);
        for (auto& v : row) v /= norm;
        db.add(prefix + std::to_string(i), row.data(), dim);
    }
    return db;
}

// Full-sort oracle: rank of the true match with ties broken by gallery index.
std::size_t oracle_rank(const DescriptorDb& q, std::size_t qi, const DescriptorDb& g,
                        std::size_t true_j) {
    std::vector<std::pair<double, std::size_t>> order;
    for (std::size_t j = 0; j < g.count(); ++j) {
        double s = 0;
        for (int c = 0; c < g.dim; ++c) {
            const double d = static_cast<double>(q.row(qi)[c]) - g.row(j)[c];
            s += d * d;
        }
        order.emplace_back(std::sqrt(s), j);
    }
    std::sort(order.begin(), order.end());
    for (std::size_t r = 0; r < order.size(); ++r) {
        if (order[r].second == true_j) return r;
    }
    return order.size();
}

ModelConfig tiny_model_config() {
    ModelConfig cfg;
    cfg.backbone = BackboneConfig{{8}, 1, 3, 8};
    cfg.depth_l = 1;
    cfg.parts_w = 2;
    cfg.mlp_ratio = 2;
    cfg.se_reduction = 2;
    cfg.attn_k = 2;
    cfg.input_w = 32;
    cfg.input_h = 8;
    return cfg;
}

SceneSpec tiny_scene(std::uint64_t seed) {
    SceneSpec spec;
    spec.seed = seed;
    spec.aerial_size = 16;
    spec.ground_w = 32;
    spec.ground_h = 8;
    return spec;
}

} // namespace

TEST(DescriptorDbTest, ValidationRules) {
    auto db = random_db(4, 8, 1);
    EXPECT_NO_THROW(db.validate());

    auto dup = db;
    dup.ids[1] = dup.ids[0];
    EXPECT_THROW(dup.validate(), DataError);

    auto denorm = db;
    denorm.data[3] += 0.5f;
    EXPECT_THROW(denorm.validate(), DataError);

    EXPECT_THROW(db.add("x", db.row(0), 4), DimError);
}

TEST(DescriptorDbTest, FileRoundTripIsBitExact) {
    const auto db = random_db(6, 5, 2);
    const auto path =
        (std::filesystem::temp_directory_path() / "crossview_desc_rt.desc").string();
    save_descriptor_db(path, db);
    const auto back = load_descriptor_db(path);
    EXPECT_EQ(back.ids, db.ids);
    EXPECT_EQ(back.dim, db.dim);
    EXPECT_EQ(back.data, db.data); // float-bit equality
    std::filesystem::remove(path);
}

TEST(RecallTest, SelfRetrievalIsPerfect) {
    const auto db = random_db(10, 6, 3);
    EXPECT_EQ(recall_at_k(db, db, identity_truth(db), 1), 1.0);
}

TEST(RecallTest, AdversarialFarthestMatch) {
    // True match placed farthest for every query: r@(n-1) = 0, r@n = 1.
    const int n = 6, dim = 3;
    DescriptorDb queries, gallery;
    queries.dim = gallery.dim = dim;
    for (int i = 0; i < n; ++i) {
        std::vector<float> q(dim, 0.0f), far(dim, 0.0f);
        q[0] = 1.0f;
        far[0] = -1.0f; // distance 2 from every query
        queries.add("q" + std::to_string(i), q.data(), dim);
        gallery.add("far" + std::to_string(i), far.data(), dim);
    }
    // Replace the non-matching rows with nearer distinct vectors.
    for (int j = 0; j < n; ++j) {
        if (j == 0) continue;
        const float angle = 0.1f + 0.05f * static_cast<float>(j);
        float* row = gallery.data.data() + static_cast<std::size_t>(j) * dim;
        row[0] = std::cos(angle);
        row[1] = std::sin(angle);
        row[2] = 0.0f;
    }
    TruthMap truth;
    for (int i = 0; i < n; ++i) truth["q" + std::to_string(i)] = "far0";
    // far0 is at distance 2; the rest are close to every query.
    EXPECT_EQ(recall_at_k(queries, gallery, truth, n - 1), 0.0);
    EXPECT_EQ(recall_at_k(queries, gallery, truth, n), 1.0);
}

TEST(RecallTest, MatchesFullSortOracle) {
    const auto queries = random_db(20, 4, 5, "q");
    auto gallery = random_db(8, 4, 6, "g");
    TruthMap truth;
    std::mt19937 rng(7);
    std::vector<std::size_t> true_idx(20);
    for (int i = 0; i < 20; ++i) {
        true_idx[static_cast<std::size_t>(i)] =
            std::uniform_int_distribution<std::size_t>(0, 7)(rng);
        truth["q" + std::to_string(i)] = gallery.ids[true_idx[static_cast<std::size_t>(i)]];
    }
    for (int k = 1; k <= 8; ++k) {
        std::size_t hits = 0;
        for (std::size_t i = 0; i < 20; ++i) {
            if (oracle_rank(queries, i, gallery, true_idx[i]) < static_cast<std::size_t>(k)) ++hits;
        }
        EXPECT_EQ(recall_at_k(queries, gallery, truth, k), hits / 20.0) << "k=" << k;
    }
}

TEST(RecallTest, MonotoneInKAndPermutationInvariant) {
    const auto queries = random_db(12, 4, 8, "q");
    auto gallery = random_db(9, 4, 9, "g");
    TruthMap truth;
    for (int i = 0; i < 12; ++i) truth["q" + std::to_string(i)] = "g" + std::to_string(i % 9);
    double prev = 0.0;
    for (int k = 1; k <= 9; ++k) {
        const double r = recall_at_k(queries, gallery, truth, k);
        EXPECT_GE(r, prev);
        prev = r;
    }
    EXPECT_EQ(prev, 1.0);

    // Shuffle gallery rows together with their ids: recalls unchanged.
    DescriptorDb shuffled;
    shuffled.dim = gallery.dim;
    std::vector<std::size_t> perm(9);
    std::iota(perm.begin(), perm.end(), 0u);
    std::mt19937 rng(11);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (auto j : perm) shuffled.add(gallery.ids[j], gallery.row(j), gallery.dim);
    for (int k = 1; k <= 9; ++k) {
        EXPECT_EQ(recall_at_k(queries, gallery, truth, k),
                  recall_at_k(queries, shuffled, truth, k));
    }
}

TEST(RecallTest, MissingTruthNamesTheId) {
    const auto db = random_db(3, 4, 12);
    TruthMap truth = identity_truth(db);
    truth.erase(db.ids[1]);
    try {
        recall_at_k(db, db, truth, 1);
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find(db.ids[1]), std::string::npos);
    }
    TruthMap wrong = identity_truth(db);
    wrong[db.ids[0]] = "ghost";
    try {
        recall_at_k(db, db, wrong, 1);
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("ghost"), std::string::npos);
    }
}

TEST(RecallTest, InvalidKIsUsageError) {
    const auto db = random_db(3, 4, 13);
    EXPECT_THROW(recall_at_k(db, db, identity_truth(db), 0), UsageError);
    EXPECT_THROW(recall_at_k(db, db, identity_truth(db), 4), UsageError);
}

TEST(RecallAtPercentTest, RoundingRule) {
    // Gallery of 8884 rows: k = round(88.84) = 89. Place the true match at
    // rank 89 (hit) for one query and rank 90 (miss) for another.
    const int n = 8884;
    DescriptorDb gallery;
    gallery.dim = 2;
    for (int j = 0; j < n; ++j) {
        // Strictly increasing distance from (1, 0) as j grows.
        const float t = 1e-4f * static_cast<float>(j);
        const float row[2] = {std::cos(t), std::sin(t)};
        gallery.add("g" + std::to_string(j), row, 2);
    }
    DescriptorDb queries;
    queries.dim = 2;
    const float q[2] = {1.0f, 0.0f};
    queries.add("hit", q, 2);
    queries.add("miss", q, 2);
    TruthMap truth{{"hit", "g88"}, {"miss", "g89"}}; // ranks 89 and 90
    EXPECT_EQ(recall_at_percent(queries, gallery, truth, 1.0), 0.5);

    // Small galleries floor at k = 1.
    const auto small = random_db(50, 4, 17);
    EXPECT_EQ(recall_at_percent(small, small, identity_truth(small), 1.0),
              recall_at_k(small, small, identity_truth(small), 1));
    const auto mid = random_db(128, 4, 19);
    EXPECT_EQ(recall_at_percent(mid, mid, identity_truth(mid), 1.0),
              recall_at_k(mid, mid, identity_truth(mid), 1));
}

TEST(MetricsTest, IdenticalCopiesScoreFullMarks) {
    const auto db = random_db(16, 6, 21);
    const auto m = compute_metrics(db, db, identity_truth(db));
    EXPECT_EQ(m.r1, 1.0);
    EXPECT_EQ(m.r5, 1.0);
    EXPECT_EQ(m.r10, 1.0);
    EXPECT_EQ(m.r1pct, 1.0);
    const auto text = format_metrics(m);
    EXPECT_NE(text.find("r@1 r@5 r@10 r@1%"), std::string::npos);
    EXPECT_NE(text.find("100.00 100.00 100.00 100.00"), std::string::npos);
    EXPECT_NE(text.find("r_at_1=100.00"), std::string::npos);
}

TEST(MetricsTest, ReportDeterministic) {
    const auto q = random_db(10, 4, 23, "q");
    auto g = random_db(10, 4, 24, "g");
    TruthMap truth;
    for (int i = 0; i < 10; ++i) truth["q" + std::to_string(i)] = "g" + std::to_string(i);
    const auto a = format_metrics(compute_metrics(q, g, truth));
    const auto b = format_metrics(compute_metrics(q, g, truth));
    EXPECT_EQ(a, b);
}

TEST(EvaluateTest, UntrainedModelScoresNearChance) {
    // 128 synthetic pairs against an untrained (random-init) model: r@1 must
    // sit in [0, 0.1] (chance is 1/128) for every seed.
    const auto spec = tiny_scene(3);
    std::vector<std::string> ids;
    std::vector<Image> grounds, warped;
    for (std::uint64_t i = 0; i < 128; ++i) {
        const auto pair = gen_pair(spec, i);
        ids.push_back(pair.id);
        grounds.push_back(pair.ground);
        warped.push_back(polar_transform(pair.aerial, spec.polar()));
    }
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        SiameseModel<float> model(tiny_model_config());
        Rng rng(seed);
        init_params(model.params(), rng);
        const auto q = embed_images(model, ids, grounds, View::Ground);
        const auto g = embed_images(model, ids, warped, View::Aerial);
        const double r1 = recall_at_k(q, g, identity_truth(q), 1);
        EXPECT_GE(r1, 0.0);
        EXPECT_LE(r1, 0.1) << "seed " << seed;
    }
}

TEST(EvaluateTest, ThreadedEmbeddingMatchesSerial) {
    const auto spec = tiny_scene(5);
    std::vector<std::string> ids;
    std::vector<Image> grounds;
    for (std::uint64_t i = 0; i < 12; ++i) {
        const auto pair = gen_pair(spec, i);
        ids.push_back(pair.id);
        grounds.push_back(pair.ground);
    }
    SiameseModel<float> model(tiny_model_config());
    Rng rng(31);
    init_params(model.params(), rng);
    const auto serial = embed_images(model, ids, grounds, View::Ground, 1);
    const auto threaded = embed_images(model, ids, grounds, View::Ground, 3);
    EXPECT_EQ(serial.data, threaded.data);
    EXPECT_EQ(serial.ids, threaded.ids);
}

TEST(BenchTest, ParamCountAndThroughput) {
    SiameseModel<float> model(tiny_model_config());
    Rng rng(41);
    init_params(model.params(), rng);
    const auto spec = tiny_scene(7);
    const auto probe = render_ground(gen_aerial(spec, 0), spec, 0);
    const auto res = bench(model, probe, 20, 3);
    EXPECT_EQ(res.param_count, model.param_count());
    EXPECT_GT(res.images_per_second, 0.0);
    EXPECT_GT(res.window_seconds, 0.0);
    EXPECT_EQ(res.iterations, 20);

    // Param count is invariant across seeds.
    SiameseModel<float> other(tiny_model_config());
    Rng rng2(77);
    init_params(other.params(), rng2);
    EXPECT_EQ(other.param_count(), model.param_count());
}
