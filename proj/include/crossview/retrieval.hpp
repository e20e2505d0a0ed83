#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "crossview/checkpoint.hpp"
#include "crossview/model.hpp"
#include "crossview/synthetic.hpp"

namespace crossview {

// On-disk layout ("TGDESC1\n"): u32 count, u32 dim, count id records
// (u32 length + UTF-8), then count*dim f32 row-major. All little-endian.
inline constexpr char kDescriptorMagic[] = "TGDESC1\n";

struct DescriptorDb {
    std::vector<std::string> ids;
    int dim = 0;
    std::vector<float> data; // count * dim, row-major

    std::size_t count() const { return ids.size(); }
    const float* row(std::size_t i) const { return data.data() + i * static_cast<std::size_t>(dim); }

    void add(const std::string& id, const float* values, int d) {
        if (dim == 0) dim = d;
        if (d != dim) {
            throw DimError("descriptor db: dim " + std::to_string(d) + " does not match " +
                           std::to_string(dim));
        }
        ids.push_back(id);
        data.insert(data.end(), values, values + d);
    }

    // Unique ids, uniform dim, unit rows within 1e-5.
    void validate() const {
        std::unordered_set<std::string> seen;
        for (const auto& id : ids) {
            if (!seen.insert(id).second) throw DataError("descriptor db: duplicate id '" + id + "'");
        }
        if (data.size() != count() * static_cast<std::size_t>(dim)) {
            throw DataError("descriptor db: row storage does not match count*dim");
        }
        for (std::size_t i = 0; i < count(); ++i) {
            double n2 = 0.0;
            const float* r = row(i);
            for (int c = 0; c < dim; ++c) n2 += static_cast<double>(r[c]) * r[c];
            if (std::abs(std::sqrt(n2) - 1.0) > 1e-5) {
                throw DataError("descriptor db: row '" + ids[i] + "' is not unit norm");
            }
        }
    }
};

inline void save_descriptor_db(const std::string& path, const DescriptorDb& db) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write descriptor db " + path);
    out.write(kDescriptorMagic, 8);
    detail::put_u32(out, static_cast<std::uint32_t>(db.count()));
    detail::put_u32(out, static_cast<std::uint32_t>(db.dim));
    for (const auto& id : db.ids) {
        detail::put_u32(out, static_cast<std::uint32_t>(id.size()));
        out.write(id.data(), static_cast<std::streamsize>(id.size()));
    }
    for (float v : db.data) detail::put_f32(out, v);
    if (!out) throw IoError("short write to descriptor db " + path);
}

inline DescriptorDb load_descriptor_db(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open descriptor db " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::string(magic, 8) != kDescriptorMagic) {
        throw IoError("not a descriptor db: " + path);
    }
    DescriptorDb db;
    const std::uint32_t count = detail::get_u32(in);
    db.dim = static_cast<int>(detail::get_u32(in));
    db.ids.resize(count);
    for (auto& id : db.ids) {
        const std::uint32_t len = detail::get_u32(in);
        id.resize(len);
        in.read(id.data(), len);
    }
    db.data.resize(static_cast<std::size_t>(count) * db.dim);
    for (auto& v : db.data) v = std::bit_cast<float>(detail::get_u32(in));
    if (!in) throw IoError("truncated descriptor db " + path);
    db.validate();
    return db;
}

using TruthMap = std::unordered_map<std::string, std::string>;

inline TruthMap identity_truth(const DescriptorDb& queries) {
    TruthMap t;
    for (const auto& id : queries.ids) t.emplace(id, id);
    return t;
}

namespace detail {

inline double row_dist(const float* a, const float* b, int dim) {
    double s = 0.0;
    for (int c = 0; c < dim; ++c) {
        const double d = static_cast<double>(a[c]) - b[c];
        s += d * d;
    }
    return std::sqrt(s);
}

} // namespace detail

// Fraction of queries whose true match ranks within the k nearest gallery
// rows by L2 distance; ties broken by ascending gallery index.
inline double recall_at_k(const DescriptorDb& queries, const DescriptorDb& gallery,
                          const TruthMap& truth, int k) {
    if (queries.dim != gallery.dim) {
        throw DimError("recall: query dim " + std::to_string(queries.dim) +
                       " != gallery dim " + std::to_string(gallery.dim));
    }
    if (k < 1 || k > static_cast<int>(gallery.count())) {
        throw UsageError("recall: k = " + std::to_string(k) + " outside [1, " +
                         std::to_string(gallery.count()) + "]");
    }
    std::unordered_map<std::string, std::size_t> gallery_index;
    for (std::size_t j = 0; j < gallery.count(); ++j) gallery_index.emplace(gallery.ids[j], j);

    std::size_t hits = 0;
    for (std::size_t i = 0; i < queries.count(); ++i) {
        const auto t = truth.find(queries.ids[i]);
        if (t == truth.end()) {
            throw DataError("recall: no truth entry for query id '" + queries.ids[i] + "'");
        }
        const auto g = gallery_index.find(t->second);
        if (g == gallery_index.end()) {
            throw DataError("recall: truth id '" + t->second + "' not present in gallery");
        }
        const std::size_t true_j = g->second;
        const double d_true = detail::row_dist(queries.row(i), gallery.row(true_j), queries.dim);
        std::size_t better = 0;
        for (std::size_t j = 0; j < gallery.count(); ++j) {
            const double d = detail::row_dist(queries.row(i), gallery.row(j), queries.dim);
            if (d < d_true || (d == d_true && j < true_j)) ++better;
        }
        if (better < static_cast<std::size_t>(k)) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(queries.count());
}

// k = max(1, round(pct/100 * gallery size)).
inline double recall_at_percent(const DescriptorDb& queries, const DescriptorDb& gallery,
                                const TruthMap& truth, double pct = 1.0) {
    const auto n = static_cast<double>(gallery.count());
    const int k = std::max(1, static_cast<int>(std::llround(pct / 100.0 * n)));
    return recall_at_k(queries, gallery, truth, k);
}

// ---------------------------------------------------------------------------
// Model-level evaluation
// ---------------------------------------------------------------------------

// Embeds a list of images; with threads > 1 images are partitioned statically
// and results are written into fixed rows, so output equals the serial run.
template <typename T>
DescriptorDb embed_images(const SiameseModel<T>& model, const std::vector<std::string>& ids,
                          const std::vector<Image>& images, View view, int threads = 1) {
    if (ids.size() != images.size()) throw UsageError("embed: id/image count mismatch");
    const int dim = model.config().descriptor_dim();
    std::vector<float> rows(ids.size() * static_cast<std::size_t>(dim));
    auto work = [&](std::size_t begin, std::size_t step) {
        NoGradGuard ng;
        for (std::size_t i = begin; i < images.size(); i += step) {
            const auto desc = model.embed(images[i], view);
            for (int c = 0; c < dim; ++c) {
                rows[i * static_cast<std::size_t>(dim) + c] = static_cast<float>(desc.value()[c]);
            }
        }
    };
    if (threads <= 1) {
        work(0, 1);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) {
            pool.emplace_back(work, static_cast<std::size_t>(t), static_cast<std::size_t>(threads));
        }
        for (auto& th : pool) th.join();
    }
    DescriptorDb db;
    db.dim = dim;
    db.ids = ids;
    db.data = std::move(rows);
    return db;
}

struct MetricsReport {
    double r1 = 0, r5 = 0, r10 = 0, r1pct = 0;
    std::size_t n_queries = 0;
    std::size_t n_gallery = 0;
};

// Human line plus machine-readable key=value block; percentages, two decimals.
inline std::string format_metrics(const MetricsReport& m) {
    char buf[256];
    std::string out = "r@1 r@5 r@10 r@1%\n";
    std::snprintf(buf, sizeof(buf), "%.2f %.2f %.2f %.2f\n", 100.0 * m.r1, 100.0 * m.r5,
                  100.0 * m.r10, 100.0 * m.r1pct);
    out += buf;
    std::snprintf(buf, sizeof(buf),
                  "r_at_1=%.2f\nr_at_5=%.2f\nr_at_10=%.2f\nr_at_1pct=%.2f\nn_queries=%zu\nn_gallery=%zu\n",
                  100.0 * m.r1, 100.0 * m.r5, 100.0 * m.r10, 100.0 * m.r1pct, m.n_queries,
                  m.n_gallery);
    out += buf;
    return out;
}

inline MetricsReport compute_metrics(const DescriptorDb& queries, const DescriptorDb& gallery,
                                     const TruthMap& truth) {
    const int n = static_cast<int>(gallery.count());
    MetricsReport m;
    m.n_queries = queries.count();
    m.n_gallery = gallery.count();
    m.r1 = recall_at_k(queries, gallery, truth, 1);
    m.r5 = recall_at_k(queries, gallery, truth, std::min(5, n));
    m.r10 = recall_at_k(queries, gallery, truth, std::min(10, n));
    m.r1pct = recall_at_percent(queries, gallery, truth, 1.0);
    return m;
}

// Ground panoramas as queries against polar-warped aerial tiles as gallery.
template <typename T>
MetricsReport evaluate(const SiameseModel<T>& model, const std::string& manifest_path,
                       const PolarConfig& polar, int threads = 1) {
    const auto pairs = load_pairs(manifest_path);
    std::vector<std::string> ids;
    std::vector<Image> grounds, warped;
    for (const auto& p : pairs) {
        ids.push_back(p.id);
        grounds.push_back(p.ground);
        warped.push_back(polar_transform(p.aerial, polar));
    }
    const auto queries = embed_images(model, ids, grounds, View::Ground, threads);
    const auto gallery = embed_images(model, ids, warped, View::Aerial, threads);
    return compute_metrics(queries, gallery, identity_truth(queries));
}

struct BenchResult {
    long long param_count = 0;
    double images_per_second = 0;
    double window_seconds = 0;
    int iterations = 0;
};

// Wall-clock single-image embedding throughput after warm-up.
template <typename T>
BenchResult bench(const SiameseModel<T>& model, const Image& probe, int iterations = 100,
                  int warmup = 10) {
    if (iterations < 1) throw UsageError("bench: iterations must be >= 1");
    BenchResult res;
    res.param_count = model.param_count();
    res.iterations = iterations;
    NoGradGuard ng;
    float sink = 0;
    for (int i = 0; i < warmup; ++i) {
        sink += static_cast<float>(model.embed(probe, View::Ground).value()[0]);
    }
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < iterations; ++i) {
        sink += static_cast<float>(model.embed(probe, View::Ground).value()[0]);
    }
    const auto t1 = std::chrono::steady_clock::now();
    // Keep the embedding results observable so the loop cannot be elided.
    static volatile float bench_sink;
    bench_sink = sink;
    res.window_seconds = std::chrono::duration<double>(t1 - t0).count();
    res.images_per_second = iterations / res.window_seconds;
    return res;
}

} // namespace crossview
