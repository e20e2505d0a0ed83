// crossview: one binary for the whole pipeline — synthetic data generation,
// polar warping, training, embedding, retrieval evaluation, benchmarking and
// attention-map export.
//
// Exit codes: 0 ok, 2 usage, 3 I/O, 4 config validation, 5 numeric failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "crossview/config.hpp"
#include "crossview/retrieval.hpp"
#include "crossview/synthetic.hpp"
#include "crossview/trainer.hpp"

namespace {

using namespace crossview;

struct Args {
    std::string config_path;
    std::string out;
    std::string in;
    std::string data;
    std::string ckpt;
    std::string resume;
    std::string view = "ground";
    std::string queries;
    std::string gallery;
    std::string loss_log;
    std::string out_prefix;
    int count = 0;
    std::uint64_t seed = 42;
    bool seed_given = false;
    double noise = -1.0;
    std::uint64_t offset = 0;
    int threads = 1;
    int iters = 100;
    int checkpoint_every = 0;
};

RunConfig load_config(const Args& a) {
    RunConfig cfg = a.config_path.empty() ? RunConfig{} : load_run_config(a.config_path);
    cfg.validate();
    return cfg;
}

View parse_view(const std::string& v) {
    if (v == "ground") return View::Ground;
    if (v == "aerial") return View::Aerial;
    throw UsageError("--view must be 'ground' or 'aerial', got '" + v + "'");
}

std::vector<TrainPair<float>> to_train_pairs_f32(const std::vector<LoadedPair>& pairs,
                                                 const PolarConfig& polar) {
    std::vector<TrainPair<float>> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) out.push_back(make_train_pair<float>(p.id, p.ground, p.aerial, polar));
    return out;
}

std::vector<TrainPair<double>> to_train_pairs_f64(const std::vector<LoadedPair>& pairs,
                                                  const PolarConfig& polar) {
    std::vector<TrainPair<double>> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) out.push_back(make_train_pair<double>(p.id, p.ground, p.aerial, polar));
    return out;
}

int cmd_gen_data(const Args& a) {
    if (a.count < 1) throw UsageError("gen-data: --count must be >= 1");
    const RunConfig cfg = load_config(a);
    SceneSpec spec = cfg.scene_spec();
    spec.seed = a.seed;
    if (a.noise >= 0.0) spec.noise_sigma = a.noise;
    const auto manifest = gen_dataset(spec, a.count, a.out, a.offset);
    std::printf("wrote %d pairs to %s\n", a.count, manifest.c_str());
    return 0;
}

int cmd_polar(const Args& a) {
    const RunConfig cfg = load_config(a);
    const auto aerial = read_image(a.in);
    const auto warped = polar_transform(aerial, cfg.polar_config());
    write_png(a.out, warped);
    return 0;
}

template <typename T>
int cmd_train_t(const Args& a, const RunConfig& cfg) {
    const auto pairs = load_pairs(a.data);
    std::vector<TrainPair<T>> data;
    data.reserve(pairs.size());
    for (const auto& p : pairs) {
        data.push_back(make_train_pair<T>(p.id, p.ground, p.aerial, cfg.polar_config()));
    }
    SiameseModel<T> model(cfg.model_config());
    TrainConfig<T> tc = cfg.template train_config<T>();
    tc.checkpoint_path = a.out;
    tc.checkpoint_every = a.checkpoint_every;
    const auto log = train(model, data, tc, a.resume);

    const std::string log_path = a.loss_log.empty() ? a.out + ".loss.txt" : a.loss_log;
    std::ofstream loss_out(log_path);
    if (!loss_out) throw IoError("cannot write loss log " + log_path);
    const int first_epoch = tc.epochs - log.epochs_run;
    for (int i = 0; i < log.epochs_run; ++i) {
        char line[80];
        std::snprintf(line, sizeof(line), "epoch=%d loss=%.9g\n", first_epoch + i + 1,
                      log.epoch_loss[static_cast<std::size_t>(i)]);
        std::fputs(line, stdout);
        loss_out << line;
    }
    if (!loss_out) throw IoError("short write to loss log " + log_path);
    return 0;
}

int cmd_train(const Args& a) {
    const RunConfig cfg = load_config(a);
    return cfg.precision == "f64" ? cmd_train_t<double>(a, cfg) : cmd_train_t<float>(a, cfg);
}

template <typename T>
SiameseModel<T> load_model(const RunConfig& cfg, const std::string& ckpt_path) {
    SiameseModel<T> model(cfg.model_config());
    const auto ckpt = load_checkpoint(ckpt_path);
    restore<T>(ckpt, model.params(), nullptr);
    return model;
}

template <typename T>
int cmd_embed_t(const Args& a, const RunConfig& cfg) {
    auto model = load_model<T>(cfg, a.ckpt);
    const auto pairs = load_pairs(a.data);
    const View view = parse_view(a.view);
    std::vector<std::string> ids;
    std::vector<Image> images;
    for (const auto& p : pairs) {
        ids.push_back(p.id);
        images.push_back(view == View::Ground ? p.ground
                                              : polar_transform(p.aerial, cfg.polar_config()));
    }
    const auto db = embed_images(model, ids, images, view, a.threads);
    save_descriptor_db(a.out, db);
    std::printf("wrote %zu descriptors (dim %d) to %s\n", db.count(), db.dim, a.out.c_str());
    return 0;
}

int cmd_embed(const Args& a) {
    const RunConfig cfg = load_config(a);
    return cfg.precision == "f64" ? cmd_embed_t<double>(a, cfg) : cmd_embed_t<float>(a, cfg);
}

template <typename T>
int cmd_eval_t(const Args& a, const RunConfig& cfg) {
    const auto report = [&] {
        if (!a.queries.empty()) {
            const auto q = load_descriptor_db(a.queries);
            const auto g = load_descriptor_db(a.gallery);
            return compute_metrics(q, g, identity_truth(q));
        }
        auto model = load_model<T>(cfg, a.ckpt);
        return evaluate(model, a.data, cfg.polar_config(), a.threads);
    }();
    std::fputs(format_metrics(report).c_str(), stdout);
    return 0;
}

int cmd_eval(const Args& a) {
    if (a.queries.empty() != a.gallery.empty()) {
        throw UsageError("eval: --queries and --gallery must be given together");
    }
    if (a.queries.empty() && (a.data.empty() || a.ckpt.empty())) {
        throw UsageError("eval: need either --queries/--gallery or --data/--ckpt");
    }
    const RunConfig cfg = load_config(a);
    return cfg.precision == "f64" ? cmd_eval_t<double>(a, cfg) : cmd_eval_t<float>(a, cfg);
}

template <typename T>
int cmd_bench_t(const Args& a, const RunConfig& cfg) {
    auto model = load_model<T>(cfg, a.ckpt);
    SceneSpec spec = cfg.scene_spec();
    const auto probe = render_ground(gen_aerial(spec, 0), spec, 0);
    const auto res = bench(model, probe, a.iters);
    std::printf("param_count=%lld\n", res.param_count);
    std::printf("images_per_second=%.3f\n", res.images_per_second);
    std::printf("window_seconds=%.6f\n", res.window_seconds);
    std::printf("iterations=%d\n", res.iterations);
    return 0;
}

int cmd_bench(const Args& a) {
    const RunConfig cfg = load_config(a);
    return cfg.precision == "f64" ? cmd_bench_t<double>(a, cfg) : cmd_bench_t<float>(a, cfg);
}

template <typename T>
int cmd_attn_t(const Args& a, const RunConfig& cfg) {
    auto model = load_model<T>(cfg, a.ckpt);
    const View view = parse_view(a.view);
    Image input = read_image(a.in);
    if (view == View::Aerial) input = polar_transform(input, cfg.polar_config());
    const auto maps = model.attention_maps(input, view);
    const int k = maps.dim(0), h = maps.dim(1), w = maps.dim(2);
    for (int i = 0; i < k; ++i) {
        T lo = maps(i, 0, 0), hi = maps(i, 0, 0);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                lo = std::min(lo, maps(i, y, x));
                hi = std::max(hi, maps(i, y, x));
            }
        Image heat(h, w, 1);
        const T span = hi - lo;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                heat.at(y, x, 0) =
                    span > T(0) ? static_cast<float>((maps(i, y, x) - lo) / span) : 0.0f;
            }
        const std::string path = a.out_prefix + "_k" + std::to_string(i + 1) + ".pgm";
        write_pnm(path, heat);
        std::printf("wrote %s\n", path.c_str());
    }
    return 0;
}

int cmd_attn(const Args& a) {
    const RunConfig cfg = load_config(a);
    return cfg.precision == "f64" ? cmd_attn_t<double>(a, cfg) : cmd_attn_t<float>(a, cfg);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"cross-view ground-to-aerial geolocalization pipeline"};
    app.require_subcommand(1);
    Args a;

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic matched-pair dataset");
    gen->add_option("--out", a.out, "output directory")->required();
    gen->add_option("--count", a.count, "number of pairs")->required();
    gen->add_option("--seed", a.seed, "generation seed")->required();
    gen->add_option("--noise", a.noise, "ground-view noise sigma (default from spec)");
    gen->add_option("--offset", a.offset, "first pair index");
    gen->add_option("--config", a.config_path, "run config file");

    auto* polar = app.add_subcommand("polar", "polar-warp an aerial image");
    polar->add_option("--in", a.in, "input aerial image")->required();
    polar->add_option("--out", a.out, "output PNG")->required();
    polar->add_option("--config", a.config_path, "run config file");

    auto* train = app.add_subcommand("train", "train the two-branch model");
    train->add_option("--data", a.data, "training manifest")->required();
    train->add_option("--out", a.out, "checkpoint path")->required();
    train->add_option("--config", a.config_path, "run config file");
    train->add_option("--resume", a.resume, "checkpoint to resume from");
    train->add_option("--loss-log", a.loss_log, "loss log path (default: <out>.loss.txt)");
    train->add_option("--checkpoint-every", a.checkpoint_every, "epochs between periodic saves");

    auto* embed = app.add_subcommand("embed", "embed a manifest into a descriptor db");
    embed->add_option("--data", a.data, "manifest")->required();
    embed->add_option("--ckpt", a.ckpt, "checkpoint")->required();
    embed->add_option("--view", a.view, "ground|aerial")->required();
    embed->add_option("--out", a.out, "descriptor db path")->required();
    embed->add_option("--config", a.config_path, "run config file");
    embed->add_option("--threads", a.threads, "embedding threads");

    auto* eval = app.add_subcommand("eval", "retrieval metrics (r@1 r@5 r@10 r@1%)");
    eval->add_option("--data", a.data, "manifest (with --ckpt)");
    eval->add_option("--ckpt", a.ckpt, "checkpoint");
    eval->add_option("--queries", a.queries, "query descriptor db");
    eval->add_option("--gallery", a.gallery, "gallery descriptor db");
    eval->add_option("--config", a.config_path, "run config file");
    eval->add_option("--threads", a.threads, "embedding threads");

    auto* bench = app.add_subcommand("bench", "parameter count and embedding throughput");
    bench->add_option("--ckpt", a.ckpt, "checkpoint")->required();
    bench->add_option("--config", a.config_path, "run config file");
    bench->add_option("--iters", a.iters, "timed iterations");

    auto* attn = app.add_subcommand("attn", "export spatial attention heat maps");
    attn->add_option("--in", a.in, "input image")->required();
    attn->add_option("--ckpt", a.ckpt, "checkpoint")->required();
    attn->add_option("--view", a.view, "ground|aerial")->required();
    attn->add_option("--out-prefix", a.out_prefix, "output path prefix")->required();
    attn->add_option("--config", a.config_path, "run config file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(a);
        if (polar->parsed()) return cmd_polar(a);
        if (train->parsed()) return cmd_train(a);
        if (embed->parsed()) return cmd_embed(a);
        if (eval->parsed()) return cmd_eval(a);
        if (bench->parsed()) return cmd_bench(a);
        if (attn->parsed()) return cmd_attn(a);
        std::fprintf(stderr, "error: no subcommand\n");
        return 2;
    } catch (const UsageError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 2;
    } catch (const IoError& e) {
        std::fprintf(stderr, "i/o error: %s\n", e.what());
        return 3;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 4;
    } catch (const DimError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 4;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return 5;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
