#pragma once

#include <numeric>
#include <string>
#include <vector>

#include "crossview/checkpoint.hpp"
#include "crossview/model.hpp"
#include "crossview/optimizer.hpp"
#include "crossview/polar.hpp"
#include "crossview/rng.hpp"

namespace crossview {

template <typename T>
struct TrainConfig {
    AdamWConfig<T> opt;
    int batch_size = 16;
    int epochs = 16;
    std::uint64_t seed = 42;
    std::string checkpoint_path; // empty disables checkpointing
    int checkpoint_every = 0;    // epochs between periodic saves; 0 = final only

    void validate() const {
        opt.validate();
        if (batch_size < 2) throw ConfigError("train: batch size must be >= 2");
        if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    }
};

// A matched pair ready for the two branches: the aerial tile is already
// polar-warped to the ground geometry.
template <typename T>
struct TrainPair {
    std::string id;
    Tensor<T> ground;        // centered CHW
    Tensor<T> aerial_warped; // centered CHW
};

template <typename T>
TrainPair<T> make_train_pair(const std::string& id, const Image& ground, const Image& aerial,
                             const PolarConfig& polar) {
    return {id, image_to_tensor<T>(ground, true),
            image_to_tensor<T>(polar_transform(aerial, polar), true)};
}

// Seeded initialization: truncated normal (std 0.02) for attention/MLP/SE
// weights, fan-in scaled uniform for convolution kernels, zeros for biases,
// ones for layer-norm gains. Consumption order is the registration order, so
// the whole parameter set is a pure function of the stream state.
template <typename T>
void init_params(ParamList<T>& params, Rng& rng) {
    for (auto& p : params) {
        auto& v = p.var.value();
        switch (p.kind) {
        case ParamKind::ConvKernel: {
            const auto& s = v.shape();
            std::size_t fan_in = 1;
            for (std::size_t i = 1; i < s.size(); ++i) fan_in *= static_cast<std::size_t>(s[i]);
            const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
            for (std::size_t i = 0; i < v.size(); ++i) {
                v[i] = static_cast<T>(rng.uniform(-bound, bound));
            }
            break;
        }
        case ParamKind::DenseWeight:
            for (std::size_t i = 0; i < v.size(); ++i) {
                v[i] = static_cast<T>(rng.trunc_normal(0.02));
            }
            break;
        case ParamKind::Bias:
            for (std::size_t i = 0; i < v.size(); ++i) v[i] = T(0);
            break;
        case ParamKind::LnGain:
            for (std::size_t i = 0; i < v.size(); ++i) v[i] = T(1);
            break;
        }
    }
}

struct TrainLog {
    std::vector<double> epoch_loss;
    int epochs_run = 0;
};

// Deterministic training loop: seeded shuffle each epoch, full batches only
// (a trailing partial batch is dropped), single-threaded. With an empty
// resume path the model is freshly initialized from the seed.
template <typename T>
TrainLog train(SiameseModel<T>& model, const std::vector<TrainPair<T>>& data,
               const TrainConfig<T>& cfg, const std::string& resume_path = "") {
    cfg.validate();
    if (data.empty()) throw UsageError("train: empty dataset");
    const int n = static_cast<int>(data.size());
    if (cfg.batch_size > n) {
        throw UsageError("train: batch size " + std::to_string(cfg.batch_size) +
                         " exceeds dataset size " + std::to_string(n));
    }
    const int steps_per_epoch = n / cfg.batch_size;

    auto& params = model.params();
    AdamW<T> opt(cfg.opt, params);
    Rng rng(cfg.seed);
    int start_epoch = 0;
    if (!resume_path.empty()) {
        const auto ckpt = load_checkpoint(resume_path);
        restore(ckpt, params, &opt);
        start_epoch = static_cast<int>(ckpt.epoch);
        rng = Rng(ckpt.rng_seed, ckpt.rng_calls);
        opt.set_step_count(static_cast<long long>(start_epoch) * steps_per_epoch);
        if (start_epoch > cfg.epochs) {
            throw UsageError("train: checkpoint is at epoch " + std::to_string(start_epoch) +
                             ", beyond the configured " + std::to_string(cfg.epochs));
        }
    } else {
        init_params(params, rng);
    }

    TrainLog log;
    std::vector<int> order(static_cast<std::size_t>(n));
    const T gamma = static_cast<T>(model.config().gamma);
    for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        rng.shuffle(order.begin(), order.end());
        double epoch_loss = 0.0;
        for (int step = 0; step < steps_per_epoch; ++step) {
            std::vector<Var<T>> ground, aerial;
            ground.reserve(static_cast<std::size_t>(cfg.batch_size));
            aerial.reserve(static_cast<std::size_t>(cfg.batch_size));
            for (int b = 0; b < cfg.batch_size; ++b) {
                const auto& pair = data[static_cast<std::size_t>(order[step * cfg.batch_size + b])];
                ground.push_back(model.embed_tensor(pair.ground, View::Ground));
                aerial.push_back(model.embed_tensor(pair.aerial_warped, View::Aerial));
            }
            auto loss = batch_loss(ground, aerial, gamma);
            epoch_loss += static_cast<double>(loss.value()[0]);
            backward(loss);
            opt.step(params);
            for (auto& p : params) p.var.clear_grad();
        }
        log.epoch_loss.push_back(steps_per_epoch > 0 ? epoch_loss / steps_per_epoch : 0.0);
        ++log.epochs_run;

        const bool final_epoch = epoch + 1 == cfg.epochs;
        const bool periodic = cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0;
        if (!cfg.checkpoint_path.empty() && (final_epoch || periodic)) {
            save_checkpoint(cfg.checkpoint_path,
                            snapshot(params, &opt, static_cast<std::uint32_t>(epoch + 1), rng));
        }
    }
    return log;
}

} // namespace crossview
