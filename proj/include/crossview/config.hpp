#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "crossview/model.hpp"
#include "crossview/optimizer.hpp"
#include "crossview/polar.hpp"
#include "crossview/synthetic.hpp"
#include "crossview/trainer.hpp"

namespace crossview {

// Plain-text `key = value` settings ('#' comments). Unknown keys are
// rejected; every cross-field constraint is validated before any work starts.
struct RunConfig {
    // architecture
    int grid_h = 8;
    int grid_w = 40;
    std::vector<int> backbone_widths{16, 32, 64};
    int convs_per_stage = 2;
    int proj_dim = 64;
    int depth_l = 2;
    int parts_w = 5;
    int mlp_ratio = 4;
    int se_reduction = 4;
    int attn_k = 4;
    double gamma = 10.0;
    // training
    double lr = 1e-3;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    int batch_size = 16;
    int epochs = 16;
    std::uint64_t seed = 42;
    std::string precision = "f32";
    // polar geometry
    int polar_a = 128;
    int ground_w = 320;
    int ground_h = 64;
    int aerial_w = 128;
    int aerial_h = 128;

    int stride() const { return 1 << static_cast<int>(backbone_widths.size()); }

    void validate() const {
        polar_config().validate();
        model_config().validate();
        if (grid_h != ground_h / stride() || grid_w != ground_w / stride()) {
            throw ConfigError("config: grid " + std::to_string(grid_w) + "x" +
                              std::to_string(grid_h) + " does not match ground size " +
                              std::to_string(ground_w) + "x" + std::to_string(ground_h) +
                              " at stride " + std::to_string(stride()));
        }
        if (!(lr > 0)) throw ConfigError("config: lr must be positive");
        if (weight_decay < 0) throw ConfigError("config: weight_decay must be >= 0");
        if (!(beta1 > 0 && beta1 < 1) || !(beta2 > 0 && beta2 < 1)) {
            throw ConfigError("config: betas must lie in (0, 1)");
        }
        if (!(adam_eps > 0)) throw ConfigError("config: adam_eps must be positive");
        if (batch_size < 2) throw ConfigError("config: batch_size must be >= 2");
        if (epochs < 1) throw ConfigError("config: epochs must be >= 1");
        if (precision != "f32" && precision != "f64") {
            throw ConfigError("config: precision must be f32 or f64, got '" + precision + "'");
        }
    }

    ModelConfig model_config() const {
        ModelConfig m;
        m.backbone = BackboneConfig{backbone_widths, convs_per_stage, 3, proj_dim};
        m.depth_l = depth_l;
        m.parts_w = parts_w;
        m.mlp_ratio = mlp_ratio;
        m.se_reduction = se_reduction;
        m.attn_k = attn_k;
        m.gamma = gamma;
        m.input_w = ground_w;
        m.input_h = ground_h;
        return m;
    }

    PolarConfig polar_config() const { return {ground_w, ground_h, aerial_w, aerial_h, polar_a}; }

    template <typename T>
    TrainConfig<T> train_config() const {
        TrainConfig<T> t;
        t.opt = AdamWConfig<T>{static_cast<T>(lr), static_cast<T>(weight_decay),
                               static_cast<T>(beta1), static_cast<T>(beta2),
                               static_cast<T>(adam_eps)};
        t.batch_size = batch_size;
        t.epochs = epochs;
        t.seed = seed;
        return t;
    }

    SceneSpec scene_spec() const {
        SceneSpec s;
        s.seed = seed;
        s.aerial_size = aerial_w;
        s.ground_w = ground_w;
        s.ground_h = ground_h;
        return s;
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline int parse_int(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const int v = std::stoi(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: bad integer for " + key + ": '" + value + "'");
    }
}

inline double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: bad number for " + key + ": '" + value + "'");
    }
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const auto v = std::stoull(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: bad unsigned integer for " + key + ": '" + value + "'");
    }
}

inline std::vector<int> parse_int_list(const std::string& key, const std::string& value) {
    std::vector<int> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        out.push_back(parse_int(key, trim(item)));
    }
    if (out.empty()) throw ConfigError("config: empty list for " + key);
    return out;
}

} // namespace detail

inline RunConfig parse_run_config(const std::string& text) {
    RunConfig cfg;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config: line " + std::to_string(lineno) + " is not 'key = value'");
        }
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty() || value.empty()) {
            throw ConfigError("config: line " + std::to_string(lineno) + " is not 'key = value'");
        }

        if (key == "grid_h") cfg.grid_h = detail::parse_int(key, value);
        else if (key == "grid_w") cfg.grid_w = detail::parse_int(key, value);
        else if (key == "backbone_widths") cfg.backbone_widths = detail::parse_int_list(key, value);
        else if (key == "convs_per_stage") cfg.convs_per_stage = detail::parse_int(key, value);
        else if (key == "proj_dim") cfg.proj_dim = detail::parse_int(key, value);
        else if (key == "depth_l") cfg.depth_l = detail::parse_int(key, value);
        else if (key == "parts_w") cfg.parts_w = detail::parse_int(key, value);
        else if (key == "mlp_ratio") cfg.mlp_ratio = detail::parse_int(key, value);
        else if (key == "se_reduction") cfg.se_reduction = detail::parse_int(key, value);
        else if (key == "attn_k") cfg.attn_k = detail::parse_int(key, value);
        else if (key == "gamma") cfg.gamma = detail::parse_double(key, value);
        else if (key == "lr") cfg.lr = detail::parse_double(key, value);
        else if (key == "weight_decay") cfg.weight_decay = detail::parse_double(key, value);
        else if (key == "beta1") cfg.beta1 = detail::parse_double(key, value);
        else if (key == "beta2") cfg.beta2 = detail::parse_double(key, value);
        else if (key == "adam_eps") cfg.adam_eps = detail::parse_double(key, value);
        else if (key == "batch_size") cfg.batch_size = detail::parse_int(key, value);
        else if (key == "epochs") cfg.epochs = detail::parse_int(key, value);
        else if (key == "seed") cfg.seed = detail::parse_u64(key, value);
        else if (key == "precision") cfg.precision = value;
        else if (key == "polar_a") cfg.polar_a = detail::parse_int(key, value);
        else if (key == "ground_w") cfg.ground_w = detail::parse_int(key, value);
        else if (key == "ground_h") cfg.ground_h = detail::parse_int(key, value);
        else if (key == "aerial_w") cfg.aerial_w = detail::parse_int(key, value);
        else if (key == "aerial_h") cfg.aerial_h = detail::parse_int(key, value);
        else throw ConfigError("config: unknown key '" + key + "'");
    }
    cfg.validate();
    return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str());
}

} // namespace crossview
