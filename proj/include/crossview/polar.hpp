#pragma once

#include <cmath>
#include <utility>

#include "crossview/image.hpp"

namespace crossview {

// Geometry of the aerial-to-panorama warp: the polar origin is the aerial
// image center (W_a/2, H_a/2), north is azimuth 0, and A is the sampled radial
// diameter in aerial pixels.
struct PolarConfig {
    int ground_w = 320; // W_g
    int ground_h = 64;  // H_g
    int aerial_w = 128; // W_a
    int aerial_h = 128; // H_a
    int radius_span = 128; // A

    void validate() const {
        if (ground_w <= 0 || ground_h <= 0 || aerial_w <= 0 || aerial_h <= 0 || radius_span <= 0) {
            throw ConfigError("polar: all dimensions must be positive");
        }
        if (aerial_w != aerial_h) {
            throw ConfigError("polar: aerial tiles must be square, got " +
                              std::to_string(aerial_w) + "x" + std::to_string(aerial_h));
        }
        if (radius_span > std::min(aerial_w, aerial_h)) {
            throw ConfigError("polar: radius span " + std::to_string(radius_span) +
                              " exceeds aerial size " + std::to_string(std::min(aerial_w, aerial_h)));
        }
    }
};

// Maps a pixel of the warped (ground-aligned) image to its aerial sample point.
// x_s indexes azimuth across the panorama width, y_s indexes radius downward.
inline std::pair<double, double> polar_coords(double x_s, double y_s, const PolarConfig& cfg) {
    if (x_s < 0 || x_s >= cfg.ground_w || y_s < 0 || y_s > cfg.ground_h) {
        throw UsageError("polar_coords: point (" + std::to_string(x_s) + ", " + std::to_string(y_s) +
                         ") outside [0," + std::to_string(cfg.ground_w) + ") x [0," +
                         std::to_string(cfg.ground_h) + "]");
    }
    const double angle = 2.0 * M_PI * x_s / cfg.ground_w;
    const double radius = 0.5 * cfg.radius_span * y_s / cfg.ground_h;
    const double x_t = 0.5 * cfg.aerial_w + radius * std::sin(angle);
    const double y_t = 0.5 * cfg.aerial_h - radius * std::cos(angle);
    return {x_t, y_t};
}

// Inverse-mapped bilinear warp; output size equals the ground image size.
inline Image polar_transform(const Image& aerial, const PolarConfig& cfg) {
    cfg.validate();
    if (aerial.width() != cfg.aerial_w || aerial.height() != cfg.aerial_h) {
        throw ConfigError("polar_transform: aerial image is " + std::to_string(aerial.width()) +
                          "x" + std::to_string(aerial.height()) + ", config expects " +
                          std::to_string(cfg.aerial_w) + "x" + std::to_string(cfg.aerial_h));
    }
    Image out(cfg.ground_h, cfg.ground_w, aerial.channels());
    for (int y_s = 0; y_s < cfg.ground_h; ++y_s) {
        for (int x_s = 0; x_s < cfg.ground_w; ++x_s) {
            const auto [x_t, y_t] = polar_coords(x_s, y_s, cfg);
            const auto v = bilinear_sample(aerial, x_t, y_t);
            for (int c = 0; c < aerial.channels(); ++c) {
                out.at(y_s, x_s, c) = v[static_cast<std::size_t>(c)];
            }
        }
    }
    out.clamp01();
    return out;
}

} // namespace crossview
