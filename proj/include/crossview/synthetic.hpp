#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "crossview/image.hpp"
#include "crossview/polar.hpp"
#include "crossview/rng.hpp"

namespace crossview {

// Procedural matched-pair generator: aerial tiles carry roads through the
// center plus disc/rectangle landmarks on a shaded background; ground views
// are the exact polar warp of the aerial plus photometric perturbation.
// Everything is a pure function of (seed, index).
struct SceneSpec {
    std::uint64_t seed = 42;
    int aerial_size = 128; // square tiles
    int ground_w = 320;
    int ground_h = 64;
    double brightness_jitter = 0.05;
    double contrast_jitter = 0.05;
    double noise_sigma = 0.05;

    PolarConfig polar() const {
        return {ground_w, ground_h, aerial_size, aerial_size, aerial_size};
    }
};

struct SceneLayout {
    struct Road {
        double angle;  // direction of the strip through the tile center
        double half_w; // half width in pixels
        float gray;
    };
    struct Landmark {
        bool disc;
        double cx, cy;
        double size; // radius (disc) or half side (rectangle)
        float r, g, b;
    };
    float base[3];
    double grad_angle;
    double grad_amp;
    std::vector<Road> roads;
    std::vector<Landmark> landmarks;
};

// Layout parameters for pair `index`; drawing consumes no randomness.
inline SceneLayout describe_scene(const SceneSpec& spec, std::uint64_t index) {
    Rng rng = Rng(spec.seed).child(2 * index);
    SceneLayout sc;
    sc.base[0] = static_cast<float>(rng.uniform(0.16, 0.30));
    sc.base[1] = static_cast<float>(rng.uniform(0.32, 0.55));
    sc.base[2] = static_cast<float>(rng.uniform(0.14, 0.28));
    sc.grad_angle = rng.uniform(0.0, 2.0 * M_PI);
    sc.grad_amp = rng.uniform(0.0, 0.06);
    const int n_roads = 1 + (rng.next_double() < 0.4 ? 1 : 0);
    for (int i = 0; i < n_roads; ++i) {
        sc.roads.push_back({rng.uniform(0.0, M_PI), rng.uniform(3.0, 7.0),
                            static_cast<float>(rng.uniform(0.28, 0.50))});
    }
    const int n_marks = 2 + rng.next_int(3); // 2..4
    const double s = spec.aerial_size;
    for (int i = 0; i < n_marks; ++i) {
        SceneLayout::Landmark lm;
        lm.disc = rng.next_double() < 0.5;
        lm.cx = rng.uniform(0.15, 0.85) * s;
        lm.cy = rng.uniform(0.15, 0.85) * s;
        lm.size = rng.uniform(5.0, 16.0);
        lm.r = static_cast<float>(rng.uniform(0.15, 0.95));
        lm.g = static_cast<float>(rng.uniform(0.15, 0.95));
        lm.b = static_cast<float>(rng.uniform(0.15, 0.95));
        sc.landmarks.push_back(lm);
    }
    return sc;
}

inline Image gen_aerial(const SceneSpec& spec, std::uint64_t index) {
    const SceneLayout sc = describe_scene(spec, index);
    const int s = spec.aerial_size;
    const double c = 0.5 * s; // polar origin
    Image img(s, s, 3);
    const double gx = std::cos(sc.grad_angle), gy = std::sin(sc.grad_angle);
    for (int y = 0; y < s; ++y) {
        for (int x = 0; x < s; ++x) {
            const double proj = ((x - c) * gx + (y - c) * gy) / s; // in [-~0.7, 0.7]
            float px[3];
            for (int ch = 0; ch < 3; ++ch) {
                px[ch] = sc.base[ch] + static_cast<float>(sc.grad_amp * proj);
            }
            for (const auto& road : sc.roads) {
                const double nx = -std::sin(road.angle), ny = std::cos(road.angle);
                const double dist = std::abs((x - c) * nx + (y - c) * ny);
                const double cov = std::clamp(road.half_w + 0.5 - dist, 0.0, 1.0);
                for (int ch = 0; ch < 3; ++ch) {
                    px[ch] = static_cast<float>(px[ch] * (1.0 - cov) + road.gray * cov);
                }
            }
            for (const auto& lm : sc.landmarks) {
                double sdist;
                if (lm.disc) {
                    sdist = std::hypot(x - lm.cx, y - lm.cy) - lm.size;
                } else {
                    sdist = std::max(std::abs(x - lm.cx), std::abs(y - lm.cy)) - lm.size;
                }
                const double cov = std::clamp(0.5 - sdist, 0.0, 1.0);
                const float col[3] = {lm.r, lm.g, lm.b};
                for (int ch = 0; ch < 3; ++ch) {
                    px[ch] = static_cast<float>(px[ch] * (1.0 - cov) + col[ch] * cov);
                }
            }
            for (int ch = 0; ch < 3; ++ch) img.at(y, x, ch) = px[ch];
        }
    }
    img.clamp01();
    return img;
}

// Panorama view: exact polar warp plus seeded brightness/contrast jitter and
// Gaussian pixel noise. With all perturbation strengths zero the result is
// bit-identical to the plain warp.
inline Image render_ground(const Image& aerial, const SceneSpec& spec, std::uint64_t index) {
    Image out = polar_transform(aerial, spec.polar());
    if (spec.brightness_jitter == 0.0 && spec.contrast_jitter == 0.0 && spec.noise_sigma == 0.0) {
        return out;
    }
    Rng rng = Rng(spec.seed).child(2 * index + 1);
    const double bright = rng.uniform(-spec.brightness_jitter, spec.brightness_jitter);
    const double contrast = 1.0 + rng.uniform(-spec.contrast_jitter, spec.contrast_jitter);
    for (std::size_t i = 0; i < out.size(); ++i) {
        double v = (out.data()[i] - 0.5) * contrast + 0.5 + bright;
        if (spec.noise_sigma > 0.0) v += spec.noise_sigma * rng.normal();
        out.data()[i] = static_cast<float>(v);
    }
    out.clamp01();
    return out;
}

struct PairSample {
    std::string id;
    Image aerial;
    Image ground;
};

inline std::string pair_id(std::uint64_t index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "p%06llu", static_cast<unsigned long long>(index));
    return buf;
}

inline PairSample gen_pair(const SceneSpec& spec, std::uint64_t index) {
    PairSample sample;
    sample.id = pair_id(index);
    sample.aerial = gen_aerial(spec, index);
    sample.ground = render_ground(sample.aerial, spec, index);
    return sample;
}

// ---------------------------------------------------------------------------
// Dataset files
// ---------------------------------------------------------------------------

struct ManifestRow {
    std::string id;
    std::string ground_path; // relative to the manifest directory
    std::string aerial_path;
};

// Writes `count` pairs with global indices [offset, offset+count) plus a
// manifest.csv; returns the manifest path. Re-running with the same spec
// produces byte-identical files.
inline std::string gen_dataset(const SceneSpec& spec, int count, const std::string& out_dir,
                               std::uint64_t offset = 0) {
    if (count < 1) throw UsageError("gen_dataset: count must be >= 1");
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create directory " + out_dir + ": " + ec.message());
    const auto manifest_path = (std::filesystem::path(out_dir) / "manifest.csv").string();
    std::ofstream manifest(manifest_path, std::ios::binary);
    if (!manifest) throw IoError("cannot write " + manifest_path);
    manifest << "id,ground_path,aerial_path\n";
    for (int i = 0; i < count; ++i) {
        const auto sample = gen_pair(spec, offset + static_cast<std::uint64_t>(i));
        const std::string ground_name = "ground_" + sample.id + ".png";
        const std::string aerial_name = "aerial_" + sample.id + ".png";
        write_png((std::filesystem::path(out_dir) / ground_name).string(), sample.ground);
        write_png((std::filesystem::path(out_dir) / aerial_name).string(), sample.aerial);
        manifest << sample.id << "," << ground_name << "," << aerial_name << "\n";
    }
    if (!manifest) throw IoError("short write to " + manifest_path);
    return manifest_path;
}

inline std::vector<ManifestRow> load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError("manifest is empty: " + path);
    if (line == "id,ground_path,aerial_path\r") line.pop_back();
    if (line != "id,ground_path,aerial_path") {
        throw DataError("manifest header mismatch in " + path);
    }
    std::vector<ManifestRow> rows;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto c1 = line.find(',');
        const auto c2 = line.find(',', c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos || line.find(',', c2 + 1) != std::string::npos) {
            throw DataError("malformed manifest row: " + line);
        }
        rows.push_back({line.substr(0, c1), line.substr(c1 + 1, c2 - c1 - 1), line.substr(c2 + 1)});
    }
    if (rows.empty()) throw DataError("manifest has no rows: " + path);
    return rows;
}

struct LoadedPair {
    std::string id;
    Image ground;
    Image aerial;
};

inline std::vector<LoadedPair> load_pairs(const std::string& manifest_path) {
    const auto rows = load_manifest(manifest_path);
    const auto dir = std::filesystem::path(manifest_path).parent_path();
    std::vector<LoadedPair> pairs;
    pairs.reserve(rows.size());
    for (const auto& row : rows) {
        pairs.push_back({row.id, read_image((dir / row.ground_path).string()),
                         read_image((dir / row.aerial_path).string())});
    }
    return pairs;
}

} // namespace crossview
