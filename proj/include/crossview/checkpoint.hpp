#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "crossview/optimizer.hpp"
#include "crossview/params.hpp"
#include "crossview/rng.hpp"

namespace crossview {

// On-disk layout, all integers and floats little-endian:
//   magic "TGCKPT1\n"
//   records: u32 name length, UTF-8 name, u32 rank, u32 dims..., f32 payload
//     (model tensors first, then optimizer moments named "<param>/m", "<param>/v")
//   trailer: u32 epoch, u64 rng seed, u64 rng call count
inline constexpr char kCheckpointMagic[] = "TGCKPT1\n";

struct CheckpointRecord {
    std::string name;
    Shape shape;
    std::vector<float> data;
};

struct Checkpoint {
    std::vector<CheckpointRecord> params;
    std::vector<CheckpointRecord> moments;
    std::uint32_t epoch = 0;
    std::uint64_t rng_seed = 0;
    std::uint64_t rng_calls = 0;
    // Derived structural fingerprint (names + shapes); not serialized.
    std::uint64_t config_hash = 0;

    void refresh_hash() {
        std::uint64_t h = 0x243F6A8885A308D3ull;
        auto mix_in = [&h](std::uint64_t v) { h = Rng::mix64(h ^ (v + Rng::kGolden)); };
        for (const auto& r : params) {
            for (char c : r.name) mix_in(static_cast<std::uint64_t>(static_cast<unsigned char>(c)));
            for (int d : r.shape) mix_in(static_cast<std::uint64_t>(d));
        }
        config_hash = h;
    }
};

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
    char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                 static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    out.write(b, 4);
}

inline void put_u64(std::ostream& out, std::uint64_t v) {
    put_u32(out, static_cast<std::uint32_t>(v & 0xffffffffull));
    put_u32(out, static_cast<std::uint32_t>(v >> 32));
}

inline void put_f32(std::ostream& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

inline std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline std::uint64_t get_u64(std::istream& in) {
    const std::uint64_t lo = get_u32(in);
    const std::uint64_t hi = get_u32(in);
    return lo | (hi << 32);
}

inline void put_record(std::ostream& out, const CheckpointRecord& r) {
    put_u32(out, static_cast<std::uint32_t>(r.name.size()));
    out.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
    put_u32(out, static_cast<std::uint32_t>(r.shape.size()));
    for (int d : r.shape) put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : r.data) put_f32(out, v);
}

} // namespace detail

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path);
    out.write(kCheckpointMagic, 8);
    for (const auto& r : ckpt.params) detail::put_record(out, r);
    for (const auto& r : ckpt.moments) detail::put_record(out, r);
    detail::put_u32(out, ckpt.epoch);
    detail::put_u64(out, ckpt.rng_seed);
    detail::put_u64(out, ckpt.rng_calls);
    if (!out) throw IoError("short write to checkpoint " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw IoError("cannot open checkpoint " + path);
    const std::streamoff total = in.tellg();
    in.seekg(0);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::string(magic, 8) != kCheckpointMagic) {
        throw IoError("not a checkpoint file: " + path);
    }
    constexpr std::streamoff kTrailer = 4 + 8 + 8;
    Checkpoint ckpt;
    while (in.tellg() < total - kTrailer) {
        CheckpointRecord r;
        const std::uint32_t name_len = detail::get_u32(in);
        r.name.resize(name_len);
        in.read(r.name.data(), name_len);
        const std::uint32_t rank = detail::get_u32(in);
        std::size_t numel = 1;
        for (std::uint32_t i = 0; i < rank; ++i) {
            const auto d = static_cast<int>(detail::get_u32(in));
            r.shape.push_back(d);
            numel *= static_cast<std::size_t>(d);
        }
        r.data.resize(numel);
        for (auto& v : r.data) v = std::bit_cast<float>(detail::get_u32(in));
        if (!in) throw IoError("truncated checkpoint " + path);
        const bool is_moment = r.name.size() > 2 && (r.name.ends_with("/m") || r.name.ends_with("/v"));
        (is_moment ? ckpt.moments : ckpt.params).push_back(std::move(r));
    }
    ckpt.epoch = detail::get_u32(in);
    ckpt.rng_seed = detail::get_u64(in);
    ckpt.rng_calls = detail::get_u64(in);
    if (!in) throw IoError("truncated checkpoint trailer " + path);
    ckpt.refresh_hash();
    return ckpt;
}

// ---------------------------------------------------------------------------
// Model/optimizer adapters
// ---------------------------------------------------------------------------

template <typename T>
Checkpoint snapshot(const ParamList<T>& params, const AdamW<T>* opt, std::uint32_t epoch,
                    const Rng& rng) {
    Checkpoint ckpt;
    auto to_record = [](const std::string& name, const Tensor<T>& t) {
        CheckpointRecord r{name, t.shape(), {}};
        r.data.resize(t.size());
        for (std::size_t i = 0; i < t.size(); ++i) r.data[i] = static_cast<float>(t[i]);
        return r;
    };
    for (const auto& p : params) ckpt.params.push_back(to_record(p.name, p.var.value()));
    if (opt) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            ckpt.moments.push_back(to_record(params[i].name + "/m", opt->moment1(i)));
            ckpt.moments.push_back(to_record(params[i].name + "/v", opt->moment2(i)));
        }
    }
    ckpt.epoch = epoch;
    ckpt.rng_seed = rng.seed();
    ckpt.rng_calls = rng.calls();
    ckpt.refresh_hash();
    return ckpt;
}

// Restores parameters (and moments if an optimizer is given) by name; any
// missing name or shape mismatch is a config error.
template <typename T>
void restore(const Checkpoint& ckpt, ParamList<T>& params, AdamW<T>* opt) {
    auto find = [](const std::vector<CheckpointRecord>& records, const std::string& name)
        -> const CheckpointRecord& {
        for (const auto& r : records) {
            if (r.name == name) return r;
        }
        throw ConfigError("checkpoint: missing record '" + name + "'");
    };
    auto fill = [](const CheckpointRecord& r, Tensor<T>& t) {
        if (r.shape != t.shape()) {
            throw ConfigError("checkpoint: record '" + r.name + "' has shape " +
                              shape_str(r.shape) + ", model expects " + shape_str(t.shape()));
        }
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(r.data[i]);
    };
    for (auto& p : params) fill(find(ckpt.params, p.name), p.var.value());
    if (opt) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            fill(find(ckpt.moments, params[i].name + "/m"), opt->moment1(i));
            fill(find(ckpt.moments, params[i].name + "/v"), opt->moment2(i));
        }
    }
}

} // namespace crossview
