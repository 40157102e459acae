#pragma once

#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "putf/error.hpp"
#include "putf/model.hpp"

// PUTFv1 checkpoint layout (all integers little-endian):
//
//   bytes  0..5   magic "PUTFv1"
//   u32            config text length
//   config text    "key=value\n" lines in fixed key order
//   u32            tensor count
//   per tensor:
//     u32          name length, then name bytes
//     u32          rank, then rank x u64 extents
//     f32[]        row-major payload (64-bit runs truncate on save)
//     u64          footer: payload byte length
//
// save -> load -> save is byte-identical.

namespace putf {

namespace ckpt_detail {

inline constexpr char kMagic[6] = {'P', 'U', 'T', 'F', 'v', '1'};

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_f32(std::vector<std::uint8_t>& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

struct Reader {
    const std::vector<std::uint8_t>& bytes;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > bytes.size()) throw CheckpointError(CheckpointError::Kind::Truncated,
                                                          "checkpoint: truncated file");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    float f32() {
        const std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes.data() + pos), n);
        pos += n;
        return s;
    }
};

inline std::string fmt_double(double v) {
    char buf[40];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, p);
}

inline double parse_double(const std::string& s) {
    double v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
        throw CheckpointError(CheckpointError::Kind::BadConfig, "checkpoint: bad number '" + s + "'");
    return v;
}

inline std::size_t parse_size(const std::string& s) {
    std::size_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
        throw CheckpointError(CheckpointError::Kind::BadConfig, "checkpoint: bad count '" + s + "'");
    return v;
}

}  // namespace ckpt_detail

inline std::string config_to_text(const ModelConfig& cfg) {
    using ckpt_detail::fmt_double;
    std::string channels;
    for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
        if (i) channels += ',';
        channels += std::to_string(cfg.channels[i]);
    }
    std::string s;
    s += "encoders=" + std::to_string(cfg.encoders) + "\n";
    s += "channels=" + channels + "\n";
    s += "head_channels=" + std::to_string(cfg.head_channels) + "\n";
    s += "k=" + std::to_string(cfg.k) + "\n";
    s += "psi=" + std::to_string(cfg.psi) + "\n";
    s += "ratio=" + std::to_string(cfg.r) + "\n";
    s += "scaled_attention=" + std::string(cfg.scaled_attention ? "1" : "0") + "\n";
    s += "bn_eps=" + fmt_double(cfg.bn_eps) + "\n";
    s += "bn_momentum=" + fmt_double(cfg.bn_momentum) + "\n";
    s += "ln_eps=" + fmt_double(cfg.ln_eps) + "\n";
    s += "precision=" + cfg.precision + "\n";
    return s;
}

inline ModelConfig config_from_text(const std::string& text) {
    ModelConfig cfg;
    cfg.channels.clear();
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t nl = text.find('\n', start);
        if (nl == std::string::npos) nl = text.size();
        const std::string line = text.substr(start, nl - start);
        start = nl + 1;
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw CheckpointError(CheckpointError::Kind::BadConfig,
                                  "checkpoint: bad config line '" + line + "'");
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        using ckpt_detail::parse_double;
        using ckpt_detail::parse_size;
        if (key == "encoders")
            cfg.encoders = parse_size(val);
        else if (key == "channels") {
            std::size_t p = 0;
            while (p <= val.size()) {
                std::size_t comma = val.find(',', p);
                if (comma == std::string::npos) comma = val.size();
                cfg.channels.push_back(parse_size(val.substr(p, comma - p)));
                p = comma + 1;
            }
        } else if (key == "head_channels")
            cfg.head_channels = parse_size(val);
        else if (key == "k")
            cfg.k = parse_size(val);
        else if (key == "psi")
            cfg.psi = parse_size(val);
        else if (key == "ratio")
            cfg.r = parse_size(val);
        else if (key == "scaled_attention")
            cfg.scaled_attention = val == "1";
        else if (key == "bn_eps")
            cfg.bn_eps = parse_double(val);
        else if (key == "bn_momentum")
            cfg.bn_momentum = parse_double(val);
        else if (key == "ln_eps")
            cfg.ln_eps = parse_double(val);
        else if (key == "precision")
            cfg.precision = val;
        else
            throw CheckpointError(CheckpointError::Kind::BadConfig,
                                  "checkpoint: unknown config key '" + key + "'");
    }
    try {
        cfg.validate();
    } catch (const ConfigError& e) {
        throw CheckpointError(CheckpointError::Kind::BadConfig, e.what());
    }
    return cfg;
}

template <typename T>
std::vector<std::uint8_t> checkpoint_bytes(ModelParams<T>& params, const ModelConfig& cfg) {
    using namespace ckpt_detail;
    std::vector<std::uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 6);
    const std::string config = config_to_text(cfg);
    put_u32(out, static_cast<std::uint32_t>(config.size()));
    out.insert(out.end(), config.begin(), config.end());

    auto named = params.named_tensors();
    put_u32(out, static_cast<std::uint32_t>(named.size()));
    for (auto& [name, tensor] : named) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        put_u32(out, static_cast<std::uint32_t>(tensor->rank()));
        for (std::size_t d : tensor->shape()) put_u64(out, d);
        for (T v : tensor->values()) put_f32(out, static_cast<float>(v));
        put_u64(out, static_cast<std::uint64_t>(tensor->numel()) * 4);
    }
    return out;
}

template <typename T>
void save_checkpoint(ModelParams<T>& params, const ModelConfig& cfg, const std::string& path) {
    const auto bytes = checkpoint_bytes(params, cfg);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + path);
}

template <typename T>
std::pair<ModelConfig, ModelParams<T>> load_checkpoint_bytes(const std::vector<std::uint8_t>& bytes) {
    using namespace ckpt_detail;
    Reader r{bytes};
    if (r.str(6) != std::string(kMagic, 6))
        throw CheckpointError(CheckpointError::Kind::BadMagic, "checkpoint: bad magic");
    const std::uint32_t config_len = r.u32();
    const ModelConfig cfg = config_from_text(r.str(config_len));
    ModelParams<T> params(cfg);
    auto named = params.named_tensors();

    const std::uint32_t count = r.u32();
    if (count != named.size())
        throw CheckpointError(CheckpointError::Kind::BadConfig,
                              "checkpoint: tensor count " + std::to_string(count) + " != expected " +
                                  std::to_string(named.size()));
    for (auto& [name, tensor] : named) {
        const std::uint32_t name_len = r.u32();
        const std::string got = r.str(name_len);
        if (got != name)
            throw CheckpointError(CheckpointError::Kind::BadConfig,
                                  "checkpoint: tensor '" + got + "' where '" + name + "' expected");
        const std::uint32_t rank = r.u32();
        if (rank != tensor->rank())
            throw CheckpointError(CheckpointError::Kind::LengthMismatch,
                                  "checkpoint: rank mismatch for " + name);
        std::size_t numel = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            const std::uint64_t extent = r.u64();
            if (extent != tensor->dim(d))
                throw CheckpointError(CheckpointError::Kind::LengthMismatch,
                                      "checkpoint: extent mismatch for " + name);
            numel *= extent;
        }
        auto vals = tensor->values_mut();
        for (std::size_t i = 0; i < numel; ++i) vals[i] = static_cast<T>(r.f32());
        const std::uint64_t footer = r.u64();
        if (footer != static_cast<std::uint64_t>(numel) * 4)
            throw CheckpointError(CheckpointError::Kind::LengthMismatch,
                                  "checkpoint: footer mismatch for " + name);
    }
    if (r.pos != bytes.size())
        throw CheckpointError(CheckpointError::Kind::LengthMismatch,
                              "checkpoint: trailing bytes after last tensor");
    return {cfg, std::move(params)};
}

template <typename T>
std::pair<ModelConfig, ModelParams<T>> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return load_checkpoint_bytes<T>(bytes);
}

}  // namespace putf
