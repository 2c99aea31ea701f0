// SPDX-License-Identifier: Apache-2.0
#include "flowgen/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "flowgen/errors.hpp"

namespace flowgen {

namespace {

constexpr char kMagic[8] = {'F', 'G', 'C', 'K', 'P', 'T', '0', '1'};
constexpr std::uint32_t kFormatVersion = 1;

void write_u32(std::ofstream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_u64(std::ofstream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::ifstream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}

std::uint64_t read_u64(std::ifstream& in) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const VelocityNet& net, std::uint64_t seed,
                     std::size_t step, const std::string& rng_state) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot write " + path);

    nlohmann::json h;
    h["format_version"] = kFormatVersion;
    h["length"] = net.cfg.length;
    h["base_channels"] = net.cfg.base_channels;
    h["channel_multipliers"] = net.cfg.channel_multipliers;
    h["groups"] = net.cfg.groups;
    h["d_llm"] = net.cfg.d_llm;
    h["d_k"] = net.cfg.d_k;
    h["attention_levels"] = std::vector<int>(net.cfg.attention_levels.begin(),
                                             net.cfg.attention_levels.end());
    h["seed"] = seed;
    h["step"] = step;
    h["rng_state"] = rng_state;
    const std::string header = h.dump();

    out.write(kMagic, sizeof(kMagic));
    write_u32(out, static_cast<std::uint32_t>(header.size()));
    out.write(header.data(), static_cast<std::streamsize>(header.size()));

    write_u64(out, net.params.items.size());
    for (const auto& p : net.params.items) {
        write_u32(out, static_cast<std::uint32_t>(p.name.size()));
        out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        write_u32(out, static_cast<std::uint32_t>(p.shape.size()));
        for (int d : p.shape) write_u64(out, static_cast<std::uint64_t>(d));
        out.write(reinterpret_cast<const char*>(p.w.data()),
                  static_cast<std::streamsize>(p.w.size() * sizeof(double)));
    }
    if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("checkpoint: cannot read " + path);

    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw FormatError("checkpoint: bad magic in " + path);

    const std::uint32_t hlen = read_u32(in);
    std::string header(hlen, '\0');
    in.read(header.data(), hlen);
    nlohmann::json h = nlohmann::json::parse(header, nullptr, false);
    if (h.is_discarded()) throw FormatError("checkpoint: corrupt header");
    if (h.value("format_version", 0u) != kFormatVersion)
        throw FormatError("checkpoint: unsupported format version");

    NetConfig cfg;
    cfg.length = h.at("length").get<int>();
    cfg.base_channels = h.at("base_channels").get<int>();
    cfg.channel_multipliers = h.at("channel_multipliers").get<std::vector<int>>();
    cfg.groups = h.at("groups").get<int>();
    cfg.d_llm = h.at("d_llm").get<int>();
    cfg.d_k = h.at("d_k").get<int>();
    const auto levels = h.at("attention_levels").get<std::vector<int>>();
    cfg.attention_levels = {levels.begin(), levels.end()};
    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw FormatError(std::string("checkpoint: invalid net config: ") + e.what());
    }

    LoadedCheckpoint ck;
    ck.net = VelocityNet::build(cfg, 0);
    ck.seed = h.at("seed").get<std::uint64_t>();
    ck.step = h.at("step").get<std::size_t>();
    ck.rng_state = h.value("rng_state", std::string{});

    const std::uint64_t count = read_u64(in);
    if (count != ck.net.params.items.size())
        throw FormatError("checkpoint: parameter array count mismatch");
    for (auto& p : ck.net.params.items) {
        const std::uint32_t nlen = read_u32(in);
        std::string name(nlen, '\0');
        in.read(name.data(), nlen);
        if (name != p.name) throw FormatError("checkpoint: unexpected array '" + name + "'");
        const std::uint32_t ndim = read_u32(in);
        if (ndim != p.shape.size()) throw FormatError("checkpoint: rank mismatch for " + name);
        for (int d : p.shape)
            if (read_u64(in) != static_cast<std::uint64_t>(d))
                throw FormatError("checkpoint: shape mismatch for " + name);
        in.read(reinterpret_cast<char*>(p.w.data()),
                static_cast<std::streamsize>(p.w.size() * sizeof(double)));
    }
    if (!in) throw FormatError("checkpoint: truncated file " + path);
    return ck;
}

}  // namespace flowgen
