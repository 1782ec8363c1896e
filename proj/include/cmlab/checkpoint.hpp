#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "cmlab/errors.hpp"
#include "cmlab/net.hpp"

namespace cmlab {

// Checkpoint layout (all fields little-endian):
//   magic "CMLABNET" (8 bytes), format version u32,
//   arch descriptor: dim i32, n_hidden i32, widths i32[n_hidden], activation i32,
//     time_freqs i32, n_classes i32, class_embed_dim i32, sigma_data f64, t_min f64,
//   param_count u64, n_shadows u32, payload checksum u64 (FNV-1a),
//   payload: params f64[param_count], then per shadow
//     { beta f64, updates u64, params f64[param_count] }.
inline constexpr char kCheckpointMagic[8] = {'C', 'M', 'L', 'A', 'B', 'N', 'E', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline std::uint64_t fnv1a(const unsigned char* data, std::size_t n,
                           std::uint64_t h = 14695981039346656037ULL) {
    for (std::size_t i = 0; i < n; ++i) {
        h ^= data[i];
        h *= 1099511628211ULL;
    }
    return h;
}

struct ByteSink {
    std::vector<unsigned char> bytes;
    template <class T>
    void put(const T& v) {
        const auto* p = reinterpret_cast<const unsigned char*>(&v);
        bytes.insert(bytes.end(), p, p + sizeof(T));
    }
    void put_doubles(const Vec& v) {
        const auto* p = reinterpret_cast<const unsigned char*>(v.data());
        bytes.insert(bytes.end(), p, p + v.size() * sizeof(double));
    }
};

struct ByteSource {
    const std::vector<unsigned char>& bytes;
    std::size_t pos = 0;
    template <class T>
    T get() {
        if (pos + sizeof(T) > bytes.size())
            throw CheckpointError("checkpoint: truncated file");
        T v;
        std::memcpy(&v, bytes.data() + pos, sizeof(T));
        pos += sizeof(T);
        return v;
    }
    void get_doubles(Vec& v, std::size_t n) {
        if (pos + n * sizeof(double) > bytes.size())
            throw CheckpointError("checkpoint: truncated file");
        v.resize(n);
        std::memcpy(v.data(), bytes.data() + pos, n * sizeof(double));
        pos += n * sizeof(double);
    }
};

}  // namespace detail

struct Checkpoint {
    ConsistencyNet net;
    std::vector<EmaShadow> shadows;
};

inline std::vector<unsigned char> checkpoint_bytes(const ConsistencyNet& net,
                                                   const std::vector<EmaShadow>& shadows) {
    const NetSpec& s = net.spec();
    detail::ByteSink payload;
    payload.put_doubles(net.params());
    for (const auto& sh : shadows) {
        if (sh.params.size() != net.params().size())
            throw CheckpointError("checkpoint: shadow parameter size mismatch");
        payload.put<double>(sh.beta);
        payload.put<std::uint64_t>(static_cast<std::uint64_t>(sh.updates));
        payload.put_doubles(sh.params);
    }
    const std::uint64_t sum = detail::fnv1a(payload.bytes.data(), payload.bytes.size());

    detail::ByteSink out;
    out.bytes.insert(out.bytes.end(), kCheckpointMagic, kCheckpointMagic + 8);
    out.put<std::uint32_t>(kCheckpointVersion);
    out.put<std::int32_t>(s.dim);
    out.put<std::int32_t>(static_cast<std::int32_t>(s.hidden.size()));
    for (int h : s.hidden) out.put<std::int32_t>(h);
    out.put<std::int32_t>(static_cast<std::int32_t>(s.act));
    out.put<std::int32_t>(s.time_freqs);
    out.put<std::int32_t>(s.n_classes);
    out.put<std::int32_t>(s.class_embed_dim);
    out.put<double>(s.sigma_data);
    out.put<double>(s.t_min);
    out.put<std::uint64_t>(static_cast<std::uint64_t>(s.param_count()));
    out.put<std::uint32_t>(static_cast<std::uint32_t>(shadows.size()));
    out.put<std::uint64_t>(sum);
    out.bytes.insert(out.bytes.end(), payload.bytes.begin(), payload.bytes.end());
    return out.bytes;
}

inline void save_checkpoint(const ConsistencyNet& net, const std::vector<EmaShadow>& shadows,
                            const std::string& path) {
    const auto bytes = checkpoint_bytes(net, shadows);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw CheckpointError("checkpoint: cannot open for writing: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) throw CheckpointError("checkpoint: write failed: " + path);
}

inline Checkpoint load_checkpoint_bytes(const std::vector<unsigned char>& bytes) {
    detail::ByteSource src{bytes};
    char magic[8];
    for (auto& c : magic) c = static_cast<char>(src.get<unsigned char>());
    if (std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw CheckpointError("checkpoint: bad magic (not a checkpoint file)");
    const auto version = src.get<std::uint32_t>();
    if (version != kCheckpointVersion)
        throw CheckpointError("checkpoint: unsupported format version " +
                              std::to_string(version));
    NetSpec spec;
    spec.dim = src.get<std::int32_t>();
    const auto n_hidden = src.get<std::int32_t>();
    if (n_hidden < 0 || n_hidden > 1024) throw CheckpointError("checkpoint: bad arch descriptor");
    spec.hidden.resize(n_hidden);
    for (auto& h : spec.hidden) h = src.get<std::int32_t>();
    spec.act = static_cast<Activation>(src.get<std::int32_t>());
    spec.time_freqs = src.get<std::int32_t>();
    spec.n_classes = src.get<std::int32_t>();
    spec.class_embed_dim = src.get<std::int32_t>();
    spec.sigma_data = src.get<double>();
    spec.t_min = src.get<double>();
    const auto param_count = src.get<std::uint64_t>();
    const auto n_shadows = src.get<std::uint32_t>();
    const auto stored_sum = src.get<std::uint64_t>();

    spec.validate();
    if (param_count != static_cast<std::uint64_t>(spec.param_count()))
        throw CheckpointError("checkpoint: parameter count disagrees with arch descriptor");

    const std::size_t payload_start = src.pos;
    const std::size_t expect = param_count * sizeof(double) +
                               n_shadows * (sizeof(double) + sizeof(std::uint64_t) +
                                            param_count * sizeof(double));
    if (bytes.size() != payload_start + expect)
        throw CheckpointError("checkpoint: truncated or oversized payload");
    const std::uint64_t sum = detail::fnv1a(bytes.data() + payload_start, expect);
    if (sum != stored_sum) throw CheckpointError("checkpoint: checksum mismatch (corrupt file)");

    Checkpoint ck{ConsistencyNet(spec), {}};
    src.get_doubles(ck.net.params(), param_count);
    ck.shadows.resize(n_shadows);
    for (auto& sh : ck.shadows) {
        sh.beta = src.get<double>();
        sh.updates = static_cast<std::int64_t>(src.get<std::uint64_t>());
        src.get_doubles(sh.params, param_count);
    }
    return ck;
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw CheckpointError("checkpoint: cannot open: " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                     std::istreambuf_iterator<char>());
    return load_checkpoint_bytes(bytes);
}

// payload checksum, used as a compact checkpoint identity in manifests
inline std::string checkpoint_id(const ConsistencyNet& net, const std::vector<EmaShadow>& shadows) {
    detail::ByteSink payload;
    payload.put_doubles(net.params());
    for (const auto& sh : shadows) {
        payload.put<double>(sh.beta);
        payload.put<std::uint64_t>(static_cast<std::uint64_t>(sh.updates));
        payload.put_doubles(sh.params);
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(
                      detail::fnv1a(payload.bytes.data(), payload.bytes.size())));
    return buf;
}

}  // namespace cmlab
