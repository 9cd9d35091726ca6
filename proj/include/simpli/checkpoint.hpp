#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "simpli/binary_io.hpp"
#include "simpli/nn.hpp"

namespace simpli {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Decoded SMPC file: named float32 arrays in file order.
struct Checkpoint {
    struct Entry {
        std::string name;
        std::vector<std::uint32_t> extents;
        std::vector<float> values;
    };
    std::vector<Entry> entries;

    std::size_t element_count() const {
        std::size_t n = 0;
        for (const auto& e : entries) n += e.values.size();
        return n;
    }
};

inline std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
    ByteWriter w;
    w.put_string("SMPC");
    w.put<std::uint32_t>(kCheckpointVersion);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(ck.entries.size()));
    for (const auto& e : ck.entries) {
        if (e.name.size() > std::numeric_limits<std::uint16_t>::max()) throw std::invalid_argument("checkpoint: name too long: " + e.name);
        if (e.extents.size() > std::numeric_limits<std::uint8_t>::max()) throw std::invalid_argument("checkpoint: rank too large: " + e.name);
        std::size_t n = 1;
        for (auto x : e.extents) n *= x;
        if (n != e.values.size()) throw std::invalid_argument("checkpoint: extents do not match payload for " + e.name);
        w.put<std::uint16_t>(static_cast<std::uint16_t>(e.name.size()));
        w.put_string(e.name);
        w.put<std::uint8_t>(static_cast<std::uint8_t>(e.extents.size()));
        for (auto x : e.extents) w.put<std::uint32_t>(x);
        for (float v : e.values) w.put<float>(v);
    }
    return w.take();
}

inline Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes, "checkpoint");
    if (r.get_string(4) != "SMPC") throw FormatError("checkpoint: bad magic, not an SMPC file");
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(version));
    const auto count = r.get<std::uint32_t>();
    Checkpoint ck;
    for (std::uint32_t i = 0; i < count; ++i) {
        Checkpoint::Entry e;
        e.name = r.get_string(r.get<std::uint16_t>());
        const auto rank = r.get<std::uint8_t>();
        std::size_t n = 1;
        for (std::uint8_t k = 0; k < rank; ++k) {
            e.extents.push_back(r.get<std::uint32_t>());
            n *= e.extents.back();
        }
        if (n > r.remaining() / sizeof(float)) throw FormatError("checkpoint: truncated payload for " + e.name);
        e.values.resize(n);
        for (auto& v : e.values) v = r.get<float>();
        ck.entries.push_back(std::move(e));
    }
    r.expect_end();
    return ck;
}

template <std::floating_point T>
Checkpoint to_checkpoint(const nn::ParameterStore<T>& store) {
    Checkpoint ck;
    for (const auto& [name, t] : store.items()) {
        Checkpoint::Entry e{name, {}, {}};
        for (auto d : t.shape()) e.extents.push_back(static_cast<std::uint32_t>(d));
        e.values.assign(t.values().begin(), t.values().end());
        ck.entries.push_back(std::move(e));
    }
    return ck;
}

/// Requires exactly the store's parameter set with matching shapes.
template <std::floating_point T>
void apply_checkpoint(const Checkpoint& ck, nn::ParameterStore<T>& store) {
    if (ck.entries.size() != store.size())
        throw FormatError("checkpoint: has " + std::to_string(ck.entries.size()) + " parameters, model expects " + std::to_string(store.size()));
    for (const auto& e : ck.entries) {
        if (!store.contains(e.name)) throw FormatError("checkpoint: unknown parameter '" + e.name + "'");
        Tensor<T> t = store.at(e.name);
        Shape s(e.extents.begin(), e.extents.end());
        if (s != t.shape()) throw FormatError("checkpoint: shape " + shape_str(s) + " for '" + e.name + "', model expects " + shape_str(t.shape()));
        std::transform(e.values.begin(), e.values.end(), t.values().begin(), [](float v) { return static_cast<T>(v); });
    }
}

template <std::floating_point T>
void save_checkpoint(const std::filesystem::path& path, const nn::ParameterStore<T>& store) {
    write_file_bytes(path, encode_checkpoint(to_checkpoint(store)));
}

template <std::floating_point T>
void load_checkpoint(const std::filesystem::path& path, nn::ParameterStore<T>& store) {
    apply_checkpoint(decode_checkpoint(read_file_bytes(path)), store);
}

}  // namespace simpli
