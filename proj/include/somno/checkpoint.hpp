#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "somno/errors.hpp"
#include "somno/recording.hpp"
#include "somno/tensor.hpp"

namespace somno {

namespace detail {

inline constexpr char kCkptMagic[4] = {'S', 'N', 'C', 'K'};
inline constexpr std::uint16_t kCkptVersion = 1;

} // namespace detail

/// Write parameters as a named-tensor container: name, shape, raw
/// little-endian doubles. Deterministic byte stream for fixed inputs.
inline void save_checkpoint(const std::vector<Parameter>& params, const std::string& path) {
    for (const Parameter& p : params) {
        if (p.name.empty() || p.name.size() > 0xFFFF)
            throw DataError("checkpoint: bad parameter name length");
        if (p.tensor.rank() > 255) throw DataError("checkpoint: tensor rank too large");
    }
    detail::ByteWriter w(path);
    w.bytes(detail::kCkptMagic, 4);
    w.u16(detail::kCkptVersion);
    w.u32(static_cast<std::uint32_t>(params.size()));
    for (const Parameter& p : params) {
        w.u16(static_cast<std::uint16_t>(p.name.size()));
        w.bytes(p.name.data(), p.name.size());
        w.u8(static_cast<std::uint8_t>(p.tensor.rank()));
        for (int i = 0; i < p.tensor.rank(); ++i)
            w.u32(static_cast<std::uint32_t>(p.tensor.dim(i)));
        for (double v : p.tensor.data()) w.f64(v);
    }
    if (!w.out) throw DataError("write failed for '" + path + "'");
}

struct NamedTensor {
    Shape shape;
    std::vector<double> data;
};

inline std::map<std::string, NamedTensor> load_named_tensors(const std::string& path) {
    detail::ByteReader r(path);
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, detail::kCkptMagic, 4) != 0)
        throw FormatError("'" + path + "': bad checkpoint magic", 0);
    const std::uint16_t version = r.u16();
    if (version != detail::kCkptVersion)
        throw FormatError("'" + path + "': unsupported checkpoint version " + std::to_string(version), 4);
    const std::uint32_t count = r.u32();
    std::map<std::string, NamedTensor> tensors;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint64_t entry_off = r.offset;
        const std::uint16_t name_len = r.u16();
        if (name_len == 0) throw FormatError("'" + path + "': empty tensor name", entry_off);
        std::string name(name_len, '\0');
        r.bytes(name.data(), name_len);
        const std::uint8_t rank = r.u8();
        Shape shape(rank);
        for (std::uint8_t d = 0; d < rank; ++d) {
            shape[d] = static_cast<std::int64_t>(r.u32());
            if (shape[d] == 0) throw FormatError("'" + path + "': zero dimension", entry_off);
        }
        NamedTensor t;
        t.shape = std::move(shape);
        t.data.resize(static_cast<std::size_t>(shape_numel(t.shape)));
        for (double& v : t.data) v = r.f64();
        if (!tensors.emplace(std::move(name), std::move(t)).second)
            throw FormatError("'" + path + "': duplicate tensor name", entry_off);
    }
    if (!r.at_eof()) throw FormatError("'" + path + "': trailing bytes", r.offset);
    return tensors;
}

/// Restore parameter values by name; every parameter must be present with a
/// matching shape, and the file must not carry extras.
inline void load_checkpoint(std::vector<Parameter>& params, const std::string& path) {
    std::map<std::string, NamedTensor> tensors = load_named_tensors(path);
    for (Parameter& p : params) {
        auto it = tensors.find(p.name);
        if (it == tensors.end())
            throw DataError("checkpoint '" + path + "': missing tensor '" + p.name + "'");
        if (it->second.shape != p.tensor.shape())
            throw DataError("checkpoint '" + path + "': tensor '" + p.name + "' shape " +
                            shape_str(it->second.shape) + " != expected " +
                            shape_str(p.tensor.shape()));
        p.tensor.data() = std::move(it->second.data);
        tensors.erase(it);
    }
    if (!tensors.empty())
        throw DataError("checkpoint '" + path + "': unexpected tensor '" +
                        tensors.begin()->first + "'");
}

} // namespace somno
