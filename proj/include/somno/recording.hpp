#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "somno/errors.hpp"
#include "somno/signal.hpp"

namespace somno {

enum class Stage : std::uint8_t { Wake = 0, Light = 1, Deep = 2, Rem = 3 };

inline constexpr int kNumStages = 4;

inline const char* stage_name(Stage s) {
    switch (s) {
    case Stage::Wake: return "Wake";
    case Stage::Light: return "Light";
    case Stage::Deep: return "Deep";
    case Stage::Rem: return "REM";
    }
    return "?";
}

using Hypnogram = std::vector<Stage>;

struct NamedChannel {
    std::string name;
    SampledSignal signal;
};

/// One subject-night: channels sharing a rate, one stage label per 30-s
/// epoch. At the canonical rate each epoch is exactly 1024 samples; raw
/// captures at other rates store 30 x rate samples per epoch.
struct Recording {
    std::vector<NamedChannel> channels;
    std::vector<Stage> labels;
    std::string subject_id;

    std::int64_t n_epochs() const { return static_cast<std::int64_t>(labels.size()); }

    /// Samples per 30-s epoch at this recording's rate.
    std::int64_t samples_per_epoch() const {
        if (channels.empty()) throw DataError("recording: no channels");
        const Rational& r = channels[0].signal.rate;
        if ((30 * r.num) % r.den != 0)
            throw DataError("recording: rate " + r.str() + " does not give whole-sample epochs");
        return 30 * r.num / r.den;
    }

    const SampledSignal* find_channel(const std::string& name) const {
        for (const auto& c : channels)
            if (c.name == name) return &c.signal;
        return nullptr;
    }

    void validate() const {
        if (labels.empty()) throw DataError("recording: no epoch labels");
        if (channels.empty()) throw DataError("recording: no channels");
        const std::int64_t spe = samples_per_epoch();
        if (spe < 1) throw DataError("recording: non-positive samples per epoch");
        const std::int64_t expect = spe * n_epochs();
        for (const auto& c : channels) {
            if (c.name.empty() || c.name.size() > 255)
                throw DataError("recording: channel name must be 1..255 bytes");
            if (c.signal.rate != channels[0].signal.rate)
                throw DataError("recording: channel '" + c.name + "' rate differs");
            if (c.signal.size() != expect)
                throw DataError("recording: channel '" + c.name + "' has " +
                                std::to_string(c.signal.size()) + " samples, expected " +
                                std::to_string(expect));
        }
        for (std::size_t i = 0; i < channels.size(); ++i)
            for (std::size_t j = i + 1; j < channels.size(); ++j)
                if (channels[i].name == channels[j].name)
                    throw DataError("recording: duplicate channel name '" + channels[i].name + "'");
    }
};

namespace detail {

inline constexpr char kMagic[4] = {'P', 'S', 'G', '1'};
inline constexpr std::uint16_t kFormatVersion = 1;

struct ByteWriter {
    std::ofstream out;
    explicit ByteWriter(const std::string& path) : out(path, std::ios::binary) {
        if (!out) throw DataError("cannot open '" + path + "' for writing");
    }
    void bytes(const void* p, std::size_t n) { out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
    void u8(std::uint8_t v) { bytes(&v, 1); }
    void u16(std::uint16_t v) {
        const std::uint8_t b[2] = {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8)};
        bytes(b, 2);
    }
    void u32(std::uint32_t v) {
        std::uint8_t b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<std::uint8_t>(v >> (8 * i));
        bytes(b, 4);
    }
    void f32(float v) {
        std::uint32_t u;
        std::memcpy(&u, &v, 4);
        u32(u);
    }
    void f64(double v) {
        std::uint64_t u;
        std::memcpy(&u, &v, 8);
        std::uint8_t b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<std::uint8_t>(u >> (8 * i));
        bytes(b, 8);
    }
};

struct ByteReader {
    std::ifstream in;
    std::uint64_t offset = 0;
    std::string path;
    explicit ByteReader(const std::string& p) : in(p, std::ios::binary), path(p) {
        if (!in) throw DataError("cannot open '" + p + "' for reading");
    }
    void bytes(void* p, std::size_t n) {
        in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in.gcount()) != n)
            throw FormatError("'" + path + "': truncated file", offset);
        offset += n;
    }
    std::uint8_t u8() {
        std::uint8_t v;
        bytes(&v, 1);
        return v;
    }
    std::uint16_t u16() {
        std::uint8_t b[2];
        bytes(b, 2);
        return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
    }
    std::uint32_t u32() {
        std::uint8_t b[4];
        bytes(b, 4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
        return v;
    }
    float f32() {
        const std::uint32_t u = u32();
        float v;
        std::memcpy(&v, &u, 4);
        return v;
    }
    double f64() {
        std::uint8_t b[8];
        bytes(b, 8);
        std::uint64_t u = 0;
        for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        double v;
        std::memcpy(&v, &u, 8);
        return v;
    }
    bool at_eof() {
        in.peek();
        return in.eof();
    }
};

inline std::string path_stem(const std::string& path) {
    const std::size_t slash = path.find_last_of("/\\");
    std::string name = slash == std::string::npos ? path : path.substr(slash + 1);
    const std::size_t dot = name.find_last_of('.');
    if (dot != std::string::npos && dot > 0) name = name.substr(0, dot);
    return name;
}

} // namespace detail

inline void save_recording(const Recording& rec, const std::string& path) {
    rec.validate();
    const Rational& rate = rec.channels[0].signal.rate;
    if (rate.num > 0xFFFFFFFFll || rate.den > 0xFFFFFFFFll)
        throw DataError("recording: rate does not fit the file header");
    if (rec.n_epochs() > 0xFFFFFFFFll) throw DataError("recording: too many epochs");
    if (rec.channels.size() > 255) throw DataError("recording: too many channels");

    detail::ByteWriter w(path);
    w.bytes(detail::kMagic, 4);
    w.u16(detail::kFormatVersion);
    w.u8(static_cast<std::uint8_t>(rec.channels.size()));
    w.u32(static_cast<std::uint32_t>(rate.num));
    w.u32(static_cast<std::uint32_t>(rate.den));
    w.u32(static_cast<std::uint32_t>(rec.n_epochs()));
    for (const auto& c : rec.channels) {
        w.u8(static_cast<std::uint8_t>(c.name.size()));
        w.bytes(c.name.data(), c.name.size());
        for (double s : c.signal.samples) w.f32(static_cast<float>(s));
    }
    for (Stage s : rec.labels) w.u8(static_cast<std::uint8_t>(s));
    if (!w.out) throw DataError("write failed for '" + path + "'");
}

inline Recording load_recording(const std::string& path) {
    detail::ByteReader r(path);
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, detail::kMagic, 4) != 0)
        throw FormatError("'" + path + "': bad magic", 0);
    const std::uint16_t version = r.u16();
    if (version != detail::kFormatVersion)
        throw FormatError("'" + path + "': unsupported version " + std::to_string(version), 4);
    const std::uint8_t n_channels = r.u8();
    if (n_channels == 0) throw FormatError("'" + path + "': zero channels", 6);
    const std::uint32_t rate_num = r.u32();
    const std::uint32_t rate_den = r.u32();
    if (rate_num == 0 || rate_den == 0)
        throw FormatError("'" + path + "': invalid rate", 7);
    const Rational rate{static_cast<std::int64_t>(rate_num), static_cast<std::int64_t>(rate_den)};
    if ((30 * rate.num) % rate.den != 0)
        throw FormatError("'" + path + "': rate does not give whole-sample epochs", 7);
    const std::int64_t spe = 30 * rate.num / rate.den;
    const std::uint32_t n_epochs = r.u32();
    if (n_epochs == 0) throw FormatError("'" + path + "': zero epochs", 15);

    Recording rec;
    rec.subject_id = detail::path_stem(path);
    const std::int64_t n_samples = spe * static_cast<std::int64_t>(n_epochs);
    for (std::uint8_t ci = 0; ci < n_channels; ++ci) {
        const std::uint64_t name_off = r.offset;
        const std::uint8_t name_len = r.u8();
        if (name_len == 0) throw FormatError("'" + path + "': empty channel name", name_off);
        std::string name(name_len, '\0');
        r.bytes(name.data(), name_len);
        SampledSignal sig;
        sig.rate = rate;
        sig.samples.resize(static_cast<std::size_t>(n_samples));
        for (std::int64_t i = 0; i < n_samples; ++i)
            sig.samples[static_cast<std::size_t>(i)] = static_cast<double>(r.f32());
        rec.channels.push_back({std::move(name), std::move(sig)});
    }
    rec.labels.resize(n_epochs);
    for (std::uint32_t i = 0; i < n_epochs; ++i) {
        const std::uint64_t off = r.offset;
        const std::uint8_t code = r.u8();
        if (code >= kNumStages)
            throw FormatError("'" + path + "': invalid stage code " + std::to_string(code), off);
        rec.labels[i] = static_cast<Stage>(code);
    }
    if (!r.at_eof())
        throw FormatError("'" + path + "': trailing bytes after stage codes", r.offset);
    rec.validate();
    return rec;
}

/// Non-overlapping per-epoch view: one [channels x 1024] sample block plus
/// its stage, in order. Requires the canonical rate.
struct EpochItem {
    std::vector<std::vector<double>> channel_samples; // [channels][1024]
    Stage stage = Stage::Wake;
};

inline std::vector<EpochItem> epoch_split(const Recording& rec) {
    rec.validate();
    const std::int64_t spe = rec.samples_per_epoch();
    if (spe != 1024)
        throw ShapeError("epoch_split: expected 1024 samples per epoch, got " + std::to_string(spe));
    std::vector<EpochItem> items(static_cast<std::size_t>(rec.n_epochs()));
    for (std::int64_t e = 0; e < rec.n_epochs(); ++e) {
        EpochItem& item = items[static_cast<std::size_t>(e)];
        item.stage = rec.labels[static_cast<std::size_t>(e)];
        item.channel_samples.reserve(rec.channels.size());
        for (const auto& c : rec.channels) {
            const double* base = c.signal.samples.data() + e * spe;
            item.channel_samples.emplace_back(base, base + spe);
        }
    }
    return items;
}

} // namespace somno
