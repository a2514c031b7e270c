#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "somno/augment.hpp"
#include "somno/errors.hpp"
#include "somno/model.hpp"
#include "somno/synth.hpp"
#include "somno/train.hpp"

namespace somno {

/// Which channels feed the model: "ppg" runs the single-stream variant;
/// "ppg+aug" pairs it with generated augmented PPG; "ppg+file:NAME" pairs it
/// with a channel loaded from the recording.
struct Strategy {
    enum class Kind { Ppg, PpgAug, PpgFile };
    Kind kind = Kind::Ppg;
    std::string file_channel;

    static Strategy parse(const std::string& text) {
        Strategy s;
        if (text == "ppg") {
            s.kind = Kind::Ppg;
        } else if (text == "ppg+aug") {
            s.kind = Kind::PpgAug;
        } else if (text.rfind("ppg+file:", 0) == 0) {
            s.kind = Kind::PpgFile;
            s.file_channel = text.substr(9);
            if (s.file_channel.empty())
                throw ConfigError("strategy: ppg+file needs a channel name");
        } else {
            throw ConfigError("strategy: unknown strategy '" + text +
                              "' (expected ppg, ppg+aug, or ppg+file:NAME)");
        }
        return s;
    }

    ModelVariant variant() const {
        return kind == Kind::Ppg ? ModelVariant::Single : ModelVariant::Dual;
    }

    std::string str() const {
        switch (kind) {
        case Kind::Ppg: return "ppg";
        case Kind::PpgAug: return "ppg+aug";
        case Kind::PpgFile: return "ppg+file:" + file_channel;
        }
        return "ppg";
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    double out;
    try {
        out = std::stod(v, &pos);
    } catch (const std::exception&) {
        throw ConfigError("config: invalid number for '" + key + "': '" + v + "'");
    }
    if (pos != v.size()) throw ConfigError("config: invalid number for '" + key + "': '" + v + "'");
    return out;
}

inline std::int64_t parse_int(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    std::int64_t out;
    try {
        out = std::stoll(v, &pos);
    } catch (const std::exception&) {
        throw ConfigError("config: invalid integer for '" + key + "': '" + v + "'");
    }
    if (pos != v.size())
        throw ConfigError("config: invalid integer for '" + key + "': '" + v + "'");
    return out;
}

inline std::uint64_t parse_seed(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    std::uint64_t out;
    try {
        out = std::stoull(v, &pos);
    } catch (const std::exception&) {
        throw ConfigError("config: invalid seed for '" + key + "': '" + v + "'");
    }
    if (pos != v.size()) throw ConfigError("config: invalid seed for '" + key + "': '" + v + "'");
    return out;
}

inline std::vector<std::string> split_commas(const std::string& v) {
    std::vector<std::string> parts;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) parts.push_back(trim(item));
    return parts;
}

inline std::vector<std::int64_t> parse_int_list(const std::string& key, const std::string& v) {
    std::vector<std::int64_t> out;
    for (const std::string& p : split_commas(v)) out.push_back(parse_int(key, p));
    if (out.empty()) throw ConfigError("config: empty list for '" + key + "'");
    return out;
}

inline std::vector<double> parse_double_list(const std::string& key, const std::string& v) {
    std::vector<double> out;
    for (const std::string& p : split_commas(v)) out.push_back(parse_double(key, p));
    if (out.empty()) throw ConfigError("config: empty list for '" + key + "'");
    return out;
}

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace detail

/// Settings merged from a config file and command-line flags. Model settings
/// are kept as raw overrides until the strategy fixes the variant.
struct RunConfig {
    Strategy strategy;
    TrainConfig train;
    AugmentParams augment;
    SynthConfig synth;
    int n_subjects = 20;
    std::array<double, 3> split_ratios = {0.72, 0.18, 0.10};
    std::string data_dir;
    std::map<std::string, std::string> model_overrides;

    /// Default config for the strategy's variant plus any explicit overrides.
    ModelConfig materialize_model() const {
        ModelConfig m = strategy.variant() == ModelVariant::Dual ? ModelConfig::dual_default()
                                                                 : ModelConfig::single_default();
        for (const auto& [key, value] : model_overrides) {
            if (key == "model.blocks_per_stream")
                m.blocks_per_stream = static_cast<int>(detail::parse_int(key, value));
            else if (key == "model.channel_schedule")
                m.channel_schedule = detail::parse_int_list(key, value);
            else if (key == "model.fusion_blocks")
                m.fusion_blocks = static_cast<int>(detail::parse_int(key, value));
            else if (key == "model.fusion_dim")
                m.fusion_dim = detail::parse_int(key, value);
            else if (key == "model.heads")
                m.heads = detail::parse_int(key, value);
            else if (key == "model.dense_units")
                m.dense_units = detail::parse_int(key, value);
            else if (key == "model.tcn_blocks")
                m.tcn_blocks = static_cast<int>(detail::parse_int(key, value));
            else if (key == "model.tcn_kernel")
                m.tcn_kernel = detail::parse_int(key, value);
            else if (key == "model.tcn_dilations")
                m.tcn_dilations = detail::parse_int_list(key, value);
            else if (key == "model.epsilon_weighting")
                m.epsilon_weighting = detail::parse_double(key, value);
            else if (key == "model.samples_per_epoch")
                m.samples_per_epoch = detail::parse_int(key, value);
        }
        m.validate();
        return m;
    }
};

/// Apply one `key = value` setting. Unknown keys are rejected.
inline void apply_config_key(RunConfig& rc, const std::string& key, const std::string& value) {
    static const char* kModelKeys[] = {
        "model.blocks_per_stream", "model.channel_schedule", "model.fusion_blocks",
        "model.fusion_dim",        "model.heads",            "model.dense_units",
        "model.tcn_blocks",        "model.tcn_kernel",       "model.tcn_dilations",
        "model.epsilon_weighting", "model.samples_per_epoch"};
    for (const char* mk : kModelKeys) {
        if (key == mk) {
            detail::parse_double_list(key, value); // reject non-numeric early
            rc.model_overrides[key] = value;
            return;
        }
    }
    if (key == "strategy") {
        rc.strategy = Strategy::parse(value);
    } else if (key == "train.lr") {
        rc.train.lr = detail::parse_double(key, value);
    } else if (key == "train.weight_decay") {
        rc.train.weight_decay = detail::parse_double(key, value);
    } else if (key == "train.batch_size") {
        rc.train.batch_size = static_cast<int>(detail::parse_int(key, value));
    } else if (key == "train.max_epochs") {
        rc.train.max_epochs = static_cast<int>(detail::parse_int(key, value));
    } else if (key == "train.patience") {
        rc.train.patience = static_cast<int>(detail::parse_int(key, value));
    } else if (key == "train.beta1") {
        rc.train.beta1 = detail::parse_double(key, value);
    } else if (key == "train.beta2") {
        rc.train.beta2 = detail::parse_double(key, value);
    } else if (key == "train.adam_eps") {
        rc.train.adam_eps = detail::parse_double(key, value);
    } else if (key == "train.seed") {
        rc.train.seed = detail::parse_seed(key, value);
    } else if (key == "train.grad_clip") {
        rc.train.grad_clip = detail::parse_double(key, value);
    } else if (key == "augment.noise_sigma") {
        rc.augment.noise_sigma = detail::parse_double(key, value);
    } else if (key == "augment.drift_amplitude") {
        rc.augment.drift_amplitude = detail::parse_double(key, value);
    } else if (key == "augment.drift_freq") {
        rc.augment.drift_freq_hz = detail::parse_double(key, value);
    } else if (key == "augment.spike_prob") {
        rc.augment.spike_prob = detail::parse_double(key, value);
    } else if (key == "augment.spike_amplitude") {
        rc.augment.spike_amplitude = detail::parse_double(key, value);
    } else if (key == "augment.seed") {
        rc.augment.seed = detail::parse_seed(key, value);
    } else if (key == "synth.n_epochs") {
        rc.synth.n_epochs = static_cast<int>(detail::parse_int(key, value));
    } else if (key == "synth.n_subjects") {
        rc.n_subjects = static_cast<int>(detail::parse_int(key, value));
    } else if (key == "synth.noise_floor") {
        rc.synth.noise_floor = detail::parse_double(key, value);
    } else if (key == "synth.seed") {
        rc.synth.seed = detail::parse_seed(key, value);
    } else if (key == "synth.transition") {
        const std::vector<double> vals = detail::parse_double_list(key, value);
        if (vals.size() != 16)
            throw ConfigError("config: synth.transition needs 16 comma-separated values");
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c)
                rc.synth.transition[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] =
                    vals[static_cast<std::size_t>(r * 4 + c)];
    } else if (key == "synth.stage_hr" || key == "synth.stage_amp_var" ||
               key == "synth.stage_resp") {
        const std::vector<double> vals = detail::parse_double_list(key, value);
        if (vals.size() != 4) throw ConfigError("config: '" + key + "' needs 4 values");
        for (int i = 0; i < 4; ++i) {
            const auto iu = static_cast<std::size_t>(i);
            if (key == "synth.stage_hr")
                rc.synth.stage_hr_hz[iu] = vals[iu];
            else if (key == "synth.stage_amp_var")
                rc.synth.stage_amp_var[iu] = vals[iu];
            else
                rc.synth.stage_resp_hz[iu] = vals[iu];
        }
    } else if (key == "data.dir") {
        rc.data_dir = value;
    } else if (key == "data.split_ratios") {
        const std::vector<double> vals = detail::parse_double_list(key, value);
        if (vals.size() != 3) throw ConfigError("config: data.split_ratios needs 3 values");
        rc.split_ratios = {vals[0], vals[1], vals[2]};
    } else {
        throw ConfigError("config: unknown key '" + key + "'");
    }
}

inline void parse_config_text(RunConfig& rc, const std::string& text, const std::string& origin) {
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string stripped = detail::trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const std::size_t eq = stripped.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(line_no) +
                              ": expected 'key = value', got '" + stripped + "'");
        const std::string key = detail::trim(stripped.substr(0, eq));
        const std::string value = detail::trim(stripped.substr(eq + 1));
        if (key.empty())
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
        apply_config_key(rc, key, value);
    }
}

inline void load_config_file(RunConfig& rc, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    parse_config_text(rc, buf.str(), path);
}

namespace detail {

inline std::string join_ints(const std::vector<std::int64_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(v[i]);
    }
    return out;
}

} // namespace detail

/// Sidecar written next to a checkpoint: everything needed to rebuild the
/// model and its input channels for evaluation. Parses with the same
/// config-file grammar.
inline std::string model_sidecar_text(const ModelConfig& m, const AugmentParams& aug,
                                      const Strategy& strategy) {
    std::string out;
    out += "strategy = " + strategy.str() + "\n";
    out += "model.blocks_per_stream = " + std::to_string(m.blocks_per_stream) + "\n";
    out += "model.channel_schedule = " + detail::join_ints(m.channel_schedule) + "\n";
    out += "model.fusion_blocks = " + std::to_string(m.fusion_blocks) + "\n";
    out += "model.fusion_dim = " + std::to_string(m.fusion_dim) + "\n";
    out += "model.heads = " + std::to_string(m.heads) + "\n";
    out += "model.dense_units = " + std::to_string(m.dense_units) + "\n";
    out += "model.tcn_blocks = " + std::to_string(m.tcn_blocks) + "\n";
    out += "model.tcn_kernel = " + std::to_string(m.tcn_kernel) + "\n";
    out += "model.tcn_dilations = " + detail::join_ints(m.tcn_dilations) + "\n";
    out += "model.epsilon_weighting = " + detail::fmt_double(m.epsilon_weighting) + "\n";
    out += "model.samples_per_epoch = " + std::to_string(m.samples_per_epoch) + "\n";
    out += "augment.noise_sigma = " + detail::fmt_double(aug.noise_sigma) + "\n";
    out += "augment.drift_amplitude = " + detail::fmt_double(aug.drift_amplitude) + "\n";
    out += "augment.drift_freq = " + detail::fmt_double(aug.drift_freq_hz) + "\n";
    out += "augment.spike_prob = " + detail::fmt_double(aug.spike_prob) + "\n";
    out += "augment.spike_amplitude = " + detail::fmt_double(aug.spike_amplitude) + "\n";
    out += "augment.seed = " + std::to_string(aug.seed) + "\n";
    return out;
}

} // namespace somno
