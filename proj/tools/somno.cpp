// somno: sleep staging from PPG — synth / preprocess / augment / train / eval.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <somno/somno.hpp>

namespace fs = std::filesystem;
using namespace somno;

namespace {

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw DataError("failed writing '" + path + "'");
}

std::vector<std::string> list_recordings(const std::string& dir) {
    if (!fs::is_directory(dir)) throw DataError("not a directory: '" + dir + "'");
    std::vector<std::string> paths;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".psg1")
            paths.push_back(entry.path().string());
    }
    std::sort(paths.begin(), paths.end());
    if (paths.empty()) throw DataError("no .psg1 recordings in '" + dir + "'");
    return paths;
}

/// Per-recording augmentation parameters: the base seed is mixed with the
/// subject id so each recording gets independent noise, reproducibly.
AugmentParams per_recording_augment(const AugmentParams& base, const std::string& subject_id) {
    AugmentParams p = base;
    p.seed = base.seed ^ fnv1a64(subject_id);
    return p;
}

/// Assemble model input channels per the strategy. Aux channels are either
/// generated (ppg+aug) or loaded from the recording (ppg+file:NAME).
Sample make_sample(const Recording& rec, const Strategy& strategy, const AugmentParams& aug,
                   std::int64_t expect_spe) {
    if (rec.samples_per_epoch() != expect_spe)
        throw DataError("recording '" + rec.subject_id + "' has " +
                        std::to_string(rec.samples_per_epoch()) +
                        " samples per epoch, model expects " + std::to_string(expect_spe));
    const SampledSignal* ppg = rec.find_channel("ppg");
    if (!ppg)
        throw ConfigError("recording '" + rec.subject_id + "' has no channel 'ppg'");

    Sample s;
    s.channels.push_back(ppg->samples);
    if (strategy.kind == Strategy::Kind::PpgAug) {
        s.channels.push_back(augment_ppg(*ppg, per_recording_augment(aug, rec.subject_id)).samples);
    } else if (strategy.kind == Strategy::Kind::PpgFile) {
        const SampledSignal* auxch = rec.find_channel(strategy.file_channel);
        if (!auxch)
            throw ConfigError("recording '" + rec.subject_id + "' has no channel '" +
                              strategy.file_channel + "' required by strategy " + strategy.str());
        s.channels.push_back(auxch->samples);
    }
    for (Stage st : rec.labels) s.labels.push_back(static_cast<std::int64_t>(st));
    return s;
}

void cmd_synth(const RunConfig& rc, const std::string& out_dir) {
    rc.synth.validate();
    if (rc.n_subjects < 1) throw ConfigError("synth: n_subjects must be >= 1");
    fs::create_directories(out_dir);

    SeededRng master(rc.synth.seed);
    nlohmann::json manifest = nlohmann::json::array();
    for (int i = 0; i < rc.n_subjects; ++i) {
        SynthConfig cfg = rc.synth;
        cfg.seed = master.fork_seed();
        const std::string sid = subject_name(i);
        save_recording(generate_synthetic(cfg, sid), out_dir + "/" + sid + ".psg1");
        manifest.push_back({{"subject_id", sid}, {"seed", cfg.seed}, {"n_epochs", cfg.n_epochs}});
    }
    write_text(out_dir + "/manifest.json", manifest.dump(2) + "\n");
    std::cout << "wrote " << rc.n_subjects << " recordings to " << out_dir << "\n";
}

void cmd_preprocess(const std::string& in_path, const std::string& out_path,
                    const std::string& kind) {
    if (kind != "ppg" && kind != "ecg")
        throw ConfigError("preprocess: --kind must be ppg or ecg, got '" + kind + "'");
    Recording rec = load_recording(in_path);
    for (auto& c : rec.channels) {
        if (kind == "ppg" && c.name != "ppg")
            std::cerr << "warning: applying ppg pipeline to channel '" << c.name << "'\n";
        if (kind == "ecg" && c.name == "ppg")
            std::cerr << "warning: applying ecg pipeline to channel 'ppg'\n";
        c.signal = kind == "ppg" ? preprocess_ppg(c.signal) : preprocess_ecg(c.signal);
    }
    rec.validate();
    save_recording(rec, out_path);
    std::cout << "wrote " << out_path << " at " << rec.channels[0].signal.rate.str() << " Hz\n";
}

void cmd_augment(const RunConfig& rc, const std::string& in_path, const std::string& out_path) {
    Recording rec = load_recording(in_path);
    const SampledSignal* ppg = rec.find_channel("ppg");
    if (!ppg) throw DataError("recording '" + rec.subject_id + "' has no channel 'ppg'");
    SampledSignal aug = augment_ppg(*ppg, per_recording_augment(rc.augment, rec.subject_id));

    bool replaced = false;
    for (auto& c : rec.channels) {
        if (c.name == "aug") {
            c.signal = std::move(aug);
            replaced = true;
            break;
        }
    }
    if (!replaced) rec.channels.push_back({"aug", std::move(aug)});
    rec.validate();
    save_recording(rec, out_path);
    std::cout << "wrote " << out_path << " with channel 'aug'\n";
}

struct LoadedSplit {
    std::vector<Sample> train, val, test;
};

LoadedSplit load_split(const RunConfig& rc, const std::string& data_dir, std::int64_t expect_spe) {
    const std::vector<std::string> paths = list_recordings(data_dir);
    const std::array<int, 3> counts =
        split_counts(static_cast<int>(paths.size()), rc.split_ratios);
    LoadedSplit out;
    for (std::size_t i = 0; i < paths.size(); ++i) {
        Sample s = make_sample(load_recording(paths[i]), rc.strategy, rc.augment, expect_spe);
        if (static_cast<int>(i) < counts[0])
            out.train.push_back(std::move(s));
        else if (static_cast<int>(i) < counts[0] + counts[1])
            out.val.push_back(std::move(s));
        else
            out.test.push_back(std::move(s));
    }
    return out;
}

void cmd_train(const RunConfig& rc, const std::string& data_dir, const std::string& out_dir) {
    rc.train.validate();
    const ModelConfig mc = rc.materialize_model();
    LoadedSplit split = load_split(rc, data_dir, mc.samples_per_epoch);
    if (split.train.empty() || split.val.empty())
        throw ConfigError("train: split left no training or validation recordings (have " +
                          std::to_string(split.train.size()) + " train, " +
                          std::to_string(split.val.size()) + " val)");

    Model model(mc, rc.train.seed);
    const TrainState state = train_loop(model, split.train, split.val, rc.train);

    fs::create_directories(out_dir);
    std::string log = "epoch,train_loss,val_kappa,seconds\n";
    for (std::size_t i = 0; i < state.history.size(); ++i) {
        char line[128];
        std::snprintf(line, sizeof line, "%zu,%.6f,%.6f,%.3f\n", i + 1,
                      state.history[i].train_loss, state.history[i].val_kappa,
                      state.history[i].seconds);
        log += line;
    }
    write_text(out_dir + "/log.csv", log);
    save_checkpoint(model.params(), out_dir + "/checkpoint.snck");
    write_text(out_dir + "/model.cfg", model_sidecar_text(mc, rc.augment, rc.strategy));
    std::printf("best val kappa %.4f after %zu epochs (%lld steps)\n", state.best_val_kappa,
                state.history.size(), static_cast<long long>(state.step));
}

void cmd_eval(const std::string& checkpoint_path, const std::string& data_dir,
              const std::string& out_dir) {
    const fs::path sidecar = fs::path(checkpoint_path).parent_path() / "model.cfg";
    RunConfig rc;
    load_config_file(rc, sidecar.string());
    const ModelConfig mc = rc.materialize_model();

    Model model(mc, 0);
    load_checkpoint(model.params(), checkpoint_path);

    std::vector<int> truth, pred;
    for (const std::string& path : list_recordings(data_dir)) {
        const Sample s = make_sample(load_recording(path), rc.strategy, rc.augment,
                                     mc.samples_per_epoch);
        const std::vector<int> p = model.predict(s.channels);
        for (std::size_t i = 0; i < p.size(); ++i) {
            truth.push_back(static_cast<int>(s.labels[i]));
            pred.push_back(p[i]);
        }
    }
    const EvalReport rep = evaluate(truth, pred);
    const std::string text = render_report(rep);
    std::cout << text;
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        write_text(out_dir + "/report.txt", text);
        write_text(out_dir + "/report.json", report_json(rep));
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"somno: four-class sleep staging from PPG"};
    app.require_subcommand(1);

    RunConfig rc;
    std::string config_path, out_dir, in_path, out_path, data_dir, checkpoint_path;
    std::string kind = "ppg", strategy_text;
    std::uint64_t seed = 0;
    int epochs = 0, subjects = 0;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "key = value settings file");
        sub->add_option("--seed", seed, "master seed override");
    };

    CLI::App* synth = app.add_subcommand("synth", "generate synthetic recordings");
    add_common(synth);
    synth->add_option("--out", out_dir, "output directory")->required();
    synth->add_option("--subjects", subjects, "number of subjects");
    synth->add_option("--epochs", epochs, "30-s epochs per recording");

    CLI::App* preprocess = app.add_subcommand("preprocess", "filter + resample a recording");
    add_common(preprocess);
    preprocess->add_option("--in", in_path, "input recording")->required();
    preprocess->add_option("--out", out_path, "output recording")->required();
    preprocess->add_option("--kind", kind, "ppg or ecg");

    CLI::App* augment = app.add_subcommand("augment", "add an augmented PPG channel");
    add_common(augment);
    augment->add_option("--in", in_path, "input recording")->required();
    augment->add_option("--out", out_path, "output recording")->required();

    CLI::App* train = app.add_subcommand("train", "train a model on a recording directory");
    add_common(train);
    train->add_option("--data", data_dir, "directory of .psg1 recordings")->required();
    train->add_option("--out", out_dir, "artifact directory")->required();
    train->add_option("--strategy", strategy_text, "ppg, ppg+aug, or ppg+file:NAME");
    train->add_option("--epochs", epochs, "max training epochs");

    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on a directory");
    add_common(eval);
    eval->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    eval->add_option("--data", data_dir, "directory of .psg1 recordings")->required();
    eval->add_option("--out", out_dir, "report directory (optional)");

    try {
        app.parse(argc, argv);

        if (!config_path.empty()) load_config_file(rc, config_path);
        CLI::App* sub = app.get_subcommands().front();
        if (sub->count("--seed")) {
            rc.train.seed = seed;
            rc.synth.seed = seed;
            rc.augment.seed = seed;
        }
        if (!strategy_text.empty()) rc.strategy = Strategy::parse(strategy_text);

        if (sub == synth) {
            if (synth->count("--subjects")) rc.n_subjects = subjects;
            if (synth->count("--epochs")) rc.synth.n_epochs = epochs;
            cmd_synth(rc, out_dir);
        } else if (sub == preprocess) {
            cmd_preprocess(in_path, out_path, kind);
        } else if (sub == augment) {
            cmd_augment(rc, in_path, out_path);
        } else if (sub == train) {
            if (train->count("--epochs")) rc.train.max_epochs = epochs;
            cmd_train(rc, data_dir, out_dir);
        } else if (sub == eval) {
            cmd_eval(checkpoint_path, data_dir, out_dir);
        }
        return 0;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
