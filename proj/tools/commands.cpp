#include "commands.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "dkamc/attributes.hpp"
#include "dkamc/checkpoint.hpp"
#include "dkamc/dataset.hpp"
#include "dkamc/errors.hpp"
#include "dkamc/eval.hpp"
#include "dkamc/gradient_suite.hpp"
#include "dkamc/models.hpp"
#include "dkamc/training.hpp"

namespace dkamc::cli {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v, const char* f = "%.4f") {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << text;
}

std::optional<std::string> read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path parent_or_dot(const fs::path& p) { return p.has_parent_path() ? p.parent_path() : fs::path("."); }

Dataset load_input_dataset(const RunConfig& config) {
    const fs::path path = config.dataset_path();
    if (!fs::exists(path)) throw IoError("dataset '" + path.string() + "' does not exist; run `dkamc gen` first");
    return load_dataset(path);
}

struct Splits {
    Dataset fit;
    std::optional<Dataset> validation;
    Dataset test;
};

Splits make_splits(const Dataset& dataset, const RunConfig& config) {
    const TrainConfig tc = config.training();
    DatasetSplit outer = split_dataset(dataset, tc.train_fraction, tc.seed);
    Splits s{std::move(outer.train), std::nullopt, std::move(outer.test)};
    const double vf = config.val_fraction();
    if (vf > 0.0) {
        DatasetSplit inner = split_dataset(s.fit, 1.0 - vf, tc.seed + 1);
        s.fit = std::move(inner.train);
        s.validation = std::move(inner.test);
    }
    return s;
}

template <typename Model>
void save_model(Model& model, const fs::path& path) {
    fs::create_directories(parent_or_dot(path));
    const auto state = model.state();
    save_checkpoint(path, snapshot_state<float>(std::span(state)));
}

template <typename Model>
void load_model(Model& model, const fs::path& path) {
    if (!fs::exists(path)) throw IoError("checkpoint '" + path.string() + "' does not exist");
    const auto entries = load_checkpoint(path);
    const auto state = model.state();
    restore_state<float>(std::span(state), entries);
}

void report_stage(const TrainReport& r, const fs::path& csv, bool timing, std::ostream& out) {
    write_text(csv, r.to_csv(timing));
    if (!r.epochs.empty()) {
        const auto& first = r.epochs.front();
        const auto& last = r.epochs.back();
        out << r.stage << ": " << r.epochs.size() << " epochs, loss " << fmt(first.train_loss, "%.6g") << " -> "
            << fmt(last.train_loss, "%.6g");
        if (!std::isnan(last.val_metric)) out << ", final val_metric " << fmt(last.val_metric, "%.6g");
        out << "\n";
    }
    out << "wrote " << csv.string() << "\n";
}

// One CSV block per model: model,name,kind,kernel,output.
void print_trace(const std::string& model, const ShapeTrace& trace, std::ostream& out) {
    for (const auto& r : trace) {
        out << model << ',' << r.name << ',' << r.kind << ',' << (r.kernel.empty() ? "-" : r.kernel) << ','
            << shape_string(r.output) << '\n';
    }
}

Dataset frames_at_snr(const Dataset& ds, int snr) {
    Dataset out{{}, ds.class_names, ds.frame_length};
    for (const auto& f : ds.frames)
        if (f.snr_db == snr) out.frames.push_back(f);
    return out;
}

// The requested SNR when present, else the nearest one (higher on ties).
int nearest_snr(const Dataset& ds, int wanted) {
    int best = ds.frames.front().snr_db;
    for (const auto& f : ds.frames) {
        const int d = std::abs(f.snr_db - wanted), bd = std::abs(best - wanted);
        if (d < bd || (d == bd && f.snr_db > best)) best = f.snr_db;
    }
    return best;
}

}  // namespace

int cmd_gen(const RunConfig& config, std::ostream& out) {
    const ChannelConfig channel = config.channel();
    const auto schemes = config.classes();
    const Dataset ds = synthesize_dataset(channel, schemes, config.workers());
    const fs::path path = config.dataset_path();
    fs::create_directories(parent_or_dot(path));
    save_dataset(ds, path);
    config.write_resolved(parent_or_dot(path));
    out << "wrote " << ds.frames.size() << " frames (" << ds.num_classes() << " classes x "
        << channel.snr_grid_db.size() << " SNRs x " << channel.frames_per_class_per_snr << ") to " << path.string()
        << "\n";
    return kExitOk;
}

int cmd_pretrain_visual(const RunConfig& config, std::ostream& out) {
    const TrainConfig tc = config.training();
    const Dataset ds = load_input_dataset(config);
    const Splits s = make_splits(ds, config);
    VisualModel<float> model(ds.num_classes());
    model.init(tc.seed);
    const TrainReport r = pretrain_visual(model, s.fit, s.validation ? &*s.validation : nullptr, tc);
    const fs::path dir = config.checkpoint_dir();
    save_model(model, dir / kVisualCheckpoint);
    report_stage(r, dir / "train_visual.csv", config.timing(), out);
    config.write_resolved(dir);
    out << "wrote " << (dir / kVisualCheckpoint).string() << "\n";
    return kExitOk;
}

int cmd_pretrain_attr(const RunConfig& config, std::ostream& out) {
    const TrainConfig tc = config.training();
    const Dataset ds = load_input_dataset(config);
    const auto schemes = dataset_schemes(ds);
    const ClassAttributeMatrix cam = class_attribute_matrix(schemes);
    const Splits s = make_splits(ds, config);
    AttributeModel<float> model;
    model.init(tc.seed + 1);
    const TrainReport r = pretrain_attribute(model, s.fit, s.validation ? &*s.validation : nullptr, cam, tc);
    const fs::path dir = config.checkpoint_dir();
    save_model(model, dir / kAttributeCheckpoint);
    report_stage(r, dir / "train_attribute.csv", config.timing(), out);
    config.write_resolved(dir);
    out << "wrote " << (dir / kAttributeCheckpoint).string() << "\n";
    return kExitOk;
}

int cmd_train_embed(const RunConfig& config, std::ostream& out) {
    const TrainConfig tc = config.training();
    const Dataset ds = load_input_dataset(config);
    const ClassAttributeMatrix cam = class_attribute_matrix(dataset_schemes(ds));
    const Splits s = make_splits(ds, config);
    const fs::path dir = config.checkpoint_dir();
    VisualModel<float> visual(ds.num_classes());
    AttributeModel<float> attribute;
    load_model(visual, dir / kVisualCheckpoint);
    load_model(attribute, dir / kAttributeCheckpoint);
    TransformNet<float> tnet;
    tnet.init(tc.seed + 2);
    const TrainReport r = train_embedding(visual, attribute, tnet, s.fit, s.validation ? &*s.validation : nullptr, cam,
                                          tc, config.workers());
    save_model(tnet, dir / kEmbedCheckpoint);
    report_stage(r, dir / "train_embedding.csv", config.timing(), out);
    config.write_resolved(dir);
    out << "wrote " << (dir / kEmbedCheckpoint).string() << "\n";
    return kExitOk;
}

int cmd_eval(const RunConfig& config, std::ostream& out) {
    const Dataset ds = load_input_dataset(config);
    const auto schemes = dataset_schemes(ds);
    const ClassAttributeMatrix cam = class_attribute_matrix(schemes);
    const Splits s = make_splits(ds, config);
    const fs::path dir = config.checkpoint_dir();
    VisualModel<float> visual(ds.num_classes());
    TransformNet<float> tnet;
    load_model(visual, dir / kVisualCheckpoint);
    load_model(tnet, dir / kEmbedCheckpoint);
    const unsigned workers = config.workers();

    const auto dual = classify_dataset(s.test, visual, tnet, cam, workers);
    const auto base = classify_baseline_dataset(s.test, visual, workers);
    ReportBundle bundle;
    bundle.class_names = ds.class_names;
    bundle.timing = config.timing();
    bundle.classifiers.push_back({"dual", evaluate(s.test, dual)});
    bundle.classifiers.push_back({"baseline", evaluate(s.test, base)});

    const int snr = nearest_snr(s.test, config.pca_snr());
    const Dataset scatter_set = frames_at_snr(s.test, snr);
    if (scatter_set.frames.size() >= 3) {
        std::vector<std::size_t> labels;
        for (const auto& f : scatter_set.frames) labels.push_back(f.label);
        bundle.scatter = pca_2d(visual_features(scatter_set, visual, workers), labels);
    } else {
        out << "note: fewer than 3 test frames at " << snr << " dB; scatter skipped\n";
    }

    for (const auto& [stage, file] : std::vector<std::pair<std::string, std::string>>{
             {"visual", "train_visual.csv"}, {"attribute", "train_attribute.csv"}, {"embedding", "train_embedding.csv"}}) {
        if (const auto text = read_text(dir / file)) {
            bundle.losses.push_back(TrainReport::from_csv(stage, *text));
        } else {
            out << "note: " << (dir / file).string() << " not found; omitted from losses.csv\n";
        }
    }

    std::optional<std::size_t> qam16, qam64;
    for (std::size_t c = 0; c < schemes.size(); ++c) {
        if (schemes[c] == Modulation::QAM16) qam16 = c;
        if (schemes[c] == Modulation::QAM64) qam64 = c;
    }
    if (qam16 && qam64) {
        for (const auto& c : bundle.classifiers) {
            bundle.pair_rates.push_back({c.tag, *qam16, *qam64, confusion_pair_rate(c.result.overall, *qam16, *qam64)});
        }
    }

    const fs::path rdir = config.report_dir();
    export_report(bundle, rdir);
    std::size_t agree = 0;
    for (std::size_t i = 0; i < dual.size(); ++i) agree += dual[i] == base[i];
    std::string summary = "metric,value\n";
    for (const auto& c : bundle.classifiers)
        summary += "accuracy_" + c.tag + "," + fmt(c.result.overall.accuracy(), "%.9g") + "\n";
    summary += "agreement," + fmt(double(agree) / double(dual.size()), "%.9g") + "\n";
    summary += "test_frames," + std::to_string(s.test.frames.size()) + "\n";
    summary += "scatter_snr_db," + std::to_string(snr) + "\n";
    write_text(rdir / "summary.csv", summary);
    write_text(rdir / "class_attributes.csv", cam.to_csv());
    config.write_resolved(rdir);

    for (const auto& c : bundle.classifiers)
        out << c.tag << " accuracy " << fmt(c.result.overall.accuracy()) << " on " << s.test.frames.size()
            << " test frames\n";
    out << "agreement " << fmt(double(agree) / double(dual.size())) << "\n";
    for (const auto& p : bundle.pair_rates)
        out << "pair_rate(16QAM,64QAM) " << p.classifier << " " << fmt(p.rate) << "\n";
    out << "wrote report bundle to " << rdir.string() << "\n";
    return kExitOk;
}

int cmd_gradcheck(const RunConfig& config, std::ostream& out) {
    GradientSuiteOptions opt;
    opt.seeds = config.gradcheck_seeds();
    const auto rows = run_gradient_suite(opt);
    bool ok = true;
    out << std::left << std::setw(24) << "layer" << std::setw(6) << "prec" << std::setw(12) << "max_error"
        << std::setw(14) << "scaled_error" << std::setw(10) << "tolerance" << "result\n";
    for (const auto& r : rows) {
        ok = ok && r.passed();
        out << std::left << std::setw(24) << r.layer << std::setw(6) << r.precision << std::setw(12)
            << fmt(r.max_error, "%.3e") << std::setw(14) << fmt(r.max_scaled, "%.3e") << std::setw(10)
            << fmt(r.tolerance, "%.0e") << (r.passed() ? "ok" : "BREACH") << "\n";
    }
    out << (ok ? "all layers within tolerance\n" : "tolerance breach\n");
    return ok ? kExitOk : kExitTolerance;
}

int cmd_describe(const RunConfig& config, std::ostream& out) {
    const std::string model = config.model();
    out << "model,name,kind,kernel,output\n";
    if (model.empty()) {
        const std::size_t k = config.classes().size();
        print_trace("visual", VisualModel<float>(k).describe(), out);
        print_trace("attribute", AttributeModel<float>().describe(), out);
        print_trace("transform", TransformNet<float>().describe(), out);
        return kExitOk;
    }
    if (!fs::exists(model)) throw IoError("checkpoint '" + model + "' does not exist");
    const auto entries = load_checkpoint(model);
    std::vector<std::string> names;
    for (const auto& e : entries) names.push_back(e.name);
    switch (checkpoint_model_kind(names)) {
        case ModelKind::Visual: {
            std::size_t k = 0;
            for (const auto& e : entries)
                if (e.name == "visual.fc_softmax.weight") k = e.tensor.dim(0);
            if (k == 0) throw FormatError(FormatErrorKind::Malformed, "visual checkpoint lacks visual.fc_softmax.weight");
            VisualModel<float> m(k);
            const auto state = m.state();
            restore_state<float>(std::span(state), entries);
            print_trace("visual", m.describe(), out);
            break;
        }
        case ModelKind::Attribute: {
            AttributeModel<float> m;
            const auto state = m.state();
            restore_state<float>(std::span(state), entries);
            print_trace("attribute", m.describe(), out);
            break;
        }
        case ModelKind::Transform: {
            TransformNet<float> m;
            const auto state = m.state();
            restore_state<float>(std::span(state), entries);
            print_trace("transform", m.describe(), out);
            break;
        }
    }
    return kExitOk;
}

int exit_code_for_current_exception(std::ostream& err) {
    try {
        throw;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const DivergenceError& e) {
        err << "divergence: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const FormatError& e) {
        err << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const IoError& e) {
        err << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const ShapeError& e) {
        err << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    } catch (...) {
        err << "error: unknown failure\n";
        return kExitFailure;
    }
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Dual-driven automatic modulation classification pipeline", "dkamc"};
    app.require_subcommand(1);

    std::string config_file;
    std::map<std::string, std::string> overrides;
    app.add_option("--config", config_file, "key = value config file");
    for (const auto& key : config_keys()) {
        app.add_option_function<std::string>(
               std::string("--") + key.name,
               [&overrides, name = std::string(key.name)](const std::string& v) { overrides[name] = v; }, key.help)
            ->default_str(key.default_value);
    }

    using Command = int (*)(const RunConfig&, std::ostream&);
    const std::vector<std::tuple<const char*, const char*, Command>> commands{
        {"gen", "synthesise and save a dataset", cmd_gen},
        {"pretrain-visual", "train the visual model with cross-entropy", cmd_pretrain_visual},
        {"pretrain-attr", "train the attribute model with MSE", cmd_pretrain_attr},
        {"train-embed", "train the transform net against the frozen models", cmd_train_embed},
        {"eval", "evaluate both classifiers and write the report bundle", cmd_eval},
        {"gradcheck", "finite-difference check of every layer", cmd_gradcheck},
        {"describe", "print layer and shape tables", cmd_describe},
    };
    Command chosen = nullptr;
    for (const auto& [name, help, fn] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->fallthrough();
        sub->callback([&chosen, fn = fn] { chosen = fn; });
    }

    std::vector<std::string> argv_store{"dkamc"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& a : argv_store) argv.push_back(a.data());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    }

    try {
        RunConfig config;
        if (!config_file.empty()) config.merge_file(config_file);
        for (const auto& [k, v] : overrides) config.set(k, v);
        config.apply_environment();
        config.validate();
        return chosen ? chosen(config, out) : kExitConfig;
    } catch (...) {
        return exit_code_for_current_exception(err);
    }
}

}  // namespace dkamc::cli
