// Runs the ten acceptance criteria and prints one PASS/FAIL line for each.
// Exit status is nonzero when any criterion fails.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "commands.hpp"
#include "dkamc/checkpoint.hpp"
#include "dkamc/eval.hpp"
#include "dkamc/gradient_suite.hpp"
#include "dkamc/models.hpp"
#include "dkamc/signal.hpp"
#include "dkamc/training.hpp"
#include "eigen_oracles.hpp"

using namespace dkamc;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Verdict {
    bool pass = true;
    std::string detail;
};

std::string fmt(double v, const char* spec = "%.4g") {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Rows of a CSV file without its header, split on commas.
std::vector<std::vector<std::string>> csv_rows(const fs::path& p) {
    std::istringstream in(slurp(p));
    std::string line;
    std::getline(in, line);
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        rows.push_back(cells);
    }
    return rows;
}

std::map<std::string, double> summary(const fs::path& report_dir) {
    std::map<std::string, double> out;
    for (const auto& r : csv_rows(report_dir / "summary.csv")) out[r.at(0)] = std::stod(r.at(1));
    return out;
}

std::vector<double> stage_losses(const fs::path& csv) {
    std::vector<double> out;
    for (const auto& r : csv_rows(csv)) out.push_back(std::stod(r.at(1)));
    return out;
}

// Runs gen and the three training stages and eval through the command line
// front end. Returns false (and prints stderr) on the first nonzero exit.
bool run_pipeline(const fs::path& config, std::ostream& log) {
    for (const char* cmd : {"gen", "pretrain-visual", "pretrain-attr", "train-embed", "eval"}) {
        std::ostringstream out, err;
        const int code = cli::run_cli({cmd, "--config", config.string()}, out, err);
        if (code != 0) {
            log << "  " << cmd << " exited " << code << ": " << err.str();
            return false;
        }
    }
    return true;
}

fs::path write_config(const fs::path& dir, const std::string& body) {
    fs::create_directories(dir);
    const fs::path cfg = dir / "config.txt";
    std::ofstream(cfg) << "dataset = " << (dir / "data.dkm").string() << "\n"
                       << "checkpoint_dir = " << (dir / "ckpt").string() << "\n"
                       << "report_dir = " << (dir / "reports").string() << "\n"
                       << body;
    return cfg;
}

// Average ranks, ties share the mean of their positions.
std::vector<double> ranks(const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * double(i + j) + 1.0;
        i = j + 1;
    }
    return r;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / double(a.size());
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / double(b.size());
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) { return pearson(ranks(a), ranks(b)); }

// ---- criteria ----------------------------------------------------------------

Verdict gradient_suite(std::ostream& log) {
    const auto t0 = Clock::now();
    GradientSuiteOptions opt;  // 20 seeds, eps 1e-3 / 1e-5
    const auto rows = run_gradient_suite(opt);
    const double secs = seconds_since(t0);
    Verdict v;
    double worst_f32 = 0, worst_f32_scaled = 0, worst_f64 = 0;
    for (const auto& r : rows) {
        log << "  " << r.layer << " " << r.precision << " componentwise " << fmt(r.max_error, "%.3e") << " scaled "
            << fmt(r.max_scaled, "%.3e") << " tol " << fmt(r.tolerance, "%.0e") << (r.passed() ? "" : "  BREACH")
            << "\n";
        v.pass = v.pass && r.passed();
        if (r.precision == "f32") {
            worst_f32 = std::max(worst_f32, r.max_error);
            worst_f32_scaled = std::max(worst_f32_scaled, r.max_scaled);
        } else {
            worst_f64 = std::max(worst_f64, r.max_error);
        }
    }
    v.pass = v.pass && secs < 60.0;
    v.detail = "worst f32 componentwise " + fmt(worst_f32, "%.2e") + " (scaled " + fmt(worst_f32_scaled, "%.2e") +
               "), worst f64 " + fmt(worst_f64, "%.2e") + ", " + fmt(secs, "%.1f") + " s";
    return v;
}

Verdict shapes() {
    Verdict v;
    auto expect = [&](const ShapeTrace& trace, const std::string& name, const Shape& want) {
        for (const auto& r : trace)
            if (r.name == name) {
                if (r.output != want) {
                    v.pass = false;
                    v.detail += name + " has the wrong shape; ";
                }
                return;
            }
        v.pass = false;
        v.detail += name + " missing; ";
    };
    VisualModel<float> visual(4);
    AttributeModel<float> attr;
    visual.init(1);
    attr.init(2);
    const std::size_t batch = 3;
    ShapeTrace vt, at;
    visual.infer(Tensor<float>({batch, 2, 128}, 0.1f), &vt);
    attr.infer(Tensor<float>({batch, 2, 128}, 0.1f), &at);
    for (const auto& [trace, b] : {std::pair{visual.describe(), Shape{}}, std::pair{vt, Shape{batch}}}) {
        auto s = [&](Shape tail) {
            Shape out = b;
            out.insert(out.end(), tail.begin(), tail.end());
            return out;
        };
        expect(trace, "visual.ms1", s({128, 64}));
        expect(trace, "visual.ms2", s({128, 32}));
        expect(trace, "visual.gap", s({128, 4}));
        expect(trace, "visual.fc_feature", s({128}));
        expect(trace, "visual.fc_softmax", s({4}));
    }
    for (const auto& [trace, b] : {std::pair{attr.describe(), Shape{}}, std::pair{at, Shape{batch}}}) {
        auto s = [&](Shape tail) {
            Shape out = b;
            out.insert(out.end(), tail.begin(), tail.end());
            return out;
        };
        expect(trace, "attr.stack1.unit2", s({32, 128}));
        expect(trace, "attr.stack1.pool", s({32, 64}));
        expect(trace, "attr.stack2.pool", s({32, 32}));
        expect(trace, "attr.stack3.pool", s({32, 16}));
        expect(trace, "attr.gap", s({32, 1}));
        expect(trace, "attr.fc", s({6}));
    }
    if (v.pass) v.detail = "visual 128x64 128x32 128x4 128 4, attribute 32x128 32x64 32x32 32x16 32x1 6, unbatched and batch 3";
    return v;
}

Verdict awgn() {
    Verdict v;
    ChannelConfig cfg;
    cfg.rng_seed = 2024;
    const auto schemes = default_modulations();
    for (int snr : {-20, -10, 0, 10, 18}) {
        double sum = 0.0;
        for (std::uint64_t i = 0; i < 1000; ++i) {
            const auto s = synthesize_frame(cfg, schemes[i % schemes.size()], snr, i + 100000 * std::uint64_t(snr + 50));
            sum += measure_snr(s.clean, s.noisy);
        }
        const double mean = sum / 1000.0;
        v.pass = v.pass && std::abs(mean - snr) <= 0.3;
        v.detail += std::to_string(snr) + " dB -> " + fmt(mean, "%.3f") + "; ";
    }
    return v;
}

Verdict embedding_algebra() {
    Verdict v;
    double worst_reg = 0.0, worst_zero = 0.0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> d;
        Tensor<double> phi1({16, 128}), attrs({16, 6});
        for (double& x : phi1.data()) x = 3.0 * d(rng);
        for (double& x : attrs.data()) x = d(rng);

        TransformNet<double> t;
        t.init(seed);
        double norms = 0.0;
        for (auto* p : t.parameters())
            if (p->role == ParamRole::Weight)
                for (double w : p->value.data()) norms += w * w;
        for (double lambda : {1e-4, 0.1, 10.0}) {
            const double l0 = embedding_loss(phi1, attrs, t, 0.0).loss;
            const double l = embedding_loss(phi1, attrs, t, lambda).loss;
            const double want = lambda * norms;
            worst_reg = std::max(worst_reg, std::abs((l - l0) - want) / want);
        }

        TransformNet<double> zero;
        double mean_sq = 0.0;
        for (std::size_t b = 0; b < 16; ++b)
            for (std::size_t k = 0; k < 128; ++k) mean_sq += phi1.at(b, k) * phi1.at(b, k);
        mean_sq /= 16.0;
        const double l = embedding_loss(phi1, attrs, zero, 0.0).loss;
        worst_zero = std::max(worst_zero, std::abs(l - mean_sq) / mean_sq);
    }
    v.pass = worst_reg <= 1e-5 && worst_zero <= 1e-6;
    v.detail = "regularizer relative error " + fmt(worst_reg, "%.2e") + ", zero-net relative error " +
               fmt(worst_zero, "%.2e");
    return v;
}

Verdict freeze(const fs::path& work) {
    Verdict v;
    // in process: serialized state before and after the transform-net stage
    ChannelConfig ch;
    ch.snr_grid_db = {10};
    ch.frames_per_class_per_snr = 16;
    ch.rng_seed = 3;
    const auto schemes = default_modulations();
    const Dataset ds = synthesize_dataset(ch, schemes);
    const auto cam = class_attribute_matrix(schemes);
    TrainConfig tc;
    tc.epochs_visual = tc.epochs_attr = 1;
    tc.epochs_embed = 3;
    tc.batch_size = 16;
    VisualModel<float> visual(4);
    AttributeModel<float> attr;
    visual.init(1);
    attr.init(2);
    pretrain_visual(visual, ds, nullptr, tc);
    pretrain_attribute(attr, ds, nullptr, cam, tc);
    auto bytes = [](auto& m) {
        const auto state = m.state();
        return serialize_checkpoint(snapshot_state<float>(std::span(state)));
    };
    const auto vb = bytes(visual), ab = bytes(attr);
    TransformNet<float> tnet;
    tnet.init(3);
    train_embedding(visual, attr, tnet, ds, nullptr, cam, tc);
    const bool in_process = bytes(visual) == vb && bytes(attr) == ab;

    // on disk, through the command line front end
    const fs::path dir = work / "freeze";
    fs::remove_all(dir);
    const fs::path cfg = write_config(dir,
                                      "snr_grid = 10\nframes_per_class_per_snr = 10\nepochs_visual = 1\n"
                                      "epochs_attr = 1\nepochs_embed = 3\nbatch_size = 16\n");
    std::ostringstream out, err;
    bool ok = true;
    for (const char* cmd : {"gen", "pretrain-visual", "pretrain-attr"})
        ok = ok && cli::run_cli({cmd, "--config", cfg.string()}, out, err) == 0;
    const std::string v0 = slurp(dir / "ckpt" / cli::kVisualCheckpoint);
    const std::string a0 = slurp(dir / "ckpt" / cli::kAttributeCheckpoint);
    ok = ok && cli::run_cli({"train-embed", "--config", cfg.string()}, out, err) == 0;
    const bool on_disk = ok && slurp(dir / "ckpt" / cli::kVisualCheckpoint) == v0 &&
                         slurp(dir / "ckpt" / cli::kAttributeCheckpoint) == a0;
    v.pass = in_process && on_disk;
    v.detail = std::string("in-process state ") + (in_process ? "identical" : "CHANGED") + ", checkpoint files " +
               (on_disk ? "identical" : (ok ? "CHANGED" : "not produced: " + err.str()));
    return v;
}

Verdict pca_oracle() {
    using namespace dkamc::oracle;
    Verdict v;
    double worst3 = 0.0, worst5 = 0.0;
    for (std::uint64_t seed = 1; seed <= 25; ++seed) {
        const auto a = random_covariance(3, seed);
        const auto eig = jacobi_eigen(a, 3);
        const auto roots = cubic_eigenvalues(a);
        for (int k = 0; k < 3; ++k) {
            worst3 = std::max(worst3, std::abs(eig.values[k] - roots[k]));
            auto vec = cubic_eigenvector(a, roots[k]);
            sign_normalise(vec);
            for (int i = 0; i < 3; ++i) worst3 = std::max(worst3, std::abs(eig.vectors[k][i] - vec[i]));
        }
    }
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto a = random_covariance(5, seed + 100);
        const auto eig = jacobi_eigen(a, 5);
        const auto [values, vectors] = power_oracle(a, 5);
        for (std::size_t k = 0; k < 5; ++k) {
            worst5 = std::max(worst5, std::abs(eig.values[k] - values[k]));
            for (std::size_t i = 0; i < 5; ++i) worst5 = std::max(worst5, std::abs(eig.vectors[k][i] - vectors[k][i]));
        }
    }

    std::mt19937_64 rng(8);
    std::normal_distribution<double> d;
    const std::size_t n = 60, dim = 128;
    std::vector<double> u(dim), w(dim);
    for (auto& x : u) x = d(rng);
    for (auto& x : w) x = d(rng);
    Tensor<double> f({n, dim});
    for (std::size_t i = 0; i < n; ++i) {
        const double a = 3.0 * d(rng), b = d(rng);
        for (std::size_t k = 0; k < dim; ++k) f.at(i, k) = 0.5 + a * u[k] + b * w[k];
    }
    const auto s = pca_2d(f);
    double worst_dist = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double orig = 0.0;
            for (std::size_t k = 0; k < dim; ++k) orig += std::pow(f.at(i, k) - f.at(j, k), 2);
            const double proj = std::hypot(s.points[i].x - s.points[j].x, s.points[i].y - s.points[j].y);
            worst_dist = std::max(worst_dist, std::abs(std::sqrt(orig) - proj));
        }
    v.pass = worst3 <= 1e-8 && worst5 <= 1e-8 && worst_dist <= 1e-6;
    v.detail = "3x3 " + fmt(worst3, "%.1e") + ", 5x5 " + fmt(worst5, "%.1e") + ", rank-2 distances " +
               fmt(worst_dist, "%.1e");
    return v;
}

Verdict determinism(const fs::path& work, std::ostream& log) {
    Verdict v;
    const fs::path dir = work / "determinism";
    fs::remove_all(dir);
    const fs::path cfg = write_config(dir,
                                      "snr_grid = 0,10,18\nframes_per_class_per_snr = 20\nepochs_visual = 3\n"
                                      "epochs_attr = 3\nepochs_embed = 3\nbatch_size = 32\nseed = 5\nrng_seed = 5\n");
    auto collect = [&]() {
        std::map<std::string, std::string> out;
        for (const auto& sub : {"ckpt", "reports"})
            for (const auto& e : fs::directory_iterator(dir / sub))
                if (e.path().extension() == ".csv") out[std::string(sub) + "/" + e.path().filename().string()] = slurp(e.path());
        return out;
    };
    if (!run_pipeline(cfg, log)) return {false, "first run failed"};
    const auto first = collect();
    const fs::path resolved = dir / "resolved.txt";
    fs::copy_file(dir / "reports" / cli::kResolvedConfigName, resolved, fs::copy_options::overwrite_existing);
    for (const auto& sub : {"ckpt", "reports"}) fs::remove_all(dir / sub);
    fs::remove(dir / "data.dkm");
    if (!run_pipeline(resolved, log)) return {false, "rerun failed"};
    const auto second = collect();
    std::size_t differing = 0;
    for (const auto& [name, text] : first) {
        const auto it = second.find(name);
        if (it == second.end() || it->second != text) {
            ++differing;
            log << "  " << name << " differs\n";
        }
    }
    v.pass = differing == 0 && first.size() == second.size() && first.size() >= 10;
    v.detail = std::to_string(first.size()) + " CSV files compared, " + std::to_string(differing) + " differ";
    return v;
}

struct ToyRun {
    bool ok = false;
    double seconds = 0.0;
    fs::path dir;
};

ToyRun toy_run(const fs::path& work, const std::string& name, const std::string& body, std::ostream& log) {
    ToyRun r;
    r.dir = work / name;
    fs::remove_all(r.dir);
    const auto t0 = Clock::now();
    r.ok = run_pipeline(write_config(r.dir, body), log);
    r.seconds = seconds_since(t0);
    return r;
}

Verdict smoke(const ToyRun& run) {
    if (!run.ok) return {false, "pipeline failed"};
    const auto s = summary(run.dir / "reports");
    const auto attr = stage_losses(run.dir / "ckpt" / "train_attribute.csv");
    const auto embed = stage_losses(run.dir / "ckpt" / "train_embedding.csv");
    const double base = s.at("accuracy_baseline"), dual = s.at("accuracy_dual");
    const bool a = base >= 0.85;
    const bool b = attr.size() >= 40 && attr[39] < 0.3 * attr[0];
    const bool c = embed.size() >= 10 && embed[9] < embed[0];
    const bool d = dual >= base - 0.10;
    const bool t = run.seconds <= 15 * 60;
    Verdict v;
    v.pass = a && b && c && d && t;
    v.detail = std::string("(a) baseline ") + fmt(100 * base, "%.1f") + "%" + (a ? "" : " FAIL") +
               ", (b) attribute MSE " + fmt(attr.at(0)) + " -> " + fmt(attr.at(std::min<std::size_t>(39, attr.size() - 1))) +
               (b ? "" : " FAIL") + ", (c) embedding " + fmt(embed.at(0)) + " -> " +
               fmt(embed.at(std::min<std::size_t>(9, embed.size() - 1))) + (c ? "" : " FAIL") + ", (d) dual " +
               fmt(100 * dual, "%.1f") + "%" + (d ? "" : " FAIL") + ", " + fmt(run.seconds / 60, "%.1f") + " min" +
               (t ? "" : " FAIL");
    return v;
}

Verdict trend(const ToyRun& run, std::ostream& log) {
    if (!run.ok) return {false, "pipeline failed"};
    std::vector<double> snr, acc;
    for (const auto& r : csv_rows(run.dir / "reports" / "accuracy.csv")) {
        if (r.at(0) != "dual") continue;
        snr.push_back(std::stod(r.at(1)));
        acc.push_back(std::stod(r.at(3)));
    }
    log << "  dual accuracy by SNR:";
    for (std::size_t i = 0; i < snr.size(); ++i) log << " " << snr[i] << ":" << fmt(acc[i], "%.3f");
    log << "\n";
    if (snr.size() != 20) return {false, "expected 20 SNR bins, got " + std::to_string(snr.size())};
    const double rho = spearman(snr, acc);
    Verdict v;
    v.pass = acc.back() > acc.front() && rho > 0.7;
    v.detail = "dual at +18 dB " + fmt(acc.back(), "%.3f") + " vs -20 dB " + fmt(acc.front(), "%.3f") +
               ", Spearman " + fmt(rho, "%.3f") + ", " + fmt(run.seconds / 60, "%.1f") + " min";
    return v;
}

Verdict pair_report(const std::vector<std::pair<std::string, ToyRun>>& runs) {
    Verdict v;
    for (const auto& [label, run] : runs) {
        const fs::path p = run.dir / "reports" / "pair_rates.csv";
        if (!run.ok || !fs::exists(p)) {
            v.pass = false;
            v.detail += label + ": pair_rates.csv missing; ";
            continue;
        }
        std::map<std::string, double> rate;
        for (const auto& r : csv_rows(p))
            if (r.at(1) == "16QAM" && r.at(2) == "64QAM") rate[r.at(0)] = std::stod(r.at(3));
        if (!rate.count("dual") || !rate.count("baseline")) {
            v.pass = false;
            v.detail += label + ": a classifier is missing; ";
            continue;
        }
        v.detail += label + " pair_rate(16QAM,64QAM) dual " + fmt(rate["dual"], "%.4f") + " baseline " +
                    fmt(rate["baseline"], "%.4f") + "; ";
    }
    return v;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance run"};
    std::string workdir = "acceptance_work";
    std::vector<int> only;
    app.add_option("--workdir", workdir, "scratch directory for datasets, checkpoints and reports");
    app.add_option("--only", only, "run just these criteria");
    CLI11_PARSE(app, argc, argv);
    const fs::path work = fs::absolute(workdir);
    fs::create_directories(work);

    std::vector<std::pair<int, std::string>> lines;
    auto want = [&](int n) { return only.empty() || std::find(only.begin(), only.end(), n) != only.end(); };
    auto report = [&](int n, const std::string& name, const Verdict& v) {
        std::ostringstream line;
        line << "criterion " << n << " " << (v.pass ? "PASS" : "FAIL") << "  " << name << ": " << v.detail;
        std::cout << line.str() << std::endl;
        lines.emplace_back(v.pass ? 0 : 1, line.str());
    };
    auto guarded = [&](int n, const std::string& name, auto&& fn) {
        if (!want(n)) return;
        try {
            report(n, name, fn());
        } catch (const std::exception& e) {
            report(n, name, {false, std::string("threw: ") + e.what()});
        }
    };

    guarded(1, "gradient suite", [&] { return gradient_suite(std::cout); });
    guarded(2, "shape conformance", [&] { return shapes(); });
    guarded(3, "AWGN calibration", [&] { return awgn(); });
    guarded(4, "embedding loss algebra", [&] { return embedding_algebra(); });
    guarded(7, "freeze contract", [&] { return freeze(work); });
    guarded(8, "PCA oracle", [&] { return pca_oracle(); });
    guarded(9, "pipeline determinism", [&] { return determinism(work, std::cout); });

    ToyRun toy, mixed;
    if (want(5) || want(10))
        toy = toy_run(work, "smoke",
                      "snr_grid = 18\nframes_per_class_per_snr = 500\nseed = 1\nrng_seed = 1\n"
                      "epochs_visual = 40\nepochs_attr = 40\nepochs_embed = 40\n",
                      std::cout);
    guarded(5, "smoke training", [&] { return smoke(toy); });
    if (want(6) || want(10))
        mixed = toy_run(work, "trend",
                        "snr_grid = -20:2:18\nframes_per_class_per_snr = 200\nseed = 2\nrng_seed = 2\n"
                        "epochs_visual = 8\nepochs_attr = 8\nepochs_embed = 10\n",
                        std::cout);
    guarded(6, "accuracy trend over SNR", [&] { return trend(mixed, std::cout); });
    guarded(10, "16QAM/64QAM confusion report", [&] {
        std::vector<std::pair<std::string, ToyRun>> runs;
        if (want(5) || want(10)) runs.emplace_back("toy +18 dB", toy);
        if (want(6) || want(10)) runs.emplace_back("mixed SNR", mixed);
        return pair_report(runs);
    });

    std::cout << "\nsummary\n";
    int failed = 0;
    for (const auto& [bad, line] : lines) {
        std::cout << line << "\n";
        failed += bad;
    }
    return failed == 0 ? 0 : 1;
}
