#include "run_config.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "dkamc/errors.hpp"

namespace dkamc::cli {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string part;
    std::istringstream in(s);
    while (std::getline(in, part, sep)) out.push_back(trim(part));
    return out;
}

long long to_int(const std::string& key, const std::string& v) {
    long long out = 0;
    const auto* end = v.data() + v.size();
    const auto r = std::from_chars(v.data(), end, out);
    if (r.ec != std::errc() || r.ptr != end) throw ConfigError("config key '" + key + "': '" + v + "' is not an integer");
    return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto* end = v.data() + v.size();
    const auto r = std::from_chars(v.data(), end, out);
    if (r.ec != std::errc() || r.ptr != end)
        throw ConfigError("config key '" + key + "': '" + v + "' is not a non-negative integer");
    return out;
}

std::size_t to_count(const std::string& key, const std::string& v) {
    const long long n = to_int(key, v);
    if (n < 0) throw ConfigError("config key '" + key + "' must not be negative");
    return static_cast<std::size_t>(n);
}

double to_real(const std::string& key, const std::string& v) {
    char* end = nullptr;
    errno = 0;
    const double d = std::strtod(v.c_str(), &end);
    if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE)
        throw ConfigError("config key '" + key + "': '" + v + "' is not a number");
    return d;
}

bool to_bool(const std::string& key, const std::string& v) {
    std::string l = v;
    std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (l == "true" || l == "1" || l == "yes" || l == "on") return true;
    if (l == "false" || l == "0" || l == "no" || l == "off") return false;
    throw ConfigError("config key '" + key + "': '" + v + "' is not a boolean");
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys{
        {"dataset", "data/dataset.dkm", "dataset file written by gen and read by every later stage"},
        {"checkpoint_dir", "checkpoints", "directory for model_*.dkw checkpoints and train_*.csv"},
        {"report_dir", "reports", "directory for the evaluation bundle"},
        {"classes", "BPSK,QPSK,16QAM,64QAM", "comma-separated modulation schemes"},
        {"snr_grid", "-20:2:18", "SNR values in dB: lo:step:hi, a comma list, or one value"},
        {"frames_per_class_per_snr", "100", "frames synthesised per (class, SNR) cell"},
        {"samples_per_symbol", "8", "oversampling factor"},
        {"frame_length", "128", "complex samples per frame"},
        {"pulse", "rect", "pulse shape: rect or rrc"},
        {"rolloff", "0.35", "root-raised-cosine roll-off"},
        {"rng_seed", "0", "seed for data synthesis"},
        {"seed", "0", "seed for splits, initialisation and shuffling"},
        {"lr", "0.01", "SGD learning rate"},
        {"lr_embed", "0.001", "SGD learning rate of the transform-net stage"},
        {"momentum", "0.9", "SGD momentum"},
        {"epochs_visual", "40", "visual-model pretraining epochs"},
        {"epochs_attr", "40", "attribute-model pretraining epochs"},
        {"epochs_embed", "40", "transform-net training epochs"},
        {"batch_size", "64", "minibatch size"},
        {"lambda_reg", "1e-4", "weight of the transform-net weight penalty"},
        {"train_fraction", "0.8", "share of every (class, SNR) cell used for training"},
        {"val_fraction", "0.1", "share of the training split held out for validation (0 disables)"},
        {"workers", "1", "threads for synthesis and inference"},
        {"timing", "false", "write wall-clock seconds into CSVs (breaks byte-identical reruns)"},
        {"pca_snr", "18", "SNR of the test frames used for the feature scatter"},
        {"gradcheck_seeds", "20", "random seeds per layer in gradcheck"},
        {"model", "", "checkpoint for describe (empty: describe all three fresh models)"},
    };
    return keys;
}

RunConfig::RunConfig() {
    for (const auto& k : config_keys()) values_[k.name] = k.default_value;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second = trim(value);
}

const std::string& RunConfig::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
}

void RunConfig::merge_text(const std::string& text, const std::string& origin) {
    std::istringstream in(text);
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(number) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        auto it = values_.find(key);
        if (it == values_.end())
            throw ConfigError(origin + ":" + std::to_string(number) + ": unknown config key '" + key + "'");
        it->second = trim(line.substr(eq + 1));
    }
}

void RunConfig::merge_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    merge_text(ss.str(), path.string());
}

void RunConfig::apply_environment() {
    if (const char* env = std::getenv("DKAMC_SEED"); env && *env) {
        to_u64("DKAMC_SEED", env);
        set("seed", env);
        set("rng_seed", env);
    }
}

std::string RunConfig::resolved() const {
    std::string out;
    for (const auto& k : config_keys()) out += std::string(k.name) + " = " + values_.at(k.name) + "\n";
    return out;
}

void RunConfig::write_resolved(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir.empty() ? std::filesystem::path(".") : dir);
    const auto path = (dir.empty() ? std::filesystem::path(".") : dir) / kResolvedConfigName;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << resolved();
}

std::vector<int> parse_snr_grid(const std::string& text) {
    const std::string key = "snr_grid";
    std::vector<int> out;
    if (text.find(':') != std::string::npos) {
        const auto parts = split(text, ':');
        if (parts.size() != 3) throw ConfigError("config key 'snr_grid': range must be lo:step:hi");
        const long long lo = to_int(key, parts[0]), step = to_int(key, parts[1]), hi = to_int(key, parts[2]);
        if (step <= 0 || hi < lo) throw ConfigError("config key 'snr_grid': range needs step > 0 and hi >= lo");
        for (long long v = lo; v <= hi; v += step) out.push_back(static_cast<int>(v));
    } else {
        for (const auto& p : split(text, ',')) out.push_back(static_cast<int>(to_int(key, p)));
    }
    if (out.empty()) throw ConfigError("config key 'snr_grid' is empty");
    return out;
}

ChannelConfig RunConfig::channel() const {
    ChannelConfig c;
    c.snr_grid_db = parse_snr_grid(get("snr_grid"));
    c.frames_per_class_per_snr = to_count("frames_per_class_per_snr", get("frames_per_class_per_snr"));
    c.samples_per_symbol = to_count("samples_per_symbol", get("samples_per_symbol"));
    c.frame_length = to_count("frame_length", get("frame_length"));
    c.rng_seed = to_u64("rng_seed", get("rng_seed"));
    const std::string pulse = get("pulse");
    if (pulse == "rect") {
        c.pulse = PulseShape::rectangular();
    } else if (pulse == "rrc") {
        c.pulse = PulseShape::root_raised_cosine(to_real("rolloff", get("rolloff")));
    } else {
        throw ConfigError("config key 'pulse': expected rect or rrc, got '" + pulse + "'");
    }
    c.validate();
    return c;
}

TrainConfig RunConfig::training() const {
    TrainConfig t;
    t.lr = to_real("lr", get("lr"));
    t.lr_embed = to_real("lr_embed", get("lr_embed"));
    t.momentum = to_real("momentum", get("momentum"));
    t.epochs_visual = static_cast<int>(to_count("epochs_visual", get("epochs_visual")));
    t.epochs_attr = static_cast<int>(to_count("epochs_attr", get("epochs_attr")));
    t.epochs_embed = static_cast<int>(to_count("epochs_embed", get("epochs_embed")));
    t.batch_size = to_count("batch_size", get("batch_size"));
    t.lambda_reg = to_real("lambda_reg", get("lambda_reg"));
    t.seed = to_u64("seed", get("seed"));
    t.train_fraction = to_real("train_fraction", get("train_fraction"));
    t.validate();
    return t;
}

std::vector<Modulation> RunConfig::classes() const {
    std::vector<Modulation> out;
    for (const auto& name : split(get("classes"), ',')) {
        try {
            out.push_back(parse_modulation(name));
        } catch (const Error& e) {
            throw ConfigError("config key 'classes': " + std::string(e.what()));
        }
    }
    if (out.empty()) throw ConfigError("config key 'classes' is empty");
    for (std::size_t a = 0; a < out.size(); ++a)
        for (std::size_t b = a + 1; b < out.size(); ++b)
            if (out[a] == out[b]) throw ConfigError("config key 'classes' lists a scheme twice");
    return out;
}

unsigned RunConfig::workers() const {
    const std::size_t w = to_count("workers", get("workers"));
    if (w == 0 || w > 256) throw ConfigError("config key 'workers' must lie in 1..256");
    return static_cast<unsigned>(w);
}

bool RunConfig::timing() const { return to_bool("timing", get("timing")); }

int RunConfig::pca_snr() const { return static_cast<int>(to_int("pca_snr", get("pca_snr"))); }

double RunConfig::val_fraction() const {
    const double v = to_real("val_fraction", get("val_fraction"));
    if (!(v >= 0.0 && v < 1.0)) throw ConfigError("config key 'val_fraction' must lie in [0, 1)");
    return v;
}

int RunConfig::gradcheck_seeds() const {
    const std::size_t n = to_count("gradcheck_seeds", get("gradcheck_seeds"));
    if (n < 1) throw ConfigError("config key 'gradcheck_seeds' must be at least 1");
    return static_cast<int>(n);
}

void RunConfig::validate() const {
    channel();
    training();
    classes();
    workers();
    timing();
    pca_snr();
    val_fraction();
    gradcheck_seeds();
}

}  // namespace dkamc::cli
