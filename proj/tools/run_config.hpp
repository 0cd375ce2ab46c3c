#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dkamc/dataset.hpp"
#include "dkamc/signal.hpp"
#include "dkamc/training.hpp"

namespace dkamc::cli {

struct ConfigKey {
    const char* name;
    const char* default_value;
    const char* help;
};

// Every recognised key in the order the resolved snapshot lists them.
const std::vector<ConfigKey>& config_keys();

// Flat key=value configuration. Values are kept as text and converted on
// access, so the resolved snapshot is exactly what the run used.
class RunConfig {
public:
    RunConfig();

    // '#' starts a comment; blank lines are ignored. Unknown keys and
    // malformed lines throw ConfigError naming the key or line.
    void merge_text(const std::string& text, const std::string& origin);
    void merge_file(const std::filesystem::path& path);

    void set(const std::string& key, const std::string& value);
    const std::string& get(const std::string& key) const;

    // DKAMC_SEED, when set, overrides both `seed` and `rng_seed`.
    void apply_environment();

    // Checks every value parses and every invariant holds.
    void validate() const;

    std::string resolved() const;
    void write_resolved(const std::filesystem::path& dir) const;

    ChannelConfig channel() const;
    TrainConfig training() const;
    std::vector<Modulation> classes() const;

    std::filesystem::path dataset_path() const { return get("dataset"); }
    std::filesystem::path checkpoint_dir() const { return get("checkpoint_dir"); }
    std::filesystem::path report_dir() const { return get("report_dir"); }
    std::string model() const { return get("model"); }
    unsigned workers() const;
    bool timing() const;
    int pca_snr() const;
    double val_fraction() const;
    int gradcheck_seeds() const;

private:
    std::map<std::string, std::string> values_;
};

inline constexpr const char* kResolvedConfigName = "resolved_config.txt";

// "-20:2:18" (inclusive range), "0,10,18" or a single value.
std::vector<int> parse_snr_grid(const std::string& text);

}  // namespace dkamc::cli
