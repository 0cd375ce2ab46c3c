#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "run_config.hpp"

namespace dkamc::cli {

enum ExitCode : int {
    kExitOk = 0,
    kExitFailure = 1,
    kExitConfig = 2,
    kExitData = 3,        // missing or malformed input, I/O failure, shape mismatch
    kExitDivergence = 4,
    kExitTolerance = 5,   // gradcheck breach
};

inline constexpr const char* kVisualCheckpoint = "model_visual.dkw";
inline constexpr const char* kAttributeCheckpoint = "model_attr.dkw";
inline constexpr const char* kEmbedCheckpoint = "model_embed.dkw";

// Each command returns an exit code and throws dkamc errors for failures; the
// caller maps them with exit_code_for().
int cmd_gen(const RunConfig& config, std::ostream& out);
int cmd_pretrain_visual(const RunConfig& config, std::ostream& out);
int cmd_pretrain_attr(const RunConfig& config, std::ostream& out);
int cmd_train_embed(const RunConfig& config, std::ostream& out);
int cmd_eval(const RunConfig& config, std::ostream& out);
int cmd_gradcheck(const RunConfig& config, std::ostream& out);
int cmd_describe(const RunConfig& config, std::ostream& out);

// Maps the in-flight exception to an exit code. Call from a catch block.
int exit_code_for_current_exception(std::ostream& err);

// Full command line: parses flags, loads --config, applies DKAMC_SEED and
// dispatches. Never throws.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dkamc::cli
