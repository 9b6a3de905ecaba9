#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace specmap::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;   ///< config / input invariant violated
inline constexpr int kExitAcceptance = 3;   ///< a declared check failed
inline constexpr int kExitDegenerate = 4;   ///< Monte-Carlo degeneracy where fatal

struct CommandOptions {
  std::string config_path;
  std::string out_path;
  std::optional<std::uint64_t> seed;        ///< overrides config.seed
  std::optional<long long> replicates;      ///< overrides config.replicates
  std::optional<int> threads;               ///< overrides config.threads
  bool check = false;                       ///< closed-form vs numeric cross-check
  std::string y_path;                       ///< cmd_map: data file
  bool synthesize = false;                  ///< cmd_map: draw y from the source truth
};

int cmd_map(const CommandOptions& opts);
int cmd_rate(const CommandOptions& opts);
int cmd_smallball(const CommandOptions& opts);
int cmd_diagnose(const CommandOptions& opts);

}  // namespace specmap::cli
