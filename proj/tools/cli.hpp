#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "jm/error.hpp"
#include "jm/joint_motion.hpp"
#include "jm/metrics.hpp"
#include "jm/updater.hpp"

namespace jm::cli {

/// Exit statuses of the `jm` tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitMissingInput = 2,
  kExitParse = 3,
  kExitNumerical = 4,
};

[[nodiscard]] int exit_code_for(ErrorCode code) noexcept;

/// Runs one invocation; `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct TrackConfig {
  LoopConfig loop;
  UpdaterOptions updater;
  bool zero_updater{false};
  double pose_rot_deg{0.0};
  double pose_trans_frac{0.0};
  double depth_sigma{0.0};
  double track_sigma{0.0};
};

/// Applies key=value overrides; unknown keys raise kParse.
void apply_track_config(TrackConfig& config, const std::vector<std::pair<std::string, std::string>>& kv);

struct EvalConfig {
  std::vector<double> thresholds{kDefaultThresholds};
  double vis_threshold{kVisibilityThreshold};
  int rpe_gap{1};
};

void apply_eval_config(EvalConfig& config, const std::vector<std::pair<std::string, std::string>>& kv);
[[nodiscard]] std::vector<double> parse_list(const std::string& text);

}  // namespace jm::cli
