// SPDX-License-Identifier: Apache-2.0
#include "crs/scoring.hpp"

namespace crs {

double accuracy_ratio(std::uint64_t acc, std::uint64_t inacc) {
  if (acc + inacc == 0) return 1.0;
  return static_cast<double>(acc) / static_cast<double>(acc + inacc);
}

double accuracy_multiplier(double r) {
  if (!(r >= 0.0 && r <= 1.0)) throw InvariantError("accuracy ratio outside [0, 1]");
  return 1.0 - (1.0 - r) / 4.0;
}

double time_multiplier(Duration time_rem, Duration time_window) {
  if (time_window.count() <= 0) throw InvariantError("time_window must be positive");
  if (time_rem.count() < 0 || time_rem > time_window) {
    throw InvariantError("time_rem must lie within [0, time_window]");
  }
  return 0.5 + static_cast<double>(time_rem.count()) /
                   (2.0 * static_cast<double>(time_window.count()));
}

double component_points(ScoreKind kind, bool passed, double tau) {
  if (!passed) return 0.0;
  switch (kind) {
    case ScoreKind::POV:
      return 2.0 * tau;
    case ScoreKind::Patch:
      return 6.0 * tau;
    case ScoreKind::Sarif:
    case ScoreKind::Bundle:
      return 1.0 * tau;
  }
  return 0.0;
}

ScoreComponents challenge_score(ScoreComponents partial, const ScoreInputs& inputs) {
  partial.am = accuracy_multiplier(accuracy_ratio(inputs.acc, inputs.inacc));
  partial.total = partial.am * (partial.vds + partial.prs + partial.sas + partial.bdl);
  return partial;
}

std::int64_t leaderboard_score(std::int64_t pov_count, std::int64_t patch_count) {
  return 2 * pov_count + 6 * patch_count;
}

}  // namespace crs
