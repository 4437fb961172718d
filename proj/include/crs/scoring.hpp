// SPDX-License-Identifier: Apache-2.0
#pragma once

// Competition scoring: accuracy ratio and multiplier, time decay, per-kind
// points, challenge totals, and the POV/patch leaderboard rubric.

#include <cstdint>

#include "crs/domain.hpp"

namespace crs {

enum class ScoreKind { POV, Patch, Sarif, Bundle };

// acc / (acc + inacc); 1.0 when nothing has been submitted yet.
double accuracy_ratio(std::uint64_t acc, std::uint64_t inacc);

// 1 - (1 - r) / 4. Throws InvariantError when r is outside [0, 1].
double accuracy_multiplier(double r);

// 0.5 + time_rem / (2 * time_window).
double time_multiplier(Duration time_rem, Duration time_window);

// Base points (POV 2, Patch 6, Sarif 1, Bundle 1) scaled by tau when passed.
double component_points(ScoreKind kind, bool passed, double tau);

// Fills `am` and `total` from the accuracy counts in `inputs`.
ScoreComponents challenge_score(ScoreComponents partial, const ScoreInputs& inputs);

std::int64_t leaderboard_score(std::int64_t pov_count, std::int64_t patch_count);

}  // namespace crs
