#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace wunet {

// Central finite differences in double precision against the analytic
// backward passes. Relative error per coordinate is
// |analytic - numeric| / max(|analytic|, |numeric|, 1e-6); each entry keeps the
// worst coordinate over all seeds.
struct GradcheckEntry {
  std::string name;  // layer primitive, loss, or "network:<layer>"
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  std::size_t coordinates = 0;  // coordinates compared
  std::size_t skipped = 0;      // coordinates whose stencil crossed a ReLU or pooling switch
  bool passed() const noexcept { return coordinates > 0 && max_rel_error < tolerance; }
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;
  bool passed() const noexcept;
  std::vector<std::string> failures() const;
};

struct GradcheckOptions {
  std::uint64_t seed = 0;
  std::size_t seeds = 5;
  bool include_network = true;
};

inline constexpr double kLayerTolerance = 1e-4;
inline constexpr double kLossTolerance = 1e-6;
inline constexpr double kNetworkTolerance = 1e-3;

GradcheckReport run_gradcheck(const GradcheckOptions& options = {});

}  // namespace wunet
