#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "protood/tuner.hpp"

namespace protood {

struct GradcheckConfig {
  std::size_t dim = 8;
  std::size_t classes = 3;
  std::size_t context_length = 2;
  std::size_t token_dim = 8;
  std::size_t batch = 4;
  double tau = 0.1;
  double alpha = 1.0;
  double beta = 1.0;
  double step = 1e-5;
  double tolerance = 1e-4;
  std::uint64_t seed = 7;
  // Test hook: scales the analytic gradient of one group by 1.001 before the
  // comparison, to show the check notices a wrong formula.
  std::optional<std::string> mutate_group;
};

struct GradcheckReport {
  // (group, max relative error) in block order: context, meta, mu, sigma, w_it, w_ti.
  std::vector<std::pair<std::string, double>> groups;
  double max_rel_error = 0.0;
  std::size_t parameters = 0;
  double tolerance = 0.0;
  bool pass = false;
};

// Component relative error |a - n| / max(|a|, |n|, floor) with floor 1e-6:
// below that magnitude the comparison is effectively absolute.
inline constexpr double kGradcheckFloor = 1e-6;

// Random small instance: every parameter perturbed away from initialization
// so no residual or relu sits at a kink, then analytic gradients compared
// with central differences of the batch loss.
GradcheckReport run_gradcheck(const GradcheckConfig& cfg);

std::string to_json(const GradcheckReport& report);

}  // namespace protood
