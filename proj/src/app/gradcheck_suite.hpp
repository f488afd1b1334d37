// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace gk::app {

struct GradSuiteOptions {
  std::size_t cases = 100;  // random cases per check
  double tolerance = 1e-4;  // max relative error
  std::uint64_t seed = 0;
  std::optional<std::string> only;  // run a single check by name
};

struct OpCheck {
  std::string name;  // primitive name, with a [variant] suffix where one primitive has several checks
  std::size_t cases = 0;
  std::size_t elements = 0;
  double max_rel_error = 0.0;
  bool passed = false;
};

std::vector<std::string> gradcheck_names();

// f64 central-difference checks of every differentiable primitive and both losses.
std::vector<OpCheck> run_gradcheck_suite(const GradSuiteOptions& opt);

}  // namespace gk::app
