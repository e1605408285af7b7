#pragma once

// Random finite-difference cases for every differentiable operation: the tape
// primitives, the CRF log-likelihood, the layers built on them and the
// controller's log-probability. Shared by the unit and acceptance suites.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mtnas/rng.hpp"

namespace mtnas::testing {

struct OpCase {
  std::string name;
  /// Draws fresh random inputs and returns the gradcheck error for them.
  std::function<double(Rng&)> run;
};

const std::vector<OpCase>& op_cases();

/// Largest error over `cases` random draws.
double worst_error(const OpCase& op, std::size_t cases, std::uint64_t seed);

}  // namespace mtnas::testing
