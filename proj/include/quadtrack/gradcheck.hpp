#pragma once

#include <functional>
#include <string>
#include <vector>

#include "quadtrack/tape.hpp"

namespace quadtrack::gradcheck {

struct CheckRow {
    std::string name;
    double max_rel_err = 0.0;
    bool pass = false;
};

/// One finite-difference problem: `build` reconstructs the traced graph from
/// the current contents of `params` (registering them as leaves in order) and
/// returns the scalar root; `eval` recomputes the same scalar in double
/// precision, again from the current param contents. The checker perturbs the
/// param tensors in place.
struct FdProblem {
    std::vector<Tensor*> params;
    std::function<ad::Value(ad::Tape&, std::vector<ad::NodeId>&)> build;
    std::function<double()> eval;
};

// Central differences with eps = 1e-3 against the double-precision oracle.
// Relative error of a parameter's gradient is measured against the max-norm
// of the larger of the two gradients.
double fd_max_rel_error(FdProblem& problem, double eps = 1e-3);

// All differentiable-op and loss suites at the given seed. When
// `negative_control` is set, a fixture with a deliberately wrong analytic
// gradient is appended; it must report FAIL.
std::vector<CheckRow> run_all(uint64_t seed, bool negative_control = false);

inline constexpr double kTolerance = 1e-4;

}  // namespace quadtrack::gradcheck
