#pragma once

#include <vector>

namespace risopt {

/// Convergence record kept by every iterative solver. `trajectory` holds the
/// objective value at each recorded step; outer/alternating drivers also keep
/// the reports of their inner solves, in execution order.
struct OptimizationReport {
    std::vector<double> trajectory;
    int iterations = 0;
    bool converged = false;
    std::vector<OptimizationReport> inner_reports;

    double initial() const { return trajectory.empty() ? 0.0 : trajectory.front(); }
    double final() const { return trajectory.empty() ? 0.0 : trajectory.back(); }
};

} // namespace risopt
