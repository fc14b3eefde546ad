#pragma once

#include <vector>

#include <Eigen/Core>

namespace pivotal {

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method,
/// O(n^3)). Returns column[row].
std::vector<int> solve_assignment(const Eigen::MatrixXd& cost);

/// Same contract by enumerating all n! permutations in lexicographic order; the
/// first optimum wins ties. Intended for n <= 8.
std::vector<int> solve_assignment_exhaustive(const Eigen::MatrixXd& cost);

double assignment_cost(const Eigen::MatrixXd& cost, const std::vector<int>& column);

}  // namespace pivotal
