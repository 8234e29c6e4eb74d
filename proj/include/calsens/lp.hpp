#pragma once

#include "calsens/core.hpp"

#include <limits>
#include <optional>
#include <vector>

namespace calsens {

/// Dense linear program in bounded equality form:
///
///     minimize  cost^T x   subject to  A x = b,  lower <= x <= upper.
///
/// Lower bounds must be finite; upper bounds may be +infinity.
struct LpProblem {
    Matrix a;
    Vector b;
    Vector cost;
    Vector lower;
    Vector upper;
};

enum class LpStatus { Optimal, Infeasible, Unbounded, IterationLimit, Singular };

const char* to_string(LpStatus s);

struct LpOptions {
    double feasibility_tol = 1e-9;
    double optimality_tol = 1e-9;
    double pivot_tol = 1e-9;
    int max_iterations = 0;  // 0: 20*(rows+cols) + 1000
    int refactor_interval = 64;
};

/// A simplex basis: one column per row (index cols + k names the artificial
/// of row k) and, for nonbasic structural columns, whether they sit at their
/// upper bound.
struct LpBasis {
    std::vector<Eigen::Index> basic;
    std::vector<char> at_upper;
};

struct LpSolution {
    LpStatus status = LpStatus::Infeasible;
    Vector x;
    /// Simplex multipliers y: reduced costs are cost - A^T y.
    Vector row_duals;
    Vector reduced_costs;
    double objective = std::numeric_limits<double>::quiet_NaN();
    int iterations = 0;
    /// Optimal basis, reusable by solve_lp_from_basis on a problem with the
    /// same matrix and costs (right-hand side and bounds may change).
    std::optional<LpBasis> basis;
};

/// Two-phase bounded-variable revised simplex (dense, explicit basis inverse
/// with periodic refactorization, Harris ratio test, Bland fallback under
/// stalling). `start_at_upper`, when given, places the listed structural
/// variables at their upper bound in the starting point; everything else
/// starts at its lower bound.
LpSolution solve_lp(const LpProblem& problem, const LpOptions& options = {},
                    const std::vector<char>* start_at_upper = nullptr);

/// Warm start from a basis. A dual feasible basis is repaired by the bounded
/// dual simplex (bound-flipping ratio test); a primal feasible one goes straight
/// to primal phase 2. Anything else, or a singular basis, falls back to solve_lp.
LpSolution solve_lp_from_basis(const LpProblem& problem, const LpBasis& basis, const LpOptions& options = {});

}  // namespace calsens
