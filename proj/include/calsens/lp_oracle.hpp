#pragma once

#include "calsens/core.hpp"
#include "calsens/dgp.hpp"
#include "calsens/lp.hpp"
#include "calsens/solvers.hpp"

#include <cstdint>

namespace calsens {

/// Sample bound as a linear program over the sensitivity multipliers
/// lambda_i in [1/Lambda, Lambda] of the treated units:
///
///   max (or min)  (1/n) sum_i T_i y_i (1 + w_i lambda_i)
///   s.t.          sum_i T_i w_i lambda_i = sum_i T_i w_i
///                 |(1/n) sum_i T_i w_i lambda_i h_ij - (1/n) sum_i T_i w_i h_ij| <= relax_slack,  j >= 1
///
/// relax_slack = 0 gives the exact moment problem; relax_slack = span * lambda_beta
/// gives the relaxed problem whose dual carries the Lasso penalty.
struct PrimalBoundProblem {
    Vector weights;  // w_i = (1 - pi_i) / pi_i; read on treated rows only
    Vector y;
    Vector t;
    Matrix h;        // column 0 is the constant
    double lambda = 1.0;
    double relax_slack = 0.0;
    bool maximize = true;
};

struct PrimalBoundResult {
    double value = 0.0;
    Vector multipliers;  // row duals of the moment constraints, in builder row order
    Vector lambda1;      // lambda_i per sample row (NaN for untreated rows)
    LpStatus status = LpStatus::Optimal;
    int iterations = 0;
};

/// Builds the problem from data and a fitted propensity coefficient.
PrimalBoundProblem make_primal_problem(const ObservedData& data, const Vector& gamma, double lambda,
                                       double relax_slack, bool maximize);

/// Solves the primal LP; a numerical failure raises SolverError("lp_oracle").
PrimalBoundResult solve_primal_bound(const PrimalBoundProblem& problem, const LpOptions& options = {});

/// Dual value at a quantile coefficient beta fitted at level tau (upper) or
/// 1 - tau (lower):
///   IPW + span (1/n) sum T w rho(y, h'beta) + span lambda_beta |beta_{1:}|_1   (upper)
///   IPW - span (1/n) sum T w rho(y, h'beta) - span lambda_beta |beta_{1:}|_1   (lower)
double dual_bound_formula(const PrimalBoundProblem& problem, const Vector& beta, double lambda_beta);

/// Dual value with beta from fit_wqr_lasso at lambda_beta = relax_slack / span.
double dual_bound_value(const PrimalBoundProblem& problem, const SolverSettings& settings = {});

// ---------------------------------------------------------------------------
// Population oracle

/// E rho_tau(eps, u) for eps ~ N(0,1).
double expected_check_loss_normal(double u, double tau);

enum class QuantileChoice { Sharp, Linear };

/// The quantile function plugged into the population bound. Linear uses
/// q(X) = (1, X_1..X_p)' beta with beta of length p + 1.
struct QuantileSpec {
    QuantileChoice choice = QuantileChoice::Sharp;
    Vector beta;

    static QuantileSpec sharp() { return {}; }
    static QuantileSpec linear(Vector b) { return {QuantileChoice::Linear, std::move(b)}; }
};

struct OracleEstimate {
    double value = 0.0;
    double se = 0.0;
    long n_mc = 0;
    bool low_sample_warning = false;
};

/// Covariate draws shared by every oracle call with the same (dgp.p, n_mc, seed).
/// Batches of fixed size use derive_seed(seed, batch), so the draws do not
/// depend on the thread count.
Matrix population_covariates(int p, long n_mc, std::uint64_t seed, int threads = 1);

/// Per-draw integrand of mu^{1+}(q) (upper) or mu^{1-}(q):
///   m*(X) +/- span (1 - pi*(X)) E rho(eps, q(X) - m*(X)).
Vector population_integrand(DgpConfig config, const Matrix& x, const SensitivityLevel& s, const QuantileSpec& q,
                            bool upper);

/// Monte Carlo mean and standard error of the integrand over the draws of
/// population_covariates(dgp.p, n_mc, seed), generated one batch at a time.
/// n_mc < 1e4 sets the warning flag.
OracleEstimate population_bound_oracle(const DgpSpec& dgp, const SensitivityLevel& s, const QuantileSpec& q,
                                       long n_mc, std::uint64_t seed, bool upper, int threads = 1);

/// Population linear quantile coefficients over (1, X_1..X_p) minimizing
/// E[c(X) E rho(eps, h'beta - m*)] with c = 1 - pi* (weighted, W) or c = pi* (unweighted, U),
/// at level tau (upper) or 1 - tau (lower), evaluated on the draws x.
enum class PopulationWeighting { Weighted, Unweighted };

Vector population_quantile_coefficients(DgpConfig config, const Matrix& x, const SensitivityLevel& s,
                                        PopulationWeighting weighting, bool upper);

}  // namespace calsens
