#pragma once

#include "calsens/core.hpp"
#include "calsens/lp.hpp"

#include <optional>
#include <vector>

namespace calsens {

struct SolverSettings {
    int max_iterations = 500;
    double tolerance = 1e-8;           // relative objective change
    double lp_feasibility_tol = 1e-9;
    double step_shrink = 0.5;          // backtracking factor

    void validate() const;
};

struct FitDiagnostics {
    int iterations_used = 0;
    double final_objective = 0.0;
    double kkt_max_violation = 0.0;
    bool converged = false;
    int clamp_events = 0;
    std::vector<double> objective_trace;
};

struct FitResult {
    CoefficientVector coef;
    FitDiagnostics diagnostics;
};

/// Quantile-regression fit together with its LP certificate.
struct QuantileFit {
    CoefficientVector coef;
    FitDiagnostics diagnostics;
    /// Optimal a_i in [0,1] of the dual LP, one entry per sample row (0 for rows outside the fit).
    Vector dual;
    double primal_objective = 0.0;
    double dual_objective = 0.0;
    /// Optimal LP basis; feeding it to the next fit on the same rows (another
    /// lambda) restarts the dual simplex from it.
    std::optional<LpBasis> basis;
};

using WarmStart = std::optional<CoefficientVector>;

/// Calibrated propensity fit: minimizes E~{T e^{-f'g} + (1-T) f'g} + lambda |g_{1:p}|_1.
FitResult fit_rcal_gamma(const ObservedData& data, double lambda_gamma, const SolverSettings& settings,
                         const WarmStart& warm = std::nullopt);

/// Lasso-penalized logistic likelihood for the propensity score.
FitResult fit_ml_gamma(const ObservedData& data, double lambda_gamma, const SolverSettings& settings,
                       const WarmStart& warm = std::nullopt);

/// (1/2n) sum_i T_i w_i (r_i - f_i'a)^2 + lambda |a_{1:p}|_1 over the treated rows.
FitResult fit_wls_lasso(const ObservedData& data, const Vector& weights, const Vector& response,
                        double lambda_alpha, const SolverSettings& settings, const WarmStart& warm = std::nullopt);

/// (1/n) sum_i T_i w_i {-y_i f_i'a + log(1 + e^{f_i'a})} + lambda |a_{1:p}|_1; binary outcomes only.
FitResult fit_wlogit_lasso(const ObservedData& data, const Vector& weights, double lambda_alpha,
                           const SolverSettings& settings, const WarmStart& warm = std::nullopt);

/// (1/n) sum_i T_i w_i rho_tau(y_i, h_i'b) + lambda |b_{1:m}|_1, solved exactly through its dual LP.
/// Without a basis the dual simplex starts from the intercept-only solution, which is dual feasible.
QuantileFit fit_wqr_lasso(const ObservedData& data, const Vector& weights, double tau, double lambda_beta,
                          const SolverSettings& settings, const WarmStart& warm = std::nullopt,
                          const LpBasis* warm_basis = nullptr);

/// fit_wqr_lasso with unit weights on the treated group.
QuantileFit fit_uqr_lasso(const ObservedData& data, double tau, double lambda_beta, const SolverSettings& settings,
                          const WarmStart& warm = std::nullopt, const LpBasis* warm_basis = nullptr);

/// Smallest lambda at which every slope of the weighted quantile-regression Lasso is zero.
double wqr_lambda_star(const ObservedData& data, const Vector& weights, double tau,
                       const SolverSettings& settings = {});

/// Weighted tau-quantile of the treated outcomes: smallest y with cumulative weight share >= tau.
double weighted_quantile(const ObservedData& data, const Vector& weights, double tau);

/// Binary-outcome weight factor v(X; b) for the upper (plus) or lower side.
double logistic_outcome_weight(double quantile_fit, const SensitivityLevel& s, bool plus_side);

/// Unpenalized losses (divisor n) used by tests and by cross-validation.
double rcal_objective(const ObservedData& data, const Vector& gamma);
double ml_objective(const ObservedData& data, const Vector& gamma);
double wls_objective(const ObservedData& data, const Vector& weights, const Vector& response, const Vector& alpha);
double wlogit_objective(const ObservedData& data, const Vector& weights, const Vector& alpha);
double wqr_objective(const ObservedData& data, const Vector& weights, double tau, const Vector& beta);

}  // namespace calsens
