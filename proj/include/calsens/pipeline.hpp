#pragma once

#include "calsens/core.hpp"
#include "calsens/solvers.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace calsens {

enum class LossId { Calibration, Likelihood, Quantile, Squares, Logistic };

const char* to_string(LossId id);

/// Everything a loss needs beyond the data: per-unit weights, the response for
/// least squares, and tau for the quantile loss. Upstream estimates are folded
/// in here, so they stay frozen while a downstream penalty is tuned.
struct LossContext {
    Vector weights;
    Vector response;
    double tau = 0.5;
};

/// Geometric grid {lambda* / 2^(j*step): j = 0..n_points-1}.
struct TuningGrid {
    int n_points = 11;
    double step = 1.0;
    int n_folds = 5;
    std::uint64_t fold_seed = 1;
    /// When set, cross-validation is skipped and this penalty is used everywhere.
    std::optional<double> fixed_lambda;

    void validate() const;
    std::vector<double> values(double lambda_star) const;
};

struct CvResult {
    double selected_lambda = 0.0;
    double lambda_star = 0.0;
    std::vector<double> lambdas;
    std::vector<double> curve;
};

/// Fold label per row (0..n_folds-1). Every fold holds treated and untreated
/// rows; one reshuffle with seed+1 is tried before giving up.
std::vector<int> make_folds(const ObservedData& data, int n_folds, std::uint64_t seed);

double compute_lambda_star(LossId id, const ObservedData& data, const LossContext& ctx,
                           const SolverSettings& settings = {});

CvResult cross_validate(LossId id, const ObservedData& data, const LossContext& ctx, const TuningGrid& grid,
                        const std::vector<int>& folds, const SolverSettings& settings);

/// Convenience overload building the folds from grid.fold_seed.
CvResult cross_validate(LossId id, const ObservedData& data, const LossContext& ctx, const TuningGrid& grid,
                        const SolverSettings& settings);

/// Full-sample fit of one loss at a given penalty.
struct StageFit {
    CoefficientVector coef;
    double lambda = 0.0;
    FitDiagnostics diagnostics;
    std::optional<CvResult> cv;
    std::optional<LpBasis> basis;  // quantile stage only
};

/// `basis` warm-starts the quantile LP (ignored by the other losses).
StageFit fit_loss(LossId id, const ObservedData& data, const LossContext& ctx, double lambda,
                  const SolverSettings& settings, const WarmStart& warm = std::nullopt,
                  const LpBasis* basis = nullptr);

/// Tune (unless grid.fixed_lambda) and fit one stage. Non-convergence of the
/// final fit raises SolverError labelled with the stage.
StageFit tune_and_fit(LossId id, const ObservedData& data, const LossContext& ctx, const TuningGrid& grid,
                      const std::vector<int>& folds, const SolverSettings& settings);

struct SideFit {
    StageFit beta;
    StageFit alpha;
};

struct FittedNuisance {
    Method method = Method::RCAL;
    OutcomeFamily family = OutcomeFamily::Linear;
    double sensitivity = 1.0;
    StageFit gamma;
    SideFit plus;
    SideFit minus;

    double lambda_gamma() const { return gamma.lambda; }
    double lambda_beta(bool plus_side) const { return (plus_side ? plus : minus).beta.lambda; }
    double lambda_alpha(bool plus_side) const { return (plus_side ? plus : minus).alpha.lambda; }
    bool all_finite() const;
};

/// Propensity stage: calibrated loss for RCAL, likelihood for RML.
StageFit fit_propensity(const ObservedData& data, Method method, const TuningGrid& grid,
                        const std::vector<int>& folds, const SolverSettings& settings);

/// Quantile and mean stages for one side given a fitted propensity.
SideFit fit_side(const ObservedData& data, const CoefficientVector& gamma, const SensitivityLevel& s, bool plus_side,
                 Method method, OutcomeFamily family, const TuningGrid& grid, const std::vector<int>& folds,
                 const SolverSettings& settings);

/// Both sides for a level, reusing the plus side when Lambda = 1.
FittedNuisance fit_sides(const ObservedData& data, const StageFit& gamma, const SensitivityLevel& s, Method method,
                         OutcomeFamily family, const TuningGrid& grid, const std::vector<int>& folds,
                         const SolverSettings& settings);

FittedNuisance fit_rcal(const ObservedData& data, const SensitivityLevel& s, const TuningGrid& grid,
                        const SolverSettings& settings, OutcomeFamily family = OutcomeFamily::Linear);

FittedNuisance fit_rml(const ObservedData& data, const SensitivityLevel& s, const TuningGrid& grid,
                       const SolverSettings& settings, OutcomeFamily family = OutcomeFamily::Linear);

/// Weights used by the quantile and mean stages: e^{-f'g} for RCAL, 1 for RML.
Vector stage_weights(const ObservedData& data, const CoefficientVector& gamma, Method method);

/// Conditional mean of the transformed outcome implied by a fitted mean model:
/// f'a for the linear family; for the logistic family the composite
/// m + span {m rho(1, q) + (1-m) rho(0, q)} (plus) or its mirror (minus).
double transformed_mean(double mean_index, double quantile_fit, const SensitivityLevel& s, bool plus_side,
                        OutcomeFamily family);

}  // namespace calsens
