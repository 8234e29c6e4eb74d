#include "calsens/pipeline.hpp"

#include "calsens/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace calsens {

const char* to_string(LossId id) {
    switch (id) {
        case LossId::Calibration: return "propensity (calibrated)";
        case LossId::Likelihood: return "propensity (likelihood)";
        case LossId::Quantile: return "outcome quantile";
        case LossId::Squares: return "outcome mean (least squares)";
        case LossId::Logistic: return "outcome mean (logistic)";
    }
    return "unknown";
}

void TuningGrid::validate() const {
    if (n_points < 1) throw InputError("tuning grid needs at least one point");
    if (!(step > 0.0)) throw InputError("tuning grid step must be positive");
    if (n_folds < 2) throw InputError("cross-validation needs at least two folds");
    if (fixed_lambda && !(*fixed_lambda >= 0.0)) throw InputError("fixed lambda must be >= 0");
}

std::vector<double> TuningGrid::values(double lambda_star) const {
    std::vector<double> v;
    v.reserve(static_cast<std::size_t>(n_points));
    for (int j = 0; j < n_points; ++j) v.push_back(lambda_star / std::exp2(j * step));
    return v;
}

namespace {

bool folds_ok(const ObservedData& data, const std::vector<int>& folds, int k) {
    std::vector<int> treated(static_cast<std::size_t>(k), 0), control(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < data.n(); ++i)
        ++(data.treated(i) ? treated : control)[static_cast<std::size_t>(folds[i])];
    for (int f = 0; f < k; ++f)
        if (treated[static_cast<std::size_t>(f)] == 0 || control[static_cast<std::size_t>(f)] == 0) return false;
    return true;
}

std::vector<int> assign_folds(std::size_t n, int k, std::uint64_t seed) {
    Rng rng(seed);
    const auto perm = permutation(n, rng);
    std::vector<int> folds(n);
    for (std::size_t pos = 0; pos < n; ++pos) folds[perm[pos]] = static_cast<int>(pos % static_cast<std::size_t>(k));
    return folds;
}

LossContext subset_context(const LossContext& ctx, const std::vector<std::size_t>& rows) {
    LossContext out;
    out.tau = ctx.tau;
    auto pick = [&](const Vector& v) {
        if (v.size() == 0) return Vector();
        Vector s(static_cast<Eigen::Index>(rows.size()));
        for (std::size_t k = 0; k < rows.size(); ++k) s[static_cast<Eigen::Index>(k)] = v[static_cast<Eigen::Index>(rows[k])];
        return s;
    };
    out.weights = pick(ctx.weights);
    out.response = pick(ctx.response);
    return out;
}

double softplus(double e) {
    return e > 0.0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
}

// Average unpenalized loss over the held-out rows of the full sample.
double heldout_loss(LossId id, const ObservedData& data, const LossContext& ctx, const Vector& coef,
                    const std::vector<std::size_t>& rows) {
    double s = 0.0;
    for (std::size_t r : rows) {
        const auto i = static_cast<Eigen::Index>(r);
        const double t = data.t()[i];
        const double y = data.y()[i];
        switch (id) {
            case LossId::Calibration: {
                const double e = data.f().row(i).dot(coef);
                s += t > 0.5 ? std::exp(-std::clamp(e, -kLinearPredictorLimit, kLinearPredictorLimit)) : e;
                break;
            }
            case LossId::Likelihood: {
                const double e = data.f().row(i).dot(coef);
                s += softplus(e) - t * e;
                break;
            }
            case LossId::Quantile:
                if (t > 0.5) s += ctx.weights[i] * check_loss(y, data.h().row(i).dot(coef), ctx.tau);
                break;
            case LossId::Squares:
                if (t > 0.5) {
                    const double r2 = ctx.response[i] - data.f().row(i).dot(coef);
                    s += 0.5 * ctx.weights[i] * r2 * r2;
                }
                break;
            case LossId::Logistic:
                if (t > 0.5) {
                    const double e = data.f().row(i).dot(coef);
                    s += ctx.weights[i] * (softplus(e) - y * e);
                }
                break;
        }
    }
    return s / static_cast<double>(rows.size());
}

}  // namespace

std::vector<int> make_folds(const ObservedData& data, int n_folds, std::uint64_t seed) {
    if (n_folds < 2) throw InputError("cross-validation needs at least two folds");
    if (static_cast<std::size_t>(n_folds) > data.n()) throw InputError("more folds than observations");
    auto folds = assign_folds(data.n(), n_folds, seed);
    if (folds_ok(data, folds, n_folds)) return folds;
    folds = assign_folds(data.n(), n_folds, seed + 1);
    if (folds_ok(data, folds, n_folds)) return folds;
    throw SolverError("cross-validation", "a fold lacks treated or untreated units after reshuffling");
}

double compute_lambda_star(LossId id, const ObservedData& data, const LossContext& ctx,
                           const SolverSettings& settings) {
    const Matrix& f = data.f();
    const Eigen::Index d = f.cols();
    if (d <= 1 && id != LossId::Quantile) return 0.0;
    const double n = static_cast<double>(data.n());
    Vector unit(static_cast<Eigen::Index>(data.n()));
    switch (id) {
        case LossId::Calibration: {
            const double tbar = static_cast<double>(data.treated_count()) / n;
            const double w0 = (1.0 - tbar) / tbar;  // e^{-g0} at the intercept-only optimum
            for (Eigen::Index i = 0; i < unit.size(); ++i) unit[i] = data.t()[i] > 0.5 ? -w0 : 1.0;
            break;
        }
        case LossId::Likelihood: {
            const double tbar = static_cast<double>(data.treated_count()) / n;
            for (Eigen::Index i = 0; i < unit.size(); ++i) unit[i] = tbar - data.t()[i];
            break;
        }
        case LossId::Quantile:
            return wqr_lambda_star(data, ctx.weights, ctx.tau, settings);
        case LossId::Squares:
        case LossId::Logistic: {
            const Vector& r = id == LossId::Squares ? ctx.response : data.y();
            double sw = 0.0, swr = 0.0;
            for (Eigen::Index i = 0; i < unit.size(); ++i)
                if (data.t()[i] > 0.5) {
                    sw += ctx.weights[i];
                    swr += ctx.weights[i] * r[i];
                }
            if (!(sw > 0.0)) throw SolverError(to_string(id), "total treated weight is zero");
            const double center = swr / sw;
            for (Eigen::Index i = 0; i < unit.size(); ++i)
                unit[i] = data.t()[i] > 0.5 ? ctx.weights[i] * (center - r[i]) : 0.0;
            break;
        }
    }
    const Vector g = f.rightCols(d - 1).transpose() * unit / n;
    return g.cwiseAbs().maxCoeff();
}

StageFit fit_loss(LossId id, const ObservedData& data, const LossContext& ctx, double lambda,
                  const SolverSettings& settings, const WarmStart& warm, const LpBasis* basis) {
    StageFit out;
    out.lambda = lambda;
    switch (id) {
        case LossId::Calibration: {
            auto r = fit_rcal_gamma(data, lambda, settings, warm);
            out.coef = std::move(r.coef);
            out.diagnostics = std::move(r.diagnostics);
            break;
        }
        case LossId::Likelihood: {
            auto r = fit_ml_gamma(data, lambda, settings, warm);
            out.coef = std::move(r.coef);
            out.diagnostics = std::move(r.diagnostics);
            break;
        }
        case LossId::Quantile: {
            auto r = fit_wqr_lasso(data, ctx.weights, ctx.tau, lambda, settings, warm, basis);
            out.coef = std::move(r.coef);
            out.diagnostics = std::move(r.diagnostics);
            out.basis = std::move(r.basis);
            break;
        }
        case LossId::Squares: {
            auto r = fit_wls_lasso(data, ctx.weights, ctx.response, lambda, settings, warm);
            out.coef = std::move(r.coef);
            out.diagnostics = std::move(r.diagnostics);
            break;
        }
        case LossId::Logistic: {
            auto r = fit_wlogit_lasso(data, ctx.weights, lambda, settings, warm);
            out.coef = std::move(r.coef);
            out.diagnostics = std::move(r.diagnostics);
            break;
        }
    }
    return out;
}

CvResult cross_validate(LossId id, const ObservedData& data, const LossContext& ctx, const TuningGrid& grid,
                        const std::vector<int>& folds, const SolverSettings& settings) {
    grid.validate();
    if (folds.size() != data.n()) throw InputError("fold vector length differs from sample size");
    CvResult res;
    res.lambda_star = compute_lambda_star(id, data, ctx, settings);
    res.lambdas = grid.values(res.lambda_star);
    res.curve.assign(res.lambdas.size(), 0.0);
    if (res.lambdas.size() == 1 || res.lambda_star == 0.0) {
        res.selected_lambda = res.lambdas.front();
        return res;
    }
    const int k = *std::max_element(folds.begin(), folds.end()) + 1;
    for (int fold = 0; fold < k; ++fold) {
        std::vector<std::size_t> train, test;
        for (std::size_t i = 0; i < data.n(); ++i) (folds[i] == fold ? test : train).push_back(i);
        const ObservedData dtrain = data.subset(train);
        const LossContext ctrain = subset_context(ctx, train);
        WarmStart warm;
        std::optional<LpBasis> basis;
        bool diverged = false;
        for (std::size_t g = 0; g < res.lambdas.size(); ++g) {
            double loss = std::numeric_limits<double>::infinity();
            if (!diverged) {
                try {
                    StageFit fit = fit_loss(id, dtrain, ctrain, res.lambdas[g], settings, warm,
                                            basis ? &*basis : nullptr);
                    if (fit.diagnostics.converged && fit.coef.all_finite()) {
                        loss = heldout_loss(id, data, ctx, fit.coef.values, test);
                        warm = fit.coef;
                        basis = std::move(fit.basis);
                    }
                    // A clamped fit signals an unbounded loss, which stays unbounded for smaller lambda.
                    diverged = fit.diagnostics.clamp_events > 0;
                } catch (const SolverError&) {
                    // A failed fold fit scores +inf at this grid point.
                }
            }
            if (!std::isfinite(loss)) loss = std::numeric_limits<double>::infinity();
            res.curve[g] += loss / k;
        }
    }
    // Ties go to the larger lambda, which comes first on the grid.
    std::size_t best = 0;
    for (std::size_t g = 1; g < res.curve.size(); ++g)
        if (res.curve[g] < res.curve[best]) best = g;
    if (!std::isfinite(res.curve[best])) throw SolverError(to_string(id), "cross-validation failed at every grid point");
    res.selected_lambda = res.lambdas[best];
    return res;
}

CvResult cross_validate(LossId id, const ObservedData& data, const LossContext& ctx, const TuningGrid& grid,
                        const SolverSettings& settings) {
    return cross_validate(id, data, ctx, grid, make_folds(data, grid.n_folds, grid.fold_seed), settings);
}

StageFit tune_and_fit(LossId id, const ObservedData& data, const LossContext& ctx, const TuningGrid& grid,
                      const std::vector<int>& folds, const SolverSettings& settings) {
    std::optional<CvResult> cv;
    double lambda;
    if (grid.fixed_lambda) {
        lambda = *grid.fixed_lambda;
    } else {
        cv = cross_validate(id, data, ctx, grid, folds, settings);
        lambda = cv->selected_lambda;
    }
    StageFit fit = fit_loss(id, data, ctx, lambda, settings);
    fit.cv = std::move(cv);
    if (!fit.diagnostics.converged || !fit.coef.all_finite()) {
        std::ostringstream os;
        os << "fit did not converge at lambda = " << lambda << " (iterations " << fit.diagnostics.iterations_used
           << ", kkt violation " << fit.diagnostics.kkt_max_violation << ", clamp events "
           << fit.diagnostics.clamp_events << ")";
        throw SolverError(to_string(id), os.str());
    }
    return fit;
}

bool FittedNuisance::all_finite() const {
    return gamma.coef.all_finite() && plus.beta.coef.all_finite() && plus.alpha.coef.all_finite() &&
           minus.beta.coef.all_finite() && minus.alpha.coef.all_finite();
}

Vector stage_weights(const ObservedData& data, const CoefficientVector& gamma, Method method) {
    if (method == Method::RML) return Vector::Ones(static_cast<Eigen::Index>(data.n()));
    return evaluate_propensity(data.f(), gamma.values).inverse_weight;
}

double transformed_mean(double mean_index, double quantile_fit, const SensitivityLevel& s, bool plus_side,
                        OutcomeFamily family) {
    if (family == OutcomeFamily::Linear) return mean_index;
    const double m = 1.0 / (1.0 + std::exp(-mean_index));
    if (plus_side) {
        const double tau = s.tau();
        return m + s.span() * (m * check_loss(1.0, quantile_fit, tau) + (1.0 - m) * check_loss(0.0, quantile_fit, tau));
    }
    const double tau = 1.0 - s.tau();
    return m - s.span() * (m * check_loss(1.0, quantile_fit, tau) + (1.0 - m) * check_loss(0.0, quantile_fit, tau));
}

StageFit fit_propensity(const ObservedData& data, Method method, const TuningGrid& grid,
                        const std::vector<int>& folds, const SolverSettings& settings) {
    const LossId id = method == Method::RCAL ? LossId::Calibration : LossId::Likelihood;
    return tune_and_fit(id, data, LossContext{}, grid, folds, settings);
}

SideFit fit_side(const ObservedData& data, const CoefficientVector& gamma, const SensitivityLevel& s, bool plus_side,
                 Method method, OutcomeFamily family, const TuningGrid& grid, const std::vector<int>& folds,
                 const SolverSettings& settings) {
    if (family == OutcomeFamily::Logistic && !data.binary_outcome())
        throw InputError("logistic outcome family requires a binary outcome");
    SideFit side;
    const Vector w = stage_weights(data, gamma, method);

    LossContext qctx;
    qctx.weights = w;
    qctx.tau = plus_side ? s.tau() : 1.0 - s.tau();
    side.beta = tune_and_fit(LossId::Quantile, data, qctx, grid, folds, settings);

    const Vector q = data.h() * side.beta.coef.values;
    LossContext mctx;
    if (family == OutcomeFamily::Linear) {
        mctx.weights = w;
        mctx.response.resize(static_cast<Eigen::Index>(data.n()));
        for (Eigen::Index i = 0; i < mctx.response.size(); ++i)
            mctx.response[i] = plus_side ? tilde_y_plus(data.y()[i], q[i], s) : tilde_y_minus(data.y()[i], q[i], s);
        side.alpha = tune_and_fit(LossId::Squares, data, mctx, grid, folds, settings);
    } else {
        mctx.weights.resize(static_cast<Eigen::Index>(data.n()));
        for (Eigen::Index i = 0; i < mctx.weights.size(); ++i)
            mctx.weights[i] = w[i] * logistic_outcome_weight(q[i], s, plus_side);
        side.alpha = tune_and_fit(LossId::Logistic, data, mctx, grid, folds, settings);
    }
    return side;
}

FittedNuisance fit_sides(const ObservedData& data, const StageFit& gamma, const SensitivityLevel& s, Method method,
                         OutcomeFamily family, const TuningGrid& grid, const std::vector<int>& folds,
                         const SolverSettings& settings) {
    FittedNuisance fit;
    fit.method = method;
    fit.family = family;
    fit.sensitivity = s.lambda();
    fit.gamma = gamma;
    fit.plus = fit_side(data, gamma.coef, s, true, method, family, grid, folds, settings);
    if (s.lambda() == 1.0) fit.minus = fit.plus;
    else fit.minus = fit_side(data, gamma.coef, s, false, method, family, grid, folds, settings);
    return fit;
}

namespace {
FittedNuisance fit_method(const ObservedData& data, const SensitivityLevel& s, const TuningGrid& grid,
                          const SolverSettings& settings, OutcomeFamily family, Method method) {
    grid.validate();
    settings.validate();
    std::vector<int> folds;
    if (!grid.fixed_lambda) folds = make_folds(data, grid.n_folds, grid.fold_seed);
    const StageFit gamma = fit_propensity(data, method, grid, folds, settings);
    return fit_sides(data, gamma, s, method, family, grid, folds, settings);
}
}  // namespace

FittedNuisance fit_rcal(const ObservedData& data, const SensitivityLevel& s, const TuningGrid& grid,
                        const SolverSettings& settings, OutcomeFamily family) {
    return fit_method(data, s, grid, settings, family, Method::RCAL);
}

FittedNuisance fit_rml(const ObservedData& data, const SensitivityLevel& s, const TuningGrid& grid,
                       const SolverSettings& settings, OutcomeFamily family) {
    return fit_method(data, s, grid, settings, family, Method::RML);
}

}  // namespace calsens
