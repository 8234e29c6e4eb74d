#include "calsens/solvers.hpp"

#include "calsens/lp.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace calsens {

void SolverSettings::validate() const {
    if (max_iterations <= 0) throw InputError("solver max_iterations must be positive");
    if (!(tolerance > 0.0)) throw InputError("solver tolerance must be positive");
    if (!(lp_feasibility_tol > 0.0)) throw InputError("lp feasibility tolerance must be positive");
    if (!(step_shrink > 0.0 && step_shrink < 1.0)) throw InputError("step_shrink must lie in (0,1)");
}

namespace {

double soft_threshold(double z, double t) {
    if (z > t) return z - t;
    if (z < -t) return z + t;
    return 0.0;
}

double softplus(double e) {
    return e > 0.0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
}

double sigmoid(double e) {
    if (e >= 0.0) return 1.0 / (1.0 + std::exp(-e));
    const double z = std::exp(e);
    return z / (1.0 + z);
}

enum class LossKind { Calibration, Logistic, Squares };

// Sum over rows of a per-unit loss of the linear predictor eta_i = x_i' theta,
// divided by `divisor`. `c` holds per-unit weights, `r` the per-unit response.
constexpr int kMaxSweeps = 2000;

struct SmoothLoss {
    LossKind kind;
    const Matrix& x;
    Vector c;
    Vector r;
    double divisor;

    double value(const Vector& eta) const {
        double s = 0.0;
        for (Eigen::Index i = 0; i < eta.size(); ++i) s += unit_value(i, eta[i]);
        return s / divisor;
    }

    double unit_value(Eigen::Index i, double e) const {
        switch (kind) {
            case LossKind::Calibration: {
                const double ec = std::clamp(e, -kLinearPredictorLimit, kLinearPredictorLimit);
                return r[i] > 0.5 ? std::exp(-ec) : e;
            }
            case LossKind::Logistic:
                return c[i] * (softplus(e) - r[i] * e);
            case LossKind::Squares: {
                const double d = r[i] - e;
                return 0.5 * c[i] * d * d;
            }
        }
        return 0.0;
    }

    void derivatives(const Vector& eta, Vector& g, Vector& h) const {
        g.resize(eta.size());
        h.resize(eta.size());
        for (Eigen::Index i = 0; i < eta.size(); ++i) {
            const double e = eta[i];
            switch (kind) {
                case LossKind::Calibration:
                    if (r[i] > 0.5) {
                        const double w = std::exp(-std::clamp(e, -kLinearPredictorLimit, kLinearPredictorLimit));
                        g[i] = -w;
                        h[i] = w;
                    } else {
                        g[i] = 1.0;
                        h[i] = 0.0;
                    }
                    break;
                case LossKind::Logistic: {
                    const double p = sigmoid(e);
                    g[i] = c[i] * (p - r[i]);
                    h[i] = c[i] * p * (1.0 - p);
                    break;
                }
                case LossKind::Squares:
                    g[i] = -c[i] * (r[i] - e);
                    h[i] = c[i];
                    break;
            }
        }
    }

    int clamp_count(const Vector& eta) const {
        if (kind == LossKind::Squares) return 0;
        int k = 0;
        for (Eigen::Index i = 0; i < eta.size(); ++i)
            if (std::abs(eta[i]) > kLinearPredictorLimit) ++k;
        return k;
    }
};

double penalty(const Vector& theta, double lambda) {
    return lambda * theta.tail(theta.size() - 1).cwiseAbs().sum();
}

double kkt_violation(const Vector& grad, const Vector& theta, double lambda) {
    double v = std::abs(grad[0]);
    for (Eigen::Index j = 1; j < theta.size(); ++j) {
        const double gj = grad[j];
        if (theta[j] > 0.0) v = std::max(v, std::abs(gj + lambda));
        else if (theta[j] < 0.0) v = std::max(v, std::abs(gj - lambda));
        else v = std::max(v, std::abs(gj) - lambda);
    }
    return std::max(v, 0.0);
}

// Minimizes the quadratic model
//   (1/d) sum_i [g_i u_i + h_i u_i^2 / 2] + lambda |z_{1:}|_1,   u = X (z - theta)
// by cyclic coordinate descent with an active-set cycle. The intercept is updated
// last in every sweep so that its model stationarity holds at exit.
Vector coordinate_descent(const Matrix& x, const Vector& g, const Vector& h, double divisor, const Vector& theta,
                          double lambda, double tol, int max_sweeps) {
    const Eigen::Index d = x.cols();
    Vector z = theta;
    // model gradient in eta-space: g_i + h_i u_i
    Vector resid = g;
    Vector curv(d);
    for (Eigen::Index j = 0; j < d; ++j) {
        curv[j] = x.col(j).cwiseAbs2().dot(h) / divisor;
        if (!(curv[j] > 1e-12)) curv[j] = 1e-12;
    }
    auto update = [&](Eigen::Index j) {
        const double grad = x.col(j).dot(resid) / divisor;
        double zj;
        if (j == 0) zj = z[j] - grad / curv[j];
        else zj = soft_threshold(curv[j] * z[j] - grad, lambda) / curv[j];
        const double delta = zj - z[j];
        if (delta != 0.0) {
            resid.array() += h.array() * x.col(j).array() * delta;
            z[j] = zj;
        }
        return curv[j] * std::abs(delta);
    };
    std::vector<Eigen::Index> active;
    bool full = true;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double change = 0.0;
        if (full) {
            active.clear();
            for (Eigen::Index j = 1; j < d; ++j) {
                change = std::max(change, update(j));
                if (z[j] != 0.0) active.push_back(j);
            }
        } else {
            for (Eigen::Index j : active) change = std::max(change, update(j));
        }
        change = std::max(change, update(0));
        if (change < tol) {
            if (full) break;
            full = true;
        } else {
            full = false;
        }
    }
    return z;
}

FitResult minimize_smooth(const SmoothLoss& loss, double lambda, const SolverSettings& settings,
                          const WarmStart& warm, const char* stage) {
    settings.validate();
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InputError(std::string(stage) + ": lambda must be >= 0");
    const Matrix& x = loss.x;
    const Eigen::Index d = x.cols();
    Vector theta = Vector::Zero(d);
    if (warm) {
        if (warm->values.size() != d) throw InputError(std::string(stage) + ": warm start has wrong dimension");
        if (warm->values.allFinite()) theta = warm->values;
    }

    FitResult out;
    FitDiagnostics& diag = out.diagnostics;
    Vector eta = x * theta;
    double obj = loss.value(eta) + penalty(theta, lambda);
    diag.objective_trace.push_back(obj);
    Vector g, h;
    double rel_change = std::numeric_limits<double>::infinity();
    const double kkt_target = 10.0 * settings.tolerance;
    const double inner_floor = 0.01 * settings.tolerance;

    int iter = 0;
    int clamped_run = 0;
    for (; iter < settings.max_iterations; ++iter) {
        loss.derivatives(eta, g, h);
        const Vector grad = x.transpose() * g / loss.divisor;
        diag.kkt_max_violation = kkt_violation(grad, theta, lambda);
        if (diag.kkt_max_violation < kkt_target && rel_change < settings.tolerance) {
            diag.converged = true;
            break;
        }

        // Inexact Newton: the inner tolerance follows the outer KKT violation.
        const double inner_tol = std::max(inner_floor, 0.1 * diag.kkt_max_violation);
        Vector z;
        if (lambda == 0.0) {
            Matrix hess = x.transpose() * h.asDiagonal() * x / loss.divisor;
            const double ridge = 1e-12 * std::max(1.0, hess.diagonal().maxCoeff());
            hess.diagonal().array() += ridge;
            Eigen::LDLT<Matrix> ldlt(hess);
            z = theta - ldlt.solve(grad);
            if (ldlt.info() != Eigen::Success || !z.allFinite())
                z = coordinate_descent(x, g, h, loss.divisor, theta, lambda, inner_tol, kMaxSweeps);
        } else {
            z = coordinate_descent(x, g, h, loss.divisor, theta, lambda, inner_tol, kMaxSweeps);
        }
        const Vector dir = z - theta;
        const Vector deta = x * dir;
        // Predicted decrease of the composite objective along dir (Armijo reference).
        const double predicted = grad.dot(dir) + penalty(z, lambda) - penalty(theta, lambda);

        double step = 1.0;
        double new_obj = obj;
        Vector new_theta = theta, new_eta = eta;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            new_theta = theta + step * dir;
            new_eta = eta + step * deta;
            new_obj = loss.value(new_eta) + penalty(new_theta, lambda);
            if (std::isfinite(new_obj) && new_obj <= obj + 1e-4 * step * std::min(predicted, 0.0)) {
                accepted = true;
                break;
            }
            step *= settings.step_shrink;
        }
        if (!accepted || dir.cwiseAbs().maxCoeff() == 0.0) {
            // No further progress is possible at working precision.
            loss.derivatives(eta, g, h);
            diag.kkt_max_violation = kkt_violation(x.transpose() * g / loss.divisor, theta, lambda);
            diag.converged = diag.kkt_max_violation < kkt_target;
            ++iter;
            break;
        }
        rel_change = std::abs(obj - new_obj) / std::max(std::abs(new_obj), 1e-8);
        theta = new_theta;
        // Recompute eta from scratch to avoid drift from the incremental update.
        eta = x * theta;
        obj = loss.value(eta) + penalty(theta, lambda);
        diag.objective_trace.push_back(obj);
        // Clamped iterates in a row mean the loss is unbounded along the path.
        clamped_run = loss.clamp_count(eta) > 0 ? clamped_run + 1 : 0;
        if (clamped_run >= 3) {
            ++iter;
            break;
        }
    }
    diag.iterations_used = iter;
    diag.final_objective = obj;
    diag.clamp_events = loss.clamp_count(eta);
    if (diag.clamp_events > 0 || !theta.allFinite()) diag.converged = false;
    out.coef = CoefficientVector(theta);
    return out;
}

struct TreatedRows {
    std::vector<std::size_t> rows;
    Matrix x;
};

TreatedRows treated_rows(const ObservedData& data, const Matrix& design, const Vector* weights) {
    TreatedRows tr;
    for (std::size_t i = 0; i < data.n(); ++i) {
        if (!data.treated(i)) continue;
        if (weights && !((*weights)[static_cast<Eigen::Index>(i)] > 0.0)) continue;
        tr.rows.push_back(i);
    }
    tr.x.resize(static_cast<Eigen::Index>(tr.rows.size()), design.cols());
    for (std::size_t k = 0; k < tr.rows.size(); ++k)
        tr.x.row(static_cast<Eigen::Index>(k)) = design.row(static_cast<Eigen::Index>(tr.rows[k]));
    return tr;
}

void check_weights(const ObservedData& data, const Vector& weights, const char* stage) {
    if (weights.size() != static_cast<Eigen::Index>(data.n()))
        throw InputError(std::string(stage) + ": weight vector length differs from sample size");
    double total = 0.0;
    for (std::size_t i = 0; i < data.n(); ++i) {
        const double w = weights[static_cast<Eigen::Index>(i)];
        if (!data.treated(i)) continue;
        if (!(w >= 0.0) || !std::isfinite(w)) throw InputError(std::string(stage) + ": weights must be finite and >= 0");
        total += w;
    }
    if (!(total > 0.0)) throw SolverError(stage, "total treated weight is zero");
}

}  // namespace

FitResult fit_rcal_gamma(const ObservedData& data, double lambda_gamma, const SolverSettings& settings,
                         const WarmStart& warm) {
    if (data.treated_count() == 0) throw SolverError("propensity", "empty treated group");
    SmoothLoss loss{LossKind::Calibration, data.f(), Vector(), data.t(), static_cast<double>(data.n())};
    return minimize_smooth(loss, lambda_gamma, settings, warm, "propensity (calibrated)");
}

FitResult fit_ml_gamma(const ObservedData& data, double lambda_gamma, const SolverSettings& settings,
                       const WarmStart& warm) {
    SmoothLoss loss{LossKind::Logistic, data.f(), Vector::Ones(static_cast<Eigen::Index>(data.n())), data.t(),
                    static_cast<double>(data.n())};
    return minimize_smooth(loss, lambda_gamma, settings, warm, "propensity (likelihood)");
}

FitResult fit_wls_lasso(const ObservedData& data, const Vector& weights, const Vector& response, double lambda_alpha,
                        const SolverSettings& settings, const WarmStart& warm) {
    check_weights(data, weights, "outcome mean");
    if (response.size() != static_cast<Eigen::Index>(data.n()))
        throw InputError("outcome mean: response length differs from sample size");
    TreatedRows tr = treated_rows(data, data.f(), &weights);
    const auto k = static_cast<Eigen::Index>(tr.rows.size());
    Vector c(k), r(k);
    for (Eigen::Index i = 0; i < k; ++i) {
        const auto src = static_cast<Eigen::Index>(tr.rows[static_cast<std::size_t>(i)]);
        c[i] = weights[src];
        r[i] = response[src];
    }
    if (!r.allFinite()) throw InputError("outcome mean: non-finite response");
    SmoothLoss loss{LossKind::Squares, tr.x, c, r, static_cast<double>(data.n())};
    return minimize_smooth(loss, lambda_alpha, settings, warm, "outcome mean (least squares)");
}

FitResult fit_wlogit_lasso(const ObservedData& data, const Vector& weights, double lambda_alpha,
                           const SolverSettings& settings, const WarmStart& warm) {
    for (std::size_t i = 0; i < data.n(); ++i) {
        const double y = data.y()[static_cast<Eigen::Index>(i)];
        if (data.treated(i) && y != 0.0 && y != 1.0)
            throw InputError("outcome mean (logistic): outcomes must be 0 or 1");
    }
    check_weights(data, weights, "outcome mean");
    TreatedRows tr = treated_rows(data, data.f(), &weights);
    const auto k = static_cast<Eigen::Index>(tr.rows.size());
    Vector c(k), r(k);
    for (Eigen::Index i = 0; i < k; ++i) {
        const auto src = static_cast<Eigen::Index>(tr.rows[static_cast<std::size_t>(i)]);
        c[i] = weights[src];
        r[i] = data.y()[src];
    }
    SmoothLoss loss{LossKind::Logistic, tr.x, c, r, static_cast<double>(data.n())};
    return minimize_smooth(loss, lambda_alpha, settings, warm, "outcome mean (logistic)");
}

double weighted_quantile(const ObservedData& data, const Vector& weights, double tau) {
    std::vector<std::pair<double, double>> pts;
    double total = 0.0;
    for (std::size_t i = 0; i < data.n(); ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        if (!data.treated(i) || !(weights[ii] > 0.0)) continue;
        pts.emplace_back(data.y()[ii], weights[ii]);
        total += weights[ii];
    }
    if (pts.empty()) throw SolverError("quantile", "no treated unit with positive weight");
    std::sort(pts.begin(), pts.end());
    double cum = 0.0;
    for (const auto& [y, w] : pts) {
        cum += w;
        if (cum >= tau * total) return y;
    }
    return pts.back().first;
}

namespace {

// Dual LP of the quantile-regression Lasso, rows scaled by n:
//   minimize  -sum_i w_i y_i a_i
//   s.t.      sum_i w_i h_i0 a_i = (1-tau) sum_i w_i h_i0
//             sum_i w_i h_ij a_i - s_j = (1-tau) sum_i w_i h_ij,  s_j in [-n lambda, n lambda]
//             0 <= a_i <= 1.
// The row multipliers y give b = -y, and the reduced cost of a_i is -w_i (y_i - h_i'b).
QuantileFit solve_quantile_dual(const ObservedData& data, const Vector& weights, double tau, double lambda,
                                const SolverSettings& settings, const WarmStart& warm, const LpBasis* warm_basis) {
    settings.validate();
    if (!(tau > 0.0 && tau < 1.0)) throw InputError("quantile regression: tau must lie in (0,1)");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InputError("quantile regression: lambda must be >= 0");
    check_weights(data, weights, "quantile regression");
    const Matrix& hmat = data.h();
    const Eigen::Index d = hmat.cols();
    const double n = static_cast<double>(data.n());
    if (warm && warm->values.size() != d) throw InputError("quantile regression: warm start has wrong dimension");

    TreatedRows tr = treated_rows(data, hmat, &weights);
    const auto k = static_cast<Eigen::Index>(tr.rows.size());
    Vector w(k), y(k);
    for (Eigen::Index i = 0; i < k; ++i) {
        const auto src = static_cast<Eigen::Index>(tr.rows[static_cast<std::size_t>(i)]);
        w[i] = weights[src];
        y[i] = data.y()[src];
    }
    // Slacks are kept at lambda = 0 (with a zero range) so the basis shape does not depend on lambda.
    const Eigen::Index n_slack = d - 1;

    LpProblem lp;
    lp.a = Matrix::Zero(d, k + n_slack);
    lp.a.leftCols(k) = (tr.x.array().colwise() * w.array()).transpose();
    lp.b = (1.0 - tau) * (tr.x.transpose() * w);
    lp.cost = Vector::Zero(k + n_slack);
    lp.cost.head(k) = -w.cwiseProduct(y);
    lp.lower = Vector::Zero(k + n_slack);
    lp.upper = Vector::Ones(k + n_slack);
    for (Eigen::Index j = 0; j < n_slack; ++j) {
        // s'_j = s_j + n lambda in [0, 2 n lambda]
        lp.a(j + 1, k + j) = -1.0;
        lp.b[j + 1] -= n * lambda;
        lp.upper[k + j] = 2.0 * n * lambda;
    }

    LpBasis start;
    const bool reuse = warm_basis && static_cast<Eigen::Index>(warm_basis->basic.size()) == d &&
                       static_cast<Eigen::Index>(warm_basis->at_upper.size()) == k + n_slack;
    if (reuse) {
        start = *warm_basis;
    } else {
        // Intercept-only solution: a_i = 1 above the weighted quantile, 0 below, the
        // quantile row basic, all slacks basic. Its reduced costs w_i (q - y_i) make it
        // dual feasible for every lambda.
        const double q = weighted_quantile(data, weights, tau);
        Eigen::Index pivot = -1;
        start.at_upper.assign(static_cast<std::size_t>(k + n_slack), 0);
        for (Eigen::Index i = 0; i < k; ++i) {
            start.at_upper[static_cast<std::size_t>(i)] = y[i] > q;
            if (y[i] == q && pivot < 0) pivot = i;
        }
        if (pivot < 0) throw SolverError("quantile regression", "weighted quantile is not a sample value");
        start.basic.push_back(pivot);
        for (Eigen::Index j = 0; j < n_slack; ++j) start.basic.push_back(k + j);
    }

    LpOptions opt;
    opt.feasibility_tol = settings.lp_feasibility_tol;
    opt.optimality_tol = settings.lp_feasibility_tol;
    LpSolution sol = solve_lp_from_basis(lp, start, opt);
    if (sol.status != LpStatus::Optimal) {
        std::ostringstream os;
        os << "LP solve ended with status '" << to_string(sol.status) << "' after " << sol.iterations << " iterations";
        throw SolverError("quantile regression", os.str());
    }

    QuantileFit out;
    Vector beta = -sol.row_duals;
    out.coef = CoefficientVector(beta);
    out.dual = Vector::Zero(static_cast<Eigen::Index>(data.n()));
    for (Eigen::Index i = 0; i < k; ++i) out.dual[static_cast<Eigen::Index>(tr.rows[static_cast<std::size_t>(i)])] = sol.x[i];
    out.dual_objective = w.cwiseProduct(sol.x.head(k).array().matrix() - Vector::Constant(k, 1.0 - tau)).dot(y) / n;
    out.primal_objective = wqr_objective(data, weights, tau, beta) + penalty(beta, lambda);

    FitDiagnostics& diag = out.diagnostics;
    diag.iterations_used = sol.iterations;
    diag.final_objective = out.primal_objective;
    diag.kkt_max_violation = std::abs(out.primal_objective - out.dual_objective);
    diag.converged = beta.allFinite() &&
                     diag.kkt_max_violation <= settings.lp_feasibility_tol * std::max(1.0, std::abs(out.primal_objective));
    diag.objective_trace.push_back(out.primal_objective);
    out.basis = std::move(sol.basis);
    return out;
}

}  // namespace

QuantileFit fit_wqr_lasso(const ObservedData& data, const Vector& weights, double tau, double lambda_beta,
                          const SolverSettings& settings, const WarmStart& warm, const LpBasis* warm_basis) {
    return solve_quantile_dual(data, weights, tau, lambda_beta, settings, warm, warm_basis);
}

QuantileFit fit_uqr_lasso(const ObservedData& data, double tau, double lambda_beta, const SolverSettings& settings,
                          const WarmStart& warm, const LpBasis* warm_basis) {
    return solve_quantile_dual(data, Vector::Ones(static_cast<Eigen::Index>(data.n())), tau, lambda_beta, settings,
                               warm, warm_basis);
}

double wqr_lambda_star(const ObservedData& data, const Vector& weights, double tau, const SolverSettings& settings) {
    check_weights(data, weights, "quantile regression");
    const Matrix& hmat = data.h();
    const Eigen::Index d = hmat.cols();
    if (d <= 1) return 0.0;
    const double n = static_cast<double>(data.n());
    const double q = weighted_quantile(data, weights, tau);

    // Intercept-only dual solution: a_i = 1 above q, 0 below; tied rows share the remainder.
    Vector fixed = Vector::Zero(d - 1);
    double total = 0.0, above = 0.0;
    std::vector<Eigen::Index> tied;
    for (std::size_t i = 0; i < data.n(); ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        if (!data.treated(i) || !(weights[ii] > 0.0)) continue;
        const double wi = weights[ii];
        const double yi = data.y()[ii];
        total += wi;
        const double ai = yi > q ? 1.0 : 0.0;
        if (yi > q) above += wi;
        if (yi == q) tied.push_back(ii);
        fixed.noalias() += wi * (ai - (1.0 - tau)) * hmat.row(ii).tail(d - 1).transpose() / n;
    }
    const double remainder = (1.0 - tau) * total - above;  // sum over tied rows of w_i a_i
    if (tied.size() == 1) {
        const Eigen::Index i = tied[0];
        const double ai = std::clamp(remainder / weights[i], 0.0, 1.0);
        return (fixed + weights[i] * ai * hmat.row(i).tail(d - 1).transpose() / n).cwiseAbs().maxCoeff();
    }
    if (tied.empty()) return fixed.cwiseAbs().maxCoeff();

    // Several tied rows: choose their a_i to minimize max_j |g_j| by a small LP in
    // (a_tied, t, u, v) with g_j + u_j = t... written as equalities with slack.
    const auto kt = static_cast<Eigen::Index>(tied.size());
    const Eigen::Index m = d - 1;
    const Eigen::Index cols = kt + 1 + 2 * m;
    LpProblem lp;
    lp.a = Matrix::Zero(1 + 2 * m, cols);
    lp.b = Vector::Zero(1 + 2 * m);
    lp.cost = Vector::Zero(cols);
    lp.lower = Vector::Zero(cols);
    lp.upper = Vector::Constant(cols, std::numeric_limits<double>::infinity());
    lp.cost[kt] = 1.0;
    for (Eigen::Index t = 0; t < kt; ++t) {
        const Eigen::Index i = tied[static_cast<std::size_t>(t)];
        lp.upper[t] = 1.0;
        lp.a(0, t) = weights[i];
        for (Eigen::Index j = 0; j < m; ++j) {
            const double coef = weights[i] * hmat(i, j + 1) / n;
            lp.a(1 + j, t) = coef;
            lp.a(1 + m + j, t) = -coef;
        }
    }
    lp.b[0] = remainder;
    for (Eigen::Index j = 0; j < m; ++j) {
        lp.a(1 + j, kt) = -1.0;
        lp.a(1 + j, kt + 1 + j) = 1.0;
        lp.b[1 + j] = -fixed[j];
        lp.a(1 + m + j, kt) = -1.0;
        lp.a(1 + m + j, kt + 1 + m + j) = 1.0;
        lp.b[1 + m + j] = fixed[j];
    }
    LpOptions opt;
    opt.feasibility_tol = settings.lp_feasibility_tol;
    opt.optimality_tol = settings.lp_feasibility_tol;
    LpSolution sol = solve_lp(lp, opt);
    if (sol.status != LpStatus::Optimal) throw SolverError("quantile regression", "lambda* LP failed");
    return std::max(sol.x[kt], 0.0);
}

double logistic_outcome_weight(double quantile_fit, const SensitivityLevel& s, bool plus_side) {
    const double c = std::clamp(quantile_fit, 0.0, 1.0);
    return plus_side ? s.lambda() - s.span() * c : s.inverse() + s.span() * c;
}

double rcal_objective(const ObservedData& data, const Vector& gamma) {
    SmoothLoss loss{LossKind::Calibration, data.f(), Vector(), data.t(), static_cast<double>(data.n())};
    return loss.value(data.f() * gamma);
}

double ml_objective(const ObservedData& data, const Vector& gamma) {
    SmoothLoss loss{LossKind::Logistic, data.f(), Vector::Ones(static_cast<Eigen::Index>(data.n())), data.t(),
                    static_cast<double>(data.n())};
    return loss.value(data.f() * gamma);
}

double wls_objective(const ObservedData& data, const Vector& weights, const Vector& response, const Vector& alpha) {
    const Vector fit = data.f() * alpha;
    double s = 0.0;
    for (std::size_t i = 0; i < data.n(); ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        if (!data.treated(i)) continue;
        const double r = response[ii] - fit[ii];
        s += 0.5 * weights[ii] * r * r;
    }
    return s / static_cast<double>(data.n());
}

double wlogit_objective(const ObservedData& data, const Vector& weights, const Vector& alpha) {
    const Vector fit = data.f() * alpha;
    double s = 0.0;
    for (std::size_t i = 0; i < data.n(); ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        if (!data.treated(i)) continue;
        s += weights[ii] * (softplus(fit[ii]) - data.y()[ii] * fit[ii]);
    }
    return s / static_cast<double>(data.n());
}

double wqr_objective(const ObservedData& data, const Vector& weights, double tau, const Vector& beta) {
    const Vector fit = data.h() * beta;
    double s = 0.0;
    for (std::size_t i = 0; i < data.n(); ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        if (!data.treated(i)) continue;
        s += weights[ii] * check_loss(data.y()[ii], fit[ii], tau);
    }
    return s / static_cast<double>(data.n());
}

}  // namespace calsens
