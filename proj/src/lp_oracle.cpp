#include "calsens/lp_oracle.hpp"

#include "calsens/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>
#include <vector>

namespace calsens {

PrimalBoundProblem make_primal_problem(const ObservedData& data, const Vector& gamma, double lambda,
                                       double relax_slack, bool maximize) {
    PrimalBoundProblem pb;
    pb.weights = evaluate_propensity(data.f(), gamma).inverse_weight;
    pb.y = data.y();
    pb.t = data.t();
    pb.h = data.h();
    pb.lambda = lambda;
    pb.relax_slack = relax_slack;
    pb.maximize = maximize;
    return pb;
}

PrimalBoundResult solve_primal_bound(const PrimalBoundProblem& pb, const LpOptions& options) {
    const Eigen::Index n = pb.y.size();
    if (pb.t.size() != n || pb.weights.size() != n || pb.h.rows() != n || pb.h.cols() < 1)
        throw InputError("primal bound problem: inconsistent dimensions");
    if (!(pb.lambda >= 1.0)) throw InputError("primal bound problem: Lambda must be >= 1");
    if (!(pb.relax_slack >= 0.0)) throw InputError("primal bound problem: relax_slack must be >= 0");

    std::vector<Eigen::Index> treated;
    for (Eigen::Index i = 0; i < n; ++i)
        if (pb.t[i] > 0.5) treated.push_back(i);
    const Eigen::Index nt = static_cast<Eigen::Index>(treated.size());
    if (nt == 0) throw InputError("primal bound problem: no treated units");
    const Eigen::Index m = pb.h.cols() - 1;
    const bool relaxed = pb.relax_slack > 0.0;
    const double dn = static_cast<double>(n);

    // Row moments c_j = (1/n) sum T w h_j.
    Vector c = Vector::Zero(m + 1);
    for (Eigen::Index k = 0; k < nt; ++k) c += pb.weights[treated[k]] * pb.h.row(treated[k]).transpose() / dn;

    const Eigen::Index rows = relaxed ? 1 + 2 * m : 1 + m;
    const Eigen::Index cols = relaxed ? nt + 2 * m : nt;
    LpProblem lp;
    lp.a = Matrix::Zero(rows, cols);
    lp.b = Vector::Zero(rows);
    lp.cost = Vector::Zero(cols);
    lp.lower = Vector::Zero(cols);
    lp.upper = Vector::Constant(cols, std::numeric_limits<double>::infinity());

    const double sign = pb.maximize ? -1.0 : 1.0;
    for (Eigen::Index k = 0; k < nt; ++k) {
        const Eigen::Index i = treated[k];
        const double w = pb.weights[i];
        lp.lower[k] = 1.0 / pb.lambda;
        lp.upper[k] = pb.lambda;
        lp.cost[k] = sign * w * pb.y[i] / dn;
        lp.a(0, k) = w / dn;
        for (Eigen::Index j = 1; j <= m; ++j) {
            const double v = w * pb.h(i, j) / dn;
            if (relaxed) {
                lp.a(2 * j - 1, k) = v;
                lp.a(2 * j, k) = v;
            } else {
                lp.a(j, k) = v;
            }
        }
    }
    lp.b[0] = c[0];
    for (Eigen::Index j = 1; j <= m; ++j) {
        if (relaxed) {
            // moment + u_j = c_j + slack,  moment - v_j = c_j - slack
            lp.b[2 * j - 1] = c[j] + pb.relax_slack;
            lp.b[2 * j] = c[j] - pb.relax_slack;
            lp.a(2 * j - 1, nt + 2 * (j - 1)) = 1.0;
            lp.a(2 * j, nt + 2 * (j - 1) + 1) = -1.0;
        } else {
            lp.b[j] = c[j];
        }
    }

    const LpSolution sol = solve_lp(lp, options);
    if (sol.status != LpStatus::Optimal)
        throw SolverError("lp_oracle", std::string("primal bound LP ended with status ") + to_string(sol.status));

    PrimalBoundResult r;
    r.status = sol.status;
    r.iterations = sol.iterations;
    r.multipliers = sol.row_duals;
    r.lambda1 = Vector::Constant(n, std::numeric_limits<double>::quiet_NaN());
    double value = 0.0;
    for (Eigen::Index k = 0; k < nt; ++k) {
        const Eigen::Index i = treated[k];
        r.lambda1[i] = sol.x[k];
        value += pb.y[i] * (1.0 + pb.weights[i] * sol.x[k]);
    }
    r.value = value / dn;
    return r;
}

double dual_bound_formula(const PrimalBoundProblem& pb, const Vector& beta, double lambda_beta) {
    const SensitivityLevel s(pb.lambda);
    const double tau = pb.maximize ? s.tau() : 1.0 - s.tau();
    const Vector q = pb.h * beta;
    double ipw = 0.0, loss = 0.0;
    for (Eigen::Index i = 0; i < pb.y.size(); ++i) {
        if (pb.t[i] <= 0.5) continue;
        ipw += pb.y[i] * (1.0 + pb.weights[i]);
        loss += pb.weights[i] * check_loss(pb.y[i], q[i], tau);
    }
    const double dn = static_cast<double>(pb.y.size());
    const double l1 = beta.tail(beta.size() - 1).lpNorm<1>();
    const double adjust = s.span() * (loss / dn + lambda_beta * l1);
    return ipw / dn + (pb.maximize ? adjust : -adjust);
}

double dual_bound_value(const PrimalBoundProblem& pb, const SolverSettings& settings) {
    const SensitivityLevel s(pb.lambda);
    const double lambda_beta = s.span() > 0.0 ? pb.relax_slack / s.span() : 0.0;
    const double tau = pb.maximize ? s.tau() : 1.0 - s.tau();
    const ObservedData data(pb.y, pb.t, pb.h, pb.h);
    const QuantileFit fit = fit_wqr_lasso(data, pb.weights, tau, lambda_beta, settings);
    return dual_bound_formula(pb, fit.coef.values, lambda_beta);
}

double expected_check_loss_normal(double u, double tau) {
    const double pdf = normal_pdf(u);
    const double cdf = normal_cdf(u);
    return tau * (pdf - u * (1.0 - cdf)) + (1.0 - tau) * (pdf + u * cdf);
}

namespace {
constexpr long kBatch = 4096;
}

Matrix population_covariates(int p, long n_mc, std::uint64_t seed, int threads) {
    if (p < 1 || n_mc < 1) throw InputError("population draws need p >= 1 and n_mc >= 1");
    Matrix x(n_mc, p);
    const long n_batches = (n_mc + kBatch - 1) / kBatch;
    auto work = [&](long first, long stride) {
        for (long b = first; b < n_batches; b += stride) {
            Rng rng(derive_seed(seed, static_cast<std::uint64_t>(b)));
            const long end = std::min(n_mc, (b + 1) * kBatch);
            for (long i = b * kBatch; i < end; ++i) draw_covariates(rng, x.row(i));
        }
    };
    threads = std::max(1, threads);
    if (threads == 1) {
        work(0, 1);
    } else {
        std::vector<std::thread> pool;
        for (int k = 0; k < threads; ++k) pool.emplace_back(work, k, threads);
        for (auto& th : pool) th.join();
    }
    return x;
}

namespace {

double quantile_at(const QuantileSpec& q, const Eigen::Ref<const Eigen::RowVectorXd>& x, double m, double z) {
    if (q.choice == QuantileChoice::Sharp) return m + z;
    return q.beta[0] + x.dot(q.beta.tail(q.beta.size() - 1));
}

}  // namespace

Vector population_integrand(DgpConfig config, const Matrix& x, const SensitivityLevel& s, const QuantileSpec& q,
                            bool upper) {
    if (q.choice == QuantileChoice::Linear && q.beta.size() != x.cols() + 1)
        throw InputError("linear quantile coefficients must have length p + 1");
    const double tau = upper ? s.tau() : 1.0 - s.tau();
    const double z = normal_quantile(tau);
    Vector out(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double m = true_mean(config, x.row(i));
        const double pi = true_propensity(config, x.row(i));
        const double u = quantile_at(q, x.row(i), m, z) - m;
        const double adj = s.span() * (1.0 - pi) * expected_check_loss_normal(u, tau);
        out[i] = upper ? m + adj : m - adj;
    }
    return out;
}

OracleEstimate population_bound_oracle(const DgpSpec& dgp, const SensitivityLevel& s, const QuantileSpec& q,
                                       long n_mc, std::uint64_t seed, bool upper, int threads) {
    dgp.validate();
    if (n_mc < 2) throw InputError("population oracle needs n_mc >= 2");
    // Per-batch mean and centered sum of squares, merged in batch order so the
    // result does not depend on the thread count.
    const long n_batches = (n_mc + kBatch - 1) / kBatch;
    std::vector<double> means(static_cast<std::size_t>(n_batches)), m2(static_cast<std::size_t>(n_batches));
    auto work = [&](long first, long stride) {
        Matrix x;
        for (long b = first; b < n_batches; b += stride) {
            Rng rng(derive_seed(seed, static_cast<std::uint64_t>(b)));
            const long rows = std::min(n_mc, (b + 1) * kBatch) - b * kBatch;
            x.resize(rows, dgp.p);
            for (long i = 0; i < rows; ++i) draw_covariates(rng, x.row(i));
            const Vector v = population_integrand(dgp.config, x, s, q, upper);
            const double mean = v.mean();
            means[static_cast<std::size_t>(b)] = mean;
            m2[static_cast<std::size_t>(b)] = (v.array() - mean).square().sum();
        }
    };
    threads = std::max(1, threads);
    if (threads == 1) {
        work(0, 1);
    } else {
        std::vector<std::thread> pool;
        for (int k = 0; k < threads; ++k) pool.emplace_back(work, k, threads);
        for (auto& th : pool) th.join();
    }
    double count = 0.0, mean = 0.0, ss = 0.0;
    for (long b = 0; b < n_batches; ++b) {
        const double nb = static_cast<double>(std::min(n_mc, (b + 1) * kBatch) - b * kBatch);
        const double delta = means[static_cast<std::size_t>(b)] - mean;
        const double total = count + nb;
        mean += delta * nb / total;
        ss += m2[static_cast<std::size_t>(b)] + delta * delta * count * nb / total;
        count = total;
    }
    OracleEstimate e;
    e.n_mc = n_mc;
    e.value = mean;
    e.se = std::sqrt(ss / (count - 1.0) / count);
    e.low_sample_warning = n_mc < 10000;
    return e;
}

Vector population_quantile_coefficients(DgpConfig config, const Matrix& x, const SensitivityLevel& s,
                                        PopulationWeighting weighting, bool upper) {
    const Eigen::Index n = x.rows(), d = x.cols() + 1;
    const double tau = upper ? s.tau() : 1.0 - s.tau();
    Vector m(n), c(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        m[i] = true_mean(config, x.row(i));
        const double pi = true_propensity(config, x.row(i));
        c[i] = weighting == PopulationWeighting::Weighted ? 1.0 - pi : pi;
    }
    auto risk = [&](const Vector& beta) {
        double r = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double u = beta[0] + x.row(i).dot(beta.tail(d - 1)) - m[i];
            r += c[i] * expected_check_loss_normal(u, tau);
        }
        return r / static_cast<double>(n);
    };
    Vector beta = Vector::Zero(d);
    beta[0] = normal_quantile(tau);
    double current = risk(beta);
    for (int it = 0; it < 100; ++it) {
        Vector grad = Vector::Zero(d);
        Matrix hess = Matrix::Zero(d, d);
        Eigen::RowVectorXd hrow(d);
        for (Eigen::Index i = 0; i < n; ++i) {
            hrow[0] = 1.0;
            hrow.tail(d - 1) = x.row(i);
            const double u = hrow.dot(beta) - m[i];
            grad += c[i] * (normal_cdf(u) - tau) * hrow.transpose();
            hess.selfadjointView<Eigen::Lower>().rankUpdate(hrow.transpose(), c[i] * normal_pdf(u));
        }
        grad /= static_cast<double>(n);
        hess /= static_cast<double>(n);
        const Vector step = hess.selfadjointView<Eigen::Lower>().ldlt().solve(grad);
        double t = 1.0;
        Vector next = beta - step;
        double value = risk(next);
        while (value > current && t > 1e-8) {
            t *= 0.5;
            next = beta - t * step;
            value = risk(next);
        }
        const bool done = grad.lpNorm<Eigen::Infinity>() < 1e-12 || std::abs(current - value) <= 1e-15 * std::max(1.0, current);
        beta = next;
        current = value;
        if (done) break;
    }
    return beta;
}

}  // namespace calsens
