#include "calsens/certify.hpp"

#include "calsens/bounds.hpp"
#include "calsens/lp_oracle.hpp"
#include "calsens/random.hpp"
#include "calsens/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace calsens {

namespace {

void record(CheckResult& r, double violation, double tol, const std::string& label = {}) {
    ++r.cases;
    r.worst = std::max(r.worst, violation);
    if (!(violation <= tol)) {
        if (r.failures < 3 && !label.empty()) r.failed_labels.push_back(label);
        ++r.failures;
        r.passed = false;
    }
}

void finish(CheckResult& r, const std::string& unit) {
    std::ostringstream os;
    os << r.cases << " cases, " << r.failures << " failures, worst " << r.worst << unit;
    for (const std::string& l : r.failed_labels) os << "; " << l;
    r.detail = os.str();
}

std::string label_of(DgpConfig c, double lam, const char* what) {
    std::ostringstream os;
    os << to_string(c) << " Lambda=" << lam << " " << what;
    return os.str();
}

// Random bound problem with positive weights and a correlated outcome.
PrimalBoundProblem random_problem(Rng& rng, int n_max, int m_max) {
    const int m = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(m_max)));
    const int n_min = std::min(n_max, std::max(12, 4 * (m + 1)));
    const int n = n_min + static_cast<int>(rng.below(static_cast<std::uint64_t>(n_max - n_min + 1)));
    PrimalBoundProblem pb;
    pb.h = Matrix::Ones(n, m + 1);
    pb.y.resize(n);
    pb.t.resize(n);
    pb.weights.resize(n);
    int treated = 0;
    do {
        treated = 0;
        for (int i = 0; i < n; ++i) {
            for (int j = 1; j <= m; ++j) pb.h(i, j) = rng.normal();
            const double lin = 0.3 + 0.6 * pb.h(i, 1);
            pb.weights[i] = std::exp(-lin);
            pb.t[i] = rng.uniform() < 1.0 / (1.0 + std::exp(-lin)) ? 1.0 : 0.0;
            pb.y[i] = pb.h.row(i).tail(m).sum() * 0.5 + rng.normal();
            treated += pb.t[i] > 0.5 ? 1 : 0;
        }
    } while (treated < m + 3);
    return pb;
}

struct PairedDiff {
    double mean;
    double se;
};

PairedDiff paired(const Vector& a, const Vector& b) {
    const Vector d = a - b;
    const double n = static_cast<double>(d.size());
    const double mean = d.mean();
    const double var = (d.array() - mean).square().sum() / (n - 1.0);
    return {mean, std::sqrt(var / n)};
}

// Violation of "a >= b" in standard errors. Differences at rounding level
// (ties, e.g. a linear q* in C1) count as 0.
double shortfall(const PairedDiff& d) {
    if (d.mean >= -1e-12) return 0.0;
    if (d.se == 0.0) return std::numeric_limits<double>::infinity();
    return -d.mean / d.se;
}

}  // namespace

CheckResult check_duality(const VerifyOptions& opt) {
    CheckResult r;
    r.name = "duality";
    r.tolerance = 1e-6;
    if (opt.n_max < 12 || opt.m_max < 1) throw InputError("duality check needs n_max >= 12 and m_max >= 1");
    const double lambdas[] = {1.2, 1.5, 2.0};
    const double penalties[] = {0.0, 0.05, 0.2};
    Rng rng(derive_seed(opt.seed, 101));
    for (int k = 0; k < opt.instances; ++k) {
        PrimalBoundProblem pb = random_problem(rng, opt.n_max, opt.m_max);
        pb.lambda = lambdas[k % 3];
        const SensitivityLevel s(pb.lambda);
        pb.relax_slack = s.span() * penalties[(k / 3) % 3];
        pb.maximize = (k / 9) % 2 == 0;
        const double primal = solve_primal_bound(pb).value;
        PrimalBoundProblem dual_side = pb;
        if (opt.weight_fault != 0.0)
            for (Eigen::Index i = 0; i < dual_side.weights.size(); ++i)
                dual_side.weights[i] *= 1.0 + opt.weight_fault * (rng.uniform() - 0.5);
        const double dual = dual_bound_value(dual_side);
        record(r, std::abs(primal - dual), r.tolerance);
    }
    finish(r, " absolute gap");
    return r;
}

CheckResult check_kkt(const VerifyOptions& opt) {
    CheckResult r;
    r.name = "kkt";
    r.tolerance = 0.0;  // each identity carries its own tolerance; violations are reported in excess of it
    for (int k = 0; k < opt.kkt_fits; ++k) {
        DgpSpec dgp;
        dgp.config = DgpConfig::C1;
        dgp.n = 200;
        dgp.p = 20;
        dgp.seed = derive_seed(opt.seed, 200 + static_cast<std::uint64_t>(k));
        const ObservedData data = generate(dgp);
        TuningGrid grid;
        grid.fold_seed = derive_seed(dgp.seed, 1);
        const FittedNuisance fit = fit_rcal(data, SensitivityLevel(1.5), grid, {});
        const double lam = fit.gamma.lambda;
        const PropensityValues pv = evaluate_propensity(data.f(), fit.gamma.coef.values);
        const double n = static_cast<double>(data.n());
        double norm = 0.0;
        for (Eigen::Index i = 0; i < data.t().size(); ++i) norm += data.t()[i] / pv.pi[i];
        record(r, std::max(0.0, std::abs(norm / n - 1.0) - 1e-6), 0.0);
        double box = 0.0;
        for (Eigen::Index j = 1; j < data.f().cols(); ++j) {
            double g = 0.0;
            for (Eigen::Index i = 0; i < data.t().size(); ++i)
                g += (data.t()[i] / pv.pi[i] - 1.0) * data.f()(i, j);
            box = std::max(box, std::abs(g / n) - lam - 1e-6);
        }
        record(r, std::max(0.0, box), 0.0);
        for (bool plus : {true, false}) {
            const Vector eta = fitted_transformed_mean(data, fit, plus);
            double imp = 0.0;
            for (Eigen::Index i = 0; i < eta.size(); ++i)
                imp += data.t()[i] * data.y()[i] + (1.0 - data.t()[i]) * eta[i];
            const double gap = std::abs(point_bound(data, fit, plus ? Side::Upper : Side::Lower) - imp / n);
            record(r, std::max(0.0, gap - 1e-8), 0.0);
        }
    }
    finish(r, " beyond tolerance");
    return r;
}

CheckResult check_lambda_one(const VerifyOptions& opt) {
    CheckResult r;
    r.name = "lambda-one";
    r.tolerance = 1e-12;
    const int samples = std::max(1, opt.kkt_fits / 5);
    for (int k = 0; k < samples; ++k) {
        DgpSpec dgp;
        dgp.config = k % 2 == 0 ? DgpConfig::C1 : DgpConfig::C2;
        dgp.n = 200;
        dgp.p = 10;
        dgp.seed = derive_seed(opt.seed, 300 + static_cast<std::uint64_t>(k));
        const ObservedData data = generate(dgp);
        TuningGrid grid;
        grid.fold_seed = derive_seed(dgp.seed, 1);
        for (Method m : {Method::RCAL, Method::RML}) {
            const SensitivityLevel one(1.0);
            const FittedNuisance fit = m == Method::RCAL ? fit_rcal(data, one, grid, {}) : fit_rml(data, one, grid, {});
            const double up = point_bound(data, fit, Side::Upper);
            const double lo = point_bound(data, fit, Side::Lower);
            record(r, std::abs(up - lo), r.tolerance);
            // Textbook augmented IPW with the fitted propensity and mean.
            double aipw = 0.0;
            for (Eigen::Index i = 0; i < data.y().size(); ++i) {
                const double pi = 1.0 / (1.0 + std::exp(-data.f().row(i).dot(fit.gamma.coef.values)));
                const double mu = data.f().row(i).dot(fit.plus.alpha.coef.values);
                aipw += data.t()[i] * data.y()[i] / pi - (data.t()[i] / pi - 1.0) * mu;
            }
            aipw /= static_cast<double>(data.n());
            record(r, std::abs(up - aipw) / std::max(1.0, std::abs(aipw)), r.tolerance);
        }
    }
    finish(r, " absolute difference");
    return r;
}

CheckResult check_population_orderings(const VerifyOptions& opt) {
    CheckResult r;
    r.name = "population-orderings";
    r.tolerance = 4.0;
    const long fit_draws = std::min<long>(opt.population_n_mc, 100000);
    for (DgpConfig config : {DgpConfig::C1, DgpConfig::C2}) {
        DgpSpec dgp;
        dgp.config = config;
        dgp.p = 4;
        const Matrix x = population_covariates(dgp.p, opt.population_n_mc, derive_seed(opt.seed, 400), opt.threads);
        const Matrix xfit = population_covariates(dgp.p, fit_draws, derive_seed(opt.seed, 401), opt.threads);
        Vector mstar(x.rows());
        for (Eigen::Index i = 0; i < x.rows(); ++i) mstar[i] = true_mean(config, x.row(i));

        // Lambda = 1 collapses every bound to E m*.
        {
            const Vector v = population_integrand(config, x, SensitivityLevel(1.0), QuantileSpec::sharp(), true);
            const PairedDiff d{v.mean() - expected_true_mean(config),
                               std::sqrt((v.array() - v.mean()).square().sum() /
                                         static_cast<double>(v.size() - 1) / static_cast<double>(v.size()))};
            record(r, d.se > 0.0 ? std::abs(d.mean) / d.se : 0.0, r.tolerance, label_of(config, 1.0, "equals E m*"));
        }

        Vector prev_up, prev_lo;
        for (double lam : {1.0, 1.25, 1.5, 2.0, 3.0}) {
            const SensitivityLevel s(lam);
            const Vector up = population_integrand(config, x, s, QuantileSpec::sharp(), true);
            const Vector lo = population_integrand(config, x, s, QuantileSpec::sharp(), false);
            record(r, shortfall(paired(up, mstar)), r.tolerance, label_of(config, lam, "upper >= E m*"));
            record(r, shortfall(paired(mstar, lo)), r.tolerance, label_of(config, lam, "E m* >= lower"));
            if (prev_up.size() > 0) {
                record(r, shortfall(paired(up, prev_up)), r.tolerance, label_of(config, lam, "upper grows"));
                record(r, shortfall(paired(prev_lo, lo)), r.tolerance, label_of(config, lam, "lower falls"));
            }
            prev_up = up;
            prev_lo = lo;
            if (lam == 1.0) continue;

            for (bool upper : {true, false}) {
                const Vector sharp = upper ? up : lo;
                const Vector bw =
                    population_quantile_coefficients(config, xfit, s, PopulationWeighting::Weighted, upper);
                const Vector bu =
                    population_quantile_coefficients(config, xfit, s, PopulationWeighting::Unweighted, upper);
                Vector flat = Vector::Zero(dgp.p + 1);
                flat[0] = normal_quantile(upper ? s.tau() : 1.0 - s.tau());
                const Vector vw = population_integrand(config, x, s, QuantileSpec::linear(bw), upper);
                const Vector vu = population_integrand(config, x, s, QuantileSpec::linear(bu), upper);
                const Vector vf = population_integrand(config, x, s, QuantileSpec::linear(flat), upper);
                // Upper: mu(U) >= mu(W) >= mu(q*), mu(any linear) >= mu(q*). Lower mirrors.
                if (upper) {
                    record(r, shortfall(paired(vu, vw)), r.tolerance, label_of(config, lam, "upper U >= W"));
                    record(r, shortfall(paired(vw, sharp)), r.tolerance, label_of(config, lam, "upper W >= sharp"));
                    record(r, shortfall(paired(vf, sharp)), r.tolerance, label_of(config, lam, "upper flat >= sharp"));
                } else {
                    record(r, shortfall(paired(vw, vu)), r.tolerance, label_of(config, lam, "lower W >= U"));
                    record(r, shortfall(paired(sharp, vw)), r.tolerance, label_of(config, lam, "lower sharp >= W"));
                    record(r, shortfall(paired(sharp, vf)), r.tolerance, label_of(config, lam, "lower sharp >= flat"));
                }
            }
        }
    }
    finish(r, " SE");
    return r;
}

CheckResult check_relaxation_monotone(const VerifyOptions& opt) {
    CheckResult r;
    r.name = "relaxation-monotone";
    r.tolerance = 1e-9;
    const double grid[] = {0.0, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5};
    for (int k = 0; k < opt.monotone_samples; ++k) {
        DgpSpec dgp;
        dgp.config = k % 2 == 0 ? DgpConfig::C1 : DgpConfig::C2;
        dgp.n = 150;
        dgp.p = 10;
        dgp.seed = derive_seed(opt.seed, 500 + static_cast<std::uint64_t>(k));
        const ObservedData data = generate(dgp);
        const FitResult gamma = fit_rcal_gamma(data, 0.05, {});
        const double lam = k % 3 == 0 ? 1.5 : 2.0;
        const SensitivityLevel s(lam);
        double prev = -std::numeric_limits<double>::infinity();
        for (double lb : grid) {
            const PrimalBoundProblem pb = make_primal_problem(data, gamma.coef.values, lam, s.span() * lb, true);
            const double v = solve_primal_bound(pb).value;
            record(r, std::max(0.0, prev - v), r.tolerance);
            prev = v;
        }
    }
    finish(r, " decrease");
    return r;
}

std::vector<CheckResult> run_verification(const VerifyOptions& opt) {
    return {check_duality(opt), check_kkt(opt), check_lambda_one(opt), check_population_orderings(opt),
            check_relaxation_monotone(opt)};
}

AnalysisConfig golden_analysis_config(const std::string& data_path) {
    AnalysisConfig c;
    c.data_path = data_path;
    c.outcome = "y";
    c.treatment = "t";
    c.lambdas = {1.0, 1.5, 2.0};
    c.method = "rcal";
    c.seed = 2;
    return c;
}

nlohmann::json golden_oracle_report(int threads) {
    DgpSpec dgp;
    dgp.config = DgpConfig::C1;
    dgp.p = 10;
    const SensitivityLevel s(1.5);
    const OracleEstimate up =
        population_bound_oracle(dgp, s, QuantileSpec::sharp(), kGoldenOracleDraws, kGoldenOracleSeed, true, threads);
    const OracleEstimate lo =
        population_bound_oracle(dgp, s, QuantileSpec::sharp(), kGoldenOracleDraws, kGoldenOracleSeed, false, threads);
    return nlohmann::json{{"schema", "calsens.oracle/v1"},
                          {"config", "C1"},
                          {"p", dgp.p},
                          {"lambda", 1.5},
                          {"n_mc", kGoldenOracleDraws},
                          {"seed", kGoldenOracleSeed},
                          {"upper", up.value},
                          {"upper_se", up.se},
                          {"lower", lo.value},
                          {"lower_se", lo.se}};
}

}  // namespace calsens
