#include "calsens/simulation.hpp"

#include "calsens/lp_oracle.hpp"
#include "calsens/random.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <mutex>
#include <ostream>
#include <thread>

namespace calsens {

const char* to_string(SimMethod m) {
    switch (m) {
        case SimMethod::RCAL: return "rcal";
        case SimMethod::RCALRelaxed: return "rcal-relaxed";
        case SimMethod::RML: return "rml";
        case SimMethod::CAL: return "cal";
        case SimMethod::ML: return "ml";
    }
    return "?";
}

SimMethod parse_sim_method(const std::string& s) {
    if (s == "rcal") return SimMethod::RCAL;
    if (s == "rcal-relaxed") return SimMethod::RCALRelaxed;
    if (s == "rml") return SimMethod::RML;
    if (s == "cal") return SimMethod::CAL;
    if (s == "ml") return SimMethod::ML;
    throw InputError("unknown method '" + s + "' (expected rcal, rcal-relaxed, rml, cal or ml)");
}

namespace {
constexpr double kCoef[4] = {1.0, 0.5, 0.25, 0.125};

// Variance of sum_j b_j X_j under cov(X_j, X_k) = 2^{-|j-k|}.
double index_variance() {
    double v = 0.0;
    for (int j = 0; j < 4; ++j)
        for (int k = 0; k < 4; ++k) v += kCoef[j] * kCoef[k] * std::ldexp(1.0, -std::abs(j - k));
    return v;
}
}  // namespace

double expected_untreated_share(DgpConfig config) {
    if (config == DgpConfig::C3) throw InputError("expected_untreated_share: C3 has no one-dimensional reduction");
    const double sd = std::sqrt(index_variance());
    auto f = [sd](double z) { return normal_pdf(z) / (1.0 + std::exp(1.0 + sd * z)); };
    const double inf = std::numeric_limits<double>::infinity();
    return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, -inf, inf, 15, 1e-14);
}

double expected_true_mean(DgpConfig config) {
    if (config != DgpConfig::C2) return 0.0;
    // E{(X + 1)_+^2} = 2 Phi(1) + phi(1) for X ~ N(0,1)
    const double e = 2.0 * normal_cdf(1.0) + normal_pdf(1.0);
    return (kCoef[0] + kCoef[1] + kCoef[2] + kCoef[3]) * e;
}

SharpBounds true_sharp_bounds(const DgpSpec& dgp, const SensitivityLevel& s, long n_mc, std::uint64_t seed) {
    SharpBounds b;
    b.lambda = s.lambda();
    double share = 0.0, share_se = 0.0;
    if (dgp.config == DgpConfig::C3) {
        const Matrix x = population_covariates(4, n_mc, seed);
        Vector v(x.rows());
        for (Eigen::Index i = 0; i < x.rows(); ++i) v[i] = 1.0 - true_propensity(dgp.config, x.row(i));
        share = v.mean();
        share_se = std::sqrt((v.array() - share).square().sum() / static_cast<double>(n_mc - 1) /
                             static_cast<double>(n_mc));
    } else {
        share = expected_untreated_share(dgp.config);
    }
    const double k = s.span() * normal_pdf(normal_quantile(s.tau()));
    const double m = expected_true_mean(dgp.config);
    b.lower = m - k * share;
    b.upper = m + k * share;
    b.se = k * share_se;
    return b;
}

std::uint64_t replicate_seed(std::uint64_t base_seed, int r) {
    return derive_seed(base_seed, static_cast<std::uint64_t>(r));
}

const CoverageRow& ReplicationReport::row(SimMethod m, double lambda, Side side) const {
    for (const CoverageRow& r : coverage)
        if (r.method == m && r.lambda == lambda && r.side == side) return r;
    throw InputError("no coverage row for the requested method, Lambda and side");
}

namespace {

struct Group {
    Method method;
    bool penalized;
    std::vector<SimMethod> members;
};

std::vector<Group> method_groups(const std::vector<SimMethod>& methods) {
    std::vector<Group> groups;
    auto add = [&](Method m, bool pen, SimMethod sm) {
        for (Group& g : groups)
            if (g.method == m && g.penalized == pen) {
                g.members.push_back(sm);
                return;
            }
        groups.push_back({m, pen, {sm}});
    };
    for (SimMethod sm : methods) {
        switch (sm) {
            case SimMethod::RCAL:
            case SimMethod::RCALRelaxed: add(Method::RCAL, true, sm); break;
            case SimMethod::CAL: add(Method::RCAL, false, sm); break;
            case SimMethod::RML: add(Method::RML, true, sm); break;
            case SimMethod::ML: add(Method::RML, false, sm); break;
        }
    }
    return groups;
}

void fill_bounds(ReplicateRecord& rec, const ObservedData& data, const FittedNuisance& fit, const SharpBounds& truth,
                 const ReplicationConfig& cfg) {
    const bool relaxed = rec.method == SimMethod::RCALRelaxed;
    const double dn = static_cast<double>(data.n());
    const BoundReport lo = variance_and_ci(data, fit, Side::Lower, cfg.one_sided_confidence, relaxed);
    const BoundReport up = variance_and_ci(data, fit, Side::Upper, cfg.one_sided_confidence, relaxed);
    const BoundReport two = variance_and_ci(data, fit, Side::TwoSided, cfg.two_sided_confidence, relaxed);
    rec.point_lower = lo.point_lower;
    rec.point_upper = up.point_upper;
    rec.se_lower = std::sqrt(lo.variance_lower / dn);
    rec.se_upper = std::sqrt(up.variance_upper / dn);
    rec.ci_lower = lo.ci.lower;
    rec.ci_upper = up.ci.upper;
    rec.ci_two_lower = two.ci.lower;
    rec.ci_two_upper = two.ci.upper;
    rec.cover_lower = rec.ci_lower <= truth.lower;
    rec.cover_upper = rec.ci_upper >= truth.upper;
    rec.cover_two = rec.ci_two_lower <= truth.lower && rec.ci_two_upper >= truth.upper;
}

std::vector<ReplicateRecord> run_one(const ReplicationConfig& cfg, const std::vector<SharpBounds>& truths, int r) {
    const std::uint64_t seed = replicate_seed(cfg.base_seed, r);
    DgpSpec d = cfg.dgp;
    d.seed = seed;
    const ObservedData data = generate(d);

    // (method, lambda index) -> record
    std::map<std::pair<int, std::size_t>, ReplicateRecord> cells;
    auto blank = [&](SimMethod m, std::size_t k) {
        ReplicateRecord rec;
        rec.replicate = r;
        rec.seed = seed;
        rec.method = m;
        rec.lambda = cfg.lambdas[k];
        return rec;
    };
    auto fail = [&](const Group& g, std::size_t k_from, const std::string& what) {
        for (std::size_t k = k_from; k < cfg.lambdas.size(); ++k)
            for (SimMethod m : g.members) {
                ReplicateRecord rec = blank(m, k);
                rec.failed = true;
                rec.error = what;
                cells[{static_cast<int>(m), k}] = rec;
            }
    };

    for (const Group& g : method_groups(cfg.methods)) {
        TuningGrid grid = cfg.grid;
        grid.fold_seed = derive_seed(seed, 0x9e3779b9ULL);
        if (!g.penalized) grid.fixed_lambda = 0.0;
        StageFit gamma;
        std::vector<int> folds;
        try {
            if (!grid.fixed_lambda) folds = make_folds(data, grid.n_folds, grid.fold_seed);
            gamma = fit_propensity(data, g.method, grid, folds, cfg.settings);
        } catch (const std::exception& e) {
            fail(g, 0, e.what());
            continue;
        }
        for (std::size_t k = 0; k < cfg.lambdas.size(); ++k) {
            const SensitivityLevel s(cfg.lambdas[k]);
            try {
                const FittedNuisance fit =
                    fit_sides(data, gamma, s, g.method, OutcomeFamily::Linear, grid, folds, cfg.settings);
                if (!fit.all_finite()) throw SolverError("simulation", "non-finite coefficients");
                for (SimMethod m : g.members) {
                    ReplicateRecord rec = blank(m, k);
                    fill_bounds(rec, data, fit, truths[k], cfg);
                    cells[{static_cast<int>(m), k}] = rec;
                }
            } catch (const std::exception& e) {
                for (SimMethod m : g.members) {
                    ReplicateRecord rec = blank(m, k);
                    rec.failed = true;
                    rec.error = e.what();
                    cells[{static_cast<int>(m), k}] = rec;
                }
            }
        }
    }

    std::vector<ReplicateRecord> out;
    for (SimMethod m : cfg.methods)
        for (std::size_t k = 0; k < cfg.lambdas.size(); ++k) out.push_back(cells.at({static_cast<int>(m), k}));
    return out;
}

CoverageRow aggregate(const std::vector<const ReplicateRecord*>& recs, SimMethod m, double lambda, Side side,
                      const SharpBounds& truth) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    CoverageRow row;
    row.method = m;
    row.lambda = lambda;
    row.side = side;
    double covered = 0.0, sum = 0.0, sumsq = 0.0;
    for (const ReplicateRecord* r : recs) {
        if (r->failed) {
            ++row.n_failed;
            continue;
        }
        ++row.n_ok;
        const bool c = side == Side::Lower ? r->cover_lower : side == Side::Upper ? r->cover_upper : r->cover_two;
        covered += c ? 1.0 : 0.0;
        const double pt = side == Side::Lower ? r->point_lower : r->point_upper;
        sum += pt;
        sumsq += pt * pt;
    }
    const double k = static_cast<double>(row.n_ok);
    row.coverage = row.n_ok > 0 ? covered / k : nan;
    row.mc_se = row.n_ok > 0 ? std::sqrt(row.coverage * (1.0 - row.coverage) / k) : nan;
    if (side == Side::TwoSided) {
        row.truth = row.mean_point = row.sd_point = row.bias = nan;
    } else {
        row.truth = side == Side::Lower ? truth.lower : truth.upper;
        row.mean_point = row.n_ok > 0 ? sum / k : nan;
        row.sd_point = row.n_ok > 1 ? std::sqrt(std::max(0.0, (sumsq - k * row.mean_point * row.mean_point) / (k - 1.0)))
                                    : nan;
        row.bias = row.mean_point - row.truth;
    }
    return row;
}

}  // namespace

ReplicationReport run_replications(const ReplicationConfig& cfg) {
    if (cfg.n_reps < 1) throw InputError("n_reps must be >= 1");
    if (cfg.methods.empty() || cfg.lambdas.empty()) throw InputError("need at least one method and one Lambda");
    cfg.dgp.validate();
    cfg.grid.validate();
    cfg.settings.validate();

    ReplicationReport report;
    report.dgp = cfg.dgp;
    report.n_reps = cfg.n_reps;
    for (double l : cfg.lambdas) report.truths.push_back(true_sharp_bounds(cfg.dgp, SensitivityLevel(l), cfg.truth_n_mc));

    std::vector<std::vector<ReplicateRecord>> per_rep(static_cast<std::size_t>(cfg.n_reps));
    std::atomic<int> next{0};
    std::atomic<int> done{0};
    std::mutex progress_mutex;
    auto worker = [&] {
        for (int r = next++; r < cfg.n_reps; r = next++) {
            per_rep[static_cast<std::size_t>(r)] = run_one(cfg, report.truths, r);
            const int finished = ++done;
            if (cfg.progress) {
                std::lock_guard<std::mutex> lock(progress_mutex);
                cfg.progress(finished);
            }
        }
    };
    const int threads = std::max(1, std::min(cfg.threads, cfg.n_reps));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int k = 0; k < threads; ++k) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    for (auto& v : per_rep)
        for (auto& rec : v) {
            if (rec.failed) ++report.failures;
            report.records.push_back(std::move(rec));
        }

    for (SimMethod m : cfg.methods)
        for (std::size_t k = 0; k < cfg.lambdas.size(); ++k) {
            std::vector<const ReplicateRecord*> recs;
            for (const ReplicateRecord& rec : report.records)
                if (rec.method == m && rec.lambda == cfg.lambdas[k]) recs.push_back(&rec);
            for (Side side : {Side::Lower, Side::Upper, Side::TwoSided})
                report.coverage.push_back(aggregate(recs, m, cfg.lambdas[k], side, report.truths[k]));
        }
    return report;
}

void write_coverage_csv(const ReplicationReport& report, std::ostream& out) {
    out << std::setprecision(10);
    out << "config,n,p,method,lambda,side,coverage,mc_se,n_ok,n_failed,truth,mean_point,sd_point,bias\n";
    for (const CoverageRow& r : report.coverage) {
        out << to_string(report.dgp.config) << ',' << report.dgp.n << ',' << report.dgp.p << ',' << to_string(r.method)
            << ',' << r.lambda << ',' << to_string(r.side) << ',' << r.coverage << ',' << r.mc_se << ',' << r.n_ok << ','
            << r.n_failed << ',' << r.truth << ',' << r.mean_point << ',' << r.sd_point << ',' << r.bias << '\n';
    }
}

void write_replicates_csv(const ReplicationReport& report, std::ostream& out) {
    out << std::setprecision(12);
    out << "config,replicate,seed,method,lambda,failed,point_lower,point_upper,se_lower,se_upper,"
           "ci_lower,ci_upper,ci_two_lower,ci_two_upper,true_lower,true_upper,error\n";
    for (const ReplicateRecord& r : report.records) {
        double tl = 0.0, tu = 0.0;
        for (const SharpBounds& b : report.truths)
            if (b.lambda == r.lambda) {
                tl = b.lower;
                tu = b.upper;
            }
        std::string err = r.error;
        std::replace(err.begin(), err.end(), '"', '\'');
        out << to_string(report.dgp.config) << ',' << r.replicate << ',' << r.seed << ',' << to_string(r.method) << ','
            << r.lambda << ',' << (r.failed ? 1 : 0) << ',' << r.point_lower << ',' << r.point_upper << ','
            << r.se_lower << ',' << r.se_upper << ',' << r.ci_lower << ',' << r.ci_upper << ',' << r.ci_two_lower << ','
            << r.ci_two_upper << ',' << tl << ',' << tu << ",\"" << err << "\"\n";
    }
}

}  // namespace calsens
