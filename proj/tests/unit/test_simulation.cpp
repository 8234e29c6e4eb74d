#include "calsens/lp_oracle.hpp"
#include "calsens/simulation.hpp"

#include <doctest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <sstream>

using namespace calsens;

TEST_CASE("transformed covariate") {
    CHECK(dagger(-2.0) == -2.0);
    CHECK(dagger(1.0) == 5.0);
    CHECK(dagger(-1.0) == -1.0);
    CHECK(dagger(0.0) == 1.0);
}

TEST_CASE("covariate draws follow cov(X_j, X_k) = 2^-|j-k|") {
    const Matrix x = population_covariates(6, 200000, 17);
    const Eigen::RowVectorXd mean = x.colwise().mean();
    const Matrix c = (x.rowwise() - mean).transpose() * (x.rowwise() - mean) / static_cast<double>(x.rows() - 1);
    CHECK(c(0, 2) == doctest::Approx(0.25).epsilon(0.04));
    CHECK(c(1, 2) == doctest::Approx(0.5).epsilon(0.02));
    CHECK(c(0, 5) == doctest::Approx(1.0 / 32.0).epsilon(0.5));
    for (int j = 0; j < 6; ++j) CHECK(c(j, j) == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("generated samples") {
    DgpSpec dgp;
    dgp.config = DgpConfig::C3;
    dgp.n = 300;
    dgp.p = 6;
    dgp.seed = 44;
    const DgpSample a = generate_sample(dgp);
    const DgpSample b = generate_sample(dgp);
    CHECK(a.data.y() == b.data.y());
    CHECK(a.data.t() == b.data.t());
    CHECK(a.data.f() == a.data.h());
    CHECK(a.data.f().col(0).isOnes());
    CHECK(a.data.f().rightCols(6) == a.x);
    for (Eigen::Index i = 0; i < 300; ++i) {
        CHECK(a.true_pi[i] == doctest::Approx(true_propensity(DgpConfig::C3, a.x.row(i))));
        CHECK(a.true_mean[i] == doctest::Approx(a.x.row(i).head(4).dot(Eigen::RowVector4d(1, .5, .25, .125))));
    }
    dgp.seed = 45;
    CHECK(generate(dgp).y() != a.data.y());
    dgp.p = 3;
    CHECK_THROWS_AS(generate(dgp), InputError);
}

TEST_CASE("treated share matches quadrature") {
    DgpSpec dgp;
    dgp.config = DgpConfig::C1;
    dgp.n = 100000;
    dgp.p = 4;
    dgp.seed = 8;
    const ObservedData d = generate(dgp);
    const double share = d.t().mean();
    const double se = std::sqrt(share * (1.0 - share) / 1e5);
    CHECK(std::abs(share - (1.0 - expected_untreated_share(DgpConfig::C1))) < 3.0 * se);
}

TEST_CASE("closed-form mean of C2") {
    const Matrix x = population_covariates(4, 200000, 21);
    Vector m(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) m[i] = true_mean(DgpConfig::C2, x.row(i));
    const double se = std::sqrt((m.array() - m.mean()).square().sum() / (m.size() - 1.0) / m.size());
    CHECK(std::abs(m.mean() - expected_true_mean(DgpConfig::C2)) < 4.0 * se);
    CHECK(expected_true_mean(DgpConfig::C1) == 0.0);
}

TEST_CASE("sharp bounds") {
    DgpSpec c1;
    const SharpBounds one = true_sharp_bounds(c1, SensitivityLevel(1.0));
    CHECK(one.lower == 0.0);
    CHECK(one.upper == 0.0);
    const SharpBounds b15 = true_sharp_bounds(c1, SensitivityLevel(1.5));
    const SharpBounds b2 = true_sharp_bounds(c1, SensitivityLevel(2.0));
    CHECK(b2.upper > b15.upper);
    CHECK(b2.lower < b15.lower);
    CHECK(b15.upper == doctest::Approx(-b15.lower));

    // Quadrature against the per-draw oracle with the true quantile.
    const OracleEstimate mc = population_bound_oracle(c1, SensitivityLevel(2.0), QuantileSpec::sharp(), 400000, 2, true);
    CHECK(std::abs(mc.value - b2.upper) < 4.0 * mc.se);

    DgpSpec c3;
    c3.config = DgpConfig::C3;
    const SharpBounds b3 = true_sharp_bounds(c3, SensitivityLevel(1.5), 200000, 3);
    CHECK(b3.se > 0.0);
    const OracleEstimate mc3 =
        population_bound_oracle(c3, SensitivityLevel(1.5), QuantileSpec::sharp(), 200000, 4, true);
    CHECK(std::abs(mc3.value - b3.upper) < 4.0 * std::hypot(mc3.se, b3.se));
}

TEST_CASE("replications are deterministic and independent of the thread count") {
    ReplicationConfig cfg;
    cfg.dgp.config = DgpConfig::C2;
    cfg.dgp.n = 200;
    cfg.dgp.p = 6;
    cfg.methods = {SimMethod::CAL, SimMethod::ML, SimMethod::RCALRelaxed};
    cfg.lambdas = {1.0, 1.5};
    cfg.n_reps = 3;
    cfg.grid.n_points = 4;
    cfg.base_seed = 12;
    const ReplicationReport a = run_replications(cfg);
    cfg.threads = 3;
    const ReplicationReport b = run_replications(cfg);
    REQUIRE(a.records.size() == 3 * 3 * 2);
    REQUIRE(a.records.size() == b.records.size());
    for (std::size_t k = 0; k < a.records.size(); ++k) {
        CHECK(a.records[k].point_upper == b.records[k].point_upper);
        CHECK(a.records[k].ci_two_lower == b.records[k].ci_two_lower);
        CHECK(a.records[k].seed == replicate_seed(12, a.records[k].replicate));
    }
    CHECK(a.failures == 0);
    for (const ReplicateRecord& r : a.records)
        if (r.lambda == 1.0 && r.method != SimMethod::RCALRelaxed) CHECK(r.point_lower == r.point_upper);
    for (const CoverageRow& r : a.coverage) {
        CHECK(r.coverage >= 0.0);
        CHECK(r.coverage <= 1.0);
        CHECK(r.n_ok + r.n_failed == 3);
    }
    CHECK(a.row(SimMethod::CAL, 1.5, Side::Upper).truth == a.truths[1].upper);

    std::ostringstream cov, reps;
    write_coverage_csv(a, cov);
    write_replicates_csv(a, reps);
    auto lines = [](const std::string& s) { return std::count(s.begin(), s.end(), '\n'); };
    CHECK(lines(cov.str()) == 1 + 3 * 2 * 3);
    CHECK(lines(reps.str()) == 1 + 18);
}

TEST_CASE("method names") {
    for (SimMethod m : {SimMethod::RCAL, SimMethod::RCALRelaxed, SimMethod::RML, SimMethod::CAL, SimMethod::ML})
        CHECK(parse_sim_method(to_string(m)) == m);
    CHECK_THROWS_AS(parse_sim_method("lasso"), InputError);
    CHECK(parse_dgp_config("c2") == DgpConfig::C2);
    CHECK_THROWS_AS(parse_dgp_config("C4"), InputError);
}
