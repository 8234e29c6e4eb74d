#include "calsens/bounds.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>

using namespace calsens;
using testutil::random_data;

namespace {
TuningGrid fixed(double lam) {
    TuningGrid g;
    g.fixed_lambda = lam;
    return g;
}

// Standard AIPW mean of Y^1 written directly from its textbook form.
double direct_aipw(const ObservedData& d, const Vector& gamma, const Vector& alpha) {
    double s = 0;
    for (std::size_t i = 0; i < d.n(); ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        const double pi = 1.0 / (1.0 + std::exp(-d.f().row(ii).dot(gamma)));
        const double m = d.f().row(ii).dot(alpha);
        s += d.t()[ii] * d.y()[ii] / pi - (d.t()[ii] / pi - 1.0) * m;
    }
    return s / static_cast<double>(d.n());
}
}  // namespace

TEST_CASE("phi hand cases") {
    SensitivityLevel two(2.0), one(1.0);
    CHECK(phi_value(3, 1, 0.5, 1, 2, two, true) == doctest::Approx(6.0));
    // minus transform: ytilde = 2, phi = (3-2) + 2/0.5 - (2-1)*2 = 3
    CHECK(phi_value(3, 1, 0.5, 1, 2, two, false) == doctest::Approx(3.0));
    CHECK(phi_value(7, 0, 0.3, 1, 2.5, two, true) == 2.5);
    CHECK(phi_value(7, 0, 0.3, 1, 2.5, two, false) == 2.5);
    CHECK(phi_value(3, 1, 0.4, 1, 2, one, true) == doctest::Approx(3 / 0.4 - (1 / 0.4 - 1) * 2));
    CHECK(phi_value(3, 1, 0.4, 1, 2, one, true) == phi_value(3, 1, 0.4, 1, 2, one, false));
}

TEST_CASE("Lambda 1 reduction to AIPW") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        auto d = random_data(150, 4, seed);
        for (Method m : {Method::RCAL, Method::RML}) {
            TuningGrid grid;
            grid.fold_seed = seed;
            auto fit = m == Method::RCAL ? fit_rcal(d, SensitivityLevel(1.0), grid, {})
                                         : fit_rml(d, SensitivityLevel(1.0), grid, {});
            const double up = point_bound(d, fit, Side::Upper);
            const double lo = point_bound(d, fit, Side::Lower);
            CHECK(std::abs(up - lo) <= 1e-12);
            CHECK(up == doctest::Approx(direct_aipw(d, fit.gamma.coef.values, fit.plus.alpha.coef.values)).epsilon(1e-12));
        }
    }
}

TEST_CASE("imputation identity and relaxed ordering for RCAL") {
    auto d = random_data(200, 5, 9);
    TuningGrid grid;
    for (double lam : {1.0, 1.5, 2.0}) {
        SensitivityLevel s(lam);
        auto fit = fit_rcal(d, s, grid, {});
        for (bool plus : {true, false}) {
            const Vector eta = fitted_transformed_mean(d, fit, plus);
            double imp = 0;
            for (int i = 0; i < 200; ++i) imp += d.t()[i] * d.y()[i] + (1 - d.t()[i]) * eta[i];
            imp /= 200;
            CHECK(std::abs(point_bound(d, fit, plus ? Side::Upper : Side::Lower) - imp) < 1e-8);
        }
        const double up = point_bound(d, fit, Side::Upper), lo = point_bound(d, fit, Side::Lower);
        const double rup = relaxed_point_bound(d, fit, Side::Upper), rlo = relaxed_point_bound(d, fit, Side::Lower);
        CHECK(rlo <= lo);
        CHECK(lo <= up);
        CHECK(up <= rup);
        const double adj = s.span() * fit.plus.beta.lambda * fit.plus.beta.coef.penalized_l1();
        CHECK(rup - up == doctest::Approx(adj));
    }
}

TEST_CASE("relaxed bound equals the plain bound when lambda_beta is zero") {
    auto d = random_data(100, 3, 4);
    auto fit = fit_rcal(d, SensitivityLevel(2.0), fixed(0.0), {});
    CHECK(relaxed_point_bound(d, fit, Side::Upper) == point_bound(d, fit, Side::Upper));
    CHECK_THROWS_AS(relaxed_point_bound(d, fit_rml(d, SensitivityLevel(2.0), fixed(0.0), {}), Side::Upper),
                    InputError);
}

TEST_CASE("variance and intervals") {
    auto d = random_data(120, 3, 12);
    SensitivityLevel s(1.5);
    auto fit = fit_rcal(d, s, fixed(0.0), {});
    const Vector phi = phi_values(d, fit, true);
    const double mean = phi.mean();
    const double var = (phi.array() - mean).square().mean();
    auto up = variance_and_ci(d, fit, Side::Upper, 0.95);
    CHECK(up.point_upper == doctest::Approx(mean));
    CHECK(up.variance_upper == doctest::Approx(var));
    CHECK(up.ci.upper == doctest::Approx(mean + 1.6448536269514722 * std::sqrt(var / 120)));
    CHECK(std::isinf(up.ci.lower));
    CHECK(std::isnan(up.point_lower));
    auto two = variance_and_ci(d, fit, Side::TwoSided, 0.90);
    CHECK(two.ci.upper == doctest::Approx(mean + 1.6448536269514722 * std::sqrt(var / 120)));
    CHECK(two.ci.lower <= two.point_lower);
    CHECK(two.point_lower <= two.point_upper);
    auto rel = variance_and_ci(d, fit, Side::Upper, 0.95, true);
    CHECK(rel.variance_upper == up.variance_upper);
    CHECK_THROWS_AS(variance_and_ci(d, fit, Side::Upper, 1.0), InputError);
    CHECK_THROWS_AS(variance_and_ci(d, fit, Side::Upper, 0.0), InputError);

    // constant outcomes and intercept-only models: phi is constant
    Vector y = Vector::Constant(40, 3.0), t(40);
    for (int i = 0; i < 40; ++i) t[i] = i % 2;
    Matrix one = Matrix::Ones(40, 1);
    ObservedData dc(y, t, one, one);
    auto fc = fit_rcal(dc, SensitivityLevel(1.0), fixed(0.0), {});
    auto rc = variance_and_ci(dc, fc, Side::Upper, 0.95);
    CHECK(rc.variance_upper < 1e-20);
    CHECK(rc.ci.upper == doctest::Approx(rc.point_upper));
    CHECK(rc.point_upper == doctest::Approx(3.0));
}

TEST_CASE("control arm, ATE and ATT") {
    auto d = random_data(200, 4, 31);
    auto flipped = flip_for_mu0(d);
    CHECK(flip_for_mu0(flipped).t() == d.t());
    TuningGrid grid;
    for (double lam : {1.0, 1.5}) {
        SensitivityLevel s(lam);
        EffectFits fits{fit_rcal(d, s, grid, {}), fit_rcal(flipped, s, grid, {})};
        auto ate = ate_bounds(d, fits, Side::TwoSided, 0.9);
        const double mu1p = point_bound(d, fits.treated, Side::Upper);
        const double mu1m = point_bound(d, fits.treated, Side::Lower);
        const double mu0p = point_bound(flipped, fits.control, Side::Upper);
        const double mu0m = point_bound(flipped, fits.control, Side::Lower);
        CHECK(ate.point_lower == doctest::Approx(mu1m - mu0p).epsilon(1e-12));
        CHECK(ate.point_upper == doctest::Approx(mu1p - mu0m).epsilon(1e-12));
        const Vector diff = phi_values(d, fits.treated, false) - phi_values(flipped, fits.control, true);
        CHECK(ate.variance_lower == doctest::Approx((diff.array() - diff.mean()).square().mean()));

        auto mu0 = mu0_bounds(d, fits.control, Side::Upper, 0.95);
        CHECK(mu0.estimand == Estimand::Mu0);
        CHECK(mu0.point_upper == doctest::Approx(mu0p));

        auto att = att_bounds(d, fits.control, Side::TwoSided, 0.9);
        const double tbar = d.t().mean();
        double ety = 0, ecy = 0;
        for (int i = 0; i < 200; ++i) {
            ety += d.t()[i] * d.y()[i] / 200;
            ecy += (1 - d.t()[i]) * d.y()[i] / 200;
        }
        const double nu1 = ety / tbar;
        const double nu0p = (mu0p - ecy) / tbar;
        const double nu0m = (mu0m - ecy) / tbar;
        CHECK(att.point_lower == doctest::Approx(nu1 - nu0p).epsilon(1e-12));
        CHECK(att.point_upper == doctest::Approx(nu1 - nu0m).epsilon(1e-12));
        // transfer identity: eta-average form
        CHECK(std::abs(att_control_mean_eta_form(d, fits.control, true) - nu0p) < 1e-8);
        CHECK(std::abs(att_control_mean_eta_form(d, fits.control, false) - nu0m) < 1e-8);
        // variance formula written out
        const Vector phi0 = phi_values(flipped, fits.control, true);
        double v = 0;
        for (int i = 0; i < 200; ++i) {
            const double a = d.t()[i] * d.y()[i] - d.t()[i] * nu1 - phi0[i] + (1 - d.t()[i]) * d.y()[i] + d.t()[i] * nu0p;
            v += a * a / 200;
        }
        CHECK(att.variance_lower == doctest::Approx(v / (tbar * tbar)).epsilon(1e-9));
    }
}

TEST_CASE("ATT at Lambda 1 matches the direct AIPW effect on the treated") {
    auto d = random_data(300, 3, 77);
    auto flipped = flip_for_mu0(d);
    auto fit0 = fit_rml(flipped, SensitivityLevel(1.0), fixed(0.0), {});
    auto att = att_bounds(d, fit0, Side::TwoSided, 0.9);
    CHECK(att.point_lower == doctest::Approx(att.point_upper).epsilon(1e-12));
    // direct: E~[T Y - T m0 - (1-T) e/(1-e) (Y - m0)] / E~T, with e = P(T=1|X)
    const Vector& g0 = fit0.gamma.coef.values;  // models P(T=0|X)
    const Vector& a0 = fit0.plus.alpha.coef.values;
    double s = 0;
    for (int i = 0; i < 300; ++i) {
        const double pi0 = 1 / (1 + std::exp(-d.f().row(i).dot(g0)));
        const double e = 1 - pi0;
        const double m0 = d.f().row(i).dot(a0);
        s += d.t()[i] * (d.y()[i] - m0) - (1 - d.t()[i]) * e / (1 - e) * (d.y()[i] - m0);
    }
    CHECK(att.point_lower == doctest::Approx(s / 300 / d.t().mean()).epsilon(1e-10));
}

TEST_CASE("logistic family composite mean") {
    Rng rng(3);
    const int n = 300;
    Matrix x(n, 3);
    Vector t(n), y(n);
    for (int i = 0; i < n; ++i) {
        x(i, 0) = 1;
        x(i, 1) = rng.normal();
        x(i, 2) = rng.normal();
        t[i] = rng.bernoulli(1 / (1 + std::exp(-0.5 * x(i, 1)))) ? 1 : 0;
        y[i] = rng.bernoulli(1 / (1 + std::exp(-x(i, 2)))) ? 1 : 0;
    }
    ObservedData d(y, t, x, x, true);
    SensitivityLevel s(2.0);
    auto fit = fit_rcal(d, s, fixed(0.0), {}, OutcomeFamily::Logistic);
    const double up = point_bound(d, fit, Side::Upper), lo = point_bound(d, fit, Side::Lower);
    CHECK(lo < up);
    CHECK(lo > -1.0);
    CHECK(up < 2.0);
    // eta for binary y equals E[ytilde | X] when Y ~ Bernoulli(m)
    const double m = 0.3, q = 0.4;
    const double expect = m * tilde_y_plus(1, q, s) + (1 - m) * tilde_y_plus(0, q, s);
    CHECK(transformed_mean(std::log(m / (1 - m)), q, s, true, OutcomeFamily::Logistic) == doctest::Approx(expect));
    const double expect_m = m * tilde_y_minus(1, q, s) + (1 - m) * tilde_y_minus(0, q, s);
    CHECK(transformed_mean(std::log(m / (1 - m)), q, s, false, OutcomeFamily::Logistic) == doctest::Approx(expect_m));
    // at lambda 0 the weighted logistic score makes phi average the imputation form
    const Vector eta = fitted_transformed_mean(d, fit, true);
    double imp = 0;
    for (int i = 0; i < n; ++i) imp += t[i] * y[i] + (1 - t[i]) * eta[i];
    CHECK(up == doctest::Approx(imp / n).epsilon(1e-7));
}
