#include "calsens/pipeline.hpp"
#include "calsens/bounds.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace calsens;
using testutil::random_data;

namespace {
LossContext quantile_context(const ObservedData& d, const Vector& w, double tau) {
    LossContext c;
    c.weights = w;
    c.tau = tau;
    return c;
}
Vector positive_weights(int n, std::uint64_t seed) {
    Rng rng(seed);
    Vector w(n);
    for (int i = 0; i < n; ++i) w[i] = 0.2 + rng.uniform();
    return w;
}
}  // namespace

TEST_CASE("refit at 1.01 lambda* zeroes every penalized coefficient") {
    auto d = random_data(120, 5, 3);
    const Vector w = positive_weights(120, 4);
    LossContext sq;
    sq.weights = w;
    sq.response = d.y();
    const std::vector<std::pair<LossId, LossContext>> cases = {
        {LossId::Calibration, LossContext{}},
        {LossId::Likelihood, LossContext{}},
        {LossId::Squares, sq},
        {LossId::Quantile, quantile_context(d, w, 0.6)},
    };
    for (const auto& [id, ctx] : cases) {
        const double ls = compute_lambda_star(id, d, ctx);
        CHECK(ls > 0.0);
        auto fit = fit_loss(id, d, ctx, 1.01 * ls, {});
        CHECK(testutil::l1_tail(fit.coef.values) < 1e-10);
        auto inner = fit_loss(id, d, ctx, 0.9 * ls, {});
        CHECK(testutil::l1_tail(inner.coef.values) > 0.0);
    }
    // Logistic mean family on a binary outcome
    Vector yb(120);
    for (int i = 0; i < 120; ++i) yb[i] = d.y()[i] > 0 ? 1 : 0;
    ObservedData db(yb, d.t(), d.f(), d.h(), true);
    LossContext lc;
    lc.weights = w;
    const double ls = compute_lambda_star(LossId::Logistic, db, lc);
    CHECK(testutil::l1_tail(fit_loss(LossId::Logistic, db, lc, 1.01 * ls, {}).coef.values) < 1e-10);
}

TEST_CASE("leave-one-out cross-validation matches direct enumeration") {
    auto d = random_data(12, 2, 17);
    const int n = 12;
    LossContext sq;
    sq.weights = positive_weights(n, 2);
    sq.response = d.y();
    TuningGrid grid;
    grid.n_points = 4;
    grid.n_folds = n;
    std::vector<int> folds(n);
    for (int i = 0; i < n; ++i) folds[i] = i;
    auto cv = cross_validate(LossId::Squares, d, sq, grid, folds, {});
    const double ls = compute_lambda_star(LossId::Squares, d, sq);
    for (int g = 0; g < 4; ++g) {
        const double lam = ls / std::pow(2.0, g);
        double total = 0;
        for (int k = 0; k < n; ++k) {
            std::vector<std::size_t> train;
            for (int i = 0; i < n; ++i)
                if (i != k) train.push_back(i);
            auto dt = d.subset(train);
            Vector wt(n - 1), rt(n - 1);
            for (int i = 0; i < n - 1; ++i) {
                wt[i] = sq.weights[train[i]];
                rt[i] = sq.response[train[i]];
            }
            auto fit = fit_wls_lasso(dt, wt, rt, lam, {});
            const double pred = d.f().row(k).dot(fit.coef.values);
            const double r = sq.response[k] - pred;
            total += d.t()[k] * 0.5 * sq.weights[k] * r * r;
        }
        CHECK(cv.curve[g] == doctest::Approx(total / n).epsilon(1e-7));
        CHECK(cv.lambdas[g] == doctest::Approx(lam));
    }
    const auto best = std::min_element(cv.curve.begin(), cv.curve.end()) - cv.curve.begin();
    CHECK(cv.selected_lambda == cv.lambdas[best]);
}

TEST_CASE("grid edge cases") {
    auto d = random_data(60, 3, 5);
    TuningGrid one;
    one.n_points = 1;
    auto cv = cross_validate(LossId::Calibration, d, {}, one, {});
    CHECK(cv.selected_lambda == cv.lambda_star);

    // Response unrelated to any column: every grid point with zero slopes ties.
    Vector y = d.y();
    LossContext c;
    c.weights = Vector::Ones(60);
    c.response = Vector::Constant(60, 2.0);
    TuningGrid g;
    auto cv2 = cross_validate(LossId::Squares, d, c, g, {});
    CHECK(cv2.selected_lambda == cv2.lambdas.front());

    auto v = g.values(8.0);
    CHECK(v.size() == 11);
    CHECK(v[3] == 1.0);
    TuningGrid app;
    app.n_points = 25;
    app.step = 0.25;
    CHECK(app.values(1.0)[4] == doctest::Approx(0.5));
}

TEST_CASE("folds hold both arms and are reproducible") {
    auto d = random_data(50, 2, 8);
    auto a = make_folds(d, 5, 99);
    auto b = make_folds(d, 5, 99);
    CHECK(a == b);
    std::vector<int> size(5, 0);
    for (int f : a) ++size[f];
    for (int s : size) CHECK(s == 10);
}

TEST_CASE("RCAL at lambda 0 satisfies the sample calibration equations") {
    auto d = random_data(200, 4, 123);
    TuningGrid grid;
    grid.fixed_lambda = 0.0;
    SensitivityLevel s(1.5);
    auto fit = fit_rcal(d, s, grid, {});
    const auto pv = evaluate_propensity(d.f(), fit.gamma.coef.values);
    const double n = 200;
    // propensity stage: E~{T f / pi} = E~{f}
    Vector cal = Vector::Zero(5);
    for (int i = 0; i < 200; ++i) cal += (d.t()[i] * (1 + pv.inverse_weight[i]) - 1) * d.f().row(i).transpose() / n;
    CHECK(cal.cwiseAbs().maxCoeff() < 1e-5);
    for (bool plus : {true, false}) {
        const SideFit& side = plus ? fit.plus : fit.minus;
        const double tau = plus ? s.tau() : 1 - s.tau();
        // quantile stage: LP-optimal (compare with a direct fit and its certificate)
        auto direct = fit_wqr_lasso(d, pv.inverse_weight, tau, 0.0, {});
        CHECK(wqr_objective(d, pv.inverse_weight, tau, side.beta.coef.values) ==
              doctest::Approx(direct.dual_objective).epsilon(1e-9));
        // mean stage: E~{T w (ytilde - f'a) f} = 0
        const Vector q = d.h() * side.beta.coef.values;
        Vector score = Vector::Zero(5);
        for (int i = 0; i < 200; ++i) {
            const double yt = plus ? tilde_y_plus(d.y()[i], q[i], s) : tilde_y_minus(d.y()[i], q[i], s);
            score += d.t()[i] * pv.inverse_weight[i] * (yt - d.f().row(i).dot(side.alpha.coef.values)) *
                     d.f().row(i).transpose() / n;
        }
        CHECK(score.cwiseAbs().maxCoeff() < 1e-5);
    }
}

TEST_CASE("RML intercept-only closed forms") {
    Rng rng(4);
    const int n = 40;
    Vector y(n), t(n);
    for (int i = 0; i < n; ++i) {
        y[i] = rng.normal();
        t[i] = i % 3 ? 1 : 0;
    }
    Matrix one = Matrix::Ones(n, 1);
    ObservedData d(y, t, one, one);
    TuningGrid grid;
    grid.fixed_lambda = 0.0;
    SensitivityLevel s(2.0);
    auto fit = fit_rml(d, s, grid, {});
    const double tbar = t.mean();
    CHECK(fit.gamma.coef.values[0] == doctest::Approx(std::log(tbar / (1 - tbar))));
    std::vector<double> ty;
    for (int i = 0; i < n; ++i)
        if (t[i] > 0.5) ty.push_back(y[i]);
    std::sort(ty.begin(), ty.end());
    const double q = ty[static_cast<std::size_t>(std::ceil(s.tau() * ty.size())) - 1];
    CHECK(wqr_objective(d, Vector::Ones(n), s.tau(), fit.plus.beta.coef.values) ==
          doctest::Approx(wqr_objective(d, Vector::Ones(n), s.tau(), Vector::Constant(1, q))));
    double mean_yt = 0;
    for (double v : ty) mean_yt += tilde_y_plus(v, fit.plus.beta.coef.values[0], s);
    mean_yt /= ty.size();
    CHECK(fit.plus.alpha.coef.values[0] == doctest::Approx(mean_yt).epsilon(1e-10));
}

TEST_CASE("fits are bit-reproducible") {
    auto d = random_data(150, 6, 55);
    TuningGrid grid;
    grid.fold_seed = 7;
    SensitivityLevel s(1.5);
    auto a = fit_rcal(d, s, grid, {});
    auto b = fit_rcal(d, s, grid, {});
    CHECK(a.gamma.coef.values == b.gamma.coef.values);
    CHECK(a.plus.beta.coef.values == b.plus.beta.coef.values);
    CHECK(a.minus.alpha.coef.values == b.minus.alpha.coef.values);
    CHECK(a.plus.beta.cv->curve == b.plus.beta.cv->curve);
    for (double v : a.gamma.cv->curve) CHECK(std::isfinite(v));
}

TEST_CASE("Lambda 1 makes the quantile stage a median fit of the raw outcome") {
    auto d = random_data(100, 3, 71);
    TuningGrid grid;
    grid.fixed_lambda = 0.0;
    auto fit = fit_rcal(d, SensitivityLevel(1.0), grid, {});
    const auto pv = evaluate_propensity(d.f(), fit.gamma.coef.values);
    auto direct = fit_wls_lasso(d, pv.inverse_weight, d.y(), 0.0, {});
    CHECK((direct.coef.values - fit.plus.alpha.coef.values).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(fit.minus.alpha.coef.values == fit.plus.alpha.coef.values);
}
