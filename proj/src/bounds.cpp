#include "calsens/bounds.hpp"

#include "calsens/random.hpp"

#include <cmath>
#include <limits>

namespace calsens {

const char* to_string(Estimand e) {
    switch (e) {
        case Estimand::Mu1: return "Mu1";
        case Estimand::Mu0: return "Mu0";
        case Estimand::ATE: return "ATE";
        case Estimand::ATT: return "ATT";
    }
    return "unknown";
}

const char* to_string(Side s) {
    switch (s) {
        case Side::Lower: return "lower";
        case Side::Upper: return "upper";
        case Side::TwoSided: return "two-sided";
    }
    return "unknown";
}

double phi_value(double y, double t, double pi, double q, double eta, const SensitivityLevel& s, bool plus_side) {
    const double yt = plus_side ? tilde_y_plus(y, q, s) : tilde_y_minus(y, q, s);
    const double ratio = t / pi;
    return t * (y - yt) + ratio * yt - (ratio - 1.0) * eta;
}

Vector fitted_transformed_mean(const ObservedData& data, const FittedNuisance& fit, bool plus_side) {
    const SideFit& side = plus_side ? fit.plus : fit.minus;
    const SensitivityLevel s(fit.sensitivity);
    const Vector idx = data.f() * side.alpha.coef.values;
    const Vector q = data.h() * side.beta.coef.values;
    Vector eta(idx.size());
    for (Eigen::Index i = 0; i < idx.size(); ++i) eta[i] = transformed_mean(idx[i], q[i], s, plus_side, fit.family);
    return eta;
}

Vector phi_values(const ObservedData& data, const FittedNuisance& fit, bool plus_side) {
    const SideFit& side = plus_side ? fit.plus : fit.minus;
    const SensitivityLevel s(fit.sensitivity);
    const PropensityValues pv = evaluate_propensity(data.f(), fit.gamma.coef.values);
    const Vector q = data.h() * side.beta.coef.values;
    const Vector eta = fitted_transformed_mean(data, fit, plus_side);
    Vector out(q.size());
    for (Eigen::Index i = 0; i < q.size(); ++i) {
        const double y = data.y()[i];
        const double t = data.t()[i];
        const double yt = plus_side ? tilde_y_plus(y, q[i], s) : tilde_y_minus(y, q[i], s);
        // 1/pi = 1 + w exactly, which keeps the imputation identity tight.
        const double ratio = t * (1.0 + pv.inverse_weight[i]);
        out[i] = t * (y - yt) + ratio * yt - (ratio - 1.0) * eta[i];
    }
    return out;
}

double phi_plus(const ObservedData& data, std::size_t i, const FittedNuisance& fit) {
    return phi_values(data, fit, true)[static_cast<Eigen::Index>(i)];
}

double phi_minus(const ObservedData& data, std::size_t i, const FittedNuisance& fit) {
    return phi_values(data, fit, false)[static_cast<Eigen::Index>(i)];
}

double point_bound(const ObservedData& data, const FittedNuisance& fit, Side side) {
    if (side == Side::TwoSided) throw InputError("point_bound: choose Lower or Upper");
    return phi_values(data, fit, side == Side::Upper).mean();
}

namespace {

double relaxation(const FittedNuisance& fit, bool plus_side) {
    const SideFit& side = plus_side ? fit.plus : fit.minus;
    const SensitivityLevel s(fit.sensitivity);
    return s.span() * side.beta.lambda * side.beta.coef.penalized_l1();
}

// A side estimate: point value and centered per-unit influence values.
struct SideEstimate {
    double point;
    Vector influence;
};

SideEstimate mean_estimate(Vector values) {
    const double m = values.mean();
    values.array() -= m;
    return {m, std::move(values)};
}

double variance_of(const SideEstimate& e) {
    return e.influence.squaredNorm() / static_cast<double>(e.influence.size());
}

void check_confidence(double confidence) {
    if (!(confidence > 0.0 && confidence < 1.0)) throw InputError("confidence level must lie in (0,1)");
}

BoundReport make_report(Estimand estimand, Side side, const SideEstimate& lower, const SideEstimate& upper,
                        double confidence, bool relaxed, const FittedNuisance& fit, std::size_t n) {
    check_confidence(confidence);
    if (n < 2) throw InputError("need at least two observations for a variance estimate");
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const double inf = std::numeric_limits<double>::infinity();
    BoundReport r;
    r.estimand = estimand;
    r.side = side;
    r.sensitivity = fit.sensitivity;
    r.relaxed = relaxed;
    r.method = fit.method;
    r.n = n;
    r.confidence = confidence;
    r.point_lower = r.point_upper = r.variance_lower = r.variance_upper = nan;
    const double c = 1.0 - confidence;
    const double dn = static_cast<double>(n);
    if (side != Side::Upper) {
        r.point_lower = lower.point;
        r.variance_lower = variance_of(lower);
    }
    if (side != Side::Lower) {
        r.point_upper = upper.point;
        r.variance_upper = variance_of(upper);
    }
    switch (side) {
        case Side::Upper:
            r.ci = {-inf, r.point_upper + upper_z(c) * std::sqrt(r.variance_upper / dn)};
            break;
        case Side::Lower:
            r.ci = {r.point_lower - upper_z(c) * std::sqrt(r.variance_lower / dn), inf};
            break;
        case Side::TwoSided: {
            const double z = upper_z(c / 2.0);
            r.ci = {r.point_lower - z * std::sqrt(r.variance_lower / dn),
                    r.point_upper + z * std::sqrt(r.variance_upper / dn)};
            break;
        }
    }
    return r;
}

SideEstimate mu_side(const ObservedData& data, const FittedNuisance& fit, bool plus_side, bool relaxed) {
    SideEstimate e = mean_estimate(phi_values(data, fit, plus_side));
    if (relaxed) e.point += plus_side ? relaxation(fit, true) : -relaxation(fit, false);
    return e;
}

void check_rcal_for_relaxed(const FittedNuisance& fit, bool relaxed) {
    if (relaxed && fit.method != Method::RCAL) throw InputError("relaxed bounds are defined for RCAL fits only");
}

}  // namespace

double relaxed_point_bound(const ObservedData& data, const FittedNuisance& fit, Side side) {
    check_rcal_for_relaxed(fit, true);
    const double p = point_bound(data, fit, side);
    return side == Side::Upper ? p + relaxation(fit, true) : p - relaxation(fit, false);
}

BoundReport variance_and_ci(const ObservedData& data, const FittedNuisance& fit, Side side, double confidence,
                            bool relaxed) {
    check_confidence(confidence);
    check_rcal_for_relaxed(fit, relaxed);
    SideEstimate lo{0.0, Vector()}, up{0.0, Vector()};
    if (side != Side::Upper) lo = mu_side(data, fit, false, relaxed);
    if (side != Side::Lower) up = mu_side(data, fit, true, relaxed);
    return make_report(Estimand::Mu1, side, lo, up, confidence, relaxed, fit, data.n());
}

ObservedData flip_for_mu0(const ObservedData& data) {
    Vector t = Vector::Ones(data.t().size()) - data.t();
    return ObservedData(data.y(), t, data.f(), data.h(), data.binary_outcome());
}

BoundReport mu0_bounds(const ObservedData& data, const FittedNuisance& control_fit, Side side, double confidence,
                       bool relaxed) {
    BoundReport r = variance_and_ci(flip_for_mu0(data), control_fit, side, confidence, relaxed);
    r.estimand = Estimand::Mu0;
    return r;
}

BoundReport ate_bounds(const ObservedData& data, const EffectFits& fits, Side side, double confidence,
                       bool relaxed) {
    check_confidence(confidence);
    check_rcal_for_relaxed(fits.treated, relaxed);
    check_rcal_for_relaxed(fits.control, relaxed);
    const ObservedData flipped = flip_for_mu0(data);
    auto effect = [&](bool upper) {
        // upper: mu1+ - mu0-, lower: mu1- - mu0+
        const SideEstimate a = mu_side(data, fits.treated, upper, relaxed);
        const SideEstimate b = mu_side(flipped, fits.control, !upper, relaxed);
        return SideEstimate{a.point - b.point, a.influence - b.influence};
    };
    SideEstimate lo{0.0, Vector()}, up{0.0, Vector()};
    if (side != Side::Upper) lo = effect(false);
    if (side != Side::Lower) up = effect(true);
    BoundReport r = make_report(Estimand::ATE, side, lo, up, confidence, relaxed, fits.treated, data.n());
    return r;
}

BoundReport att_bounds(const ObservedData& data, const FittedNuisance& control_fit, Side side, double confidence,
                       bool relaxed) {
    check_confidence(confidence);
    check_rcal_for_relaxed(control_fit, relaxed);
    const double n = static_cast<double>(data.n());
    const double tbar = static_cast<double>(data.treated_count()) / n;
    if (!(tbar > 0.0)) throw InputError("effect on the treated needs treated units");
    const ObservedData flipped = flip_for_mu0(data);
    const Vector& y = data.y();
    const Vector& t = data.t();
    auto effect = [&](bool upper) {
        // upper: nu1 - nu0-, lower: nu1 - nu0+; both equal E~{TY - phi0 + (1-T)Y}/E~(T)
        const bool control_plus = !upper;
        Vector phi0 = phi_values(flipped, control_fit, control_plus);
        double mu0 = phi0.mean();
        if (relaxed) mu0 += control_plus ? relaxation(control_fit, true) : -relaxation(control_fit, false);
        // TY + (1-T)Y - phi0
        const Vector a = y - phi0;
        const double num = a.mean() - (mu0 - phi0.mean());
        const double theta = num / tbar;
        Vector infl = (a.array() - a.mean() - theta * (t.array() - tbar)).matrix() / tbar;
        return SideEstimate{theta, std::move(infl)};
    };
    SideEstimate lo{0.0, Vector()}, up{0.0, Vector()};
    if (side != Side::Upper) lo = effect(false);
    if (side != Side::Lower) up = effect(true);
    return make_report(Estimand::ATT, side, lo, up, confidence, relaxed, control_fit, data.n());
}

double att_control_mean_eta_form(const ObservedData& data, const FittedNuisance& control_fit, bool plus_side) {
    const Vector eta = fitted_transformed_mean(data, control_fit, plus_side);
    double num = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) num += data.t()[i] * eta[i];
    return num / data.t().sum();
}

}  // namespace calsens
