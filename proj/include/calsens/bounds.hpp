#pragma once

#include "calsens/core.hpp"
#include "calsens/pipeline.hpp"

#include <cstddef>

namespace calsens {

enum class Estimand { Mu1, Mu0, ATE, ATT };
enum class Side { Lower, Upper, TwoSided };

const char* to_string(Estimand e);
const char* to_string(Side s);

struct Interval {
    double lower;
    double upper;
};

/// Point bound(s), variance(s) and Wald interval for one estimand at one level.
/// One-sided reports fill only the fields of their side; the others are NaN.
struct BoundReport {
    Estimand estimand = Estimand::Mu1;
    Side side = Side::Upper;
    double sensitivity = 1.0;
    double point_lower;
    double point_upper;
    double variance_lower;
    double variance_upper;
    Interval ci;
    bool relaxed = false;
    Method method = Method::RCAL;
    std::size_t n = 0;
    double confidence = 0.95;
};

/// phi_+ (plus_side) or phi_- for one unit given pi, the fitted quantile q and
/// the fitted conditional mean eta of the transformed outcome.
double phi_value(double y, double t, double pi, double q, double eta, const SensitivityLevel& s, bool plus_side);

/// Per-unit estimating-function values for a fitted nuisance triple.
Vector phi_values(const ObservedData& data, const FittedNuisance& fit, bool plus_side);

double phi_plus(const ObservedData& data, std::size_t i, const FittedNuisance& fit);
double phi_minus(const ObservedData& data, std::size_t i, const FittedNuisance& fit);

/// Fitted eta(X_i) of the transformed outcome on the requested side.
Vector fitted_transformed_mean(const ObservedData& data, const FittedNuisance& fit, bool plus_side);

/// Sample mean of phi_+ (Upper) or phi_- (Lower). TwoSided is rejected.
double point_bound(const ObservedData& data, const FittedNuisance& fit, Side side);

/// Upper: point + span * lambda_beta * |b_{1:m}|_1; Lower: point - the same with the minus-side fit.
double relaxed_point_bound(const ObservedData& data, const FittedNuisance& fit, Side side);

/// Wald interval for mu^1. For TwoSided, confidence is the overall level and
/// each side uses z_{c/2}.
BoundReport variance_and_ci(const ObservedData& data, const FittedNuisance& fit, Side side, double confidence,
                            bool relaxed = false);

/// t -> 1 - t. The mu^0 bounds are the mu^1 bounds of the flipped data.
ObservedData flip_for_mu0(const ObservedData& data);

/// Fits for mu^1 on the data and for mu^0 on the flipped data at one level.
struct EffectFits {
    FittedNuisance treated;
    FittedNuisance control;
};

BoundReport mu0_bounds(const ObservedData& data, const FittedNuisance& control_fit, Side side, double confidence,
                       bool relaxed = false);

/// ATE lower = mu^1- - mu^0+, upper = mu^1+ - mu^0-, variance of the differenced phi.
BoundReport ate_bounds(const ObservedData& data, const EffectFits& fits, Side side, double confidence,
                       bool relaxed = false);

/// Effect on the treated: nu^1 - nu^0(+/-), nu^0 = {mu^0 - E(1-T)Y}/E(T).
BoundReport att_bounds(const ObservedData& data, const FittedNuisance& control_fit, Side side, double confidence,
                       bool relaxed = false);

/// The same control-arm bound in the eta-average form E~{T eta_0}/E~(T).
double att_control_mean_eta_form(const ObservedData& data, const FittedNuisance& control_fit, bool plus_side);

}  // namespace calsens
