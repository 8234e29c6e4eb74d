#include "calsens/core.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace calsens {

const char* to_string(Method m) {
    return m == Method::RCAL ? "RCAL" : "RML";
}

const char* to_string(OutcomeFamily f) {
    return f == OutcomeFamily::Linear ? "linear" : "logistic";
}

SensitivityLevel::SensitivityLevel(double lambda) : lambda_(lambda) {
    if (!std::isfinite(lambda) || lambda < 1.0) {
        std::ostringstream os;
        os << "sensitivity parameter must be a finite number >= 1, got " << lambda;
        throw InputError(os.str());
    }
    tau_ = lambda / (lambda + 1.0);
    span_ = lambda - 1.0 / lambda;
}

ObservedData::ObservedData(Vector y, Vector t, Matrix f, Matrix h, bool binary_outcome)
    : y_(std::move(y)), t_(std::move(t)), f_(std::move(f)), h_(std::move(h)), binary_(binary_outcome) {
    const auto n = y_.size();
    if (n == 0) throw InputError("empty sample");
    if (t_.size() != n || f_.rows() != n || h_.rows() != n)
        throw InputError("outcome, treatment and design matrices disagree on the number of rows");
    if (f_.cols() < 1 || h_.cols() < 1) throw InputError("design matrices need an intercept column");
    if (!y_.allFinite() || !f_.allFinite() || !h_.allFinite())
        throw InputError("non-finite values in outcome or design");
    for (Eigen::Index i = 0; i < n; ++i) {
        const double ti = t_[i];
        if (ti != 0.0 && ti != 1.0) {
            std::ostringstream os;
            os << "treatment indicator at row " << i << " is " << ti << ", expected 0 or 1";
            throw InputError(os.str());
        }
        if (f_(i, 0) != 1.0 || h_(i, 0) != 1.0)
            throw InputError("column 0 of each design matrix must be identically 1");
        if (binary_ && y_[i] != 0.0 && y_[i] != 1.0)
            throw InputError("binary outcome flag set but outcome takes values other than 0/1");
        if (ti == 1.0) ++n_treated_;
    }
    if (n_treated_ == 0 || n_treated_ == static_cast<std::size_t>(n))
        throw InputError("need at least one treated and one untreated unit");
}

ObservedData ObservedData::subset(const std::vector<std::size_t>& rows) const {
    const auto k = static_cast<Eigen::Index>(rows.size());
    Vector y(k), t(k);
    Matrix f(k, f_.cols()), h(k, h_.cols());
    for (Eigen::Index r = 0; r < k; ++r) {
        const auto i = static_cast<Eigen::Index>(rows[static_cast<std::size_t>(r)]);
        y[r] = y_[i];
        t[r] = t_[i];
        f.row(r) = f_.row(i);
        h.row(r) = h_.row(i);
    }
    return ObservedData(std::move(y), std::move(t), std::move(f), std::move(h), binary_);
}

CoefficientVector::CoefficientVector(Vector v) : values(std::move(v)), penalized_mask(values.size(), true) {
    if (!penalized_mask.empty()) penalized_mask[0] = false;
}

CoefficientVector CoefficientVector::zeros(std::size_t dim) {
    return CoefficientVector(Vector::Zero(static_cast<Eigen::Index>(dim)));
}

double CoefficientVector::penalized_l1() const {
    double s = 0.0;
    for (Eigen::Index j = 0; j < values.size(); ++j)
        if (penalized_mask[static_cast<std::size_t>(j)]) s += std::abs(values[j]);
    return s;
}

double tilde_y_plus(double y, double q, const SensitivityLevel& s) {
    return y + s.span() * check_loss(y, q, s.tau());
}

double tilde_y_minus(double y, double q, const SensitivityLevel& s) {
    return y - s.span() * check_loss(y, q, 1.0 - s.tau());
}

PropensityValues evaluate_propensity(const Matrix& f, const Vector& gamma) {
    PropensityValues out;
    const Vector eta = f * gamma;
    out.pi.resize(eta.size());
    out.inverse_weight.resize(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        double e = eta[i];
        if (e > kLinearPredictorLimit || e < -kLinearPredictorLimit) {
            e = std::clamp(e, -kLinearPredictorLimit, kLinearPredictorLimit);
            ++out.clamp_events;
        }
        const double w = std::exp(-e);
        out.inverse_weight[i] = w;
        out.pi[i] = 1.0 / (1.0 + w);
    }
    return out;
}

double propensity(const Eigen::Ref<const Eigen::RowVectorXd>& f_row, const CoefficientVector& gamma) {
    if (f_row.size() != gamma.values.size()) throw InputError("propensity: dimension mismatch");
    const double e = std::clamp(f_row.dot(gamma.values), -kLinearPredictorLimit, kLinearPredictorLimit);
    return 1.0 / (1.0 + std::exp(-e));
}

Matrix ColumnScaling::apply(const Matrix& x) const {
    Matrix out = x;
    for (Eigen::Index j = 1; j < x.cols(); ++j)
        out.col(j) = (x.col(j).array() - mean[j]) / scale[j];
    return out;
}

CoefficientVector ColumnScaling::to_original(const CoefficientVector& standardized) const {
    CoefficientVector out = standardized;
    double shift = 0.0;
    for (Eigen::Index j = 1; j < out.values.size(); ++j) {
        out.values[j] = standardized.values[j] / scale[j];
        shift += out.values[j] * mean[j];
    }
    out.values[0] = standardized.values[0] - shift;
    return out;
}

ColumnScaling fit_scaling(const Matrix& x) {
    ColumnScaling s;
    const auto n = static_cast<double>(x.rows());
    s.mean = Vector::Zero(x.cols());
    s.scale = Vector::Ones(x.cols());
    for (Eigen::Index j = 1; j < x.cols(); ++j) {
        const double mu = x.col(j).mean();
        const double var = (x.col(j).array() - mu).square().sum() / n;
        if (!(var > 0.0)) {
            std::ostringstream os;
            os << "design column " << j << " is constant and cannot be standardized";
            throw InputError(os.str());
        }
        s.mean[j] = mu;
        s.scale[j] = std::sqrt(var);
    }
    return s;
}

StandardizedData standardize(const ObservedData& data) {
    ColumnScaling fs = fit_scaling(data.f());
    ColumnScaling hs = fit_scaling(data.h());
    ObservedData d(data.y(), data.t(), fs.apply(data.f()), hs.apply(data.h()), data.binary_outcome());
    return StandardizedData{std::move(d), std::move(fs), std::move(hs)};
}

}  // namespace calsens
