#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace calsens {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Bad user input: malformed data, out-of-range parameters. CLI exit code 2.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A numerical routine failed. `stage` names the estimation step that failed.
class SolverError : public std::runtime_error {
public:
    SolverError(std::string stage, const std::string& what)
        : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}
    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

enum class Method { RCAL, RML };
enum class OutcomeFamily { Linear, Logistic };

const char* to_string(Method m);
const char* to_string(OutcomeFamily f);

/// Sensitivity parameter Lambda >= 1 of the marginal sensitivity model,
/// together with the derived quantile level tau = Lambda/(Lambda+1) and the
/// span Lambda - 1/Lambda.
class SensitivityLevel {
public:
    explicit SensitivityLevel(double lambda);

    double lambda() const noexcept { return lambda_; }
    double tau() const noexcept { return tau_; }
    double span() const noexcept { return span_; }
    double inverse() const noexcept { return 1.0 / lambda_; }

private:
    double lambda_;
    double tau_;
    double span_;
};

/// Observed sample {(Y_i, T_i, X_i)} with the two design matrices.
/// `f` feeds the propensity and outcome-mean models, `h` the quantile models.
/// Column 0 of both is the constant 1.
class ObservedData {
public:
    ObservedData(Vector y, Vector t, Matrix f, Matrix h, bool binary_outcome = false);

    std::size_t n() const noexcept { return static_cast<std::size_t>(y_.size()); }
    std::size_t p() const noexcept { return static_cast<std::size_t>(f_.cols()) - 1; }
    std::size_t m() const noexcept { return static_cast<std::size_t>(h_.cols()) - 1; }

    const Vector& y() const noexcept { return y_; }
    const Vector& t() const noexcept { return t_; }
    const Matrix& f() const noexcept { return f_; }
    const Matrix& h() const noexcept { return h_; }
    bool binary_outcome() const noexcept { return binary_; }

    bool treated(std::size_t i) const { return t_[static_cast<Eigen::Index>(i)] > 0.5; }
    std::size_t treated_count() const noexcept { return n_treated_; }

    /// Rows selected by `rows`, in the given order.
    ObservedData subset(const std::vector<std::size_t>& rows) const;

private:
    Vector y_;
    Vector t_;
    Matrix f_;
    Matrix h_;
    bool binary_;
    std::size_t n_treated_ = 0;
};

/// Coefficients (index 0 = intercept). The intercept is never penalized.
struct CoefficientVector {
    Vector values;
    std::vector<bool> penalized_mask;

    CoefficientVector() = default;
    explicit CoefficientVector(Vector v);
    static CoefficientVector zeros(std::size_t dim);

    std::size_t size() const noexcept { return static_cast<std::size_t>(values.size()); }
    double penalized_l1() const;
    bool all_finite() const { return values.allFinite(); }
};

// check function rho_tau(y, u) = tau (y-u)_+ + (1-tau) (u-y)_+
inline double check_loss(double y, double u, double tau) {
    const double r = y - u;
    return r > 0.0 ? tau * r : (tau - 1.0) * r;
}

double tilde_y_plus(double y, double q, const SensitivityLevel& s);
double tilde_y_minus(double y, double q, const SensitivityLevel& s);

/// |f^T gamma| is clamped here before exponentiating.
inline constexpr double kLinearPredictorLimit = 30.0;

/// Propensity pi = logistic(f^T gamma) and inverse weight w = (1-pi)/pi = exp(-f^T gamma)
/// for every row, evaluated with the overflow guard.
struct PropensityValues {
    Vector pi;
    Vector inverse_weight;
    int clamp_events = 0;
};

PropensityValues evaluate_propensity(const Matrix& f, const Vector& gamma);
double propensity(const Eigen::Ref<const Eigen::RowVectorXd>& f_row, const CoefficientVector& gamma);

/// Affine map from standardized to original columns (columns 1.. only).
struct ColumnScaling {
    Vector mean;   // length = cols, entry 0 unused (0)
    Vector scale;  // length = cols, entry 0 unused (1)

    Matrix apply(const Matrix& x) const;
    /// Coefficients fitted on standardized columns, expressed on original columns.
    CoefficientVector to_original(const CoefficientVector& standardized) const;
};

ColumnScaling fit_scaling(const Matrix& x);

struct StandardizedData {
    ObservedData data;
    ColumnScaling f_scaling;
    ColumnScaling h_scaling;
};

/// Center and scale non-intercept columns of f and h to mean 0, variance 1.
StandardizedData standardize(const ObservedData& data);

}  // namespace calsens
