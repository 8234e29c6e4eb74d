#include "calsens/dgp.hpp"

#include <algorithm>
#include <cmath>

namespace calsens {

namespace {
constexpr double kCoef[4] = {1.0, 0.5, 0.25, 0.125};
}

const char* to_string(DgpConfig c) {
    switch (c) {
        case DgpConfig::C1: return "C1";
        case DgpConfig::C2: return "C2";
        case DgpConfig::C3: return "C3";
    }
    return "?";
}

DgpConfig parse_dgp_config(const std::string& s) {
    if (s == "C1" || s == "c1") return DgpConfig::C1;
    if (s == "C2" || s == "c2") return DgpConfig::C2;
    if (s == "C3" || s == "c3") return DgpConfig::C3;
    throw InputError("unknown configuration '" + s + "' (expected C1, C2 or C3)");
}

void DgpSpec::validate() const {
    if (p < 4) throw InputError("simulation designs need p >= 4");
    if (n < 4) throw InputError("simulation designs need n >= 4");
}

double dagger(double x) {
    const double a = std::max(x + 1.0, 0.0);
    return x + a * a;
}

void draw_covariates(Rng& rng, Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> row) {
    const double c = std::sqrt(0.75);
    row[0] = rng.normal();
    for (Eigen::Index j = 1; j < row.size(); ++j) row[j] = 0.5 * row[j - 1] + c * rng.normal();
}

namespace {
double index(const Eigen::Ref<const Eigen::RowVectorXd>& x, bool transformed) {
    double s = 0.0;
    for (int j = 0; j < 4; ++j) s += kCoef[j] * (transformed ? dagger(x[j]) : x[j]);
    return s;
}
}  // namespace

double true_propensity(DgpConfig config, const Eigen::Ref<const Eigen::RowVectorXd>& x) {
    const double lin = 1.0 + index(x, config == DgpConfig::C3);
    return 1.0 / (1.0 + std::exp(-lin));
}

double true_mean(DgpConfig config, const Eigen::Ref<const Eigen::RowVectorXd>& x) {
    return index(x, config == DgpConfig::C2);
}

DgpSample generate_sample(const DgpSpec& dgp) {
    dgp.validate();
    Rng rng(dgp.seed);
    const Eigen::Index n = dgp.n, p = dgp.p;
    Matrix x(n, p);
    Vector t(n), y(n), pi(n), m(n);
    for (;;) {
        for (Eigen::Index i = 0; i < n; ++i) {
            draw_covariates(rng, x.row(i));
            pi[i] = true_propensity(dgp.config, x.row(i));
            m[i] = true_mean(dgp.config, x.row(i));
            t[i] = rng.uniform() < pi[i] ? 1.0 : 0.0;
            y[i] = m[i] + rng.normal();
        }
        const double nt = t.sum();
        if (nt > 0.0 && nt < static_cast<double>(n)) break;
    }
    Matrix f(n, p + 1);
    f.col(0).setOnes();
    f.rightCols(p) = x;
    DgpSample s{ObservedData(y, t, f, f), std::move(x), std::move(pi), std::move(m)};
    return s;
}

ObservedData generate(const DgpSpec& dgp) {
    return generate_sample(dgp).data;
}

}  // namespace calsens
