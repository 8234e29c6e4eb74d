#pragma once

#include "calsens/core.hpp"
#include "calsens/random.hpp"

#include <cstdint>
#include <string>

namespace calsens {

enum class DgpConfig { C1, C2, C3 };

const char* to_string(DgpConfig c);
DgpConfig parse_dgp_config(const std::string& s);

/// Simulation design: AR(1) Gaussian covariates with cov(X_j, X_k) = 2^{-|j-k|}.
///   C1: logit P(T=1|X) and E(Y|X) both linear in X_1..X_4.
///   C2: as C1 but the outcome mean uses X^dag.
///   C3: as C1 but the propensity uses X^dag.
/// Y given T=0 follows the same law as Y given T=1 (an extension used only for mu^0 / ATE).
struct DgpSpec {
    DgpConfig config = DgpConfig::C1;
    int n = 800;
    int p = 10;
    std::uint64_t seed = 1;

    void validate() const;
};

/// X^dag = x + ((x + 1)_+)^2.
double dagger(double x);

/// Draws one covariate row (length p) from the AR(1) factorization.
void draw_covariates(Rng& rng, Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> row);

double true_propensity(DgpConfig config, const Eigen::Ref<const Eigen::RowVectorXd>& x);
double true_mean(DgpConfig config, const Eigen::Ref<const Eigen::RowVectorXd>& x);

struct DgpSample {
    ObservedData data;
    Matrix x;          // raw covariates, n x p
    Vector true_pi;
    Vector true_mean;
};

DgpSample generate_sample(const DgpSpec& dgp);

/// Observed data with f = h = (1, X_1..X_p).
ObservedData generate(const DgpSpec& dgp);

}  // namespace calsens
