#pragma once

#include "calsens/analysis.hpp"
#include "calsens/core.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace calsens {

/// Outcome of one certification check over a batch of cases.
struct CheckResult {
    std::string name;
    bool passed = true;
    int cases = 0;
    int failures = 0;
    double worst = 0.0;      // largest violation seen (check-specific units)
    double tolerance = 0.0;
    std::string detail;
    std::vector<std::string> failed_labels;  // first few failing cases
};

struct VerifyOptions {
    int instances = 200;     // random duality instances
    int n_max = 60;
    int m_max = 5;
    int kkt_fits = 50;
    int monotone_samples = 20;
    long population_n_mc = 100000;
    std::uint64_t seed = 1;
    int threads = 1;
    /// Relative perturbation applied to the weights seen by the dual side of
    /// the duality check. Nonzero values exist to prove the check can fail.
    double weight_fault = 0.0;
};

/// Primal LP value against the dual formula at the fitted quantile-regression
/// coefficients on random instances (n <= n_max, m <= m_max, Lambda in
/// {1.2, 1.5, 2}, lambda_beta in {0, 0.05, 0.2}, both sides). Tolerance 1e-6.
CheckResult check_duality(const VerifyOptions& opt);

/// Calibrated propensity identities on simulated fits at the cross-validated
/// penalty: (1/n) sum T/pi = 1 within 1e-6, each balance gap within
/// lambda_gamma + 1e-6, and the imputation form of the bound within 1e-8.
CheckResult check_kkt(const VerifyOptions& opt);

/// At Lambda = 1 the upper and lower point bounds agree to 1e-12.
CheckResult check_lambda_one(const VerifyOptions& opt);

/// Population inequalities on C1 and C2 with population_n_mc draws: the
/// chain mu^{1-}(q) <= mu^{1-} <= E m* <= mu^{1+} <= mu^{1+}(q) for linear
/// q, the weighted/unweighted coefficient ordering, and monotonicity in
/// Lambda; each within 4 Monte Carlo standard errors.
CheckResult check_population_orderings(const VerifyOptions& opt);

/// The relaxed upper bound (primal LP) is nondecreasing along an increasing
/// lambda_beta grid on monotone_samples simulated samples.
CheckResult check_relaxation_monotone(const VerifyOptions& opt);

std::vector<CheckResult> run_verification(const VerifyOptions& opt);

// ---------------------------------------------------------------------------
// Golden fixtures, rewritten only by `calsens regen-golden`.

inline constexpr std::uint64_t kGoldenOracleSeed = 20240611;
inline constexpr long kGoldenOracleDraws = 10000000;

/// Configuration of the frozen analysis of the bundled n = 20 dataset.
AnalysisConfig golden_analysis_config(const std::string& data_path);

/// C1 population bounds at Lambda = 1.5 (p = 10, sharp quantile) from
/// kGoldenOracleDraws draws with kGoldenOracleSeed.
nlohmann::json golden_oracle_report(int threads = 1);

}  // namespace calsens
