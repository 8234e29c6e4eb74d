#pragma once

#include "calsens/bounds.hpp"
#include "calsens/dgp.hpp"
#include "calsens/pipeline.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace calsens {

/// Methods compared in the simulation. CAL and ML are the unpenalized
/// versions (lambda fixed at 0) of RCAL and RML.
enum class SimMethod { RCAL, RCALRelaxed, RML, CAL, ML };

const char* to_string(SimMethod m);
SimMethod parse_sim_method(const std::string& s);

struct SharpBounds {
    double lambda = 1.0;
    double lower = 0.0;
    double upper = 0.0;
    double se = 0.0;  // Monte Carlo SE (0 when computed by quadrature)
};

/// E[1 - pi*(X)] for C1/C2 by one-dimensional quadrature.
double expected_untreated_share(DgpConfig config);
/// E[m*(X)] in closed form.
double expected_true_mean(DgpConfig config);

/// Sharp population bounds E m* -/+ span phi(z_tau) E(1 - pi*). C1 and C2 use
/// quadrature; C3 estimates E(1 - pi*) from n_mc draws.
SharpBounds true_sharp_bounds(const DgpSpec& dgp, const SensitivityLevel& s, long n_mc = 4000000,
                              std::uint64_t seed = 20240611);

struct ReplicationConfig {
    DgpSpec dgp;
    std::vector<SimMethod> methods{SimMethod::RCALRelaxed, SimMethod::RML};
    std::vector<double> lambdas{1.0, 1.5, 2.0};
    int n_reps = 1;
    TuningGrid grid;
    SolverSettings settings;
    std::uint64_t base_seed = 1;
    int threads = 1;
    double one_sided_confidence = 0.95;
    double two_sided_confidence = 0.90;
    long truth_n_mc = 4000000;
    std::function<void(int)> progress;  // called with the number of finished replicates
};

struct ReplicateRecord {
    int replicate = 0;
    std::uint64_t seed = 0;
    SimMethod method = SimMethod::RCAL;
    double lambda = 1.0;
    bool failed = false;
    std::string error;
    double point_lower = 0.0;
    double point_upper = 0.0;
    double se_lower = 0.0;
    double se_upper = 0.0;
    double ci_lower = 0.0;      // one-sided lower endpoint
    double ci_upper = 0.0;      // one-sided upper endpoint
    double ci_two_lower = 0.0;  // two-sided interval
    double ci_two_upper = 0.0;
    bool cover_lower = false;
    bool cover_upper = false;
    bool cover_two = false;
};

struct CoverageRow {
    SimMethod method = SimMethod::RCAL;
    double lambda = 1.0;
    Side side = Side::Lower;
    double coverage = 0.0;
    double mc_se = 0.0;
    int n_ok = 0;
    int n_failed = 0;
    double truth = 0.0;       // target bound (NaN for two-sided)
    double mean_point = 0.0;  // NaN for two-sided
    double sd_point = 0.0;
    double bias = 0.0;
};

struct ReplicationReport {
    DgpSpec dgp;
    int n_reps = 0;
    int failures = 0;  // failed (replicate, method, Lambda) cells
    std::vector<SharpBounds> truths;
    std::vector<ReplicateRecord> records;  // ordered by replicate, method, Lambda
    std::vector<CoverageRow> coverage;

    const CoverageRow& row(SimMethod m, double lambda, Side side) const;
};

/// Seed of replicate r.
std::uint64_t replicate_seed(std::uint64_t base_seed, int r);

ReplicationReport run_replications(const ReplicationConfig& config);

void write_coverage_csv(const ReplicationReport& report, std::ostream& out);
void write_replicates_csv(const ReplicationReport& report, std::ostream& out);

}  // namespace calsens
