#include "calsens/analysis.hpp"
#include "calsens/certify.hpp"
#include "calsens/simulation.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

namespace {

using namespace calsens;

enum ExitCode { kOk = 0, kVerifyFailed = 1, kInputError = 2, kSolverError = 3 };

int default_threads() {
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

std::vector<double> parse_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw InputError("cannot parse number '" + item + "' in list '" + s + "'");
        }
    }
    if (out.empty()) throw InputError("empty list");
    return out;
}

std::vector<std::string> split(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

std::ofstream open_output(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot open '" + path + "' for writing");
    return out;
}

struct SimulateArgs {
    std::string config = "C1";
    int n = 800;
    int p = 10;
    int reps = 1;
    std::string methods = "rcal-relaxed,rml";
    std::string lambdas = "1,1.5,2";
    int grid_points = 11;
    double grid_step = 1.0;
    int folds = 5;
    long truth_n_mc = 4000000;
    std::string coverage_out;
    std::string replicates_out;
    bool quiet = false;
};

int cmd_simulate(const SimulateArgs& a, std::uint64_t seed, int threads) {
    ReplicationConfig cfg;
    cfg.dgp.config = parse_dgp_config(a.config);
    cfg.dgp.n = a.n;
    cfg.dgp.p = a.p;
    cfg.methods.clear();
    for (const std::string& m : split(a.methods)) cfg.methods.push_back(parse_sim_method(m));
    cfg.lambdas = parse_list(a.lambdas);
    for (double l : cfg.lambdas)
        if (!(l >= 1.0)) throw InputError("every Lambda must be >= 1");
    cfg.n_reps = a.reps;
    cfg.grid.n_points = a.grid_points;
    cfg.grid.step = a.grid_step;
    cfg.grid.n_folds = a.folds;
    cfg.base_seed = seed;
    cfg.threads = threads;
    cfg.truth_n_mc = a.truth_n_mc;
    if (!a.quiet)
        cfg.progress = [&](int done) { std::cerr << "\rreplicates " << done << "/" << a.reps << std::flush; };

    const ReplicationReport report = run_replications(cfg);
    if (!a.quiet) std::cerr << "\n";

    if (a.coverage_out.empty()) {
        write_coverage_csv(report, std::cout);
    } else {
        std::ofstream out = open_output(a.coverage_out);
        write_coverage_csv(report, out);
    }
    if (!a.replicates_out.empty()) {
        std::ofstream out = open_output(a.replicates_out);
        write_replicates_csv(report, out);
    }
    if (report.failures > 0) std::cerr << report.failures << " failed (replicate, method, Lambda) cells\n";
    return kOk;
}

struct VerifyArgs {
    VerifyOptions options;
    std::string only;
    std::string fault;
};

int cmd_verify(VerifyArgs a, std::uint64_t seed, int threads) {
    a.options.seed = seed;
    a.options.threads = threads;
    if (!a.fault.empty()) {
        if (a.fault != "weight") throw InputError("unknown fault '" + a.fault + "' (expected weight)");
        a.options.weight_fault = 0.2;
    }
    std::vector<CheckResult> results;
    const std::vector<std::string> wanted = split(a.only);
    auto want = [&](const std::string& name) {
        return wanted.empty() || std::find(wanted.begin(), wanted.end(), name) != wanted.end();
    };
    if (want("duality")) results.push_back(check_duality(a.options));
    if (want("kkt")) results.push_back(check_kkt(a.options));
    if (want("lambda-one")) results.push_back(check_lambda_one(a.options));
    if (want("population-orderings")) results.push_back(check_population_orderings(a.options));
    if (want("relaxation-monotone")) results.push_back(check_relaxation_monotone(a.options));
    if (results.empty()) throw InputError("--only selected no checks");

    bool ok = true;
    std::cout << std::left << std::setw(22) << "check" << std::setw(6) << "result" << "detail\n";
    for (const CheckResult& r : results) {
        std::cout << std::setw(22) << r.name << std::setw(6) << (r.passed ? "PASS" : "FAIL") << r.detail << "\n";
        ok = ok && r.passed;
    }
    return ok ? kOk : kVerifyFailed;
}

struct AnalyzeArgs {
    AnalysisConfig config;
    std::string covariates;
    std::string lambdas = "1";
    std::string output;
};

void write_json(const nlohmann::json& j, const std::string& path) {
    if (path.empty()) {
        std::cout << j.dump(2) << "\n";
        return;
    }
    std::ofstream out = open_output(path);
    out << j.dump(2) << "\n";
}

int cmd_analyze(AnalyzeArgs a, std::uint64_t seed, int threads) {
    a.config.covariates = split(a.covariates);
    a.config.lambdas = parse_list(a.lambdas);
    a.config.seed = seed;
    a.config.threads = threads;
    write_json(run_analysis(a.config), a.output);
    return kOk;
}

int cmd_regen_golden(const std::string& dir, int threads) {
    const std::string data = dir + "/data/tiny.csv";
    write_json(run_analysis(golden_analysis_config(data)), dir + "/golden/tiny_analysis.json");
    write_json(golden_oracle_report(threads), dir + "/golden/oracle_c1_lambda1.5.json");
    std::cerr << "wrote " << dir << "/golden/tiny_analysis.json and " << dir << "/golden/oracle_c1_lambda1.5.json\n";
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Doubly robust bounds on treatment effects under the marginal sensitivity model"};
    app.require_subcommand(1);
    app.fallthrough();
    std::uint64_t seed = 1;
    int threads = default_threads();
    app.add_option("--seed", seed, "Seed for every random stream")->capture_default_str();
    app.add_option("--threads", threads, "Worker threads (results do not depend on it)")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();

    SimulateArgs sim;
    CLI::App* simulate = app.add_subcommand("simulate", "Replicate a simulation design and report coverage");
    simulate->add_option("--config", sim.config, "C1, C2 or C3")->capture_default_str();
    simulate->add_option("--n", sim.n, "Sample size")->capture_default_str();
    simulate->add_option("--p", sim.p, "Number of covariates (>= 4)")->capture_default_str();
    simulate->add_option("--reps", sim.reps, "Replicates")->capture_default_str();
    simulate->add_option("--method", sim.methods, "Comma list of rcal, rcal-relaxed, rml, cal, ml")
        ->capture_default_str();
    simulate->add_option("--lambda", sim.lambdas, "Comma list of Lambda values")->capture_default_str();
    simulate->add_option("--grid-points", sim.grid_points, "Tuning grid size")->capture_default_str();
    simulate->add_option("--grid-step", sim.grid_step, "Grid ratio exponent: lambda*/2^(j*step)")
        ->capture_default_str();
    simulate->add_option("--folds", sim.folds, "Cross-validation folds")->capture_default_str();
    simulate->add_option("--truth-nmc", sim.truth_n_mc, "Draws for C3 sharp bounds")->capture_default_str();
    simulate->add_option("--coverage-out", sim.coverage_out, "Coverage CSV (default stdout)");
    simulate->add_option("--replicates-out", sim.replicates_out, "Per-replicate CSV");
    simulate->add_flag("--quiet", sim.quiet, "No progress output");

    AnalyzeArgs an;
    CLI::App* analyze = app.add_subcommand("analyze", "Bounds for mu1, mu0, ATE and ATT on a CSV dataset");
    analyze->add_option("--data", an.config.data_path, "CSV file with a header row")->required();
    analyze->add_option("--outcome", an.config.outcome, "Outcome column")->capture_default_str();
    analyze->add_option("--treatment", an.config.treatment, "0/1 treatment column")->capture_default_str();
    analyze->add_option("--covariates", an.covariates, "Comma list of covariate columns (default: all others)");
    analyze->add_flag("--interactions", an.config.interactions, "Add all two-way products of the covariates");
    analyze->add_option("--min-nonzero", an.config.min_nonzero, "Drop products with fewer nonzero entries")
        ->capture_default_str();
    analyze->add_option("--lambda", an.lambdas, "Comma list of Lambda values")->capture_default_str();
    analyze->add_option("--confidence", an.config.confidence, "One-sided and two-sided level")
        ->capture_default_str();
    analyze->add_option("--method", an.config.method, "rcal, rcal-relaxed or rml")->capture_default_str();
    analyze->add_option("--family", an.config.family, "linear or logistic outcome model")->capture_default_str();
    analyze->add_option("--grid-points", an.config.grid_points, "Tuning grid size")->capture_default_str();
    analyze->add_option("--grid-step", an.config.grid_step, "Grid ratio exponent: lambda*/2^(j*step)")
        ->capture_default_str();
    analyze->add_option("--folds", an.config.folds, "Cross-validation folds")->capture_default_str();
    analyze->add_option("--output", an.output, "JSON report (default stdout)");

    std::string golden_dir = "tests";
    CLI::App* regen = app.add_subcommand("regen-golden", "Rewrite the golden fixtures");
    regen->add_option("--dir", golden_dir, "Test directory holding data/ and golden/")->capture_default_str();

    VerifyArgs ver;
    CLI::App* verify = app.add_subcommand("verify", "Run the certification suite and print a pass/fail table");
    verify->add_option("--instances", ver.options.instances, "Random duality instances")->capture_default_str();
    verify->add_option("--nmax", ver.options.n_max, "Largest duality instance")->capture_default_str();
    verify->add_option("--mmax", ver.options.m_max, "Most moment columns")->capture_default_str();
    verify->add_option("--kkt-fits", ver.options.kkt_fits, "Simulated fits for the KKT identities")
        ->capture_default_str();
    verify->add_option("--samples", ver.options.monotone_samples, "Samples for the relaxation path")
        ->capture_default_str();
    verify->add_option("--nmc", ver.options.population_n_mc, "Draws for the population orderings")
        ->capture_default_str();
    verify->add_option("--only", ver.only,
                       "Comma list of duality, kkt, lambda-one, population-orderings, relaxation-monotone");
    verify->add_option("--inject-fault", ver.fault, "Deliberate fault that must make verification fail: weight");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kInputError;
    }

    try {
        if (simulate->parsed()) return cmd_simulate(sim, seed, threads);
        if (verify->parsed()) return cmd_verify(ver, seed, threads);
        if (analyze->parsed()) return cmd_analyze(an, seed, threads);
        if (regen->parsed()) return cmd_regen_golden(golden_dir, threads);
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kInputError;
    } catch (const SolverError& e) {
        std::cerr << "solver failure [" << e.stage() << "]: " << e.what() << "\n";
        return kSolverError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kSolverError;
    }
    return kOk;
}
