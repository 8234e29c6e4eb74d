#include "calsens/analysis.hpp"
#include "calsens/certify.hpp"
#include "calsens/lp_oracle.hpp"
#include "calsens/simulation.hpp"

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>
#include <sstream>

namespace py = pybind11;
using namespace calsens;

namespace {

DgpSpec make_dgp(const std::string& config, int n, int p, std::uint64_t seed) {
    DgpSpec d;
    d.config = parse_dgp_config(config);
    d.n = n;
    d.p = p;
    d.seed = seed;
    d.validate();
    return d;
}

PrimalBoundProblem make_problem(const Vector& y, const Vector& t, const Matrix& h, const Vector& weights,
                                double lambda, double relax_slack, bool maximize) {
    PrimalBoundProblem pb;
    pb.y = y;
    pb.t = t;
    pb.h = h;
    pb.weights = weights;
    pb.lambda = lambda;
    pb.relax_slack = relax_slack;
    pb.maximize = maximize;
    return pb;
}

AnalysisConfig make_analysis_config(const py::dict& kw) {
    AnalysisConfig c;
    for (auto item : kw) {
        const std::string key = py::cast<std::string>(item.first);
        const py::handle v = item.second;
        if (key == "outcome") c.outcome = py::cast<std::string>(v);
        else if (key == "treatment") c.treatment = py::cast<std::string>(v);
        else if (key == "covariates") c.covariates = py::cast<std::vector<std::string>>(v);
        else if (key == "interactions") c.interactions = py::cast<bool>(v);
        else if (key == "min_nonzero") c.min_nonzero = py::cast<int>(v);
        else if (key == "lambdas") c.lambdas = py::cast<std::vector<double>>(v);
        else if (key == "confidence") c.confidence = py::cast<double>(v);
        else if (key == "method") c.method = py::cast<std::string>(v);
        else if (key == "family") c.family = py::cast<std::string>(v);
        else if (key == "grid_points") c.grid_points = py::cast<int>(v);
        else if (key == "grid_step") c.grid_step = py::cast<double>(v);
        else if (key == "folds") c.folds = py::cast<int>(v);
        else if (key == "seed") c.seed = py::cast<std::uint64_t>(v);
        else if (key == "threads") c.threads = py::cast<int>(v);
        else throw InputError("unknown analysis option '" + key + "'");
    }
    return c;
}

py::dict to_dict(const CheckResult& r) {
    py::dict d;
    d["name"] = r.name;
    d["passed"] = r.passed;
    d["cases"] = r.cases;
    d["failures"] = r.failures;
    d["worst"] = r.worst;
    d["tolerance"] = r.tolerance;
    d["detail"] = r.detail;
    d["failed_labels"] = r.failed_labels;
    return d;
}

}  // namespace

PYBIND11_MODULE(_calsens, m) {
    m.doc() = "Doubly robust sensitivity bounds under the marginal sensitivity model";

    auto input_error = py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
    auto solver_error = py::register_exception<SolverError>(m, "SolverError", PyExc_RuntimeError);
    (void)input_error;
    (void)solver_error;

    m.attr("ANALYSIS_SCHEMA") = kAnalysisSchema;

    py::class_<SensitivityLevel>(m, "SensitivityLevel")
        .def(py::init<double>(), py::arg("lam"))
        .def_property_readonly("lam", &SensitivityLevel::lambda)
        .def_property_readonly("tau", &SensitivityLevel::tau)
        .def_property_readonly("span", &SensitivityLevel::span);

    m.def(
        "analyze_csv",
        [](const std::string& text, const std::string& source, const py::dict& kw) {
            std::istringstream in(text);
            const CsvTable table = read_csv(in, source);
            AnalysisConfig c = make_analysis_config(kw);
            c.data_path = source;
            py::gil_scoped_release release;
            return run_analysis(table, c).dump();
        },
        py::arg("text"), py::arg("source") = "data", py::arg("options") = py::dict(),
        "Runs the analysis on CSV text and returns the JSON report as a string.");

    m.def(
        "analyze_file",
        [](const std::string& path, const py::dict& kw) {
            AnalysisConfig c = make_analysis_config(kw);
            c.data_path = path;
            py::gil_scoped_release release;
            return run_analysis(c).dump();
        },
        py::arg("path"), py::arg("options") = py::dict());

    m.def(
        "generate",
        [](const std::string& config, int n, int p, std::uint64_t seed) {
            const DgpSample s = generate_sample(make_dgp(config, n, p, seed));
            py::dict d;
            d["y"] = s.data.y();
            d["t"] = s.data.t();
            d["x"] = s.x;
            d["true_pi"] = s.true_pi;
            d["true_mean"] = s.true_mean;
            return d;
        },
        py::arg("config") = "C1", py::arg("n") = 800, py::arg("p") = 10, py::arg("seed") = 1);

    m.def(
        "sharp_bounds",
        [](const std::string& config, double lam, int p, long n_mc, std::uint64_t seed) {
            const SharpBounds b = true_sharp_bounds(make_dgp(config, 800, p, seed), SensitivityLevel(lam), n_mc, seed);
            return py::make_tuple(b.lower, b.upper, b.se);
        },
        py::arg("config"), py::arg("lam"), py::arg("p") = 10, py::arg("n_mc") = 4000000,
        py::arg("seed") = kGoldenOracleSeed, "Population (lower, upper, Monte Carlo SE) of mu1.");

    m.def(
        "population_bound",
        [](const std::string& config, double lam, int p, long n_mc, std::uint64_t seed, bool upper, int threads) {
            const OracleEstimate e = population_bound_oracle(make_dgp(config, 800, p, seed), SensitivityLevel(lam),
                                                             QuantileSpec::sharp(), n_mc, seed, upper, threads);
            return py::make_tuple(e.value, e.se);
        },
        py::arg("config"), py::arg("lam"), py::arg("p") = 10, py::arg("n_mc") = 1000000, py::arg("seed") = 1,
        py::arg("upper") = true, py::arg("threads") = 1);

    m.def(
        "primal_bound",
        [](const Vector& y, const Vector& t, const Matrix& h, const Vector& weights, double lam, double relax_slack,
           bool maximize) {
            const PrimalBoundResult r = solve_primal_bound(make_problem(y, t, h, weights, lam, relax_slack, maximize));
            return py::make_tuple(r.value, r.lambda1);
        },
        py::arg("y"), py::arg("t"), py::arg("h"), py::arg("weights"), py::arg("lam"), py::arg("relax_slack") = 0.0,
        py::arg("maximize") = true, "Sample bound LP over the multipliers; returns (value, multipliers).");

    m.def(
        "dual_bound",
        [](const Vector& y, const Vector& t, const Matrix& h, const Vector& weights, double lam, double relax_slack,
           bool maximize) { return dual_bound_value(make_problem(y, t, h, weights, lam, relax_slack, maximize)); },
        py::arg("y"), py::arg("t"), py::arg("h"), py::arg("weights"), py::arg("lam"), py::arg("relax_slack") = 0.0,
        py::arg("maximize") = true);

    m.def(
        "simulate",
        [](const std::string& config, int n, int p, int reps, const std::vector<std::string>& methods,
           const std::vector<double>& lambdas, std::uint64_t seed, int grid_points, double grid_step, int folds,
           long truth_n_mc, int threads) {
            ReplicationConfig c;
            c.dgp = make_dgp(config, n, p, seed);
            c.methods.clear();
            for (const std::string& s : methods) c.methods.push_back(parse_sim_method(s));
            c.lambdas = lambdas;
            c.n_reps = reps;
            c.grid.n_points = grid_points;
            c.grid.step = grid_step;
            c.grid.n_folds = folds;
            c.base_seed = seed;
            c.truth_n_mc = truth_n_mc;
            c.threads = threads;
            ReplicationReport r;
            {
                py::gil_scoped_release release;
                r = run_replications(c);
            }
            std::ostringstream cov, reps_csv;
            write_coverage_csv(r, cov);
            write_replicates_csv(r, reps_csv);
            return py::make_tuple(cov.str(), reps_csv.str(), r.failures);
        },
        py::arg("config") = "C1", py::arg("n") = 800, py::arg("p") = 10, py::arg("reps") = 1,
        py::arg("methods") = std::vector<std::string>{"rcal-relaxed", "rml"},
        py::arg("lambdas") = std::vector<double>{1.0, 1.5, 2.0}, py::arg("seed") = 1, py::arg("grid_points") = 11,
        py::arg("grid_step") = 1.0, py::arg("folds") = 5, py::arg("truth_n_mc") = 4000000, py::arg("threads") = 1,
        "Runs replications; returns (coverage CSV, replicates CSV, failed cells).");

    m.def(
        "verify",
        [](const std::vector<std::string>& only, int instances, int kkt_fits, int samples, long n_mc,
           std::uint64_t seed, int threads) {
            VerifyOptions o;
            o.instances = instances;
            o.kkt_fits = kkt_fits;
            o.monotone_samples = samples;
            o.population_n_mc = n_mc;
            o.seed = seed;
            o.threads = threads;
            py::list out;
            auto want = [&](const std::string& name) {
                return only.empty() || std::find(only.begin(), only.end(), name) != only.end();
            };
            std::vector<CheckResult> results;
            {
                py::gil_scoped_release release;
                if (want("duality")) results.push_back(check_duality(o));
                if (want("kkt")) results.push_back(check_kkt(o));
                if (want("lambda-one")) results.push_back(check_lambda_one(o));
                if (want("population-orderings")) results.push_back(check_population_orderings(o));
                if (want("relaxation-monotone")) results.push_back(check_relaxation_monotone(o));
            }
            for (const CheckResult& r : results) out.append(to_dict(r));
            return out;
        },
        py::arg("only") = std::vector<std::string>{}, py::arg("instances") = 200, py::arg("kkt_fits") = 50,
        py::arg("samples") = 20, py::arg("n_mc") = 100000, py::arg("seed") = 1, py::arg("threads") = 1);
}
