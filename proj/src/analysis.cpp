#include "calsens/analysis.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>
#include <thread>

namespace calsens {

using nlohmann::json;

namespace {

std::string where(const std::string& source, int line) {
    return source + ":" + std::to_string(line) + ": ";
}

}  // namespace

CsvTable read_csv(std::istream& in, const std::string& source) {
    CsvTable table;
    table.source = source;
    std::vector<std::string> record;
    std::string field;
    bool quoted = false, field_started = false, any = false;
    int line = 1, record_line = 1;
    auto end_field = [&] {
        record.push_back(field);
        field.clear();
        field_started = false;
    };
    auto end_record = [&] {
        end_field();
        if (table.header.empty()) {
            table.header = record;
        } else if (!(record.size() == 1 && record[0].empty())) {
            if (record.size() != table.header.size())
                throw InputError(where(source, record_line) + "expected " + std::to_string(table.header.size()) +
                                 " fields, found " + std::to_string(record.size()));
            table.rows.push_back(record);
            table.line.push_back(record_line);
        }
        record.clear();
        any = false;
    };
    char c;
    while (in.get(c)) {
        if (!any) {
            record_line = line;
            any = true;
        }
        if (quoted) {
            if (c == '"') {
                if (in.peek() == '"') {
                    in.get(c);
                    field.push_back('"');
                } else {
                    quoted = false;
                }
            } else {
                if (c == '\n') ++line;
                field.push_back(c);
            }
            continue;
        }
        if (c == '"') {
            if (field_started) throw InputError(where(source, line) + "quote inside an unquoted field");
            quoted = true;
            field_started = true;
        } else if (c == ',') {
            end_field();
        } else if (c == '\r') {
            if (in.peek() != '\n') throw InputError(where(source, line) + "bare carriage return");
        } else if (c == '\n') {
            end_record();
            ++line;
        } else {
            field.push_back(c);
            field_started = true;
        }
    }
    if (quoted) throw InputError(where(source, record_line) + "unterminated quoted field");
    if (any) end_record();
    if (table.header.empty()) throw InputError(source + ": empty file (a header row is required)");
    if (!table.header.empty() && table.header[0].rfind("\xEF\xBB\xBF", 0) == 0) table.header[0].erase(0, 3);
    for (std::size_t j = 0; j < table.header.size(); ++j) {
        if (table.header[j].empty()) throw InputError(where(source, 1) + "empty column name");
        for (std::size_t k = 0; k < j; ++k)
            if (table.header[k] == table.header[j])
                throw InputError(where(source, 1) + "duplicate column '" + table.header[j] + "'");
    }
    return table;
}

CsvTable read_csv_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path + "'");
    return read_csv(in, path);
}

Eigen::Index CsvTable::column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw InputError("column '" + name + "' not found in the header");
    return static_cast<Eigen::Index>(it - header.begin());
}

Vector CsvTable::numeric(const std::string& name) const {
    const Eigen::Index j = column(name);
    Vector v(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const std::string& cell = rows[i][static_cast<std::size_t>(j)];
        if (cell.empty()) throw InputError(where(source, line[i]) + "missing value in column '" + name + "'");
        std::size_t used = 0;
        double x = 0.0;
        try {
            x = std::stod(cell, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
        if (used != cell.size() || !std::isfinite(x))
            throw InputError(where(source, line[i]) + "column '" + name + "' holds non-numeric value '" + cell + "'");
        v[static_cast<Eigen::Index>(i)] = x;
    }
    return v;
}

void AnalysisConfig::validate() const {
    if (lambdas.empty()) throw InputError("at least one Lambda is required");
    for (double l : lambdas)
        if (!(l >= 1.0)) throw InputError("every Lambda must be >= 1");
    if (!(confidence > 0.0 && confidence < 1.0)) throw InputError("confidence must lie in (0, 1)");
    if (method != "rcal" && method != "rcal-relaxed" && method != "rml")
        throw InputError("method must be rcal, rcal-relaxed or rml");
    if (family != "linear" && family != "logistic") throw InputError("family must be linear or logistic");
    if (min_nonzero < 0) throw InputError("the interaction filter threshold must be >= 0");
    if (threads < 1) throw InputError("threads must be >= 1");
}

json AnalysisConfig::to_json() const {
    return json{{"data", data_path},
                {"outcome", outcome},
                {"treatment", treatment},
                {"covariates", covariates},
                {"interactions", interactions},
                {"min_nonzero", min_nonzero},
                {"lambdas", lambdas},
                {"confidence", confidence},
                {"method", method},
                {"family", family},
                {"grid_points", grid_points},
                {"grid_step", grid_step},
                {"folds", folds},
                {"seed", seed}};
}

Design build_design(const CsvTable& table, const AnalysisConfig& config) {
    std::vector<std::string> names = config.covariates;
    if (names.empty())
        for (const std::string& h : table.header)
            if (h != config.outcome && h != config.treatment) names.push_back(h);
    if (names.empty()) throw InputError("no covariate columns selected");
    for (const std::string& n : names)
        if (n == config.outcome || n == config.treatment)
            throw InputError("column '" + n + "' cannot be both a covariate and the outcome or treatment");

    const Eigen::Index rows = static_cast<Eigen::Index>(table.rows.size());
    std::vector<Vector> cols;
    Design d;
    for (const std::string& n : names) {
        Vector v = table.numeric(n);
        if (v.maxCoeff() == v.minCoeff()) throw InputError("covariate '" + n + "' is constant");
        cols.push_back(std::move(v));
        d.names.push_back(n);
    }
    if (config.interactions) {
        const std::size_t p = names.size();
        for (std::size_t a = 0; a < p; ++a)
            for (std::size_t b = a + 1; b < p; ++b) {
                Vector v = cols[a].cwiseProduct(cols[b]);
                const std::string name = names[a] + ":" + names[b];
                const long nonzero = static_cast<long>((v.array() != 0.0).count());
                if (nonzero < config.min_nonzero || v.maxCoeff() == v.minCoeff()) {
                    d.dropped.push_back(name);
                    continue;
                }
                cols.push_back(std::move(v));
                d.names.push_back(name);
            }
    }
    d.x.resize(rows, static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) d.x.col(static_cast<Eigen::Index>(j)) = cols[j];
    return d;
}

namespace {

json stage_json(const StageFit& s) {
    json j{{"lambda", s.lambda},
           {"converged", s.diagnostics.converged},
           {"iterations", s.diagnostics.iterations_used},
           {"objective", s.diagnostics.final_objective},
           {"kkt_violation", s.diagnostics.kkt_max_violation},
           {"nonzero", static_cast<long>((s.coef.values.tail(s.coef.values.size() - 1).array() != 0.0).count())}};
    if (s.cv) j["lambda_star"] = s.cv->lambda_star;
    return j;
}

json nuisance_json(const FittedNuisance& f) {
    return json{{"gamma", stage_json(f.gamma)},
                {"beta_plus", stage_json(f.plus.beta)},
                {"alpha_plus", stage_json(f.plus.alpha)},
                {"beta_minus", stage_json(f.minus.beta)},
                {"alpha_minus", stage_json(f.minus.alpha)}};
}

json report_json(const BoundReport& r) {
    const double n = static_cast<double>(r.n);
    return json{{"estimand", to_string(r.estimand)},
                {"side", to_string(r.side)},
                {"confidence", r.confidence},
                {"point_lower", r.point_lower},
                {"point_upper", r.point_upper},
                {"se_lower", std::sqrt(r.variance_lower / n)},
                {"se_upper", std::sqrt(r.variance_upper / n)},
                {"ci_lower", r.ci.lower},
                {"ci_upper", r.ci.upper},
                {"relaxed", r.relaxed}};
}

}  // namespace

json run_analysis(const CsvTable& table, const AnalysisConfig& config) {
    config.validate();
    const Vector y = table.numeric(config.outcome);
    const Vector t = table.numeric(config.treatment);
    for (Eigen::Index i = 0; i < t.size(); ++i)
        if (t[i] != 0.0 && t[i] != 1.0)
            throw InputError(where(table.source, table.line[static_cast<std::size_t>(i)]) + "treatment must be 0 or 1");
    const bool binary = config.family == "logistic";
    if (binary)
        for (Eigen::Index i = 0; i < y.size(); ++i)
            if (y[i] != 0.0 && y[i] != 1.0)
                throw InputError(where(table.source, table.line[static_cast<std::size_t>(i)]) +
                                 "the logistic family needs a 0/1 outcome");

    const Design design = build_design(table, config);
    Matrix f(design.x.rows(), design.x.cols() + 1);
    f.col(0).setOnes();
    f.rightCols(design.x.cols()) = design.x;
    const ObservedData raw(y, t, f, f, binary);
    const ObservedData data = standardize(raw).data;
    const ObservedData flipped = flip_for_mu0(data);

    const Method method = config.method == "rml" ? Method::RML : Method::RCAL;
    const bool relaxed = config.method == "rcal-relaxed";
    const OutcomeFamily family = binary ? OutcomeFamily::Logistic : OutcomeFamily::Linear;
    TuningGrid grid;
    grid.n_points = config.grid_points;
    grid.step = config.grid_step;
    grid.n_folds = config.folds;
    grid.fold_seed = config.seed;
    grid.validate();
    const SolverSettings settings;

    const std::vector<int> folds = make_folds(data, grid.n_folds, grid.fold_seed);
    const std::vector<int> folds0 = make_folds(flipped, grid.n_folds, grid.fold_seed);
    const StageFit gamma1 = fit_propensity(data, method, grid, folds, settings);
    const StageFit gamma0 = fit_propensity(flipped, method, grid, folds0, settings);

    const std::size_t k = config.lambdas.size();
    std::vector<json> per_lambda(k);
    std::vector<std::exception_ptr> errors(k);
    auto work = [&](std::size_t first, std::size_t stride) {
        for (std::size_t i = first; i < k; i += stride) {
            try {
                const SensitivityLevel s(config.lambdas[i]);
                const EffectFits fits{fit_sides(data, gamma1, s, method, family, grid, folds, settings),
                                      fit_sides(flipped, gamma0, s, method, family, grid, folds0, settings)};
                if (!fits.treated.all_finite() || !fits.control.all_finite())
                    throw SolverError("analysis", "non-finite coefficients");
                json bounds = json::array();
                for (Side side : {Side::Lower, Side::Upper, Side::TwoSided}) {
                    bounds.push_back(report_json(variance_and_ci(data, fits.treated, side, config.confidence, relaxed)));
                    bounds.push_back(report_json(mu0_bounds(data, fits.control, side, config.confidence, relaxed)));
                    bounds.push_back(report_json(ate_bounds(data, fits, side, config.confidence, relaxed)));
                    bounds.push_back(report_json(att_bounds(data, fits.control, side, config.confidence, relaxed)));
                }
                per_lambda[i] = json{{"lambda", config.lambdas[i]},
                                     {"fits", {{"treated", nuisance_json(fits.treated)},
                                               {"control", nuisance_json(fits.control)}}},
                                     {"bounds", bounds}};
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t threads = std::min<std::size_t>(static_cast<std::size_t>(config.threads), k);
    if (threads <= 1) {
        work(0, 1);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < threads; ++w) pool.emplace_back(work, w, threads);
        for (auto& th : pool) th.join();
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    return json{{"schema", kAnalysisSchema},
                {"config", config.to_json()},
                {"data",
                 {{"n", data.n()},
                  {"n_treated", data.treated_count()},
                  {"covariates", design.names},
                  {"dropped_interactions", design.dropped}}},
                {"method", config.method},
                {"results", per_lambda}};
}

json run_analysis(const AnalysisConfig& config) {
    return run_analysis(read_csv_file(config.data_path), config);
}

}  // namespace calsens
