#pragma once

#include "calsens/bounds.hpp"

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace calsens {

inline constexpr const char* kAnalysisSchema = "calsens.analysis/v1";

/// RFC-4180 table held as text. `line` records the physical line on which
/// each record starts, for error messages.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<int> line;
    std::string source = "data";  // file name used in messages

    Eigen::Index column(const std::string& name) const;  // throws InputError if absent
    /// Parses a column as numbers; empty or malformed cells raise InputError with the line number.
    Vector numeric(const std::string& name) const;
};

CsvTable read_csv(std::istream& in, const std::string& source = "data");
CsvTable read_csv_file(const std::string& path);

struct AnalysisConfig {
    std::string data_path;
    std::string outcome = "y";
    std::string treatment = "t";
    std::vector<std::string> covariates;  // empty: every other column
    bool interactions = false;
    int min_nonzero = 0;                  // interaction columns with fewer nonzero entries are dropped
    std::vector<double> lambdas{1.0};
    double confidence = 0.95;
    std::string method = "rcal";          // rcal, rcal-relaxed, rml
    std::string family = "linear";        // linear, logistic
    int grid_points = 11;
    double grid_step = 1.0;
    int folds = 5;
    std::uint64_t seed = 1;
    int threads = 1;

    void validate() const;
    nlohmann::json to_json() const;
};

/// Covariate block: main effects, then two-way products kept by the filter.
struct Design {
    Matrix x;
    std::vector<std::string> names;
    std::vector<std::string> dropped;  // interaction columns removed by the filter or for being constant
};

Design build_design(const CsvTable& table, const AnalysisConfig& config);

/// Reads the data, fits both arms at every Lambda and returns the report:
/// bounds for mu1, mu0, ATE and ATT on each side plus the two-sided interval,
/// tuning parameters and fit diagnostics.
nlohmann::json run_analysis(const AnalysisConfig& config);

/// Same, on an already loaded table (data_path is only echoed).
nlohmann::json run_analysis(const CsvTable& table, const AnalysisConfig& config);

}  // namespace calsens
