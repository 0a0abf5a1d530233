#pragma once

#include "itr/dataset.hpp"

#include <istream>
#include <string>
#include <vector>

namespace itr {

/// Header plus string cells. Rows must have as many cells as the header.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(const std::string& name) const;  // throws if absent
};

/// Reads comma-separated text with a header line. Double-quoted cells may hold commas.
CsvTable read_csv(std::istream& in);
CsvTable read_csv_file(const std::string& path);

struct TabularSpec {
    std::string treatment;
    std::string outcome;
    std::vector<std::string> covariates;  // the anchor is moved to the front
    std::string anchor;                   // empty: first listed covariate
    /// Columns to standardize. Empty means every covariate not confined to {0, 1}.
    std::vector<std::string> continuous;
    bool auto_continuous = true;
};

struct TabularInput {
    Dataset data;
    std::vector<std::string> covariates;  // order used in the design, anchor first
    std::vector<bool> normalized;
    VectorXd center;  // subtracted before scaling (0 when not normalized)
    VectorXd scale;   // divisor (1 when not normalized)
};

/// Builds a dataset. Empty or non-numeric cells are rejected with the 1-based data
/// row and the column name in the message; the treatment must be 0/1.
TabularInput load_tabular(const CsvTable& table, const TabularSpec& spec);

/// Comma-separated names, whitespace trimmed.
std::vector<std::string> split_list(const std::string& s);

}  // namespace itr
