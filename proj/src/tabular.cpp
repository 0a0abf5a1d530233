#include "itr/tabular.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <stdexcept>

namespace itr {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    bool quoted = false;
    for (std::size_t k = 0; k < line.size(); ++k) {
        const char ch = line[k];
        if (quoted) {
            if (ch == '"' && k + 1 < line.size() && line[k + 1] == '"') {
                cur.push_back('"');
                ++k;
            } else if (ch == '"') {
                quoted = false;
            } else {
                cur.push_back(ch);
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            cells.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    cells.push_back(trim(cur));
    return cells;
}

}  // namespace

std::size_t CsvTable::column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw std::invalid_argument("column '" + name + "' not found in header");
    return static_cast<std::size_t>(it - header.begin());
}

CsvTable read_csv(std::istream& in) {
    CsvTable t;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto cells = split_line(line);
        if (t.header.empty()) {
            t.header = std::move(cells);
            continue;
        }
        if (cells.size() != t.header.size()) {
            throw std::invalid_argument("csv line " + std::to_string(line_no) + ": expected " +
                                        std::to_string(t.header.size()) + " cells, found " +
                                        std::to_string(cells.size()));
        }
        t.rows.push_back(std::move(cells));
    }
    if (t.header.empty()) throw std::invalid_argument("csv: no header line");
    return t;
}

CsvTable read_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open data file '" + path + "'");
    return read_csv(in);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        const auto end = s.find(',', start);
        const auto piece = trim(s.substr(start, end == std::string::npos ? std::string::npos : end - start));
        if (!piece.empty()) out.push_back(piece);
        if (end == std::string::npos) break;
        start = end + 1;
    }
    return out;
}

TabularInput load_tabular(const CsvTable& table, const TabularSpec& spec) {
    if (spec.covariates.empty()) throw std::invalid_argument("no covariate columns given");
    std::vector<std::string> covs = spec.covariates;
    if (!spec.anchor.empty()) {
        const auto it = std::find(covs.begin(), covs.end(), spec.anchor);
        if (it == covs.end()) throw std::invalid_argument("anchor '" + spec.anchor + "' is not a listed covariate");
        std::rotate(covs.begin(), it, it + 1);
    }
    for (std::size_t k = 0; k < covs.size(); ++k) {
        if (std::count(covs.begin(), covs.end(), covs[k]) > 1) {
            throw std::invalid_argument("covariate '" + covs[k] + "' listed twice");
        }
    }

    const std::size_t ca = table.column(spec.treatment);
    const std::size_t cy = table.column(spec.outcome);
    std::vector<std::size_t> cx;
    for (const auto& c : covs) cx.push_back(table.column(c));

    const auto n = static_cast<Index>(table.rows.size());
    if (n == 0) throw std::invalid_argument("data file has no rows");
    const auto d = static_cast<Index>(covs.size());

    auto cell = [&](Index r, std::size_t c) {
        const std::string& s = table.rows[static_cast<std::size_t>(r)][c];
        const std::string where = "row " + std::to_string(r + 1) + ", column '" + table.header[c] + "'";
        if (s.empty() || s == "NA" || s == "NaN") throw std::invalid_argument("missing value at " + where);
        char* end = nullptr;
        errno = 0;
        const double v = std::strtod(s.c_str(), &end);
        if (end == s.c_str() || *end != '\0' || errno == ERANGE || !std::isfinite(v)) {
            throw std::invalid_argument("non-numeric value '" + s + "' at " + where);
        }
        return v;
    };

    MatrixXd x(n, d);
    VectorXd a(n), y(n);
    for (Index r = 0; r < n; ++r) {
        a(r) = cell(r, ca);
        if (a(r) != 0.0 && a(r) != 1.0) {
            throw std::invalid_argument("treatment at row " + std::to_string(r + 1) + ", column '" +
                                        spec.treatment + "' is not 0/1");
        }
        y(r) = cell(r, cy);
        for (Index j = 0; j < d; ++j) x(r, j) = cell(r, cx[static_cast<std::size_t>(j)]);
    }

    std::vector<bool> normalized(static_cast<std::size_t>(d), false);
    for (const auto& c : spec.continuous) {
        const auto it = std::find(covs.begin(), covs.end(), c);
        if (it == covs.end()) throw std::invalid_argument("continuous column '" + c + "' is not a covariate");
        normalized[static_cast<std::size_t>(it - covs.begin())] = true;
    }
    if (spec.continuous.empty() && spec.auto_continuous) {
        for (Index j = 0; j < d; ++j) {
            const bool binary = (x.col(j).array() == 0.0 || x.col(j).array() == 1.0).all();
            normalized[static_cast<std::size_t>(j)] = !binary;
        }
    }
    VectorXd center = VectorXd::Zero(d), scale = VectorXd::Ones(d);
    for (Index j = 0; j < d; ++j) {
        if (!normalized[static_cast<std::size_t>(j)]) continue;
        const double m = x.col(j).mean();
        const double sd = n > 1 ? std::sqrt((x.col(j).array() - m).square().sum() / static_cast<double>(n - 1)) : 0.0;
        if (!(sd > 0.0)) throw std::invalid_argument("column '" + covs[static_cast<std::size_t>(j)] + "' is constant and cannot be normalized");
        center(j) = m;
        scale(j) = sd;
        x.col(j) = (x.col(j).array() - m) / sd;
    }
    return TabularInput{Dataset(std::move(x), std::move(a), std::move(y)), covs, normalized, center, scale};
}

}  // namespace itr
