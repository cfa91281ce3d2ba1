#ifndef MICH_CSV_HPP
#define MICH_CSV_HPP

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mich/errors.hpp"

namespace mich {

struct CsvError : std::runtime_error {
    CsvError(const std::string& msg, std::size_t line)
        : std::runtime_error(msg + " (line " + std::to_string(line) + ")"), line(line) {}
    std::size_t line;
};

// Numeric table, one column per series, rows in time order. A single
// non-numeric first row is treated as a header.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> columns;

    std::size_t rows() const { return columns.empty() ? 0 : columns[0].size(); }
    std::size_t cols() const { return columns.size(); }
};

namespace detail {

inline bool parse_double(const std::string& s, double& out) {
    const char* b = s.data();
    const char* e = s.data() + s.size();
    while (b < e && (*b == ' ' || *b == '\t')) ++b;
    while (e > b && (*(e - 1) == ' ' || *(e - 1) == '\t' || *(e - 1) == '\r')) --e;
    if (b == e) return false;
    auto [ptr, ec] = std::from_chars(b, e, out);
    return ec == std::errc{} && ptr == e;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            cells.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    cells.push_back(cur);
    return cells;
}

}  // namespace detail

inline CsvTable read_csv(std::istream& in) {
    CsvTable table;
    std::string line;
    std::size_t lineno = 0;
    bool first_content = true;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        auto cells = detail::split_csv_line(line);
        std::vector<double> values(cells.size());
        bool numeric = true;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (!detail::parse_double(cells[i], values[i])) {
                numeric = false;
                break;
            }
        }
        if (first_content && !numeric) {
            table.header = cells;
            first_content = false;
            continue;
        }
        if (!numeric) throw CsvError("non-numeric cell", lineno);
        for (double v : values)
            if (!std::isfinite(v)) throw CsvError("non-finite value", lineno);
        if (table.columns.empty()) {
            table.columns.resize(cells.size());
        } else if (cells.size() != table.columns.size()) {
            throw CsvError("inconsistent column count", lineno);
        }
        for (std::size_t i = 0; i < values.size(); ++i) table.columns[i].push_back(values[i]);
        first_content = false;
    }
    if (table.columns.empty() || table.columns[0].empty())
        throw CsvError("no data rows", lineno);
    return table;
}

inline CsvTable read_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return read_csv(in);
}

}  // namespace mich

#endif  // MICH_CSV_HPP
