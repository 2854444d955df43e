#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dsc/common.hpp"

namespace dsc::csv {

struct Table {
    std::string path;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;  // raw cells
    std::vector<int> line_no;                    // file line of each row

    int col(const std::string& name) const {
        for (size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return int(i);
        throw ValidationError(strf("%s: missing column '%s'", path.c_str(), name.c_str()));
    }
};

inline std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

/// Parse a comma-separated table. '#' lines are comments; the first data
/// line is the header. Errors carry file:line for diagnostics.
inline Table read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path);
    Table t;
    t.path = path;
    std::string line;
    int ln = 0;
    while (std::getline(in, line)) {
        ++ln;
        std::string s = trim(line);
        if (s.empty() || s[0] == '#') continue;
        std::vector<std::string> cells;
        std::stringstream ss(s);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
        if (!s.empty() && s.back() == ',') cells.push_back("");
        if (t.header.empty()) {
            t.header = cells;
        } else {
            if (cells.size() != t.header.size())
                throw ValidationError(strf("%s:%d: expected %zu cells, got %zu", path.c_str(),
                                           ln, t.header.size(), cells.size()));
            t.rows.push_back(cells);
            t.line_no.push_back(ln);
        }
    }
    if (t.header.empty()) throw ValidationError(path + ": empty file");
    return t;
}

inline double to_double(const Table& t, size_t row, int col) {
    const std::string& s = t.rows[row][col];
    try {
        size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ValidationError(strf("%s:%d: bad number '%s' in column %d", t.path.c_str(),
                                   t.line_no[row], s.c_str(), col + 1));
    }
}

inline long to_long(const Table& t, size_t row, int col) {
    const std::string& s = t.rows[row][col];
    try {
        size_t pos = 0;
        long v = std::stol(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ValidationError(strf("%s:%d: bad integer '%s' in column %d", t.path.c_str(),
                                   t.line_no[row], s.c_str(), col + 1));
    }
}

/// Fixed-format float used by every CSV the toolkit emits, so that repeated
/// runs are byte-identical.
inline std::string fnum(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

}  // namespace dsc::csv
