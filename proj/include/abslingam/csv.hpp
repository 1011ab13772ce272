#pragma once

#include <Eigen/Dense>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace abslingam {

/// Numeric matrix as CSV with a header row; doubles printed with %.17g so
/// a round trip is exact.
inline void write_csv(const std::string& path, const Eigen::MatrixXd& data,
                      const std::string& column_prefix) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_csv: cannot open " + path);
    for (int c = 0; c < data.cols(); ++c) {
        if (c) out << ',';
        out << column_prefix << c;
    }
    out << '\n';
    char buf[40];
    for (int r = 0; r < data.rows(); ++r) {
        for (int c = 0; c < data.cols(); ++c) {
            if (c) out << ',';
            std::snprintf(buf, sizeof(buf), "%.17g", data(r, c));
            out << buf;
        }
        out << '\n';
    }
    if (!out) throw std::runtime_error("write_csv: write failed for " + path);
}

inline Eigen::MatrixXd read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("read_csv: empty file " + path);
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        if (!rows.empty() && row.size() != rows.front().size())
            throw std::runtime_error("read_csv: ragged rows in " + path);
        rows.push_back(std::move(row));
    }
    const int n_rows = static_cast<int>(rows.size());
    const int n_cols = n_rows ? static_cast<int>(rows.front().size()) : 0;
    Eigen::MatrixXd data(n_rows, n_cols);
    for (int r = 0; r < n_rows; ++r)
        for (int c = 0; c < n_cols; ++c)
            data(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
    return data;
}

}  // namespace abslingam
