#include "holofocus/io/csv.hpp"

#include <cstdio>
#include <fstream>

#include "holofocus/common.hpp"

namespace holo::io {

std::string CsvWriter::format(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

void CsvWriter::add_row(const std::vector<double>& values) {
    std::vector<std::string> row;
    row.reserve(values.size());
    for (double v : values) row.push_back(format(v));
    rows_.push_back(std::move(row));
}

void CsvWriter::add_row_mixed(const std::vector<std::string>& values) { rows_.push_back(values); }

std::string CsvWriter::str() const {
    std::string out;
    for (size_t i = 0; i < columns_.size(); ++i) {
        if (i) out.push_back(',');
        out += columns_[i];
    }
    out.push_back('\n');
    for (const auto& row : rows_) {
        for (size_t i = 0; i < row.size(); ++i) {
            if (i) out.push_back(',');
            out += row[i];
        }
        out.push_back('\n');
    }
    return out;
}

void CsvWriter::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    f << str();
}

} // namespace holo::io
