#pragma once

#include <string>
#include <vector>

namespace holo::io {

// Minimal CSV writer with locale-independent %.12g formatting.
class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> columns) : columns_(std::move(columns)) {}

    void add_row(const std::vector<double>& values);
    void add_row_mixed(const std::vector<std::string>& values);
    std::string str() const;
    void save(const std::string& path) const;

    static std::string format(double v);

private:
    std::vector<std::string> columns_;
    std::vector<std::vector<std::string>> rows_;
};

} // namespace holo::io
