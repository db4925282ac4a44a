#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "perchom/operator.hpp"

namespace perchom {

// "PERCFLD v1": ASCII header, then little-endian float64 per vertex in
// canonical (row-major) order. Off-cluster vertices carry 0; the cluster mask
// travels in a sidecar file at <path>.mask.
struct FieldFile {
    int d = 2;
    Coord sides{0, 0, 0};
    double t = 0.0;
    Coord y{0, 0, 0};
    std::string method = "uniformization";
    Field values;
    std::vector<std::uint8_t> mask;
};

void save_field(const FieldFile& f, const std::string& path);
FieldFile load_field(const std::string& path);

// FNV-1a 64-bit, used for the run manifest.
std::uint64_t fnv1a64_file(const std::string& path);

void write_text_atomic(const std::string& path, const std::string& content);

std::string format_double(double v); // shortest round-trip (%.17g)

// Minimal CSV writer: fixed column set, deterministic formatting.
struct CsvWriter {
    explicit CsvWriter(std::vector<std::string> columns);
    void row(const std::vector<double>& values);
    void row_mixed(const std::vector<std::string>& values);
    std::string str() const;

private:
    std::string buf;
    std::size_t n_cols;
};

} // namespace perchom
