#pragma once

// CSV and manifest output. Numbers use the shortest round-trip representation,
// so reruns with the same inputs are byte-identical.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "common.hpp"

namespace mightloc::io {

inline std::string fmt(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc()) return "nan";
    return std::string(buf, end);
}

inline std::string fmt(long long v) { return std::to_string(v); }
inline std::string fmt(int v) { return std::to_string(v); }
inline std::string fmt(std::size_t v) { return std::to_string(v); }
inline std::string fmt(const std::string& s) { return s; }
inline std::string fmt(const char* s) { return s; }

class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header) : out_(path) {
        if (!out_) throw Error("cannot write '" + path.string() + "'");
        row_vec(header);
    }

    template <class... Ts>
    void row(const Ts&... cells) {
        std::vector<std::string> v{fmt(cells)...};
        row_vec(v);
    }

    void row_vec(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ << ',';
            out_ << cells[i];
        }
        out_ << '\n';
    }

private:
    std::ofstream out_;
};

/// Square matrix with a leading id column and header row.
inline void write_matrix(const std::filesystem::path& path, std::span<const int> ids,
                         const std::vector<std::vector<double>>& m) {
    std::vector<std::string> header{"tx"};
    for (int id : ids) header.push_back("tx" + std::to_string(id));
    CsvWriter csv(path, header);
    for (std::size_t i = 0; i < m.size(); ++i) {
        std::vector<std::string> cells{std::to_string(ids[i])};
        for (double v : m[i]) cells.push_back(fmt(v));
        csv.row_vec(cells);
    }
}

/// key = value lines, in insertion order.
class Manifest {
public:
    void set(const std::string& key, const std::string& value) {
        for (auto& e : entries_)
            if (e.first == key) {
                e.second = value;
                return;
            }
        entries_.emplace_back(key, value);
    }
    void set(const std::string& key, double value) { set(key, fmt(value)); }

    void write(const std::filesystem::path& path) const {
        std::ofstream out(path);
        if (!out) throw Error("cannot write '" + path.string() + "'");
        out << "version = " << kVersion << '\n';
        for (const auto& [k, v] : entries_) out << k << " = " << v << '\n';
    }

private:
    std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace mightloc::io
