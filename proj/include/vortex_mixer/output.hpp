/// @file output.hpp
/// @brief Result files: NDJSON streams, CSV tables and two-column plot data,
///        each written to a temporary file in the target directory and
///        renamed into place.
#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <unistd.h>

#include "vortex_mixer/config.hpp"

namespace vortex {

inline constexpr const char* kArtifactVersion = "1.0.0";
inline constexpr int kSchemaVersion = 1;

/// %.17g, with non-finite values spelled out.
inline std::string fmt_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

/// Writes the whole payload to dir/.name.tmp.<pid> and renames it over dir/name.
inline void write_atomic(const std::filesystem::path& file, const std::string& payload) {
    namespace fs = std::filesystem;
    const fs::path dir = file.has_parent_path() ? file.parent_path() : fs::path(".");
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory '" + dir.string() + "': " + ec.message());
    const fs::path tmp = dir / ("." + file.filename().string() + ".tmp." + std::to_string(::getpid()));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open '" + tmp.string() + "' for writing");
        out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
        out.flush();
        if (!out) {
            out.close();
            fs::remove(tmp, ec);
            throw std::runtime_error("write failed for '" + tmp.string() + "'");
        }
    }
    fs::rename(tmp, file, ec);
    if (ec) {
        std::error_code ignore;
        fs::remove(tmp, ignore);
        throw std::runtime_error("cannot rename into '" + file.string() + "': " + ec.message());
    }
}

inline json header_record(const RunConfig& c, const std::string& subcommand) {
    return {{"record", "header"},
            {"artifact_version", kArtifactVersion},
            {"schema_version", kSchemaVersion},
            {"subcommand", subcommand},
            {"config", to_json(c)},
            {"config_hash", config_hash(c)},
            {"seed", c.seed}};
}

/// Finite doubles as numbers, the rest as strings, so every line stays valid JSON.
inline json num(double x) { return std::isfinite(x) ? json(x) : json(fmt_double(x)); }

class NdjsonBuffer {
public:
    void add(const json& j) {
        text_ += j.dump();
        text_ += '\n';
    }
    [[nodiscard]] const std::string& text() const { return text_; }

private:
    std::string text_;
};

class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> columns) : cols_(std::move(columns)) {}

    /// Cells are written verbatim; use cell() for numbers.
    void row(const std::vector<std::string>& cells) {
        if (cells.size() != cols_.size()) throw std::logic_error("csv: row width does not match the header");
        rows_.push_back(cells);
    }

    static std::string cell(double x) { return fmt_double(x); }
    static std::string cell(std::size_t x) { return std::to_string(x); }
    static std::string cell(bool b) { return b ? "true" : "false"; }
    static std::string cell(const std::string& s) {
        if (s.find_first_of(",\"\n") == std::string::npos) return s;
        std::string q = "\"";
        for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
        return q + "\"";
    }

    /// Comment lines carrying the version and hash precede the header row.
    [[nodiscard]] std::string text(const RunConfig& c, const std::string& subcommand) const {
        std::string s = "# vortex-mixer " + std::string(kArtifactVersion) + " schema " + std::to_string(kSchemaVersion) + " " +
                        subcommand + " config_hash=" + config_hash(c) + " seed=" + std::to_string(c.seed) + "\n";
        for (std::size_t i = 0; i < cols_.size(); ++i) s += (i ? "," : "") + cols_[i];
        s += '\n';
        for (const auto& r : rows_) {
            for (std::size_t i = 0; i < r.size(); ++i) s += (i ? "," : "") + r[i];
            s += '\n';
        }
        return s;
    }

    [[nodiscard]] std::size_t size() const { return rows_.size(); }

private:
    std::vector<std::string> cols_;
    std::vector<std::vector<std::string>> rows_;
};

/// Two whitespace-separated columns, no header.
inline std::string plot_data(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw std::logic_error("plot data: column lengths differ");
    std::string s;
    for (std::size_t i = 0; i < x.size(); ++i) s += fmt_double(x[i]) + " " + fmt_double(y[i]) + "\n";
    return s;
}

}  // namespace vortex
