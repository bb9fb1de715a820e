#pragma once

#include "trackdiff/bench.hpp"

#include <filesystem>
#include <iosfwd>

namespace trackdiff {

/// Column order of the report CSV.
const std::vector<std::string>& report_columns();

void write_report_csv(std::ostream& os, const MseReport& report);
MseReport read_report_csv(std::istream& is);

void write_report_csv_file(const std::filesystem::path& path, const MseReport& report);
MseReport read_report_csv_file(const std::filesystem::path& path);

/// MSE [dB] against 1/r^2 [dB], one polyline per (scenario, variant, filter) series.
std::string render_report_svg(const MseReport& report, const std::string& title = "MSE [dB]");

/// Writes <stem>.csv and/or <stem>.svg under `dir`.
void emit_report(const MseReport& report, const std::filesystem::path& dir, const std::string& stem, bool csv,
                 bool svg);

} // namespace trackdiff
