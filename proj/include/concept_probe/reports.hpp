#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "concept_probe/diffnet.hpp"
#include "concept_probe/tcav.hpp"

namespace cprobe::reports {

inline constexpr std::string_view kToolVersion = "0.1.0";

/// "# concept-probe <version> config_hash=<hash>", without newline.
std::string provenance_line(std::string_view config_hash);

/// Short method labels used in tables and file names.
std::string_view method_label(cav::Method m);  // TCAV, A-TCAV, OA-TCAV
std::string_view method_tag(cav::Method m);    // tcav, a-tcav, oa-tcav

/// Fixed "%.6f"; locale independent.
std::string fmt(double v);

std::string sweep_csv(const tcav::SweepReport& report, std::string_view config_hash);
std::string sweep_json(const tcav::SweepReport& report, std::string_view config_hash);
tcav::SweepReport parse_sweep_json(const std::string& text);

std::string attack_csv(const tcav::AttackCurve& curve, std::string_view config_hash);

std::string training_log_csv(const std::vector<diffnet::EpochStats>& log, std::string_view config_hash);

/// Rows mean/std/min/max, one column per (concept, method) in report order.
std::string summary_csv(const std::vector<tcav::SweepReport>& reports, std::string_view config_hash);

/// Plain-text rendering of the same table for the terminal.
std::string summary_table(const std::vector<tcav::SweepReport>& reports);

/// Writes through a temporary file and renames it into place.
void write_file(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

}  // namespace cprobe::reports
