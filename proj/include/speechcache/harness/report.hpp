/* Copyright 2026 The SpeechCache Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef SPEECHCACHE_HARNESS_REPORT_HPP_
#define SPEECHCACHE_HARNESS_REPORT_HPP_

#include <cstdio>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "speechcache/error.hpp"
#include "speechcache/harness/benchmark.hpp"

namespace speechcache::harness {

namespace detail {

inline std::string cell(const nlohmann::json& v, int digits = 3) {
  if (v.is_null()) return "-";
  if (v.is_number_integer() || v.is_number_unsigned()) return v.dump();
  if (v.is_number()) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v.get<double>());
    return buf;
  }
  return v.is_string() ? v.get<std::string>() : v.dump();
}

inline void metric_row(std::ostringstream& o, const std::string& label, const nlohmann::json& m) {
  o << "| " << label << " | " << cell(m.at("inputs")) << " | " << cell(m.at("l1_filter_rate"))
    << " | " << cell(m.at("l1_cache_accuracy")) << " | " << cell(m.at("l2_filter_rate")) << " | "
    << cell(m.at("l2_cache_accuracy")) << " | " << cell(m.at("filter_rate")) << " | "
    << cell(m.at("accuracy")) << " | " << cell(m.at("mean_latency_ms"), 1) << " | "
    << cell(m.at("energy_mj"), 1) << " |\n";
}

}  // namespace detail

// Markdown tables for a JSON report.
inline std::string render_markdown(const nlohmann::json& report) {
  SC_CHECK(report.value("format", "") == "speechcache-report", ErrorCode::kFormat,
           "not a benchmark report");
  SC_CHECK(report.value("version", 0) == kReportVersion, ErrorCode::kFormat,
           "unsupported report version");
  std::ostringstream o;
  o << "## " << report.at("setting").at("name").get<std::string>() << " (seed "
    << report.at("seed").dump() << ")\n\n";
  o << "| scope | inputs | L1 FR | L1 CA | L2 FR | L2 CA | FR | accuracy | latency ms | energy mJ |\n"
    << "|---|---|---|---|---|---|---|---|---|---|\n";
  detail::metric_row(o, "all", report.at("metrics"));
  for (const auto& s : report.at("per_speaker")) {
    detail::metric_row(o, s.at("speaker").get<std::string>(), s);
  }
  const auto& ops = report.at("ops_budget");
  const auto& ref = ops.at("reference");
  o << "\n| ops | this config | reference |\n|---|---|---|\n"
    << "| L1 per step (MOps) | " << detail::cell(ops.at("l1_step_mops"), 2) << " | "
    << detail::cell(ref.at("l1_step_mops"), 2) << " |\n"
    << "| L2 per step (MOps) | " << detail::cell(ops.at("l2_step_mops"), 2) << " | "
    << detail::cell(ref.at("l2_step_mops"), 2) << " |\n"
    << "| L1 per entry (KOps) | " << detail::cell(ops.at("l1_entry_kops"), 2) << " | "
    << detail::cell(ref.at("l1_entry_kops"), 2) << " |\n"
    << "| L2 per entry (KOps) | " << detail::cell(ops.at("l2_entry_kops"), 2) << " | "
    << detail::cell(ref.at("l2_entry_kops"), 2) << " |\n";
  return o.str();
}

// Plain aligned text, one metric per line.
inline std::string render_text(const nlohmann::json& report) {
  SC_CHECK(report.value("format", "") == "speechcache-report", ErrorCode::kFormat,
           "not a benchmark report");
  std::ostringstream o;
  o << "setting " << report.at("setting").at("name").get<std::string>() << "  seed "
    << report.at("seed").dump() << "\n";
  const auto& m = report.at("metrics");
  for (auto it = m.begin(); it != m.end(); ++it) {
    char line[96];
    std::snprintf(line, sizeof line, "  %-20s %s\n", it.key().c_str(), detail::cell(*it, 4).c_str());
    o << line;
  }
  return o.str();
}

}  // namespace speechcache::harness

#endif  // SPEECHCACHE_HARNESS_REPORT_HPP_
