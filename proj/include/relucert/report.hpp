#pragma once

#include <cmath>
#include <fstream>
#include <optional>
#include <string>

#include <json.hpp>

#include "relucert/certify.hpp"
#include "relucert/errors.hpp"
#include "relucert/oracle.hpp"

namespace relucert {

inline constexpr int kReportSchemaVersion = 1;

inline nlohmann::json certificate_to_json(const Certificate& c) {
  nlohmann::json j{
      {"method", to_string(c.method)},
      {"p", to_string(c.p)},
      {"true_class", c.true_class},
      {"radius", std::isfinite(c.radius) ? nlohmann::json(c.radius)
                                         : nlohmann::json(nullptr)},
      {"iterations", c.iterations},
      {"bracket", {{"safe", c.bracket_safe},
                   {"unsafe", c.bracket_unsafe ? nlohmann::json(*c.bracket_unsafe)
                                               : nlohmann::json(nullptr)}}},
      {"misclassified", c.misclassified},
      {"unbounded", c.unbounded},
      {"wall_ms", c.wall_ms},
  };
  j["target_class"] = c.target_class ? nlohmann::json(*c.target_class)
                                     : nlohmann::json(nullptr);
  return j;
}

inline nlohmann::json oracle_to_json(const OracleResult& r) {
  const char* kind = "";
  switch (r.kind) {
    case OracleResult::Kind::grid_min: kind = "grid-min"; break;
    case OracleResult::Kind::pattern_enum: kind = "pattern-enum"; break;
    case OracleResult::Kind::attack_upper: kind = "attack-upper"; break;
    case OracleResult::Kind::sample_check: kind = "sample-check"; break;
  }
  nlohmann::json j{
      {"kind", kind},
      {"found", r.found},
      {"value", std::isfinite(r.value) ? nlohmann::json(r.value)
                                       : nlohmann::json(nullptr)},
      {"samples", r.samples},
  };
  if (!r.found) j["searched_radius"] = r.searched_radius;
  if (r.witness) j["witness"] = *r.witness;
  return j;
}

// Reports are emitted in one canonical form (sorted keys, two-space indent,
// trailing newline) so that parse + re-emit is byte-identical.
inline std::string canonical_report_text(const nlohmann::json& report) {
  return report.dump(2) + "\n";
}

inline void write_report(const nlohmann::json& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write report: " + path);
  out << canonical_report_text(report);
}

}  // namespace relucert
