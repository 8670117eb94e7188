#pragma once

// Serialization: JSON for audit records and the rationality model, plain CSV
// for tabular exports. Numbers are written with round-trip precision so reruns
// are byte-identical.

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "phri/errors.hpp"
#include "phri/harness/config.hpp"
#include "phri/relevance.hpp"
#include "phri/session.hpp"

namespace phri::harness {

inline constexpr int kRecordSchemaVersion = 1;
inline constexpr int kModelSchemaVersion = 1;

inline std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline json to_json(const FeatureAudit& f) {
  json j{{"name", f.name}, {"beta_hat", f.beta_hat}, {"effort_optimal", f.effort_optimal},
         {"converged", f.converged}, {"gate", f.gate}};
  j["p_relevant"] = f.p_relevant ? json(*f.p_relevant) : json(nullptr);
  return j;
}

inline json to_json(const AuditRecord& r) {
  json feats = json::array();
  for (const auto& f : r.features) feats.push_back(to_json(f));
  return json{{"sequence", r.sequence},
              {"waypoint_index", r.waypoint_index},
              {"rule", r.rule},
              {"torque", detail::from_vec(r.torque)},
              {"effort_observed", r.effort_observed},
              {"features", feats},
              {"delta_phi", detail::from_vec(r.delta_phi)},
              {"theta_before", detail::from_vec(r.theta_before)},
              {"theta_after", detail::from_vec(r.theta_after)},
              {"update_method", r.update_method},
              {"update_residual", r.update_residual},
              {"update_fell_back", r.update_fell_back},
              {"replan_converged", r.replan_converged},
              {"error", r.error}};
}

inline json to_json(const ScaledChiSquared& d) { return json{{"df", d.df}, {"scale", d.scale}}; }

inline ScaledChiSquared chi_squared_from_json(const json& j) {
  detail::reject_unknown(j, "cell", {"df", "scale", "samples", "log_likelihood"});
  ScaledChiSquared d{j.at("df").get<double>(), j.at("scale").get<double>()};
  return d;
}

inline json to_json(const RationalityModel& m) {
  json cells = json::object();
  for (const auto& [name, c] : m.cells()) {
    cells[name] = json{{"relevant", to_json(c.relevant)}, {"irrelevant", to_json(c.irrelevant)}};
  }
  return json{{"schema_version", kModelSchemaVersion},
              {"prior_relevant", m.prior_relevant()},
              {"beta_max", m.beta_max()},
              {"cells", cells}};
}

inline RationalityModel rationality_model_from_json(const json& j) {
  try {
    detail::reject_unknown(j, "model", {"schema_version", "prior_relevant", "beta_max", "cells", "calibration"});
    if (j.value("schema_version", 0) != kModelSchemaVersion) {
      throw ConfigurationError("unsupported rationality model schema_version");
    }
    std::map<std::string, RelevanceCell> cells;
    for (auto it = j.at("cells").begin(); it != j.at("cells").end(); ++it) {
      detail::reject_unknown(it.value(), "cells." + it.key(), {"relevant", "irrelevant"});
      cells[it.key()] = {chi_squared_from_json(it.value().at("irrelevant")),
                         chi_squared_from_json(it.value().at("relevant"))};
    }
    return RationalityModel(std::move(cells), j.at("prior_relevant").get<double>(), j.at("beta_max").get<double>());
  } catch (const json::exception& e) {
    throw ConfigurationError(std::string("malformed rationality model: ") + e.what());
  }
}

inline RationalityModel load_rationality_model(const std::string& path) {
  return rationality_model_from_json(read_json_file(path));
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigurationError("cannot write '" + path + "'");
  out << text;
}

/// Minimal CSV builder; fields never contain commas or quotes here.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) : columns_(header.size()) { row(header); }

  void row(const std::vector<std::string>& fields) {
    if (fields.size() != columns_) throw Error("csv row has " + std::to_string(fields.size()) + " fields, expected " +
                                               std::to_string(columns_));
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) text_ += ',';
      text_ += fields[i];
    }
    text_ += '\n';
  }
  const std::string& str() const { return text_; }

 private:
  std::size_t columns_;
  std::string text_;
};

}  // namespace phri::harness
