/* Copyright 2026 The fopkit Authors. All Rights Reserved.

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

#include "fopkit/metrics.hpp"

#include <cmath>
#include <set>

#include "fopkit/error.hpp"
#include "json.hpp"

namespace fopkit {
namespace {

using Json = nlohmann::ordered_json;

Json num(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }
Json num(const std::optional<double>& v) { return v ? num(*v) : Json(nullptr); }

std::string csv_cell(const Json& v) {
  if (v.is_null()) return "";
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

}  // namespace

LayerMetrics layer_metrics(const FopStepPlan& plan) {
  return {plan.layer_id, plan.beta, plan.eta_star, plan.s_proj, plan.perp_ratio};
}

KlMetrics kl_metrics(const FopStepPlan& plan, const KroneckerFisherBlock& block, double eta0) {
  KlMetrics out;
  out.layer = plan.layer_id;
  const std::size_t dim = block.input_dim() * block.output_dim();
  if (dim > kMaxDenseFisherDim || !block.has_inverse()) return out;
  const Matrix g_avg = axpy(plan.g_combined, -plan.beta, plan.g_perp);
  try {
    const auto d = kl_diagnostics(vec(g_avg), vec(plan.g_perp), kronecker_dense(block.a(), block.g()),
                                  block.damping(), plan.beta, eta0 * plan.eta_star);
    out.base = d.base_term;
    out.cross = d.cross_term;
    out.orth = d.orth_term;
    out.total = d.total;
    out.bound_rhs = d.bound_rhs;
  } catch (const Error&) {
    // Singular or ill-posed Fisher: leave the terms null.
  }
  return out;
}

std::string to_json_line(const MetricsRecord& r) {
  Json j;
  j["step"] = r.step;
  j["epoch"] = r.epoch;
  j["wall_time"] = num(r.wall_time);
  j["train_loss"] = num(r.train_loss);
  j["train_accuracy"] = num(r.train_accuracy);
  j["eval_loss"] = num(r.eval_loss);
  j["eval_accuracy"] = num(r.eval_accuracy);
  j["lr"] = num(r.lr);
  Json layers = Json::array();
  for (const auto& l : r.layers) {
    layers.push_back(Json{{"layer", l.layer},
                          {"beta", num(l.beta)},
                          {"eta_star", num(l.eta_star)},
                          {"s_proj", num(l.s_proj)},
                          {"perp_ratio", num(l.perp_ratio)}});
  }
  j["layers"] = std::move(layers);
  if (r.kl) {
    Json kl = Json::array();
    for (const auto& k : *r.kl) {
      kl.push_back(Json{{"layer", k.layer},
                        {"base", num(k.base)},
                        {"cross", num(k.cross)},
                        {"orth", num(k.orth)},
                        {"total", num(k.total)},
                        {"bound_rhs", num(k.bound_rhs)}});
    }
    j["kl"] = std::move(kl);
  }
  return j.dump();
}

std::string strip_wall_time(const std::string& json_line) {
  Json j = Json::parse(json_line);
  j.erase("wall_time");
  return j.dump();
}

void metrics_to_csv(std::span<const std::string> json_lines, std::ostream& out) {
  std::vector<Json> rows;
  std::vector<std::string> columns;
  std::set<std::string> seen;
  auto add_column = [&](const std::string& c) {
    if (seen.insert(c).second) columns.push_back(c);
  };
  for (const auto& line : json_lines) {
    if (line.empty()) continue;
    Json flat = Json::object();
    const Json record = Json::parse(line);
    for (const auto& [key, value] : record.items()) {
      if (value.is_array()) {
        for (const auto& entry : value) {
          const std::string prefix = (key == "kl" ? "kl" : "layer") + entry["layer"].dump() + "_";
          for (const auto& [k, v] : entry.items()) {
            if (k == "layer") continue;
            flat[prefix + k] = v;
            add_column(prefix + k);
          }
        }
      } else {
        flat[key] = value;
        add_column(key);
      }
    }
    rows.push_back(std::move(flat));
  }
  for (std::size_t i = 0; i < columns.size(); ++i) out << (i ? "," : "") << columns[i];
  out << "\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < columns.size(); ++i) {
      out << (i ? "," : "") << (row.contains(columns[i]) ? csv_cell(row[columns[i]]) : "");
    }
    out << "\n";
  }
}

}  // namespace fopkit
