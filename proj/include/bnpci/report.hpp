#pragma once

#include <cstddef>
#include <cstdio>
#include <string>

#include <json.hpp>

#include "bftest.hpp"

// JSON / DOT rendering of test results. Kept apart from bftest so the math
// headers stay free of the serialization dependency.

namespace bnpci::report {

inline const char* scheme_name(partition::Scheme s) {
  return s == partition::Scheme::quantile ? "quantile" : "dyadic";
}

inline nlohmann::json config_json(const bftest::TestResult& r) {
  nlohmann::json cfg{
      {"x", r.x_name},
      {"y", r.y_name},
      {"z", r.z_name},
      {"c_x", r.c_x},
      {"c_y", r.c_y},
      {"c_xy", r.c_xy},
      {"rho", r.rho},
      {"prior_h0", r.prior_h0},
      {"prior_h1", r.prior_h1},
      {"depth_z", r.depth_z},
      {"depth_response", r.depth_response},
      {"scheme", scheme_name(r.scheme)},
  };
  cfg["seed"] = r.seed ? nlohmann::json(*r.seed) : nlohmann::json(nullptr);
  return cfg;
}

inline nlohmann::json to_json(const bftest::TestResult& r, std::size_t dropped_rows) {
  return nlohmann::json{
      {"log_phi_x", r.log_phi_x},
      {"log_phi_y", r.log_phi_y},
      {"log_phi_xy", r.log_phi_xy},
      {"log_bf", r.log_bf},
      {"posterior_h1", r.posterior_h1},
      {"n", r.n},
      {"dropped_rows", dropped_rows},
      {"config", config_json(r)},
  };
}

inline nlohmann::json to_json(const bftest::DependenceGraph& g,
                              std::size_t dropped_rows) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& p : g.pairs) {
    const auto& r = p.result;
    pairs.push_back(nlohmann::json{
        {"x", p.a},
        {"y", p.b},
        {"log_phi_x", r.log_phi_x},
        {"log_phi_y", r.log_phi_y},
        {"log_phi_xy", r.log_phi_xy},
        {"log_bf", r.log_bf},
        {"posterior_h1", r.posterior_h1},
    });
  }
  nlohmann::json out{
      {"given", g.given},
      {"vars", g.vars},
      {"threshold", g.threshold},
      {"dropped_rows", dropped_rows},
      {"pairs", pairs},
  };
  if (!g.pairs.empty()) {
    out["n"] = g.pairs.front().result.n;
    auto cfg = config_json(g.pairs.front().result);
    cfg.erase("x");  // names are per-pair here
    cfg.erase("y");
    cfg.erase("z");
    out["config"] = cfg;
  }
  return out;
}

// Undirected graph; edges with posterior below the display threshold are
// dropped, the rest get two-decimal labels. Every variable appears as a node
// so isolated variables stay visible.
inline std::string to_dot(const bftest::DependenceGraph& g) {
  std::string out = "graph dependence {\n";
  for (const auto& v : g.vars) out += "  \"" + v + "\";\n";
  char label[32];
  for (const auto& p : g.pairs) {
    if (p.result.posterior_h1 < g.threshold) continue;
    std::snprintf(label, sizeof label, "%.2f", p.result.posterior_h1);
    out += "  \"" + p.a + "\" -- \"" + p.b + "\" [label=\"" + label + "\"];\n";
  }
  out += "}\n";
  return out;
}

}  // namespace bnpci::report
