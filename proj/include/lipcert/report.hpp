#pragma once

// Run reports: what the command-line tool prints. Reports use the same JSON
// dialect as network documents and round-trip losslessly.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "lipcert/analysis.hpp"
#include "lipcert/errors.hpp"
#include "lipcert/lmi.hpp"
#include "lipcert/model.hpp"
#include "lipcert/sdp.hpp"

namespace lipcert {

inline constexpr std::string_view kToolVersion = "0.1.0";

struct NetworkSummary {
  std::vector<std::size_t> dims;
  Activation activation;
  SectorBounds sector;

  bool operator==(const NetworkSummary&) const = default;
};

inline NetworkSummary summarize(const FeedForwardNetwork& net) {
  return {net.dims(), net.activation(), net.sector()};
}

/// Flags a command ran with. Unused entries keep their defaults.
struct RunConfig {
  SolverConfig solver;
  CouplingMode mode;
  std::optional<std::size_t> split;
  std::size_t workers = 1;
  std::optional<std::size_t> empirical_samples;
  std::uint64_t seed = 0;
  std::optional<double> l2_override;

  bool operator==(const RunConfig&) const = default;
};

struct RunReport {
  std::string input_path;
  NetworkSummary network;
  std::string command;
  RunConfig config;
  std::optional<BoundReport> bound;
  std::optional<RadiusCertificate> radius;
  double wall_time = 0.0;
  std::string tool_version{kToolVersion};

  bool operator==(const RunReport&) const = default;
};

namespace detail {

/// JSON has no infinities; they travel as strings.
inline nlohmann::json number_to_json(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  return v;
}

inline double number_from_json(const nlohmann::json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  }
  throw ValidationError("expected a number in report, got " + j.dump());
}

template <typename T>
T field(const nlohmann::json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw ValidationError(std::string("report missing '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("report field '") + key + "': " + e.what());
  }
}

inline double number_field(const nlohmann::json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw ValidationError(std::string("report missing '") + key + "'");
  return number_from_json(j.at(key));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Component serializers

inline nlohmann::json to_json(const CouplingMode& m) {
  nlohmann::json j{{"kind", std::string(to_string(m.kind))}};
  if (m.pairs) {
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& p : *m.pairs) pairs.push_back({p.first, p.second});
    j["pairs"] = std::move(pairs);
  }
  return j;
}

inline CouplingMode coupling_mode_from_json(const nlohmann::json& j) {
  CouplingMode m;
  m.kind = parse_coupling_kind(detail::field<std::string>(j, "kind"));
  if (j.contains("pairs")) {
    std::vector<NeuronPair> pairs;
    for (const auto& p : j.at("pairs")) {
      if (!p.is_array() || p.size() != 2) throw ValidationError("pair entries must be [i, j]");
      pairs.emplace_back(p[0].get<std::size_t>(), p[1].get<std::size_t>());
    }
    m.pairs = std::move(pairs);
  }
  return m;
}

inline nlohmann::json to_json(const SolveStats& s) {
  return {{"outer_iters", s.outer_iters},
          {"newton_iters", s.newton_iters},
          {"phase1_iters", s.phase1_iters},
          {"final_mu", detail::number_to_json(s.final_mu)},
          {"phase1_tau", detail::number_to_json(s.phase1_tau)},
          {"wall_time", detail::number_to_json(s.wall_time)}};
}

inline SolveStats solve_stats_from_json(const nlohmann::json& j) {
  SolveStats s;
  s.outer_iters = detail::field<std::size_t>(j, "outer_iters");
  s.newton_iters = detail::field<std::size_t>(j, "newton_iters");
  s.phase1_iters = detail::field<std::size_t>(j, "phase1_iters");
  s.final_mu = detail::number_field(j, "final_mu");
  s.phase1_tau = detail::number_field(j, "phase1_tau");
  s.wall_time = detail::number_field(j, "wall_time");
  return s;
}

inline nlohmann::json to_json(const LipschitzCertificate& c) {
  nlohmann::json lambdas = nlohmann::json::array();
  for (double v : c.lambdas) lambdas.push_back(detail::number_to_json(v));
  return {{"rho", detail::number_to_json(c.rho)},
          {"l2", detail::number_to_json(c.l2)},
          {"mode", to_json(c.mode)},
          {"lambdas", std::move(lambdas)},
          {"verified_margin", detail::number_to_json(c.verified_margin)},
          {"restore_theta", detail::number_to_json(c.restore_theta)},
          {"stats", to_json(c.stats)},
          {"experimental", c.experimental}};
}

inline LipschitzCertificate certificate_from_json(const nlohmann::json& j) {
  LipschitzCertificate c;
  c.rho = detail::number_field(j, "rho");
  c.l2 = detail::number_field(j, "l2");
  c.mode = coupling_mode_from_json(j.at("mode"));
  for (const auto& v : detail::field<nlohmann::json>(j, "lambdas")) c.lambdas.push_back(detail::number_from_json(v));
  c.verified_margin = detail::number_field(j, "verified_margin");
  c.restore_theta = detail::number_field(j, "restore_theta");
  c.stats = solve_stats_from_json(j.at("stats"));
  c.experimental = detail::field<bool>(j, "experimental");
  return c;
}

inline nlohmann::json to_json(const BoundReport& b) {
  nlohmann::json j{{"naive_lower", detail::number_to_json(b.naive_lower)},
                   {"naive_upper", detail::number_to_json(b.naive_upper)},
                   {"mode", to_json(b.mode)},
                   {"norm_profile",
                    {{"p", detail::number_to_json(b.norm_profile.p)},
                     {"q", detail::number_to_json(b.norm_profile.q)},
                     {"factor", detail::number_to_json(b.norm_profile.factor)}}}};
  if (b.lipsdp) j["lipsdp"] = to_json(*b.lipsdp);
  if (b.split_chunk) j["split_chunk"] = *b.split_chunk;
  if (!b.per_subnet.empty()) {
    nlohmann::json subs = nlohmann::json::array();
    for (const auto& c : b.per_subnet) subs.push_back(to_json(c));
    j["per_subnet"] = std::move(subs);
  }
  if (b.empirical_lower) j["empirical_lower"] = detail::number_to_json(*b.empirical_lower);
  return j;
}

inline BoundReport bound_report_from_json(const nlohmann::json& j) {
  BoundReport b;
  b.naive_lower = detail::number_field(j, "naive_lower");
  b.naive_upper = detail::number_field(j, "naive_upper");
  b.mode = coupling_mode_from_json(j.at("mode"));
  const auto& np = j.at("norm_profile");
  b.norm_profile = {detail::number_field(np, "p"), detail::number_field(np, "q"),
                    detail::number_field(np, "factor")};
  if (j.contains("lipsdp")) b.lipsdp = certificate_from_json(j.at("lipsdp"));
  if (j.contains("split_chunk")) b.split_chunk = j.at("split_chunk").get<std::size_t>();
  if (j.contains("per_subnet"))
    for (const auto& c : j.at("per_subnet")) b.per_subnet.push_back(certificate_from_json(c));
  if (j.contains("empirical_lower")) b.empirical_lower = detail::number_field(j, "empirical_lower");
  return b;
}

inline nlohmann::json to_json(const RadiusCertificate& r) {
  nlohmann::json x = nlohmann::json::array();
  for (double v : r.x_star) x.push_back(detail::number_to_json(v));
  return {{"x_star", std::move(x)},
          {"predicted_class", r.predicted_class},
          {"epsilon", detail::number_to_json(r.epsilon)},
          {"l2_used", detail::number_to_json(r.l2_used)},
          {"score_gap", detail::number_to_json(r.score_gap)}};
}

inline RadiusCertificate radius_from_json(const nlohmann::json& j) {
  RadiusCertificate r;
  for (const auto& v : detail::field<nlohmann::json>(j, "x_star")) r.x_star.push_back(detail::number_from_json(v));
  r.predicted_class = detail::field<std::size_t>(j, "predicted_class");
  r.epsilon = detail::number_field(j, "epsilon");
  r.l2_used = detail::number_field(j, "l2_used");
  r.score_gap = detail::number_field(j, "score_gap");
  return r;
}

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j{{"gap_tol", c.solver.gap_tol},
                   {"newton_tol", c.solver.newton_tol},
                   {"mu_shrink", c.solver.mu_shrink},
                   {"max_outer", c.solver.max_outer},
                   {"max_newton", c.solver.max_newton},
                   {"margin", c.solver.margin},
                   {"restore_bisection_iters", c.solver.restore_bisection_iters},
                   {"mode", to_json(c.mode)},
                   {"workers", c.workers},
                   {"seed", c.seed}};
  if (c.split) j["split"] = *c.split;
  if (c.empirical_samples) j["empirical_samples"] = *c.empirical_samples;
  if (c.l2_override) j["l2"] = *c.l2_override;
  return j;
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  c.solver.gap_tol = detail::number_field(j, "gap_tol");
  c.solver.newton_tol = detail::number_field(j, "newton_tol");
  c.solver.mu_shrink = detail::number_field(j, "mu_shrink");
  c.solver.max_outer = detail::field<std::size_t>(j, "max_outer");
  c.solver.max_newton = detail::field<std::size_t>(j, "max_newton");
  c.solver.margin = detail::number_field(j, "margin");
  c.solver.restore_bisection_iters = detail::field<std::size_t>(j, "restore_bisection_iters");
  c.mode = coupling_mode_from_json(j.at("mode"));
  c.workers = detail::field<std::size_t>(j, "workers");
  c.seed = detail::field<std::uint64_t>(j, "seed");
  if (j.contains("split")) c.split = j.at("split").get<std::size_t>();
  if (j.contains("empirical_samples")) c.empirical_samples = j.at("empirical_samples").get<std::size_t>();
  if (j.contains("l2")) c.l2_override = detail::number_field(j, "l2");
  return c;
}

inline nlohmann::json to_json(const RunReport& r) {
  nlohmann::json j{{"input_path", r.input_path},
                   {"network_summary",
                    {{"dims", r.network.dims},
                     {"activation", activation_to_json(r.network.activation)},
                     {"sector", {{"alpha", r.network.sector.alpha}, {"beta", r.network.sector.beta}}}}},
                   {"command", r.command},
                   {"config", to_json(r.config)},
                   {"wall_time", detail::number_to_json(r.wall_time)},
                   {"tool_version", r.tool_version}};
  if (r.bound) j["bound"] = to_json(*r.bound);
  if (r.radius) j["radius"] = to_json(*r.radius);
  return j;
}

inline RunReport run_report_from_json(const nlohmann::json& j) {
  RunReport r;
  r.input_path = detail::field<std::string>(j, "input_path");
  const auto& ns = j.at("network_summary");
  r.network.dims = detail::field<std::vector<std::size_t>>(ns, "dims");
  r.network.activation = activation_from_json(ns.at("activation"));
  r.network.sector = {detail::number_field(ns.at("sector"), "alpha"),
                      detail::number_field(ns.at("sector"), "beta")};
  r.command = detail::field<std::string>(j, "command");
  r.config = run_config_from_json(j.at("config"));
  r.wall_time = detail::number_field(j, "wall_time");
  r.tool_version = detail::field<std::string>(j, "tool_version");
  if (j.contains("bound")) r.bound = bound_report_from_json(j.at("bound"));
  if (j.contains("radius")) r.radius = radius_from_json(j.at("radius"));
  return r;
}

inline std::string serialize_report(const RunReport& r) { return to_json(r).dump(2); }

inline RunReport parse_report(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("malformed report: ") + e.what());
  }
  try {
    return run_report_from_json(doc);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed report: ") + e.what());
  }
}

/// Human-readable rendering; numbers carry 6 significant digits.
inline std::string render_text(const RunReport& r) {
  std::ostringstream out;
  out.precision(6);
  out << "command: " << r.command << "\n";
  if (!r.input_path.empty()) out << "network: " << r.input_path << "\n";
  out << "dims:";
  for (std::size_t d : r.network.dims) out << " " << d;
  out << "\nactivation: " << to_string(r.network.activation.name) << " (sector [" << r.network.sector.alpha
      << ", " << r.network.sector.beta << "])\n";
  if (r.bound) {
    const auto& b = *r.bound;
    if (b.lipsdp) {
      out << "mode: " << to_string(b.mode.kind) << (b.lipsdp->experimental ? " (experimental)" : "") << "\n";
      out << "l2: " << b.lipsdp->l2 << "\n";
      out << "verified_margin: " << b.lipsdp->verified_margin << "\n";
      if (b.split_chunk) out << "split: " << *b.split_chunk << " (" << b.per_subnet.size() << " pieces)\n";
      if (b.norm_profile.factor != 1.0 || b.norm_profile.p != 2.0 || b.norm_profile.q != 2.0) {
        out << "converted (p=" << b.norm_profile.p << ", q=" << b.norm_profile.q
            << "): " << b.norm_profile.factor * b.lipsdp->l2 << "\n";
      }
    }
    if (b.naive_upper > 0.0 || b.naive_lower > 0.0 || r.command == "naive") {
      out << "naive_lower: " << b.naive_lower << "\n";
      out << "naive_upper: " << b.naive_upper << "\n";
    }
    if (b.empirical_lower) out << "empirical_lower: " << *b.empirical_lower << "\n";
  }
  if (r.radius) {
    out << "predicted_class: " << r.radius->predicted_class << "\n";
    out << "score_gap: " << r.radius->score_gap << "\n";
    out << "l2_used: " << r.radius->l2_used << "\n";
    out << "epsilon: " << r.radius->epsilon << "\n";
  }
  out << "wall_time: " << r.wall_time << " s\n";
  return out.str();
}

}  // namespace lipcert
