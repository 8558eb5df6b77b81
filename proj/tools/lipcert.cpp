// lipcert: certified Lipschitz bounds for feed-forward networks.
//
//   lipcert bound   --net NET.json [--mode neuron] [--split K] [--workers N] ...
//   lipcert naive   --net NET.json
//   lipcert certify --net NET.json --input X.json [--l2 L | --mode M --tol T]
//   lipcert gen     --dims 2,10,1 --seed 7 [--scale S] [--activation relu]
//
// Exit codes: 0 success, 2 usage or validation error, 3 numerical failure.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "lipcert/lipcert.hpp"

namespace {

using lipcert::ValidationError;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

struct Options {
  std::string net_path;
  std::string input_path;
  std::string mode = "neuron";
  std::optional<std::size_t> split;
  std::size_t workers = 1;
  std::optional<double> tol;
  bool emit_naive = false;
  std::optional<std::size_t> empirical_samples;
  std::uint64_t seed = 0;
  bool json = false;
  bool text = false;
  std::string p_norm = "2";
  std::string q_norm = "2";
  std::optional<double> l2;
  std::vector<std::size_t> dims;
  std::optional<double> scale;
  std::string activation = "relu";
  std::optional<double> negative_slope;
};

void configure_logging() {
  auto logger = spdlog::stderr_color_mt("lipcert");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  const char* env = std::getenv("LIPCERT_LOG");
  const std::string level = env ? env : "off";
  if (level == "debug") {
    spdlog::set_level(spdlog::level::debug);
  } else if (level == "info") {
    spdlog::set_level(spdlog::level::info);
  } else {
    spdlog::set_level(spdlog::level::off);
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double parse_norm_order(const std::string& s) {
  if (s == "inf" || s == "Inf" || s == "infinity") return std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ValidationError("bad norm order '" + s + "'");
  }
  if (used != s.size()) throw ValidationError("bad norm order '" + s + "'");
  return v;
}

lipcert::RunConfig run_config(const Options& o) {
  lipcert::RunConfig c;
  if (o.tol) c.solver.gap_tol = *o.tol;
  c.solver.validate();
  const auto kind = lipcert::parse_coupling_kind(o.mode);
  c.mode = kind == lipcert::CouplingKind::kLayer    ? lipcert::CouplingMode::layer()
           : kind == lipcert::CouplingKind::kNeuron ? lipcert::CouplingMode::neuron()
                                                    : lipcert::CouplingMode::network();
  c.split = o.split;
  c.workers = o.workers;
  c.empirical_samples = o.empirical_samples;
  c.seed = o.seed;
  c.l2_override = o.l2;
  return c;
}

void log_certificate(const lipcert::LipschitzCertificate& c) {
  spdlog::debug("rho={} margin={} theta={} outer={} newton={} phase1={} t={}s", c.rho,
                c.verified_margin, c.restore_theta, c.stats.outer_iters, c.stats.newton_iters,
                c.stats.phase1_iters, c.stats.wall_time);
}

lipcert::BoundReport compute_bound(const lipcert::FeedForwardNetwork& net, const lipcert::RunConfig& cfg) {
  lipcert::BoundReport report;
  if (cfg.split) {
    report = lipcert::lipschitz_bound_split(net, *cfg.split, cfg.mode, cfg.solver, cfg.workers);
    for (const auto& c : report.per_subnet) log_certificate(c);
  } else {
    report.mode = cfg.mode;
    report.lipsdp = lipcert::lipschitz_bound(net, cfg.mode, cfg.solver);
    log_certificate(*report.lipsdp);
  }
  return report;
}

void emit(const lipcert::RunReport& report, const Options& o) {
  if (o.text) {
    std::cout << lipcert::render_text(report);
  } else {
    std::cout << lipcert::serialize_report(report) << "\n";
  }
}

int cmd_bound(const Options& o) {
  const auto start = std::chrono::steady_clock::now();
  const auto net = lipcert::load_network(read_file(o.net_path));
  const auto cfg = run_config(o);
  spdlog::info("bound: dims={} mode={}", net.dims().size(), o.mode);

  lipcert::RunReport report;
  report.command = "bound";
  report.input_path = o.net_path;
  report.network = lipcert::summarize(net);
  report.config = cfg;
  auto bound = compute_bound(net, cfg);
  const auto naive = lipcert::naive_bounds(net);
  bound.naive_lower = naive.lower;
  bound.naive_upper = naive.upper;
  const double p = parse_norm_order(o.p_norm);
  const double q = parse_norm_order(o.q_norm);
  bound.norm_profile = {p, q, lipcert::convert_norm(1.0, p, q, net.input_dim(), net.output_dim())};
  if (cfg.empirical_samples) {
    bound.empirical_lower = lipcert::empirical_lower_bound(net, *cfg.empirical_samples, cfg.seed);
    spdlog::info("empirical lower bound {}", *bound.empirical_lower);
  }
  report.bound = std::move(bound);
  report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  emit(report, o);
  return kExitOk;
}

int cmd_naive(const Options& o) {
  const auto start = std::chrono::steady_clock::now();
  const auto net = lipcert::load_network(read_file(o.net_path));
  lipcert::RunReport report;
  report.command = "naive";
  report.input_path = o.net_path;
  report.network = lipcert::summarize(net);
  lipcert::BoundReport bound;
  const auto naive = lipcert::naive_bounds(net);
  bound.naive_lower = naive.lower;
  bound.naive_upper = naive.upper;
  report.bound = bound;
  report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  emit(report, o);
  return kExitOk;
}

int cmd_certify(const Options& o) {
  const auto start = std::chrono::steady_clock::now();
  const auto net = lipcert::load_network(read_file(o.net_path));
  const auto x = lipcert::load_vector(read_file(o.input_path));
  if (x.size() != net.input_dim()) {
    throw ValidationError("input length " + std::to_string(x.size()) + " != network input dim " +
                          std::to_string(net.input_dim()));
  }
  const auto cfg = run_config(o);
  lipcert::RunReport report;
  report.command = "certify";
  report.input_path = o.net_path;
  report.network = lipcert::summarize(net);
  report.config = cfg;
  double l2 = 0.0;
  if (o.l2) {
    l2 = *o.l2;
  } else {
    auto bound = compute_bound(net, cfg);
    l2 = bound.lipsdp->l2;
    report.bound = std::move(bound);
  }
  report.radius = lipcert::certify_radius(net, l2, x);
  report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  emit(report, o);
  return kExitOk;
}

int cmd_gen(const Options& o) {
  if (o.dims.size() < 2) throw ValidationError("--dims needs at least two entries");
  lipcert::Activation act;
  act.name = lipcert::parse_activation_name(o.activation);
  if (o.negative_slope) act.negative_slope = *o.negative_slope;
  act.validate();
  const auto net = lipcert::random_network(o.dims, o.seed, o.scale, act);
  std::cout << lipcert::serialize_network(net) << "\n";
  return kExitOk;
}

int run(int argc, char** argv) {
  CLI::App app{"Certified Lipschitz bounds for feed-forward networks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(lipcert::kToolVersion));
  Options o;

  auto add_solver_flags = [&o](CLI::App* sub) {
    sub->add_option("--mode", o.mode, "Multiplier coupling: layer, neuron or network (experimental)")
        ->check(CLI::IsMember({"layer", "neuron", "network"}));
    sub->add_option("--tol", o.tol, "Duality-gap tolerance of the solver");
    sub->add_option("--split", o.split, "Split into pieces of K hidden layers")->check(CLI::PositiveNumber);
    sub->add_option("--workers", o.workers, "Threads for split sub-solves")->check(CLI::PositiveNumber);
  };
  auto add_output_flags = [&o](CLI::App* sub) {
    auto* json = sub->add_flag("--json", o.json, "JSON report (default)");
    auto* text = sub->add_flag("--text", o.text, "Human-readable report");
    json->excludes(text);
  };

  auto* bound = app.add_subcommand("bound", "Certified l2 Lipschitz bound");
  bound->add_option("--net", o.net_path, "Network document")->required();
  add_solver_flags(bound);
  bound->add_flag("--emit-naive", o.emit_naive, "Include naive bounds (always computed)");
  bound->add_option("--emit-empirical", o.empirical_samples, "Sampled lower bound with N pairs")
      ->check(CLI::PositiveNumber);
  bound->add_option("--seed", o.seed, "Seed for sampling");
  bound->add_option("--p", o.p_norm, "Output norm order for conversion (number or inf)");
  bound->add_option("--q", o.q_norm, "Input norm order for conversion (number or inf)");
  add_output_flags(bound);

  auto* naive = app.add_subcommand("naive", "Naive lower and upper bounds");
  naive->add_option("--net", o.net_path, "Network document")->required();
  add_output_flags(naive);

  auto* certify = app.add_subcommand("certify", "Certified l2 robustness radius at a point");
  certify->add_option("--net", o.net_path, "Network document")->required();
  certify->add_option("--input", o.input_path, "Input vector document")->required();
  certify->add_option("--l2", o.l2, "Reuse a precomputed Lipschitz bound");
  add_solver_flags(certify);
  add_output_flags(certify);

  auto* gen = app.add_subcommand("gen", "Random network document");
  gen->add_option("--dims", o.dims, "Layer sizes n0,n1,...,nL")->required()->delimiter(',');
  gen->add_option("--seed", o.seed, "Random seed");
  gen->add_option("--scale", o.scale, "Entry standard deviation (default 1/sqrt(fan-in))");
  gen->add_option("--activation", o.activation, "relu, tanh, sigmoid or leaky_relu")
      ->check(CLI::IsMember({"relu", "tanh", "sigmoid", "leaky_relu"}));
  gen->add_option("--negative-slope", o.negative_slope, "Slope of leaky_relu for negative inputs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  configure_logging();
  if (*bound) return cmd_bound(o);
  if (*naive) return cmd_naive(o);
  if (*certify) return cmd_certify(o);
  return cmd_gen(o);
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const lipcert::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const lipcert::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return kExitNumerical;
  }
}
