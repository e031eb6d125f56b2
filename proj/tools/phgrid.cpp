// phgrid: certify, equilibrium, simulate and report for network description files.
//
// Exit codes: 0 ok, 1 a simulation run failed, 2 certificate fails,
// 3 solver failure, 64 usage or parse error.

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <thread>

#include "phgrid/certificates.hpp"
#include "phgrid/config.hpp"
#include "phgrid/logging.hpp"
#include "phgrid/network.hpp"
#include "phgrid/report.hpp"
#include "phgrid/simulator.hpp"

namespace fs = std::filesystem;
using namespace phgrid;

namespace {

constexpr int kOk = 0;
constexpr int kRunFailed = 1;
constexpr int kCertificateFails = 2;
constexpr int kSolverFailure = 3;
constexpr int kUsage = 64;

struct Loaded {
  NetworkDescription nd;
  OperatingPoint op;
};

Loaded load(const std::string& path) {
  Loaded l{load_network(path), {}};
  for (const auto& w : l.nd.warnings()) spdlog::warn("{}", w);
  l.op = steady_state(l.nd);
  return l;
}

void emit(const std::string& text, const std::string& out) {
  if (out.empty())
    std::fwrite(text.data(), 1, text.size(), stdout);
  else
    write_file_atomic(out, text);
}

// "f,Ix,Iy[,Iz];f,Ix,Iy[,Iz];..." with one group per generator.
std::vector<GeneratorStart> parse_initial(const std::string& spec) {
  std::vector<GeneratorStart> out;
  std::stringstream groups(spec);
  std::string group;
  while (std::getline(groups, group, ';')) {
    std::vector<double> v;
    std::stringstream fields(group);
    std::string field;
    while (std::getline(fields, field, ',')) {
      std::size_t used = 0;
      double x = 0.0;
      try {
        x = std::stod(field, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || field.find_first_not_of(" \t", used) != std::string::npos)
        throw CLI::ValidationError("--initial", fmt::format("'{}' is not a number", field));
      v.push_back(x);
    }
    if (v.size() != 3 && v.size() != 4)
      throw CLI::ValidationError("--initial", "each generator needs freq_hz,I_x,I_y[,I_z]");
    GeneratorStart s{v[0], v[1], v[2], {}};
    if (v.size() == 4) s.I_z = v[3];
    out.push_back(s);
  }
  return out;
}

int cmd_certify(const std::string& path, const std::string& out) {
  const Loaded l = load(path);
  const CertificateReport rep = multi_machine_certificate(l.nd, l.op);
  emit(certificate_text(l.nd, rep, uniqueness_reports(l.nd, l.op)), out);
  return rep.holds ? kOk : kCertificateFails;
}

int cmd_equilibrium(const std::string& path, const std::string& format, const std::string& out) {
  const Loaded l = load(path);
  emit(format == "csv" ? operating_point_csv(l.nd, l.op) : operating_point_text(l.nd, l.op), out);
  return kOk;
}

int cmd_report(const std::string& path, const std::string& out) {
  const Loaded l = load(path);
  const CertificateReport rep = multi_machine_certificate(l.nd, l.op);
  std::string text = fmt::format("Network: {} ({} generators, {} lines, {} loads, {} Hz)\n\n", path,
                                 l.nd.generators.size(), l.nd.lines.size(), l.nd.loads.size(), l.nd.base_frequency_hz);
  for (const auto& w : l.nd.warnings()) text += fmt::format("warning: {}\n", w);
  text += operating_point_text(l.nd, l.op);
  text += "\n";
  text += certificate_text(l.nd, rep, uniqueness_reports(l.nd, l.op));
  emit(text, out);
  return rep.holds ? kOk : kCertificateFails;
}

struct SimulateArgs {
  std::string path;
  double t_end = 2.0;
  double dt = 1e-4;
  std::uint64_t seed = 42;
  int runs = 25;
  int stride = 10;
  std::string out = "phgrid_out";
  std::vector<std::string> initial;
  unsigned jobs = 0;
};

int cmd_simulate(const SimulateArgs& a) {
  const Loaded l = load(a.path);
  SimConfig cfg;
  cfg.t_end = a.t_end;
  cfg.dt = a.dt;
  cfg.seed = a.seed;
  cfg.n_runs = a.runs;
  cfg.record_stride = a.stride;
  cfg.validate();
  const CompositeSystem cs = assemble(l.nd, l.op);

  std::vector<std::vector<GeneratorStart>> starts = sample_generator_starts(cs, cfg);
  std::vector<std::string> labels;
  for (std::size_t k = 0; k < starts.size(); ++k) labels.push_back(fmt::format("run_{:03d}", k));
  for (std::size_t k = 0; k < a.initial.size(); ++k) {
    starts.push_back(parse_initial(a.initial[k]));
    labels.push_back(a.initial.size() == 1 ? std::string("initial") : fmt::format("initial_{:02d}", k));
  }
  std::vector<Eigen::VectorXd> x0;
  for (const auto& s : starts) x0.push_back(initial_state(cs, s));

  fs::create_directories(a.out);
  const unsigned jobs = a.jobs ? a.jobs : std::max(1u, std::thread::hardware_concurrency());
  spdlog::info("simulating {} run(s) on {} worker(s)", x0.size(), jobs);
  auto results = run_batch(cs, x0, labels, cfg, jobs);

  int failed = 0, converged = 0;
  for (std::size_t k = 0; k < results.size(); ++k) {
    auto& r = results[k];
    r.start = starts[k];
    if (r.failed) {
      ++failed;
      spdlog::error("{}: {}", r.label, r.error);
      continue;
    }
    if (r.metrics.converged) ++converged;
    write_file_atomic(fs::path(a.out) / (r.label + ".csv"), trajectory_csv(cs, r.trajectory));
  }
  write_file_atomic(fs::path(a.out) / "summary.csv", summary_csv(results));
  fmt::print("{}/{} runs converged, {} failed; results in {}\n", converged, results.size(), failed, a.out);
  return failed ? kRunFailed : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  init_logging();
  CLI::App app{"Port-Hamiltonian multi-machine stability toolkit"};
  app.require_subcommand(1);

  std::string path, out, format = "text";
  auto* certify = app.add_subcommand("certify", "Evaluate the stability certificate at the operating point");
  certify->add_option("config", path, "Network description file")->required();
  certify->add_option("--out", out, "Write the report to this file instead of stdout");

  auto* equilibrium = app.add_subcommand("equilibrium", "Print the operating point");
  equilibrium->add_option("config", path, "Network description file")->required();
  equilibrium->add_option("--format", format, "text or csv")->check(CLI::IsMember({"text", "csv"}));
  equilibrium->add_option("--out", out, "Write to this file instead of stdout");

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Simulate sampled and explicit initial conditions");
  simulate->add_option("config", sim.path, "Network description file")->required();
  simulate->add_option("--t-end", sim.t_end, "Horizon [s]")->capture_default_str();
  simulate->add_option("--dt", sim.dt, "RK4 step [s]")->capture_default_str();
  simulate->add_option("--seed", sim.seed, "Sampling seed")->capture_default_str();
  simulate->add_option("--runs", sim.runs, "Number of sampled initial conditions")->capture_default_str();
  simulate->add_option("--record-stride", sim.stride, "Record every n-th step")->capture_default_str();
  simulate->add_option("--out", sim.out, "Output directory")->capture_default_str();
  simulate->add_option("--initial", sim.initial, "Explicit start \"f_hz,I_x,I_y[,I_z];...\" (one group per generator)");
  simulate->add_option("--jobs", sim.jobs, "Worker threads (0: all cores)")->capture_default_str();

  auto* report = app.add_subcommand("report", "Operating point and certificate in one text report");
  report->add_option("config", path, "Network description file")->required();
  report->add_option("--out", out, "Write to this file instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*certify) return cmd_certify(path, out);
    if (*equilibrium) return cmd_equilibrium(path, format, out);
    if (*simulate) return cmd_simulate(sim);
    if (*report) return cmd_report(path, out);
  } catch (const ConfigError& e) {
    spdlog::error("{}", e.what());
    return kUsage;
  } catch (const CLI::ValidationError& e) {
    spdlog::error("{}", e.what());
    return kUsage;
  } catch (const ParameterError& e) {
    spdlog::error("{}", e.what());
    return kUsage;
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return kSolverFailure;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kRunFailed;
  }
  return kOk;
}
