#include "phgrid/simulator.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <thread>

namespace phgrid {

void SimConfig::validate() const {
  if (!(std::isfinite(dt) && dt > 0.0)) throw ParameterError("dt must be > 0");
  if (!(std::isfinite(t_end) && t_end >= dt)) throw ParameterError("t_end must be >= dt");
  if (n_runs < 1) throw ParameterError("runs must be >= 1");
  if (record_stride < 1) throw ParameterError("record_stride must be >= 1");
  if (!(convergence_tolerance > 0.0)) throw ParameterError("convergence tolerance must be > 0");
}

std::int64_t SimConfig::steps() const { return static_cast<std::int64_t>(std::llround(t_end / dt)); }

namespace {

constexpr double two_pi = 2.0 * std::numbers::pi;

void record(const CompositeSystem& cs, double t, const Eigen::VectorXd& x, Trajectory& tr) {
  tr.times.push_back(t);
  tr.states.push_back(x);
  tr.H_total.push_back(total_shifted_hamiltonian(cs, x));
  const PowerBalance pb = incremental_power_balance(cs, t, x);
  tr.power_residual.push_back(pb.residual);
  tr.power_residual_relative.push_back(pb.relative());
  std::vector<double> f;
  for (std::size_t i = 0; i < cs.description().generators.size(); ++i)
    f.push_back(x(static_cast<Eigen::Index>(cs.generator_offset(i) + 1)) / two_pi);
  tr.frequency_hz.push_back(std::move(f));
}

}  // namespace

Trajectory integrate(const CompositeSystem& cs, const Eigen::VectorXd& x0, const SimConfig& cfg) {
  cfg.validate();
  if (x0.size() != static_cast<Eigen::Index>(cs.dimension()))
    throw ParameterError(fmt::format("initial state has {} entries, system needs {}", x0.size(), cs.dimension()));

  const std::int64_t n = cfg.steps();
  Trajectory tr;
  Eigen::VectorXd x = x0;
  record(cs, 0.0, x, tr);
  Rk4 rk([&cs](double t, const Eigen::VectorXd& s, Eigen::VectorXd& d) { cs.rhs(t, s, d); });
  for (std::int64_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) * cfg.dt;
    rk.step(t, cfg.dt, x);
    const double t_next = static_cast<double>(k + 1) * cfg.dt;
    cs.enforce_kcl(t_next, x);
    if (!x.allFinite() || x.cwiseAbs().maxCoeff() > cfg.blowup_threshold)
      throw BlowUpError(fmt::format("state blew up at t = {:.6g} s", t_next), t_next);
    if ((k + 1) % cfg.record_stride == 0 || k + 1 == n) record(cs, t_next, x, tr);
  }
  return tr;
}

Eigen::VectorXd initial_state(const CompositeSystem& cs, const std::vector<GeneratorStart>& starts) {
  const auto& nd = cs.description();
  if (starts.size() != nd.generators.size())
    throw ParameterError(
        fmt::format("initial condition lists {} generators, network has {}", starts.size(), nd.generators.size()));
  Eigen::VectorXd x = cs.operating_state(0.0);
  for (std::size_t i = 0; i < starts.size(); ++i) {
    const auto& s = starts[i];
    const auto o = static_cast<Eigen::Index>(cs.generator_offset(i));
    x(o) = 0.0;
    x(o + 1) = two_pi * s.frequency_hz;
    x(o + 2) = s.I_x;
    x(o + 3) = s.I_y;
    if (s.I_z) x(o + 4) = *s.I_z;
  }
  return cs.project_consistent(0.0, x);
}

std::vector<std::vector<GeneratorStart>> sample_generator_starts(const CompositeSystem& cs, const SimConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  const double f0 = cs.operating_point().omega_s / two_pi;
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::vector<std::vector<GeneratorStart>> out;
  for (int r = 0; r < cfg.n_runs; ++r) {
    std::vector<GeneratorStart> run;
    for (const auto& eq : cs.operating_point().generators) {
      GeneratorStart s;
      s.frequency_hz = f0 + cfg.frequency_half_width_hz * unit(rng);
      s.I_x = eq.I_star(0) + cfg.current_half_width * unit(rng);
      s.I_y = eq.I_star(1) + cfg.current_half_width * unit(rng);
      run.push_back(s);
    }
    out.push_back(std::move(run));
  }
  return out;
}

std::vector<Eigen::VectorXd> sample_initial_conditions(const CompositeSystem& cs, const SimConfig& cfg) {
  std::vector<Eigen::VectorXd> out;
  for (const auto& starts : sample_generator_starts(cs, cfg)) out.push_back(initial_state(cs, starts));
  return out;
}

ConvergenceReport convergence_metrics(const Trajectory& traj, double nominal_hz, const SimConfig& cfg) {
  ConvergenceReport rep;
  if (traj.size() == 0) return rep;
  rep.H_initial = traj.H_total.front();
  rep.H_final = traj.H_total.back();
  const double H0 = rep.H_initial;
  const bool at_rest = !(H0 > cfg.energy_floor);
  rep.H_ratio = at_rest ? 0.0 : rep.H_final / H0;
  for (std::size_t k = 1; k < traj.size() && !at_rest; ++k) {
    const double up = (traj.H_total[k] - traj.H_total[k - 1]) / H0;
    if (up > rep.max_uptick) {
      rep.max_uptick = up;
      rep.max_uptick_time = traj.times[k];
    }
  }
  std::size_t settle = traj.size();
  while (settle > 0 && traj.H_total[settle - 1] <= cfg.convergence_tolerance * H0) --settle;
  rep.settling_time = settle < traj.size() ? traj.times[settle] : std::numeric_limits<double>::infinity();
  if (at_rest) rep.settling_time = 0.0;
  for (double f : traj.frequency_hz.back())
    rep.final_frequency_error_hz = std::max(rep.final_frequency_error_hz, std::abs(f - nominal_hz));
  for (double r : traj.power_residual_relative)
    rep.max_power_residual_relative = std::max(rep.max_power_residual_relative, r);
  rep.monotone_decay = rep.max_uptick <= cfg.uptick_tolerance && (at_rest || rep.H_final <= H0);
  rep.converged = rep.H_ratio <= cfg.convergence_tolerance &&
                  rep.final_frequency_error_hz <= cfg.frequency_tolerance_hz && std::isfinite(rep.H_final);
  return rep;
}

std::vector<RunResult> run_batch(const CompositeSystem& cs, const std::vector<Eigen::VectorXd>& initial_states,
                                 const std::vector<std::string>& labels, const SimConfig& cfg, unsigned jobs) {
  const std::size_t n = initial_states.size();
  std::vector<RunResult> results(n);
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  jobs = static_cast<unsigned>(std::min<std::size_t>(jobs, std::max<std::size_t>(n, 1)));
  const double nominal_hz = cs.operating_point().omega_s / two_pi;

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      RunResult& r = results[i];
      r.label = i < labels.size() ? labels[i] : fmt::format("run_{:03d}", i);
      try {
        r.trajectory = integrate(cs, initial_states[i], cfg);
        r.metrics = convergence_metrics(r.trajectory, nominal_hz, cfg);
      } catch (const BlowUpError& e) {
        r.failed = true;
        r.error = e.what();
        r.failure_time = e.time();
      } catch (const std::exception& e) {
        r.failed = true;
        r.error = e.what();
      }
      spdlog::debug("{}: {}", r.label, r.failed ? r.error : (r.metrics.converged ? "converged" : "not converged"));
    }
  };
  std::vector<std::thread> pool;
  for (unsigned k = 1; k < jobs; ++k) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return results;
}

}  // namespace phgrid
