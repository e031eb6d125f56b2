#pragma once

// Fixed-step RK4 integration of composite systems with energy monitors,
// seeded initial-condition sampling and convergence metrics.

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "phgrid/network.hpp"

namespace phgrid {

struct SimConfig {
  double t_end = 2.0;
  double dt = 1e-4;
  std::uint64_t seed = 42;
  int n_runs = 25;
  int record_stride = 10;
  /// Converged when H_total(t_end) <= tolerance * H_total(0).
  double convergence_tolerance = 1e-6;
  /// Converged also needs every frequency within this of the synchronous one [Hz].
  double frequency_tolerance_hz = 1e-3;
  /// A recorded uptick of H_total above this (relative to H_total(0)) breaks monotone decay.
  double uptick_tolerance = 1e-6;
  /// H_total(0) at or below this is treated as starting at the operating point [J].
  double energy_floor = 1e-9;
  double blowup_threshold = 1e12;
  double frequency_half_width_hz = 0.2;  ///< sampling box around the synchronous frequency
  double current_half_width = 50.0;      ///< sampling box around I_x*, I_y* [A]

  void validate() const;
  std::int64_t steps() const;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<Eigen::VectorXd> states;
  std::vector<double> H_total;                   ///< [J]
  std::vector<double> power_residual;            ///< [W]
  std::vector<double> power_residual_relative;   ///< residual / sum of term magnitudes
  std::vector<std::vector<double>> frequency_hz; ///< [sample][generator]

  std::size_t size() const { return times.size(); }
};

/// Workspace-reusing classical RK4 step for any f(t, x, dxdt).
template <typename Rhs>
class Rk4 {
 public:
  explicit Rk4(Rhs f) : f_(std::move(f)) {}

  void step(double t, double dt, Eigen::VectorXd& x) {
    f_(t, x, k1_);
    tmp_ = x + 0.5 * dt * k1_;
    f_(t + 0.5 * dt, tmp_, k2_);
    tmp_ = x + 0.5 * dt * k2_;
    f_(t + 0.5 * dt, tmp_, k3_);
    tmp_ = x + dt * k3_;
    f_(t + dt, tmp_, k4_);
    x += (dt / 6.0) * (k1_ + 2.0 * k2_ + 2.0 * k3_ + k4_);
  }

 private:
  Rhs f_;
  Eigen::VectorXd k1_, k2_, k3_, k4_, tmp_;
};

/// Integrates f from t0 to t_end with n = round((t_end - t0) / dt) equal steps.
template <typename Rhs>
Eigen::VectorXd integrate_rk4(Rhs f, Eigen::VectorXd x, double t0, double t_end, double dt) {
  Rk4<Rhs> rk(std::move(f));
  const auto n = static_cast<std::int64_t>(std::llround((t_end - t0) / dt));
  const double h = (t_end - t0) / static_cast<double>(n);
  for (std::int64_t k = 0; k < n; ++k) rk.step(t0 + static_cast<double>(k) * h, h, x);
  return x;
}

/// RK4 over the composite system from t = 0. Monitors are evaluated at every
/// record_stride-th step and at the final step. Throws BlowUpError.
Trajectory integrate(const CompositeSystem& cs, const Eigen::VectorXd& x0, const SimConfig& cfg);

/// Per-generator starting values; unspecified currents keep their starred values.
struct GeneratorStart {
  double frequency_hz = 60.0;
  double I_x = 0.0;
  double I_y = 0.0;
  std::optional<double> I_z;
};

/// Full state at t = 0 with theta_i = 0, the given generator values and
/// network currents at their starred values, projected onto KCL.
Eigen::VectorXd initial_state(const CompositeSystem& cs, const std::vector<GeneratorStart>& starts);

/// cfg.n_runs independent uniform draws (frequency and I_x, I_y per generator)
/// from a mt19937_64 seeded with cfg.seed.
std::vector<std::vector<GeneratorStart>> sample_generator_starts(const CompositeSystem& cs, const SimConfig& cfg);
std::vector<Eigen::VectorXd> sample_initial_conditions(const CompositeSystem& cs, const SimConfig& cfg);

struct ConvergenceReport {
  double H_initial = 0.0;
  double H_final = 0.0;
  double H_ratio = 0.0;          ///< H_final / H_initial (0 when H_initial = 0)
  double max_uptick = 0.0;       ///< largest H_total increase between samples / H_initial
  double max_uptick_time = 0.0;  ///< [s]
  double settling_time = 0.0;    ///< first sample after which H_total <= tol * H_initial stays true [s]
  double final_frequency_error_hz = 0.0;
  double max_power_residual_relative = 0.0;
  bool monotone_decay = false;
  bool converged = false;
};

/// `nominal_hz` is the synchronous frequency the final frequencies are compared to.
ConvergenceReport convergence_metrics(const Trajectory& traj, double nominal_hz, const SimConfig& cfg);

struct RunResult {
  std::string label;
  std::vector<GeneratorStart> start;
  Trajectory trajectory;
  ConvergenceReport metrics;
  bool failed = false;
  std::string error;
  double failure_time = 0.0;
};

/// Runs every initial condition on `jobs` worker threads (0: hardware
/// concurrency). Results are in input order and independent of `jobs`.
std::vector<RunResult> run_batch(const CompositeSystem& cs, const std::vector<Eigen::VectorXd>& initial_states,
                                 const std::vector<std::string>& labels, const SimConfig& cfg, unsigned jobs);

}  // namespace phgrid
