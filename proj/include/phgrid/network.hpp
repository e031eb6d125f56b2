#pragma once

// Multi-machine systems: generators in their own rotor frames connected to an
// abc-frame RL grid with linear and constant-current loads.
//
// Synchronous-frame pairs (x, y) describe balanced sinusoids through
// abc(t) = T(omega_s t)^T (x, y, 0), with T the stator block of park_matrix.
// Generator i rotates as theta_i(t) = omega_s t + delta_i at steady state.

#include <Eigen/Dense>
#include <complex>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "phgrid/machine.hpp"

namespace phgrid {

using Eigen::Vector2d;
using Eigen::Vector3d;
using Eigen::VectorXd;

/// Series RL branch per phase between two buses.
struct LineParams {
  std::string name;
  std::string from_bus;
  std::string to_bus;
  double R = 0.0;  ///< [Ohm]
  double L = 0.0;  ///< [H]
};

enum class LoadKind { LinearRL, ConstantCurrent };

/// Star-connected symmetric three-phase load with grounded neutral.
struct LoadModel {
  std::string name;
  std::string bus;
  LoadKind kind = LoadKind::LinearRL;
  double R = 0.0;          ///< linear_rl: series resistance [Ohm]
  double L = 0.0;          ///< linear_rl: series inductance [H]; 0 means purely resistive
  double amplitude = 0.0;  ///< constant_current: peak phase current [A]
  double phase = 0.0;      ///< constant_current: I_a = amplitude cos(omega_s t + phase) [rad]

  bool has_state() const { return kind == LoadKind::LinearRL && L > 0.0; }
  bool is_resistive() const { return kind == LoadKind::LinearRL && L == 0.0; }
};

/// How a generator's steady state is pinned down.
enum class Setpoint {
  TerminalVoltage,  ///< target rotor-frame terminal voltages; I_f and tau_m are derived
  FieldAndTorque,   ///< given I_f (in params) and tau_m; speed and angles are solved for
};

struct GeneratorSpec {
  std::string name;
  std::string bus;
  GeneratorParams<double> params;
  double R_sssc = 0.0;  ///< series virtual resistance on current deviations [Ohm]
  Setpoint setpoint = Setpoint::TerminalVoltage;
  Vector2d V_target = Vector2d::Zero();  ///< (V_x*, V_y*) for TerminalVoltage
  double tau_m = 0.0;                    ///< for FieldAndTorque
};

struct NetworkDescription {
  std::vector<GeneratorSpec> generators;
  std::vector<LineParams> lines;
  std::vector<LoadModel> loads;
  double omega_s = 0.0;            ///< target synchronous speed [rad/s]
  double base_frequency_hz = 0.0;  ///< omega_s / 2 pi

  /// Bus names in order of first appearance (generators, lines, loads).
  std::vector<std::string> buses() const;
  std::size_t bus_index(const std::string& name) const;
  bool has_constant_current_loads() const;

  /// Throws ParameterError / AssemblyError when an invariant is violated.
  void validate() const;
  /// Non-fatal remarks, e.g. lossless lines (only weakly stable).
  std::vector<std::string> warnings() const;
};

/// Network-consistent steady state of every device.
struct OperatingPoint {
  double omega_s = 0.0;
  std::vector<GeneratorEquilibrium<double>> generators;
  std::vector<double> rotor_offsets;   ///< delta_i [rad]
  std::vector<Vector2d> bus_voltages;  ///< per bus, synchronous frame
  std::vector<Vector2d> line_currents; ///< per line, from -> to
  std::vector<Vector2d> load_currents; ///< per load, into the load
  Setpoint mode = Setpoint::TerminalVoltage;
  double voltage_target_mismatch = 0.0;  ///< max |V* - V_target| over generators [V]
  int iterations = 0;

  /// Parameters of generator i with the field current of this operating point.
  GeneratorParams<double> generator_params(const NetworkDescription& nd, std::size_t i) const;
};

struct SteadyStateOptions {
  int max_iterations = 100;
  double tolerance = 1e-12;
  /// Starting point for the (I_f, tau_m) Newton solve; flat start when empty.
  std::optional<OperatingPoint> initial_guess;
};

/// Solves for the operating point. All generators must share one setpoint kind.
///
/// TerminalVoltage: I_f and the rotor offsets are fitted (Levenberg-Marquardt)
/// so the network reproduces the targets at the requested speed; the torques
/// follow from consistent_torque. FieldAndTorque: damped Newton on the
/// torque balances for the common speed and the rotor offsets.
///
/// Throws SolverError (non-convergence, singular network).
OperatingPoint steady_state(const NetworkDescription& nd, const SteadyStateOptions& options = {});

struct NamedResidual {
  std::string name;
  double value = 0.0;  ///< relative
};

/// Relative residuals of every device equation and of KCL at every bus.
std::vector<NamedResidual> operating_point_residuals(const NetworkDescription& nd, const OperatingPoint& op);

/// Throws InconsistentOperatingPoint naming the worst residual above `tolerance`.
void check_operating_point(const NetworkDescription& nd, const OperatingPoint& op, double tolerance);

/// Balanced sinusoid T(angle)^T (x, y, 0) in abc coordinates.
Vector3d sync_to_abc(const Vector2d& xy, double angle);

struct CompositeOptions {
  /// Restoring rate for KCL at buses without a resistive shunt [1/s].
  double kcl_stabilization = 100.0;
};

/// ODE right-hand side over the full state:
///   per generator (theta, omega, I_x, I_y, I_z), per line 3 abc currents,
///   per RL load (L > 0) 3 abc currents.
/// Bus voltages are algebraic. Immutable after construction; rhs is reentrant.
class CompositeSystem {
 public:
  CompositeSystem(NetworkDescription nd, OperatingPoint op, CompositeOptions options = {});

  std::size_t dimension() const { return dimension_; }
  std::size_t generator_offset(std::size_t i) const { return 5 * i; }
  std::size_t line_offset(std::size_t j) const { return line_offset_ + 3 * j; }
  /// Offset of load k's states, or npos for loads without state.
  std::size_t load_offset(std::size_t k) const { return load_offsets_[k]; }
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  const NetworkDescription& description() const { return nd_; }
  const OperatingPoint& operating_point() const { return op_; }
  const std::vector<GeneratorParams<double>>& generator_params() const { return params_; }

  void rhs(double t, const VectorXd& x, VectorXd& dxdt) const;
  VectorXd rhs(double t, const VectorXd& x) const;

  /// abc bus voltages (3 x buses) implied by state x at time t.
  Eigen::Matrix3Xd bus_voltages(double t, const VectorXd& x) const;

  /// The steady-state trajectory sampled at time t.
  VectorXd operating_state(double t) const;

  /// Moves line and load currents by the least amount that restores KCL at
  /// buses without a resistive shunt. Throws AssemblyError if impossible.
  VectorXd project_consistent(double t, VectorXd x) const;

  /// Same projection without the feasibility check; used after every
  /// integration step so KCL holds to rounding at every sample.
  void enforce_kcl(double t, VectorXd& x) const;

  /// Largest KCL mismatch [A] over buses without a resistive shunt.
  double kcl_violation(double t, const VectorXd& x) const;

  /// Inertia-weighted mean of theta_i - delta_i; equals omega_s t at steady state.
  double reference_angle(const VectorXd& x) const;

  /// Generator i's slice of x.
  GeneratorState<double> generator_state(const VectorXd& x, std::size_t i) const;

 private:
  void evaluate(double t, const VectorXd& x, VectorXd* dxdt, Eigen::Matrix3Xd* V) const;
  Vector3d injection(double t, std::size_t bus) const;
  Vector3d injection_rate(double t, std::size_t bus) const;

  NetworkDescription nd_;
  OperatingPoint op_;
  CompositeOptions options_;
  std::vector<GeneratorParams<double>> params_;
  std::size_t n_buses_ = 0;
  std::size_t dimension_ = 0;
  std::size_t line_offset_ = 0;
  std::vector<std::size_t> load_offsets_;
  std::vector<std::size_t> gen_bus_;
  std::vector<std::size_t> line_from_, line_to_;
  std::vector<std::size_t> load_bus_;
  std::vector<double> shunt_conductance_;  ///< per bus, from resistive loads
  std::vector<std::size_t> kcl_buses_;     ///< buses without a resistive shunt
  Eigen::MatrixXd kcl_C_;                  ///< KCL rows over line and load states
  Eigen::MatrixXd kcl_pinv_;
  double total_inertia_ = 0.0;
};

/// Builds the composite ODE for a validated description and its operating point.
CompositeSystem assemble(const NetworkDescription& nd, const OperatingPoint& op, CompositeOptions options = {});

/// Sum of generator shifted Hamiltonians and line / RL-load shifted magnetic
/// energies. Network references rotate with reference_angle(x), so the value is
/// invariant under a common rotor-angle shift and vanishes at any synchronous
/// steady state with the operating-point currents.
double total_shifted_hamiltonian(const CompositeSystem& cs, const VectorXd& x);

/// Shifted Hamiltonian split into generator and network contributions.
struct HamiltonianParts {
  double generators = 0.0;
  double lines = 0.0;
  double loads = 0.0;
  double total() const { return generators + lines + loads; }
};
HamiltonianParts shifted_hamiltonian_parts(const CompositeSystem& cs, const VectorXd& x);

/// Analytic time derivative of total_shifted_hamiltonian along the rhs.
struct EnergyRate {
  double total = 0.0;
  double generator_dissipation = 0.0;  ///< sum of grad^T P_i grad (R_sssc folded in); <= 0 when certified
  double network_dissipation = 0.0;    ///< -(line and load losses on deviations)
  double interconnection = 0.0;        ///< remainder: port powers not cancelled across frames
};
EnergyRate shifted_hamiltonian_rate(const CompositeSystem& cs, double t, const VectorXd& x);

/// Incremental power balance in the synchronous coordinates anchored at
/// reference angle omega_s t: power absorbed by generators and loads on
/// deviation variables plus the grid's (storage rate + dissipation).
struct PowerBalance {
  double residual = 0.0;  ///< [W]; zero in exact arithmetic
  double scale = 0.0;     ///< sum of magnitudes of all terms [W]
  double generators = 0.0;
  double loads = 0.0;
  double grid = 0.0;
  double relative() const { return scale > 0.0 ? std::abs(residual) / scale : 0.0; }
};
PowerBalance incremental_power_balance(const CompositeSystem& cs, double t, const VectorXd& x);

}  // namespace phgrid
