#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <unsupported/Eigen/NonLinearOptimization>
#include <unsupported/Eigen/NumericalDiff>

#include "phasor.hpp"
#include "phgrid/equilibrium.hpp"
#include "phgrid/network.hpp"

namespace phgrid {

using detail::cplx;
using Eigen::MatrixXcd;
using Eigen::VectorXcd;

namespace {

struct PhasorSolution {
  std::vector<cplx> V_bus;   // common frame
  std::vector<cplx> I_gen;   // common frame, into the generator
  std::vector<cplx> I_line;  // from -> to
  std::vector<cplx> I_load;  // into the load
};

// Linear synchronous-frame solve of the whole network for given speed, rotor
// offsets and field currents. Generators are EMF j w L_m I_f e^{j delta}
// behind r + j w L_ss.
PhasorSolution solve_phasors(const NetworkDescription& nd, const std::vector<std::string>& buses, double w,
                             const VectorXd& delta, const VectorXd& I_f) {
  const auto nb = static_cast<Eigen::Index>(buses.size());
  MatrixXcd Y = MatrixXcd::Zero(nb, nb);
  VectorXcd rhs = VectorXcd::Zero(nb);
  auto index = [&](const std::string& b) {
    return static_cast<Eigen::Index>(std::find(buses.begin(), buses.end(), b) - buses.begin());
  };
  std::vector<cplx> E(nd.generators.size()), yg(nd.generators.size());
  for (std::size_t i = 0; i < nd.generators.size(); ++i) {
    const auto& p = nd.generators[i].params;
    const auto n = index(nd.generators[i].bus);
    yg[i] = 1.0 / cplx(p.r, w * p.L_ss());
    E[i] = cplx(0.0, w * p.L_m() * I_f(static_cast<Eigen::Index>(i))) * std::polar(1.0, delta(static_cast<Eigen::Index>(i)));
    Y(n, n) += yg[i];
    rhs(n) += yg[i] * E[i];
  }
  for (const auto& l : nd.lines) {
    const cplx y = 1.0 / cplx(l.R, w * l.L);
    const auto a = index(l.from_bus), b = index(l.to_bus);
    Y(a, a) += y;
    Y(b, b) += y;
    Y(a, b) -= y;
    Y(b, a) -= y;
  }
  for (const auto& l : nd.loads) {
    const auto n = index(l.bus);
    if (l.kind == LoadKind::LinearRL)
      Y(n, n) += 1.0 / cplx(l.R, w * l.L);
    else
      rhs(n) -= detail::constant_current_phasor(l.amplitude, l.phase);
  }
  Eigen::FullPivLU<MatrixXcd> lu(Y);
  if (!lu.isInvertible())
    throw SolverError("singular network admittance matrix", std::numeric_limits<double>::quiet_NaN());
  const VectorXcd V = lu.solve(rhs);

  PhasorSolution s;
  s.V_bus.assign(V.data(), V.data() + nb);
  for (std::size_t i = 0; i < nd.generators.size(); ++i)
    s.I_gen.push_back((V(index(nd.generators[i].bus)) - E[i]) * yg[i]);
  for (const auto& l : nd.lines) s.I_line.push_back((V(index(l.from_bus)) - V(index(l.to_bus))) / cplx(l.R, w * l.L));
  for (const auto& l : nd.loads) {
    if (l.kind == LoadKind::LinearRL)
      s.I_load.push_back(V(index(l.bus)) / cplx(l.R, w * l.L));
    else
      s.I_load.push_back(detail::constant_current_phasor(l.amplitude, l.phase));
  }
  return s;
}

OperatingPoint build_operating_point(const NetworkDescription& nd, const std::vector<std::string>& buses, double w,
                                     const VectorXd& delta, const VectorXd& I_f, const std::vector<double>* tau) {
  const PhasorSolution s = solve_phasors(nd, buses, w, delta, I_f);
  OperatingPoint op;
  op.omega_s = w;
  for (std::size_t i = 0; i < nd.generators.size(); ++i) {
    GeneratorParams<double> p = nd.generators[i].params;
    p.I_f = I_f(static_cast<Eigen::Index>(i));
    const double d = delta(static_cast<Eigen::Index>(i));
    const Eigen::Vector2d v = detail::to_pair(detail::to_rotor(s.V_bus[nd.bus_index(nd.generators[i].bus)], d));
    auto eq = solve_generator_equilibrium(w, Vector3<double>(v(0), v(1), 0.0), p);
    if (tau) eq.tau_m_star = (*tau)[i];
    op.generators.push_back(eq);
    op.rotor_offsets.push_back(d);
  }
  for (cplx v : s.V_bus) op.bus_voltages.push_back(detail::to_pair(v));
  for (cplx c : s.I_line) op.line_currents.push_back(detail::to_pair(c));
  for (cplx c : s.I_load) op.load_currents.push_back(detail::to_pair(c));
  return op;
}

// Rotor-frame terminal voltages minus targets, scaled by the largest target.
struct VoltageFit {
  typedef double Scalar;
  enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };
  typedef VectorXd InputType;
  typedef VectorXd ValueType;
  typedef Eigen::MatrixXd JacobianType;

  const NetworkDescription* nd;
  const std::vector<std::string>* buses;
  std::vector<double> If_scale;
  bool fix_first_angle;
  double V_scale;

  VoltageFit(const NetworkDescription& n, const std::vector<std::string>& b, std::vector<double> scale, bool fix)
      : nd(&n),
        buses(&b),
        If_scale(std::move(scale)),
        fix_first_angle(fix) {
    V_scale = 0.0;
    for (const auto& g : n.generators) V_scale = std::max(V_scale, g.V_target.norm());
    if (V_scale == 0.0) V_scale = 1.0;
  }

  int inputs() const { return static_cast<int>(2 * nd->generators.size() - (fix_first_angle ? 1 : 0)); }
  int values() const { return static_cast<int>(2 * nd->generators.size()); }

  void unpack(const VectorXd& u, VectorXd& I_f, VectorXd& delta) const {
    const auto N = static_cast<Eigen::Index>(nd->generators.size());
    I_f.resize(N);
    delta = VectorXd::Zero(N);
    for (Eigen::Index i = 0; i < N; ++i) I_f(i) = u(i) * If_scale[static_cast<std::size_t>(i)];
    const Eigen::Index first = fix_first_angle ? 1 : 0;
    for (Eigen::Index i = first; i < N; ++i) delta(i) = u(N + i - first);
  }

  int operator()(const VectorXd& u, VectorXd& f) const {
    VectorXd I_f, delta;
    unpack(u, I_f, delta);
    const auto s = solve_phasors(*nd, *buses, nd->omega_s, delta, I_f);
    for (std::size_t i = 0; i < nd->generators.size(); ++i) {
      const auto& g = nd->generators[i];
      const cplx v = detail::to_rotor(s.V_bus[nd->bus_index(g.bus)], delta(static_cast<Eigen::Index>(i)));
      const cplx err = v - detail::to_complex(g.V_target);
      f(static_cast<Eigen::Index>(2 * i)) = err.real() / V_scale;
      f(static_cast<Eigen::Index>(2 * i + 1)) = err.imag() / V_scale;
    }
    return 0;
  }
};

OperatingPoint solve_voltage_targets(const NetworkDescription& nd, const SteadyStateOptions& opts) {
  const auto buses = nd.buses();
  const double w = nd.omega_s;
  const bool fix = !nd.has_constant_current_loads();
  const std::size_t N = nd.generators.size();

  // Open-circuit guess: V_y = -w L_m I_f.
  std::vector<double> scale(N);
  VectorXd u = VectorXd::Zero(static_cast<Eigen::Index>(2 * N - (fix ? 1 : 0)));
  for (std::size_t i = 0; i < N; ++i) {
    const auto& g = nd.generators[i];
    const double guess = -g.V_target(1) / (w * g.params.L_m());
    scale[i] = std::max(std::abs(guess), 1.0);
    u(static_cast<Eigen::Index>(i)) = guess / scale[i];
  }

  VoltageFit fit(nd, buses, scale, fix);
  Eigen::NumericalDiff<VoltageFit, Eigen::Central> diff(fit);
  Eigen::LevenbergMarquardt<Eigen::NumericalDiff<VoltageFit, Eigen::Central>> lm(diff);
  lm.parameters.xtol = 1e-15;
  lm.parameters.ftol = 1e-15;
  lm.parameters.gtol = 0.0;
  lm.parameters.maxfev = opts.max_iterations * static_cast<int>(u.size() * 2 + 1);
  const auto status = lm.minimize(u);
  VectorXd f(fit.values());
  fit(u, f);
  if (status == Eigen::LevenbergMarquardtSpace::TooManyFunctionEvaluation ||
      status == Eigen::LevenbergMarquardtSpace::ImproperInputParameters || !u.allFinite())
    throw SolverError(fmt::format("terminal-voltage fit did not converge (status {})", static_cast<int>(status)),
                      f.norm());

  VectorXd I_f, delta;
  fit.unpack(u, I_f, delta);
  OperatingPoint op = build_operating_point(nd, buses, w, delta, I_f, nullptr);
  op.mode = Setpoint::TerminalVoltage;
  op.iterations = static_cast<int>(lm.iter);
  for (std::size_t i = 0; i < N; ++i) {
    const Eigen::Vector2d v = op.generators[i].V_star.head<2>();
    op.voltage_target_mismatch = std::max(op.voltage_target_mismatch, (v - nd.generators[i].V_target).norm());
  }
  if (op.voltage_target_mismatch > 1e-3 * fit.V_scale)
    spdlog::warn("terminal-voltage targets are only met to {:.3e} V (least squares)", op.voltage_target_mismatch);
  return op;
}

// Torque balances at the network-imposed currents.
struct TorqueBalance {
  typedef double Scalar;
  enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };
  typedef VectorXd InputType;
  typedef VectorXd ValueType;
  typedef Eigen::MatrixXd JacobianType;

  const NetworkDescription* nd;
  const std::vector<std::string>* buses;
  bool free_speed;
  std::vector<double> scale;

  int inputs() const { return static_cast<int>(nd->generators.size()); }
  int values() const { return static_cast<int>(nd->generators.size()); }

  void unpack(const VectorXd& u, double& w, VectorXd& delta) const {
    const auto N = static_cast<Eigen::Index>(nd->generators.size());
    delta = VectorXd::Zero(N);
    if (free_speed) {
      w = u(0) * nd->omega_s;
      for (Eigen::Index i = 1; i < N; ++i) delta(i) = u(i);
    } else {
      w = nd->omega_s;
      delta = u;
    }
  }

  VectorXd field_currents() const {
    VectorXd I_f(static_cast<Eigen::Index>(nd->generators.size()));
    for (std::size_t i = 0; i < nd->generators.size(); ++i)
      I_f(static_cast<Eigen::Index>(i)) = nd->generators[i].params.I_f;
    return I_f;
  }

  int operator()(const VectorXd& u, VectorXd& f) const {
    double w;
    VectorXd delta;
    unpack(u, w, delta);
    const auto s = solve_phasors(*nd, *buses, w, delta, field_currents());
    for (std::size_t i = 0; i < nd->generators.size(); ++i) {
      const auto& g = nd->generators[i];
      const cplx I = detail::to_rotor(s.I_gen[i], delta(static_cast<Eigen::Index>(i)));
      const double I_y = -I.imag();
      f(static_cast<Eigen::Index>(i)) = (g.tau_m - g.params.D * w - g.params.L_m() * g.params.I_f * I_y) / scale[i];
    }
    return 0;
  }
};

OperatingPoint solve_field_and_torque(const NetworkDescription& nd, const SteadyStateOptions& opts) {
  const auto buses = nd.buses();
  const std::size_t N = nd.generators.size();
  TorqueBalance tb{&nd, &buses, !nd.has_constant_current_loads(), {}};
  for (const auto& g : nd.generators) tb.scale.push_back(std::max({std::abs(g.tau_m), g.params.D * nd.omega_s, 1.0}));

  VectorXd u = VectorXd::Zero(static_cast<Eigen::Index>(N));
  if (tb.free_speed) u(0) = 1.0;
  if (opts.initial_guess) {
    const auto& g = *opts.initial_guess;
    if (g.rotor_offsets.size() != N) throw ParameterError("initial guess does not match the network");
    const double ref = tb.free_speed ? g.rotor_offsets[0] : 0.0;
    for (std::size_t i = tb.free_speed ? 1 : 0; i < N; ++i) u(static_cast<Eigen::Index>(i)) = g.rotor_offsets[i] - ref;
    if (tb.free_speed) u(0) = g.omega_s / nd.omega_s;
  }

  Eigen::HybridNonLinearSolver<TorqueBalance> solver(tb);
  solver.parameters.maxfev = opts.max_iterations * static_cast<int>(N + 1);
  solver.parameters.xtol = 1e-15;
  const auto info = solver.solveNumericalDiff(u);
  VectorXd f(static_cast<Eigen::Index>(N));
  tb(u, f);
  const double res = f.cwiseAbs().maxCoeff();
  if (!u.allFinite() || !(res <= opts.tolerance))
    throw SolverError(fmt::format("torque-balance Newton iteration did not converge (status {}, residual {:.3e})",
                                  static_cast<int>(info), res),
                      res);

  double w;
  VectorXd delta;
  tb.unpack(u, w, delta);
  std::vector<double> tau;
  for (const auto& g : nd.generators) tau.push_back(g.tau_m);
  OperatingPoint op = build_operating_point(nd, buses, w, delta, tb.field_currents(), &tau);
  op.mode = Setpoint::FieldAndTorque;
  op.iterations = static_cast<int>(solver.nfev);
  return op;
}

}  // namespace

OperatingPoint steady_state(const NetworkDescription& nd, const SteadyStateOptions& options) {
  nd.validate();
  const Setpoint mode = nd.generators.front().setpoint;
  for (const auto& g : nd.generators)
    if (g.setpoint != mode)
      throw ParameterError(fmt::format("generator '{}': all generators must use the same setpoint kind", g.name));
  OperatingPoint op = mode == Setpoint::TerminalVoltage ? solve_voltage_targets(nd, options)
                                                         : solve_field_and_torque(nd, options);
  spdlog::debug("steady state: omega = {:.12g} rad/s after {} evaluations", op.omega_s, op.iterations);
  return op;
}

}  // namespace phgrid
