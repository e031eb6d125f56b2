#include "phgrid/report.hpp"

#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <system_error>

namespace phgrid {

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(fmt::format("cannot write {}", tmp.string()));
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw Error(fmt::format("write to {} failed", tmp.string()));
    }
  }
  std::filesystem::rename(tmp, path);
}

std::string format_number(double v) { return fmt::format("{:.16e}", v); }

std::string operating_point_csv(const NetworkDescription& nd, const OperatingPoint& op) {
  std::string out = "kind,id,quantity,value\n";
  auto row = [&](std::string_view kind, std::string_view id, std::string_view q, double v) {
    out += fmt::format("{},{},{},{}\n", kind, id, q, format_number(v));
  };
  row("system", "-", "omega_s", op.omega_s);
  row("system", "-", "frequency_hz", op.omega_s / (2.0 * std::numbers::pi));
  row("system", "-", "voltage_target_mismatch", op.voltage_target_mismatch);
  for (std::size_t i = 0; i < nd.generators.size(); ++i) {
    const auto& g = nd.generators[i];
    const auto& eq = op.generators[i];
    row("generator", g.name, "V_x_star", eq.V_star(0));
    row("generator", g.name, "V_y_star", eq.V_star(1));
    row("generator", g.name, "V_z_star", eq.V_star(2));
    row("generator", g.name, "I_x_star", eq.I_star(0));
    row("generator", g.name, "I_y_star", eq.I_star(1));
    row("generator", g.name, "I_z_star", eq.I_star(2));
    row("generator", g.name, "tau_m_star", eq.tau_m_star);
    row("generator", g.name, "I_f", eq.I_f);
    row("generator", g.name, "rotor_offset", op.rotor_offsets[i]);
    row("generator", g.name, "lambda_x_star", eq.lambda_star(0));
    row("generator", g.name, "lambda_y_star", eq.lambda_star(1));
    row("generator", g.name, "lambda_z_star", eq.lambda_star(2));
    row("generator", g.name, "lambda_f_star", eq.lambda_star(3));
  }
  const auto buses = nd.buses();
  for (std::size_t n = 0; n < buses.size(); ++n) {
    row("bus", buses[n], "V_x", op.bus_voltages[n](0));
    row("bus", buses[n], "V_y", op.bus_voltages[n](1));
  }
  for (std::size_t j = 0; j < nd.lines.size(); ++j) {
    row("line", nd.lines[j].name, "I_x", op.line_currents[j](0));
    row("line", nd.lines[j].name, "I_y", op.line_currents[j](1));
  }
  for (std::size_t k = 0; k < nd.loads.size(); ++k) {
    row("load", nd.loads[k].name, "I_x", op.load_currents[k](0));
    row("load", nd.loads[k].name, "I_y", op.load_currents[k](1));
  }
  return out;
}

std::string operating_point_text(const NetworkDescription& nd, const OperatingPoint& op) {
  std::string out;
  out += fmt::format("Operating point ({} mode)\n",
                     op.mode == Setpoint::TerminalVoltage ? "terminal-voltage" : "field-current/torque");
  out += fmt::format("  omega_s = {:.9f} rad/s ({:.9f} Hz)\n", op.omega_s, op.omega_s / (2.0 * std::numbers::pi));
  if (op.mode == Setpoint::TerminalVoltage)
    out += fmt::format("  largest terminal-voltage target mismatch = {:.3e} V\n", op.voltage_target_mismatch);
  out += "\nGenerators (rotor frame)\n";
  out += fmt::format("  {:<10} {:>14} {:>14} {:>12} {:>12} {:>16} {:>14} {:>14}\n", "name", "V_x* [V]", "V_y* [V]",
                     "I_x* [A]", "I_y* [A]", "tau_m* [N m]", "I_f [A]", "offset [rad]");
  for (std::size_t i = 0; i < nd.generators.size(); ++i) {
    const auto& eq = op.generators[i];
    out += fmt::format("  {:<10} {:>14.2f} {:>14.2f} {:>12.4f} {:>12.4f} {:>16.6e} {:>14.4f} {:>14.6e}\n",
                       nd.generators[i].name, eq.V_star(0), eq.V_star(1), eq.I_star(0), eq.I_star(1), eq.tau_m_star,
                       eq.I_f, op.rotor_offsets[i]);
  }
  const auto buses = nd.buses();
  out += "\nBus voltages (synchronous frame)\n";
  out += fmt::format("  {:<10} {:>14} {:>14}\n", "bus", "V_x [V]", "V_y [V]");
  for (std::size_t n = 0; n < buses.size(); ++n)
    out += fmt::format("  {:<10} {:>14.2f} {:>14.2f}\n", buses[n], op.bus_voltages[n](0), op.bus_voltages[n](1));
  if (!nd.lines.empty()) {
    out += "\nLine currents (synchronous frame, from -> to)\n";
    out += fmt::format("  {:<10} {:>8} {:>8} {:>12} {:>12}\n", "line", "from", "to", "I_x [A]", "I_y [A]");
    for (std::size_t j = 0; j < nd.lines.size(); ++j)
      out += fmt::format("  {:<10} {:>8} {:>8} {:>12.4f} {:>12.4f}\n", nd.lines[j].name, nd.lines[j].from_bus,
                         nd.lines[j].to_bus, op.line_currents[j](0), op.line_currents[j](1));
  }
  if (!nd.loads.empty()) {
    out += "\nLoad currents (synchronous frame)\n";
    out += fmt::format("  {:<10} {:>8} {:>12} {:>12}\n", "load", "bus", "I_x [A]", "I_y [A]");
    for (std::size_t k = 0; k < nd.loads.size(); ++k)
      out += fmt::format("  {:<10} {:>8} {:>12.4f} {:>12.4f}\n", nd.loads[k].name, nd.loads[k].bus,
                         op.load_currents[k](0), op.load_currents[k](1));
  }
  return out;
}

std::vector<UniquenessReport> uniqueness_reports(const NetworkDescription& nd, const OperatingPoint& op) {
  std::vector<UniquenessReport> out;
  for (std::size_t i = 0; i < nd.generators.size(); ++i) {
    const auto& eq = op.generators[i];
    out.push_back(omega_equilibria(eq.tau_m_star, eq.V_star, op.generator_params(nd, i), eq.omega_s));
  }
  return out;
}

std::string certificate_text(const NetworkDescription& nd, const CertificateReport& report,
                             const std::vector<UniquenessReport>& uniqueness) {
  std::string out = "Stability certificate: (L_ss I_x*)^2 + (L_ss I_y*)^2 < 4 D (r + R_sssc)\n";
  out += fmt::format("  {:<10} {:>14} {:>14} {:>14} {:>10} {:>8} {:>14}\n", "name", "lhs [Wb^2]", "rhs [Wb^2]",
                     "margin", "R_sssc", "holds", "R_min [Ohm]");
  for (const auto& e : report.generators)
    out += fmt::format("  {:<10} {:>14.6e} {:>14.6e} {:>14.6e} {:>10.4g} {:>8} {:>14.6e}\n", e.name, e.lhs, e.rhs,
                       e.margin, e.R_sssc, e.holds ? "yes" : "NO", e.R_min);
  out += "\n  eigenvalues of P (ascending)\n";
  for (const auto& e : report.generators) {
    out += fmt::format("  {:<10}", e.name);
    for (int k = 0; k < 5; ++k) out += fmt::format(" {:>14.6e}", e.P_eigenvalues(k) + 0.0);
    out += "\n";
  }
  if (!report.holds) {
    out += "\n  certificate fails; required series resistance:\n";
    for (const auto& e : report.generators)
      if (!e.holds)
        out += fmt::format("    {}: R_sssc > {:.6g} Ohm ({:.3g} mOhm)\n", e.name, e.R_min, 1e3 * e.R_min);
  }

  out += "\nSpeed-equilibrium uniqueness at the operating point\n";
  for (std::size_t i = 0; i < uniqueness.size() && i < nd.generators.size(); ++i) {
    const auto& u = uniqueness[i];
    std::string roots;
    for (double w : u.roots) roots += fmt::format("{}{:.9g}", roots.empty() ? "" : ", ", w);
    out += fmt::format("  {:<10} printed test = {:.6e} ({}), real roots [rad/s]: {}{}\n", nd.generators[i].name,
                       u.bcond_value, u.bcond_holds ? "unique" : "not unique", roots.empty() ? "none" : roots,
                       u.reduced_degree ? " (degree reduced)" : "");
    if (u.has_r0_reduced_form)
      out += fmt::format("  {:<10} r = 0 reduced test = {:.6e} ({})\n", "", u.r0_reduced_value,
                         u.r0_reduced_holds ? "unique" : "not unique");
    for (const auto& msg : uniqueness_disagreements(u)) out += fmt::format("  {:<10} disagreement: {}\n", "", msg);
  }
  out += fmt::format("\nVerdict: {}\n", report.holds ? "all certificates hold" : "certificate FAILS");
  return out;
}

std::string trajectory_csv(const CompositeSystem& cs, const Trajectory& traj) {
  const auto& nd = cs.description();
  std::string out = "t";
  for (std::size_t i = 1; i <= nd.generators.size(); ++i)
    out += fmt::format(",freq_hz_{0},I_x_{0},I_y_{0},I_z_{0}", i);
  for (const auto& l : nd.lines) out += fmt::format(",I_a_{0},I_b_{0},I_c_{0}", l.name);
  out += ",H_total_shifted,power_residual\n";
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const auto& x = traj.states[k];
    out += format_number(traj.times[k]);
    for (std::size_t i = 0; i < nd.generators.size(); ++i) {
      const auto o = static_cast<Eigen::Index>(cs.generator_offset(i));
      out += fmt::format(",{},{},{},{}", format_number(traj.frequency_hz[k][i]), format_number(x(o + 2)),
                         format_number(x(o + 3)), format_number(x(o + 4)));
    }
    for (std::size_t j = 0; j < nd.lines.size(); ++j) {
      const auto o = static_cast<Eigen::Index>(cs.line_offset(j));
      out += fmt::format(",{},{},{}", format_number(x(o)), format_number(x(o + 1)), format_number(x(o + 2)));
    }
    out += fmt::format(",{},{}\n", format_number(traj.H_total[k]), format_number(traj.power_residual[k]));
  }
  return out;
}

std::string summary_csv(const std::vector<RunResult>& runs) {
  std::string out =
      "run,status,converged,monotone_decay,H_initial,H_final,H_ratio,max_uptick,max_uptick_time,settling_time,"
      "final_frequency_error_hz,max_power_residual_relative,failure_time,error\n";
  for (const auto& r : runs) {
    const auto& m = r.metrics;
    std::string err = r.error;
    for (char& c : err)
      if (c == ',' || c == '\n') c = ';';
    out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", r.label, r.failed ? "failed" : "ok",
                       !r.failed && m.converged ? 1 : 0, !r.failed && m.monotone_decay ? 1 : 0,
                       format_number(m.H_initial), format_number(m.H_final), format_number(m.H_ratio),
                       format_number(m.max_uptick), format_number(m.max_uptick_time), format_number(m.settling_time),
                       format_number(m.final_frequency_error_hz), format_number(m.max_power_residual_relative),
                       format_number(r.failure_time), err);
  }
  return out;
}

}  // namespace phgrid
