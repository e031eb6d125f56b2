#include "phgrid/network.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "phasor.hpp"
#include "phgrid/equilibrium.hpp"

namespace phgrid {

using detail::cplx;
using detail::to_complex;
using Eigen::Matrix3d;
using Eigen::MatrixXd;

// ---------------------------------------------------------------------------
// NetworkDescription

std::vector<std::string> NetworkDescription::buses() const {
  std::vector<std::string> out;
  auto add = [&](const std::string& b) {
    if (std::find(out.begin(), out.end(), b) == out.end()) out.push_back(b);
  };
  for (const auto& g : generators) add(g.bus);
  for (const auto& l : lines) {
    add(l.from_bus);
    add(l.to_bus);
  }
  for (const auto& l : loads) add(l.bus);
  return out;
}

std::size_t NetworkDescription::bus_index(const std::string& name) const {
  const auto b = buses();
  const auto it = std::find(b.begin(), b.end(), name);
  if (it == b.end()) throw AssemblyError(fmt::format("unknown bus '{}'", name));
  return static_cast<std::size_t>(it - b.begin());
}

bool NetworkDescription::has_constant_current_loads() const {
  return std::any_of(loads.begin(), loads.end(), [](const LoadModel& l) { return l.kind == LoadKind::ConstantCurrent; });
}

void NetworkDescription::validate() const {
  if (generators.empty()) throw AssemblyError("network has no generator");
  if (!(std::isfinite(omega_s) && omega_s > 0.0)) throw ParameterError("omega_s must be finite and > 0");
  for (const auto& g : generators) {
    if (g.bus.empty()) throw AssemblyError(fmt::format("generator '{}' is not attached to a bus", g.name));
    try {
      phgrid::validate(g.params);
    } catch (const ParameterError& e) {
      throw ParameterError(fmt::format("generator '{}': {}", g.name, e.what()));
    }
    if (!(std::isfinite(g.R_sssc) && g.R_sssc >= 0.0))
      throw ParameterError(fmt::format("generator '{}': R_sssc must be >= 0", g.name));
    if (g.setpoint == Setpoint::TerminalVoltage && !g.V_target.allFinite())
      throw ParameterError(fmt::format("generator '{}': target voltages must be finite", g.name));
    if (g.setpoint == Setpoint::FieldAndTorque && !std::isfinite(g.tau_m))
      throw ParameterError(fmt::format("generator '{}': tau_m must be finite", g.name));
  }
  for (const auto& l : lines) {
    if (l.from_bus.empty() || l.to_bus.empty())
      throw AssemblyError(fmt::format("line '{}' needs both end buses", l.name));
    if (l.from_bus == l.to_bus) throw AssemblyError(fmt::format("line '{}' connects bus '{}' to itself", l.name, l.from_bus));
    if (!(std::isfinite(l.R) && l.R >= 0.0)) throw ParameterError(fmt::format("line '{}': R must be >= 0", l.name));
    if (!(std::isfinite(l.L) && l.L > 0.0))
      throw AssemblyError(fmt::format("line '{}': zero-inductance branch (L must be > 0)", l.name));
  }
  for (const auto& l : loads) {
    if (l.bus.empty()) throw AssemblyError(fmt::format("load '{}' is not attached to a bus", l.name));
    if (l.kind == LoadKind::LinearRL) {
      if (!(std::isfinite(l.R) && l.R > 0.0)) throw ParameterError(fmt::format("load '{}': R must be > 0", l.name));
      if (!(std::isfinite(l.L) && l.L >= 0.0)) throw ParameterError(fmt::format("load '{}': L must be >= 0", l.name));
    } else if (!(std::isfinite(l.amplitude) && std::isfinite(l.phase))) {
      throw ParameterError(fmt::format("load '{}': amplitude and phase must be finite", l.name));
    }
  }

  const auto b = buses();
  std::vector<std::size_t> parent(b.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  for (const auto& l : lines) parent[find(bus_index(l.from_bus))] = find(bus_index(l.to_bus));
  for (std::size_t i = 1; i < b.size(); ++i)
    if (find(i) != find(0))
      throw AssemblyError(fmt::format("bus '{}' is isolated from bus '{}' (network not connected)", b[i], b[0]));
}

std::vector<std::string> NetworkDescription::warnings() const {
  std::vector<std::string> out;
  for (const auto& l : lines)
    if (l.R == 0.0) out.push_back(fmt::format("line '{}' is lossless: only weak (non-asymptotic) stability", l.name));
  return out;
}

GeneratorParams<double> OperatingPoint::generator_params(const NetworkDescription& nd, std::size_t i) const {
  GeneratorParams<double> p = nd.generators.at(i).params;
  p.I_f = generators.at(i).I_f;
  return p;
}

Vector3d sync_to_abc(const Vector2d& xy, double angle) {
  return stator_transform(angle).transpose() * Vector3d(xy(0), xy(1), 0.0);
}

namespace {

Vector3d sync_to_abc_rate(const Vector2d& xy, double angle, double omega) {
  return omega * stator_transform_derivative(angle).transpose() * Vector3d(xy(0), xy(1), 0.0);
}

double relative(cplx residual, std::initializer_list<double> terms) {
  double scale = 0.0;
  for (double t : terms) scale = std::max(scale, t);
  return scale > 0.0 ? std::abs(residual) / scale : std::abs(residual);
}

}  // namespace

// ---------------------------------------------------------------------------
// Operating-point checks

std::vector<NamedResidual> operating_point_residuals(const NetworkDescription& nd, const OperatingPoint& op) {
  const auto buses = nd.buses();
  if (op.generators.size() != nd.generators.size() || op.rotor_offsets.size() != nd.generators.size() ||
      op.bus_voltages.size() != buses.size() || op.line_currents.size() != nd.lines.size() ||
      op.load_currents.size() != nd.loads.size())
    throw InconsistentOperatingPoint("operating point does not match the network layout", "layout");

  const double w = op.omega_s;
  std::vector<NamedResidual> out;
  std::vector<cplx> kcl(buses.size(), 0.0);
  std::vector<double> kcl_scale(buses.size(), 0.0);
  auto leave = [&](std::size_t bus, cplx I) {
    kcl[bus] += I;
    kcl_scale[bus] += std::abs(I);
  };
  auto V = [&](std::size_t bus) { return to_complex(op.bus_voltages[bus]); };

  static const char* axes[] = {"torque balance", "x-axis", "y-axis", "z-axis"};
  for (std::size_t i = 0; i < nd.generators.size(); ++i) {
    const auto& g = nd.generators[i];
    const auto& eq = op.generators[i];
    const auto p = op.generator_params(nd, i);
    const Vector4<double> r = equilibrium_residual(eq, p);
    for (int k = 0; k < 4; ++k) out.push_back({fmt::format("generator '{}' {}", g.name, axes[k]), std::abs(r(k))});
    if (std::abs(eq.omega_s - w) > 1e-12 * w)
      out.push_back({fmt::format("generator '{}' speed vs network frequency", g.name), std::abs(eq.omega_s - w) / w});
    const std::size_t n = nd.bus_index(g.bus);
    const cplx Vrot = to_complex(eq.V_star(0), eq.V_star(1));
    const cplx Vnet = detail::to_rotor(V(n), op.rotor_offsets[i]);
    out.push_back({fmt::format("generator '{}' terminal voltage vs bus '{}'", g.name, g.bus),
                   relative(Vrot - Vnet, {std::abs(Vrot), std::abs(Vnet)})});
    leave(n, detail::from_rotor(to_complex(eq.I_star(0), eq.I_star(1)), op.rotor_offsets[i]));
  }
  for (std::size_t j = 0; j < nd.lines.size(); ++j) {
    const auto& l = nd.lines[j];
    const std::size_t a = nd.bus_index(l.from_bus), b = nd.bus_index(l.to_bus);
    const cplx I = to_complex(op.line_currents[j]);
    const cplx drop = cplx(l.R, w * l.L) * I;
    out.push_back({fmt::format("line '{}' voltage drop", l.name),
                   relative(V(a) - V(b) - drop, {std::abs(V(a)), std::abs(V(b)), std::abs(drop)})});
    leave(a, I);
    leave(b, -I);
  }
  for (std::size_t k = 0; k < nd.loads.size(); ++k) {
    const auto& l = nd.loads[k];
    const std::size_t n = nd.bus_index(l.bus);
    const cplx I = to_complex(op.load_currents[k]);
    if (l.kind == LoadKind::LinearRL) {
      const cplx drop = cplx(l.R, w * l.L) * I;
      out.push_back({fmt::format("load '{}' impedance law", l.name),
                     relative(V(n) - drop, {std::abs(V(n)), std::abs(drop)})});
    } else {
      const cplx J = detail::constant_current_phasor(l.amplitude, l.phase);
      out.push_back({fmt::format("load '{}' current", l.name), relative(I - J, {std::abs(I), std::abs(J)})});
    }
    leave(n, I);
  }
  for (std::size_t n = 0; n < buses.size(); ++n)
    out.push_back({fmt::format("KCL at bus '{}'", buses[n]), relative(kcl[n], {kcl_scale[n]})});
  return out;
}

void check_operating_point(const NetworkDescription& nd, const OperatingPoint& op, double tolerance) {
  const auto res = operating_point_residuals(nd, op);
  const auto worst = std::max_element(res.begin(), res.end(),
                                      [](const NamedResidual& a, const NamedResidual& b) { return a.value < b.value; });
  if (worst != res.end() && !(worst->value <= tolerance))
    throw InconsistentOperatingPoint(
        fmt::format("operating point inconsistent: {} residual {:.3e} exceeds {:.1e}", worst->name, worst->value, tolerance),
        worst->name);
}

// ---------------------------------------------------------------------------
// CompositeSystem

CompositeSystem::CompositeSystem(NetworkDescription nd, OperatingPoint op, CompositeOptions options)
    : nd_(std::move(nd)), op_(std::move(op)), options_(options) {
  nd_.validate();
  check_operating_point(nd_, op_, 1e-8);

  const auto buses = nd_.buses();
  n_buses_ = buses.size();
  shunt_conductance_.assign(n_buses_, 0.0);
  for (std::size_t i = 0; i < nd_.generators.size(); ++i) {
    params_.push_back(op_.generator_params(nd_, i));
    gen_bus_.push_back(nd_.bus_index(nd_.generators[i].bus));
    total_inertia_ += params_.back().M;
  }
  line_offset_ = 5 * nd_.generators.size();
  std::size_t next = line_offset_;
  for (const auto& l : nd_.lines) {
    line_from_.push_back(nd_.bus_index(l.from_bus));
    line_to_.push_back(nd_.bus_index(l.to_bus));
    next += 3;
  }
  for (const auto& l : nd_.loads) {
    load_bus_.push_back(nd_.bus_index(l.bus));
    if (l.has_state()) {
      load_offsets_.push_back(next);
      next += 3;
    } else {
      load_offsets_.push_back(npos);
      if (l.is_resistive()) shunt_conductance_[load_bus_.back()] += 1.0 / l.R;
    }
  }
  dimension_ = next;

  for (std::size_t n = 0; n < n_buses_; ++n)
    if (shunt_conductance_[n] == 0.0) kcl_buses_.push_back(n);
  kcl_C_ = MatrixXd::Zero(3 * kcl_buses_.size(), dimension_ - line_offset_);
  auto stamp = [&](std::size_t bus, std::size_t state_offset, double sign) {
    const auto it = std::find(kcl_buses_.begin(), kcl_buses_.end(), bus);
    if (it == kcl_buses_.end()) return;
    const auto r = static_cast<Eigen::Index>(it - kcl_buses_.begin());
    kcl_C_.block(3 * r, static_cast<Eigen::Index>(state_offset - line_offset_), 3, 3) += sign * Matrix3d::Identity();
  };
  for (std::size_t j = 0; j < nd_.lines.size(); ++j) {
    stamp(line_from_[j], line_offset(j), 1.0);
    stamp(line_to_[j], line_offset(j), -1.0);
  }
  for (std::size_t k = 0; k < nd_.loads.size(); ++k)
    if (load_offsets_[k] != npos) stamp(load_bus_[k], load_offsets_[k], 1.0);
  if (!kcl_buses_.empty()) kcl_pinv_ = kcl_C_.completeOrthogonalDecomposition().pseudoInverse();

  // Bus algebra must be uniquely solvable; check at the operating point.
  const VectorXd x0 = operating_state(0.0);
  MatrixXd A = MatrixXd::Zero(3 * n_buses_, 3 * n_buses_);
  for (std::size_t n = 0; n < n_buses_; ++n)
    if (shunt_conductance_[n] > 0.0) A.block<3, 3>(3 * n, 3 * n) += shunt_conductance_[n] * Matrix3d::Identity();
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const std::size_t n = gen_bus_[i];
    if (shunt_conductance_[n] > 0.0) continue;
    const Matrix3d T = stator_transform(x0(generator_offset(i)));
    const Vector3d Linv(1.0 / params_[i].L_ss(), 1.0 / params_[i].L_ss(), 1.0 / params_[i].L_zero());
    A.block<3, 3>(3 * n, 3 * n) += T.transpose() * Linv.asDiagonal() * T;
  }
  for (std::size_t j = 0; j < nd_.lines.size(); ++j) {
    const double g = 1.0 / nd_.lines[j].L;
    const std::size_t a = line_from_[j], b = line_to_[j];
    if (shunt_conductance_[a] == 0.0) {
      A.block<3, 3>(3 * a, 3 * a) += g * Matrix3d::Identity();
      A.block<3, 3>(3 * a, 3 * b) -= g * Matrix3d::Identity();
    }
    if (shunt_conductance_[b] == 0.0) {
      A.block<3, 3>(3 * b, 3 * b) += g * Matrix3d::Identity();
      A.block<3, 3>(3 * b, 3 * a) -= g * Matrix3d::Identity();
    }
  }
  for (std::size_t k = 0; k < nd_.loads.size(); ++k)
    if (nd_.loads[k].has_state() && shunt_conductance_[load_bus_[k]] == 0.0)
      A.block<3, 3>(3 * load_bus_[k], 3 * load_bus_[k]) += (1.0 / nd_.loads[k].L) * Matrix3d::Identity();
  Eigen::FullPivLU<MatrixXd> lu(A);
  lu.setThreshold(1e-12);
  if (!lu.isInvertible()) {
    std::string culprits;
    for (std::size_t n = 0; n < n_buses_; ++n) {
      const double row = A.block(3 * n, 0, 3, A.cols()).norm();
      if (row == 0.0) culprits += (culprits.empty() ? "" : ", ") + buses[n];
    }
    throw AssemblyError(fmt::format("singular bus-voltage algebra{}", culprits.empty() ? "" : " at bus(es) " + culprits));
  }
}

GeneratorState<double> CompositeSystem::generator_state(const VectorXd& x, std::size_t i) const {
  return GeneratorState<double>::from_vector(x.segment<5>(generator_offset(i)));
}

double CompositeSystem::reference_angle(const VectorXd& x) const {
  double acc = 0.0;
  for (std::size_t i = 0; i < params_.size(); ++i)
    acc += params_[i].M * (x(generator_offset(i)) - op_.rotor_offsets[i]);
  return acc / total_inertia_;
}

Vector3d CompositeSystem::injection(double t, std::size_t bus) const {
  Vector3d J = Vector3d::Zero();
  for (std::size_t k = 0; k < nd_.loads.size(); ++k) {
    const auto& l = nd_.loads[k];
    if (l.kind != LoadKind::ConstantCurrent || load_bus_[k] != bus) continue;
    J += sync_to_abc(op_.load_currents[k], nd_.omega_s * t);
  }
  return J;
}

Vector3d CompositeSystem::injection_rate(double t, std::size_t bus) const {
  Vector3d J = Vector3d::Zero();
  for (std::size_t k = 0; k < nd_.loads.size(); ++k) {
    const auto& l = nd_.loads[k];
    if (l.kind != LoadKind::ConstantCurrent || load_bus_[k] != bus) continue;
    J += sync_to_abc_rate(op_.load_currents[k], nd_.omega_s * t, nd_.omega_s);
  }
  return J;
}

void CompositeSystem::evaluate(double t, const VectorXd& x, VectorXd* dxdt, Eigen::Matrix3Xd* Vout) const {
  const std::size_t ng = params_.size();
  const std::size_t nb = n_buses_;
  MatrixXd A = MatrixXd::Zero(3 * nb, 3 * nb);
  VectorXd b = VectorXd::Zero(3 * nb);
  Eigen::Matrix3Xd S = Eigen::Matrix3Xd::Zero(3, nb);  // net current leaving each bus
  auto algebraic = [&](std::size_t n) { return shunt_conductance_[n] > 0.0; };

  std::vector<Matrix3d> T(ng), dT(ng);
  std::vector<Vector3d> f(ng), Linv(ng);
  for (std::size_t i = 0; i < ng; ++i) {
    const auto& p = params_[i];
    const auto s = generator_state(x, i);
    const auto& eq = op_.generators[i];
    const double R = nd_.generators[i].R_sssc;
    T[i] = stator_transform(s.theta);
    dT[i] = stator_transform_derivative(s.theta);
    const double L = p.L_ss(), Lm = p.L_m();
    f[i] << -p.r * s.I_x - s.omega * L * s.I_y - R * (s.I_x - eq.I_star(0)),
        -p.r * s.I_y + s.omega * L * s.I_x + s.omega * Lm * p.I_f - R * (s.I_y - eq.I_star(1)),
        -p.r * s.I_z - R * (s.I_z - eq.I_star(2));
    Linv[i] << 1.0 / L, 1.0 / L, 1.0 / p.L_zero();
    const std::size_t n = gen_bus_[i];
    const Vector3d I = s.currents();
    S.col(n) += T[i].transpose() * I;
    if (!algebraic(n)) {
      b.segment<3>(3 * n) -= T[i].transpose() * Linv[i].cwiseProduct(f[i]) + s.omega * dT[i].transpose() * I;
      A.block<3, 3>(3 * n, 3 * n) += T[i].transpose() * Linv[i].asDiagonal() * T[i];
    }
  }
  for (std::size_t j = 0; j < nd_.lines.size(); ++j) {
    const auto& l = nd_.lines[j];
    const Vector3d I = x.segment<3>(line_offset(j));
    const std::size_t a = line_from_[j], c = line_to_[j];
    const double g = 1.0 / l.L;
    S.col(a) += I;
    S.col(c) -= I;
    if (!algebraic(a)) {
      b.segment<3>(3 * a) += g * l.R * I;
      A.block<3, 3>(3 * a, 3 * a).diagonal().array() += g;
      A.block<3, 3>(3 * a, 3 * c).diagonal().array() -= g;
    }
    if (!algebraic(c)) {
      b.segment<3>(3 * c) -= g * l.R * I;
      A.block<3, 3>(3 * c, 3 * c).diagonal().array() += g;
      A.block<3, 3>(3 * c, 3 * a).diagonal().array() -= g;
    }
  }
  for (std::size_t k = 0; k < nd_.loads.size(); ++k) {
    const auto& l = nd_.loads[k];
    if (!l.has_state()) continue;
    const std::size_t n = load_bus_[k];
    const Vector3d I = x.segment<3>(load_offsets_[k]);
    S.col(n) += I;
    if (!algebraic(n)) {
      b.segment<3>(3 * n) += (l.R / l.L) * I;
      A.block<3, 3>(3 * n, 3 * n).diagonal().array() += 1.0 / l.L;
    }
  }
  for (std::size_t n = 0; n < nb; ++n) {
    S.col(n) += injection(t, n);
    if (algebraic(n)) {
      A.block<3, 3>(3 * n, 3 * n).diagonal().array() += shunt_conductance_[n];
      b.segment<3>(3 * n) = -S.col(n);
    } else {
      b.segment<3>(3 * n) -= injection_rate(t, n) + options_.kcl_stabilization * S.col(n);
    }
  }

  const VectorXd v = A.partialPivLu().solve(b);
  const Eigen::Map<const Eigen::Matrix3Xd> V(v.data(), 3, static_cast<Eigen::Index>(nb));
  if (Vout) *Vout = V;
  if (!dxdt) return;

  VectorXd& d = *dxdt;
  d.resize(static_cast<Eigen::Index>(dimension_));
  for (std::size_t i = 0; i < ng; ++i) {
    const auto& p = params_[i];
    const auto s = generator_state(x, i);
    const std::size_t o = generator_offset(i);
    const Vector3d Vg = T[i] * V.col(gen_bus_[i]);
    d(o) = s.omega;
    d(o + 1) = (-p.D * s.omega - p.L_m() * p.I_f * s.I_y + op_.generators[i].tau_m_star) / p.M;
    d.segment<3>(o + 2) = Linv[i].cwiseProduct(f[i] + Vg);
  }
  for (std::size_t j = 0; j < nd_.lines.size(); ++j) {
    const auto& l = nd_.lines[j];
    const std::size_t o = line_offset(j);
    d.segment<3>(o) = (V.col(line_from_[j]) - V.col(line_to_[j]) - l.R * x.segment<3>(o)) / l.L;
  }
  for (std::size_t k = 0; k < nd_.loads.size(); ++k) {
    const auto& l = nd_.loads[k];
    if (!l.has_state()) continue;
    const std::size_t o = load_offsets_[k];
    d.segment<3>(o) = (V.col(load_bus_[k]) - l.R * x.segment<3>(o)) / l.L;
  }
}

void CompositeSystem::rhs(double t, const VectorXd& x, VectorXd& dxdt) const { evaluate(t, x, &dxdt, nullptr); }

VectorXd CompositeSystem::rhs(double t, const VectorXd& x) const {
  VectorXd d;
  evaluate(t, x, &d, nullptr);
  return d;
}

Eigen::Matrix3Xd CompositeSystem::bus_voltages(double t, const VectorXd& x) const {
  Eigen::Matrix3Xd V;
  evaluate(t, x, nullptr, &V);
  return V;
}

VectorXd CompositeSystem::operating_state(double t) const {
  VectorXd x = VectorXd::Zero(static_cast<Eigen::Index>(dimension_));
  const double phi = op_.omega_s * t;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& eq = op_.generators[i];
    x.segment<5>(generator_offset(i)) << phi + op_.rotor_offsets[i], eq.omega_s, eq.I_star;
  }
  for (std::size_t j = 0; j < nd_.lines.size(); ++j) x.segment<3>(line_offset(j)) = sync_to_abc(op_.line_currents[j], phi);
  for (std::size_t k = 0; k < nd_.loads.size(); ++k)
    if (load_offsets_[k] != npos) x.segment<3>(load_offsets_[k]) = sync_to_abc(op_.load_currents[k], phi);
  return x;
}

namespace {

// Currents leaving each bus that are fixed by generator states and sources.
Eigen::Matrix3Xd fixed_leaving(const CompositeSystem& cs, double t, const VectorXd& x,
                               const std::vector<std::size_t>& gen_bus, std::size_t nb,
                               const std::function<Vector3d(double, std::size_t)>& inj) {
  Eigen::Matrix3Xd S = Eigen::Matrix3Xd::Zero(3, static_cast<Eigen::Index>(nb));
  for (std::size_t i = 0; i < gen_bus.size(); ++i) {
    const auto s = cs.generator_state(x, i);
    S.col(gen_bus[i]) += stator_transform(s.theta).transpose() * s.currents();
  }
  for (std::size_t n = 0; n < nb; ++n) S.col(n) += inj(t, n);
  return S;
}

}  // namespace

void CompositeSystem::enforce_kcl(double t, VectorXd& x) const {
  if (kcl_buses_.empty()) return;
  const Eigen::Matrix3Xd S = fixed_leaving(*this, t, x, gen_bus_, n_buses_,
                                           [this](double tt, std::size_t n) { return injection(tt, n); });
  VectorXd mismatch(3 * kcl_buses_.size());
  for (std::size_t r = 0; r < kcl_buses_.size(); ++r) mismatch.segment<3>(3 * r) = -S.col(kcl_buses_[r]);
  const auto net = static_cast<Eigen::Index>(dimension_ - line_offset_);
  mismatch -= kcl_C_ * x.tail(net);
  x.tail(net) += kcl_pinv_ * mismatch;
}

VectorXd CompositeSystem::project_consistent(double t, VectorXd x) const {
  enforce_kcl(t, x);
  const double left = kcl_violation(t, x);
  double scale = 1.0;
  for (std::size_t i = 0; i < params_.size(); ++i) scale = std::max(scale, generator_state(x, i).currents().norm());
  if (left > 1e-9 * scale)
    throw AssemblyError(fmt::format(
        "cannot restore KCL by adjusting network currents (remaining {:.3e} A); check buses without shunt paths", left));
  return x;
}

double CompositeSystem::kcl_violation(double t, const VectorXd& x) const {
  Eigen::Matrix3Xd S = fixed_leaving(*this, t, x, gen_bus_, n_buses_,
                                     [this](double tt, std::size_t n) { return injection(tt, n); });
  for (std::size_t j = 0; j < nd_.lines.size(); ++j) {
    S.col(line_from_[j]) += x.segment<3>(line_offset(j));
    S.col(line_to_[j]) -= x.segment<3>(line_offset(j));
  }
  for (std::size_t k = 0; k < nd_.loads.size(); ++k)
    if (load_offsets_[k] != npos) S.col(load_bus_[k]) += x.segment<3>(load_offsets_[k]);
  double worst = 0.0;
  for (std::size_t n = 0; n < n_buses_; ++n)
    if (shunt_conductance_[n] == 0.0) worst = std::max(worst, S.col(n).norm());
  return worst;
}

CompositeSystem assemble(const NetworkDescription& nd, const OperatingPoint& op, CompositeOptions options) {
  return CompositeSystem(nd, op, options);
}

// ---------------------------------------------------------------------------
// Energy monitors

HamiltonianParts shifted_hamiltonian_parts(const CompositeSystem& cs, const VectorXd& x) {
  const auto& nd = cs.description();
  const auto& op = cs.operating_point();
  HamiltonianParts h;
  for (std::size_t i = 0; i < nd.generators.size(); ++i)
    h.generators += shifted_hamiltonian(cs.generator_state(x, i), op.generators[i], cs.generator_params()[i]);
  const double phi = cs.reference_angle(x);
  for (std::size_t j = 0; j < nd.lines.size(); ++j) {
    const Vector3d dI = x.segment<3>(cs.line_offset(j)) - sync_to_abc(op.line_currents[j], phi);
    h.lines += 0.5 * nd.lines[j].L * dI.squaredNorm();
  }
  for (std::size_t k = 0; k < nd.loads.size(); ++k) {
    if (cs.load_offset(k) == CompositeSystem::npos) continue;
    const Vector3d dI = x.segment<3>(cs.load_offset(k)) - sync_to_abc(op.load_currents[k], phi);
    h.loads += 0.5 * nd.loads[k].L * dI.squaredNorm();
  }
  return h;
}

double total_shifted_hamiltonian(const CompositeSystem& cs, const VectorXd& x) {
  return shifted_hamiltonian_parts(cs, x).total();
}

EnergyRate shifted_hamiltonian_rate(const CompositeSystem& cs, double t, const VectorXd& x) {
  const auto& nd = cs.description();
  const auto& op = cs.operating_point();
  VectorXd d;
  Eigen::Matrix3Xd V;
  // evaluate() is private; rhs and bus_voltages are the public route.
  d = cs.rhs(t, x);
  V = cs.bus_voltages(t, x);

  EnergyRate rate;
  double inertia = 0.0, phi_rate = 0.0;
  for (std::size_t i = 0; i < nd.generators.size(); ++i) {
    const auto& p = cs.generator_params()[i];
    const auto s = cs.generator_state(x, i);
    const auto& eq = op.generators[i];
    const std::size_t o = cs.generator_offset(i);
    const Vector5<double> g = shifted_gradient(s, eq);
    const Vector3d Ls(p.L_ss(), p.L_ss(), p.L_zero());
    rate.total += p.M * g(0) * d(o + 1) + g.segment<3>(1).dot(Ls.cwiseProduct(d.segment<3>(o + 2)));
    // dissipation_matrix with R_sssc folded in, inlined to avoid a header cycle
    const double rr = p.r + nd.generators[i].R_sssc;
    rate.generator_dissipation += -p.D * g(0) * g(0) - rr * g.segment<3>(1).squaredNorm() +
                                  p.L_ss() * g(0) * (eq.I_star(0) * g(2) - eq.I_star(1) * g(1));
    inertia += p.M;
    phi_rate += p.M * s.omega;
  }
  phi_rate /= inertia;
  const double phi = cs.reference_angle(x);
  for (std::size_t j = 0; j < nd.lines.size(); ++j) {
    const auto& l = nd.lines[j];
    const std::size_t o = cs.line_offset(j);
    const Vector3d dI = x.segment<3>(o) - sync_to_abc(op.line_currents[j], phi);
    rate.total += l.L * dI.dot(d.segment<3>(o) - sync_to_abc_rate(op.line_currents[j], phi, phi_rate));
    rate.network_dissipation -= l.R * dI.squaredNorm();
  }
  const auto buses = nd.buses();
  for (std::size_t k = 0; k < nd.loads.size(); ++k) {
    const auto& l = nd.loads[k];
    const std::size_t o = cs.load_offset(k);
    if (o != CompositeSystem::npos) {
      const Vector3d dI = x.segment<3>(o) - sync_to_abc(op.load_currents[k], phi);
      rate.total += l.L * dI.dot(d.segment<3>(o) - sync_to_abc_rate(op.load_currents[k], phi, phi_rate));
      rate.network_dissipation -= l.R * dI.squaredNorm();
    } else if (l.is_resistive()) {
      const std::size_t n = nd.bus_index(l.bus);
      const Vector3d dV = V.col(n) - sync_to_abc(op.bus_voltages[n], phi);
      rate.network_dissipation -= dV.squaredNorm() / l.R;
    }
  }
  rate.interconnection = rate.total - rate.generator_dissipation - rate.network_dissipation;
  return rate;
}

PowerBalance incremental_power_balance(const CompositeSystem& cs, double t, const VectorXd& x) {
  const auto& nd = cs.description();
  const auto& op = cs.operating_point();
  const VectorXd d = cs.rhs(t, x);
  const Eigen::Matrix3Xd V = cs.bus_voltages(t, x);
  const double phi = op.omega_s * t;

  Eigen::Matrix3Xd dV(3, V.cols());
  for (Eigen::Index n = 0; n < V.cols(); ++n)
    dV.col(n) = V.col(n) - sync_to_abc(op.bus_voltages[static_cast<std::size_t>(n)], phi);

  PowerBalance pb;
  auto add = [&](double& bucket, double value) {
    bucket += value;
    pb.scale += std::abs(value);
  };
  for (std::size_t i = 0; i < nd.generators.size(); ++i) {
    const auto s = cs.generator_state(x, i);
    const auto& eq = op.generators[i];
    const Vector3d Iabc = stator_transform(s.theta).transpose() * s.currents();
    const Vector3d Iref = stator_transform(phi + op.rotor_offsets[i]).transpose() * eq.I_star;
    add(pb.generators, dV.col(nd.bus_index(nd.generators[i].bus)).dot(Iabc - Iref));
  }
  for (std::size_t k = 0; k < nd.loads.size(); ++k) {
    const auto& l = nd.loads[k];
    const std::size_t n = nd.bus_index(l.bus);
    const std::size_t o = cs.load_offset(k);
    if (o != CompositeSystem::npos) {
      add(pb.loads, dV.col(n).dot(x.segment<3>(o) - sync_to_abc(op.load_currents[k], phi)));
    } else if (l.is_resistive()) {
      add(pb.loads, dV.col(n).squaredNorm() / l.R);
    }
    // Constant-current loads: the hatted current is identically zero.
  }
  for (std::size_t j = 0; j < nd.lines.size(); ++j) {
    const auto& l = nd.lines[j];
    const std::size_t o = cs.line_offset(j);
    const Vector3d dI = x.segment<3>(o) - sync_to_abc(op.line_currents[j], phi);
    const Vector3d dIdot = d.segment<3>(o) - sync_to_abc_rate(op.line_currents[j], phi, op.omega_s);
    add(pb.grid, l.L * dI.dot(dIdot));
    add(pb.grid, l.R * dI.squaredNorm());
  }
  pb.residual = pb.generators + pb.loads + pb.grid;
  return pb;
}

}  // namespace phgrid
