#pragma once

// Single synchronous generator: rotor-frame transform, inductance matrices,
// current-space dynamics and (shifted) Hamiltonians.
//
// Everything here is a pure function templated on the scalar type so the
// same code path can be evaluated in double, long double or an AD type.
// Conventions: SI units, motor notation (stator currents enter the
// positive terminal), two-pole machine, round rotor, constant field current.

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <string>

#include "phgrid/errors.hpp"

namespace phgrid {

template <typename Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Vector4 = Eigen::Matrix<Scalar, 4, 1>;
template <typename Scalar>
using Vector5 = Eigen::Matrix<Scalar, 5, 1>;
template <typename Scalar>
using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;
template <typename Scalar>
using Matrix4 = Eigen::Matrix<Scalar, 4, 4>;
template <typename Scalar>
using Matrix5 = Eigen::Matrix<Scalar, 5, 5>;

/// Physical constants of one machine.
template <typename Scalar>
struct GeneratorParams {
  Scalar M{};     ///< rotor inertia [kg m^2]
  Scalar D{};     ///< mechanical damping [N m s]
  Scalar r{};     ///< stator winding resistance [Ohm]
  Scalar r_f{};   ///< field winding resistance [Ohm]
  Scalar L_s{};   ///< stator self inductance [H]
  Scalar L_s0{};  ///< stator coupling inductance [H]
  Scalar L_sf{};  ///< stator-field mutual inductance [H]
  Scalar L_f{};   ///< field self inductance [H]
  Scalar I_f{};   ///< field current, held constant [A]

  Scalar L_ss() const { return L_s + Scalar(2) * L_s0; }
  Scalar L_m() const {
    using std::sqrt;
    return sqrt(Scalar(1.5)) * L_sf;
  }
  /// Inductance seen by the zero-sequence (z) channel, L_ss - 3 L_s0.
  Scalar L_zero() const { return L_s - L_s0; }
};

/// Throws ParameterError if `p` cannot define a positive-definite Hamiltonian.
template <typename Scalar>
void validate(const GeneratorParams<Scalar>& p) {
  auto fail = [](const std::string& what) { throw ParameterError("generator parameters: " + what); };
  auto finite = [](Scalar v) {
    using std::isfinite;
    return isfinite(static_cast<double>(v));
  };
  if (!(finite(p.M) && finite(p.D) && finite(p.r) && finite(p.r_f) && finite(p.L_s) && finite(p.L_s0) &&
        finite(p.L_sf) && finite(p.L_f) && finite(p.I_f)))
    fail("all values must be finite");
  if (!(p.M > 0)) fail("M must be > 0");
  if (!(p.D > 0)) fail("D must be > 0");
  if (p.r < 0) fail("r must be >= 0");
  if (p.r_f < 0) fail("r_f must be >= 0");
  if (!(p.L_s > 0)) fail("L_s must be > 0");
  if (p.L_s0 < 0) fail("L_s0 must be >= 0");
  if (!(p.L_f > 0)) fail("L_f must be > 0");
  if (!(p.L_zero() > 0)) fail("L_ss - 3 L_s0 = L_s - L_s0 must be > 0 (z-channel inductance)");
  if (!(p.L_f * p.L_ss() - p.L_m() * p.L_m() > 0))
    fail("L_f * L_ss must exceed L_m^2 = 1.5 L_sf^2 (L_xyz not positive definite)");
}

/// Rotor angle, speed and rotor-frame stator currents.
template <typename Scalar>
struct GeneratorState {
  Scalar theta{};
  Scalar omega{};
  Scalar I_x{};
  Scalar I_y{};
  Scalar I_z{};

  Vector3<Scalar> currents() const { return {I_x, I_y, I_z}; }

  /// Ordering (theta, omega, I_x, I_y, I_z), the same as rhs_xyz's output.
  Vector5<Scalar> as_vector() const {
    Vector5<Scalar> v;
    v << theta, omega, I_x, I_y, I_z;
    return v;
  }

  template <typename Derived>
  static GeneratorState from_vector(const Eigen::MatrixBase<Derived>& v) {
    return {v(0), v(1), v(2), v(3), v(4)};
  }
};

/// Mechanical torque and rotor-frame terminal voltages.
template <typename Scalar>
struct GeneratorInputs {
  Scalar tau_m{};
  Vector3<Scalar> V_xyz = Vector3<Scalar>::Zero();
};

/// A steady state of one generator in its own rotor frame.
template <typename Scalar>
struct GeneratorEquilibrium {
  Scalar omega_s{};
  Vector3<Scalar> I_star = Vector3<Scalar>::Zero();
  Vector3<Scalar> V_star = Vector3<Scalar>::Zero();
  Scalar tau_m_star{};
  Scalar I_f{};
  Vector4<Scalar> lambda_star = Vector4<Scalar>::Zero();
};

/// Rotor-frame transform T_theta acting on (a, b, c, f) quantities. Orthogonal.
template <typename Scalar>
Matrix4<Scalar> park_matrix(Scalar theta) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  const Scalar k = Scalar(2) * Scalar(std::numbers::pi) / Scalar(3);
  const Scalar s = sqrt(Scalar(2) / Scalar(3));
  const Scalar h = sqrt(Scalar(2)) / Scalar(2);
  Matrix4<Scalar> T;
  T << cos(theta), cos(theta - k), cos(theta + k), Scalar(0),  //
      sin(theta), sin(theta - k), sin(theta + k), Scalar(0),   //
      h, h, h, Scalar(0),                                      //
      Scalar(0), Scalar(0), Scalar(0), sqrt(Scalar(1.5));
  return s * T;
}

/// Upper-left 3x3 block of park_matrix: abc stator quantities -> xyz.
template <typename Scalar>
Matrix3<Scalar> stator_transform(Scalar theta) {
  return park_matrix(theta).template topLeftCorner<3, 3>();
}

/// d/dtheta of stator_transform.
template <typename Scalar>
Matrix3<Scalar> stator_transform_derivative(Scalar theta) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  const Scalar k = Scalar(2) * Scalar(std::numbers::pi) / Scalar(3);
  Matrix3<Scalar> dT;
  dT << -sin(theta), -sin(theta - k), -sin(theta + k),  //
      cos(theta), cos(theta - k), cos(theta + k),       //
      Scalar(0), Scalar(0), Scalar(0);
  return sqrt(Scalar(2) / Scalar(3)) * dT;
}

/// Round-rotor inductance matrix in (a, b, c, f) coordinates.
template <typename Scalar>
Matrix4<Scalar> inductance_abc(Scalar theta, const GeneratorParams<Scalar>& p) {
  using std::cos;
  const Scalar k = Scalar(2) * Scalar(std::numbers::pi) / Scalar(3);
  const Scalar ma = p.L_sf * cos(theta);
  const Scalar mb = p.L_sf * cos(theta - k);
  const Scalar mc = p.L_sf * cos(theta + k);
  Matrix4<Scalar> L;
  L << p.L_s + p.L_s0, -p.L_s0, -p.L_s0, ma,  //
      -p.L_s0, p.L_s + p.L_s0, -p.L_s0, mb,   //
      -p.L_s0, -p.L_s0, p.L_s + p.L_s0, mc,   //
      ma, mb, mc, p.L_f;
  return L;
}

/// Constant inductance matrix in (x, y, z, f) coordinates.
template <typename Scalar>
Matrix4<Scalar> inductance_xyz(const GeneratorParams<Scalar>& p) {
  Matrix4<Scalar> L = Matrix4<Scalar>::Zero();
  L(0, 0) = p.L_ss();
  L(1, 1) = p.L_ss();
  L(2, 2) = p.L_zero();
  L(3, 3) = p.L_f;
  L(0, 3) = L(3, 0) = p.L_m();
  return L;
}

/// (I_x, I_y, I_z, I_f) for a state; the field current comes from the parameters.
template <typename Scalar>
Vector4<Scalar> full_currents(const GeneratorState<Scalar>& s, const GeneratorParams<Scalar>& p) {
  return {s.I_x, s.I_y, s.I_z, p.I_f};
}

/// lambda_xyz = L_xyz (I_x, I_y, I_z, I_f).
template <typename Scalar>
Vector4<Scalar> flux_linkages(const GeneratorState<Scalar>& s, const GeneratorParams<Scalar>& p) {
  return inductance_xyz(p) * full_currents(s, p);
}

/// Inverse of flux_linkages; returns (I_x, I_y, I_z, I_f).
template <typename Scalar>
Vector4<Scalar> currents_from_flux(const Vector4<Scalar>& lambda_xyz, const GeneratorParams<Scalar>& p) {
  return inductance_xyz(p).ldlt().solve(lambda_xyz);
}

/// tau_e = dH_magnetic/dtheta, in rotor-frame closed form.
template <typename Scalar>
Scalar electrical_torque(const GeneratorState<Scalar>& s, const GeneratorParams<Scalar>& p) {
  return p.L_m() * p.I_f * s.I_y;
}

/// Time derivative of (theta, omega, I_x, I_y, I_z) under constant field current.
template <typename Scalar>
Vector5<Scalar> rhs_xyz(const GeneratorState<Scalar>& s, const GeneratorInputs<Scalar>& u,
                        const GeneratorParams<Scalar>& p) {
  const Scalar Lss = p.L_ss();
  const Scalar Lm = p.L_m();
  Vector5<Scalar> d;
  d(0) = s.omega;
  d(1) = (-p.D * s.omega - Lm * p.I_f * s.I_y + u.tau_m) / p.M;
  d(2) = (-p.r * s.I_x - s.omega * Lss * s.I_y + u.V_xyz(0)) / Lss;
  d(3) = (-p.r * s.I_y + s.omega * Lss * s.I_x + s.omega * Lm * p.I_f + u.V_xyz(1)) / Lss;
  d(4) = (-p.r * s.I_z + u.V_xyz(2)) / p.L_zero();
  return d;
}

/// Stored energy: magnetic (via currents) plus kinetic.
template <typename Scalar>
Scalar hamiltonian(const GeneratorState<Scalar>& s, const GeneratorParams<Scalar>& p) {
  const Vector4<Scalar> I = full_currents(s, p);
  return Scalar(0.5) * I.dot(inductance_xyz(p) * I) + Scalar(0.5) * p.M * s.omega * s.omega;
}

/// 1/2 lambda^T L_abc^{-1} lambda in the stationary frame.
template <typename Scalar>
Scalar magnetic_energy_abc(Scalar theta, const Vector4<Scalar>& lambda_abc, const GeneratorParams<Scalar>& p) {
  return Scalar(0.5) * lambda_abc.dot(inductance_abc(theta, p).ldlt().solve(lambda_abc));
}

/// Energy re-centred on `eq`: zero exactly at the equilibrium, positive elsewhere.
template <typename Scalar>
Scalar shifted_hamiltonian(const GeneratorState<Scalar>& s, const GeneratorEquilibrium<Scalar>& eq,
                           const GeneratorParams<Scalar>& p) {
  Vector4<Scalar> dI;
  dI << s.I_x - eq.I_star(0), s.I_y - eq.I_star(1), s.I_z - eq.I_star(2), Scalar(0);
  const Scalar dw = s.omega - eq.omega_s;
  return Scalar(0.5) * dI.dot(inductance_xyz(p) * dI) + Scalar(0.5) * p.M * dw * dw;
}

/// Gradient of the shifted Hamiltonian w.r.t. xi = (M omega, lambda_xyz):
/// (omega - omega_s, I_x - I_x*, I_y - I_y*, I_z - I_z*, 0).
template <typename Scalar>
Vector5<Scalar> shifted_gradient(const GeneratorState<Scalar>& s, const GeneratorEquilibrium<Scalar>& eq) {
  Vector5<Scalar> g;
  g << s.omega - eq.omega_s, s.I_x - eq.I_star(0), s.I_y - eq.I_star(1), s.I_z - eq.I_star(2), Scalar(0);
  return g;
}

}  // namespace phgrid
