#pragma once

// Steady states of a single generator with constant terminal voltages.

#include <span>
#include <string>
#include <vector>

#include "phgrid/machine.hpp"

namespace phgrid {

/// Equilibrium stator currents at speed `omega` for constant rotor-frame voltages.
///
/// With r = 0 the z-channel has no equilibrium unless V_z = 0, in which case
/// I_z = 0 is returned.
template <typename Scalar>
Vector3<Scalar> equilibrium_currents(Scalar omega, const Vector3<Scalar>& V, const GeneratorParams<Scalar>& p) {
  const Scalar Lss = p.L_ss();
  const Scalar Lm = p.L_m();
  const Scalar den = p.r * p.r + omega * omega * Lss * Lss;
  if (!(den > 0)) throw NoEquilibriumError("equilibrium_currents: r^2 + omega^2 L_ss^2 vanishes");
  Vector3<Scalar> I;
  I(0) = (-omega * omega * Lm * Lss * p.I_f - omega * Lss * V(1) + p.r * V(0)) / den;
  I(1) = (omega * Lss * V(0) + omega * p.r * Lm * p.I_f + p.r * V(1)) / den;
  if (p.r > 0) {
    I(2) = V(2) / p.r;
  } else if (V(2) == Scalar(0)) {
    I(2) = Scalar(0);
  } else {
    throw NoEquilibriumError("equilibrium_currents: z-channel has no equilibrium with r = 0 and V_z != 0");
  }
  return I;
}

/// Mechanical torque that makes omega_s a root of the speed equation.
template <typename Scalar>
Scalar consistent_torque(Scalar omega_s, const Vector3<Scalar>& V, const GeneratorParams<Scalar>& p) {
  const Scalar Lss = p.L_ss();
  const Scalar Lm = p.L_m();
  const Scalar den = p.r * p.r + omega_s * omega_s * Lss * Lss;
  if (!(den > 0)) throw NoEquilibriumError("consistent_torque: r^2 + omega^2 L_ss^2 vanishes");
  return Lm * p.I_f * ((omega_s * Lss * V(0) + omega_s * p.r * Lm * p.I_f + p.r * V(1)) / den) + p.D * omega_s;
}

/// Field current for which equilibrium_currents(omega_s, V, p).x equals I_x_star.
///
/// Exact inversion of the I_x closed form; the value of p.I_f is ignored.
template <typename Scalar>
Scalar consistent_field_current(Scalar I_x_star, const Vector3<Scalar>& V, Scalar omega_s,
                                const GeneratorParams<Scalar>& p) {
  const Scalar Lss = p.L_ss();
  const Scalar coeff = omega_s * omega_s * p.L_m() * Lss;
  if (coeff == Scalar(0))
    throw NoEquilibriumError("consistent_field_current: omega_s^2 L_m L_ss vanishes, I_f is undetermined");
  const Scalar den = p.r * p.r + omega_s * omega_s * Lss * Lss;
  return (p.r * V(0) - omega_s * Lss * V(1) - I_x_star * den) / coeff;
}

/// Full equilibrium record for terminal voltages V at speed omega_s, using p.I_f.
template <typename Scalar>
GeneratorEquilibrium<Scalar> solve_generator_equilibrium(Scalar omega_s, const Vector3<Scalar>& V,
                                                         const GeneratorParams<Scalar>& p) {
  GeneratorEquilibrium<Scalar> eq;
  eq.omega_s = omega_s;
  eq.V_star = V;
  eq.I_star = equilibrium_currents(omega_s, V, p);
  eq.tau_m_star = consistent_torque(omega_s, V, p);
  eq.I_f = p.I_f;
  eq.lambda_star = inductance_xyz(p) * Vector4<Scalar>(eq.I_star(0), eq.I_star(1), eq.I_star(2), p.I_f);
  return eq;
}

/// Residuals of the speed and three current equations at `eq`, each divided by
/// the largest term appearing in it (so 0 means exact, 1 means no cancellation).
template <typename Scalar>
Vector4<Scalar> equilibrium_residual(const GeneratorEquilibrium<Scalar>& eq, const GeneratorParams<Scalar>& p) {
  using std::abs;
  using std::max;
  const Scalar Lss = p.L_ss();
  const Scalar Lm = p.L_m();
  const Scalar w = eq.omega_s;
  const auto& I = eq.I_star;
  const auto& V = eq.V_star;
  auto rel = [](Scalar value, std::initializer_list<Scalar> terms) {
    Scalar scale(0);
    for (Scalar t : terms) scale = max(scale, abs(t));
    return scale > 0 ? value / scale : value;
  };
  Vector4<Scalar> res;
  const Scalar a = -p.D * w, b = -Lm * eq.I_f * I(1), c = eq.tau_m_star;
  res(0) = rel(a + b + c, {a, b, c});
  const Scalar x1 = -p.r * I(0), x2 = -w * Lss * I(1), x3 = V(0);
  res(1) = rel(x1 + x2 + x3, {x1, x2, x3});
  const Scalar y1 = -p.r * I(1), y2 = w * Lss * I(0), y3 = w * Lm * eq.I_f, y4 = V(1);
  res(2) = rel(y1 + y2 + y3 + y4, {y1, y2, y3, y4});
  const Scalar z1 = -p.r * I(2), z2 = V(2);
  res(3) = rel(z1 + z2, {z1, z2});
  return res;
}

/// Left side of the printed uniqueness inequality, evaluated at currents I_star:
///   -4 D^2 r^2 - 4 D I_f L_m r (I_f L_m + L_ss I_x*) + (I_f L_m L_ss I_y*)^2.
/// Negative means omega_s is the only real speed equilibrium.
inline double uniqueness_bcond(const Vector3<double>& I_star, const GeneratorParams<double>& p) {
  const double Lm = p.L_m(), Lss = p.L_ss();
  const double t = p.I_f * Lm * Lss * I_star(1);
  return -4.0 * p.D * p.D * p.r * p.r - 4.0 * p.D * p.I_f * Lm * p.r * (p.I_f * Lm + Lss * I_star(0)) + t * t;
}

/// Real roots of the speed equation and the uniqueness verdicts.
struct UniquenessReport {
  double bcond_value = 0.0;  ///< printed inequality's left side at omega_s
  bool bcond_holds = false;  ///< bcond_value < 0
  int real_root_count = 0;   ///< distinct real roots after merging
  std::vector<double> roots; ///< ascending [rad/s]
  int polynomial_degree = 3; ///< degree actually solved
  bool reduced_degree = false;
  /// With r = 0 only: sign test I_f^2 L_m^2 L_ss^2 I_y* < 0 (first power of I_y*).
  bool has_r0_reduced_form = false;
  double r0_reduced_value = 0.0;
  bool r0_reduced_holds = false;

  bool numerically_unique() const { return real_root_count == 1; }
};

/// Coefficients (highest degree first) of the speed-equilibrium cubic obtained
/// by substituting the I_y closed form into domega/dt = 0 and clearing the
/// denominator r^2 + omega^2 L_ss^2.
std::vector<double> speed_cubic(double tau_m, const Vector3<double>& V, const GeneratorParams<double>& p);

/// Distinct real roots of a polynomial (coefficients highest degree first) via
/// eigenvalues of the companion matrix, Newton-polished, merged when closer
/// than 1e-7 relative. Leading zero coefficients are stripped.
std::vector<double> polynomial_real_roots(std::span<const double> coeffs);

/// All real speed equilibria for torque tau_m and voltages V, plus the printed
/// inequality evaluated at the currents of omega_s.
///
/// With r = 0 the cubic has a spurious root at omega = 0 (where the I_y closed
/// form is undefined); it is divided out and the report is flagged
/// reduced_degree. D = 0 lowers the degree likewise.
UniquenessReport omega_equilibria(double tau_m, const Vector3<double>& V, const GeneratorParams<double>& p,
                                  double omega_s);

/// Human-readable descriptions of every disagreement between the closed-form
/// uniqueness tests in `report` and its numeric root count. Empty when they agree.
std::vector<std::string> uniqueness_disagreements(const UniquenessReport& report);

}  // namespace phgrid
