#pragma once

// Dissipation-based stability certificates for single machines and for
// networks of machines, and sizing of the series virtual resistance.

#include <algorithm>
#include <string>
#include <vector>

#include "phgrid/machine.hpp"

namespace phgrid {

struct NetworkDescription;
struct OperatingPoint;

/// The 5x5 matrix P with dH^/dt = grad^T P grad + V^T I^ for frozen terminal
/// voltages. R_sssc adds to the stator resistance on the three stator entries.
template <typename Scalar>
Matrix5<Scalar> dissipation_matrix(const GeneratorEquilibrium<Scalar>& eq, const GeneratorParams<Scalar>& p,
                                   Scalar R_sssc) {
  const Scalar rr = p.r + R_sssc;
  const Scalar half = Scalar(0.5) * p.L_ss();
  Matrix5<Scalar> P = Matrix5<Scalar>::Zero();
  P(0, 0) = -p.D;
  P(1, 1) = P(2, 2) = P(3, 3) = -rr;
  P(4, 4) = -p.r_f;
  P(0, 1) = P(1, 0) = -half * eq.I_star(1);
  P(0, 2) = P(2, 0) = half * eq.I_star(0);
  return P;
}

/// Eigenvalues of dissipation_matrix from the closed form, ascending.
template <typename Scalar>
Vector5<Scalar> dissipation_eigenvalues_closed_form(const GeneratorEquilibrium<Scalar>& eq,
                                                    const GeneratorParams<Scalar>& p, Scalar R_sssc) {
  using std::sqrt;
  const Scalar rr = p.r + R_sssc;
  const Scalar ax = p.L_ss() * eq.I_star(0);
  const Scalar ay = p.L_ss() * eq.I_star(1);
  const Scalar root = sqrt(p.D * p.D - Scalar(2) * p.D * rr + rr * rr + ax * ax + ay * ay);
  Vector5<Scalar> ev;
  ev << -p.r_f, -rr, -rr, -(p.D + rr) / Scalar(2) + root / Scalar(2), -(p.D + rr) / Scalar(2) - root / Scalar(2);
  std::sort(ev.data(), ev.data() + 5);
  return ev;
}

/// Per-generator verdict of the dissipation inequality
/// (L_ss I_x*)^2 + (L_ss I_y*)^2 < 4 D (r + R_sssc).
struct CertificateEntry {
  std::string name;
  double lhs = 0.0;     ///< [Wb^2]
  double rhs = 0.0;     ///< [Wb^2]
  double margin = 0.0;  ///< rhs - lhs
  bool holds = false;   ///< margin > 0
  Vector5<double> P_eigenvalues = Vector5<double>::Zero();  ///< numeric, ascending
  double R_min = 0.0;   ///< smallest series resistance that makes the inequality hold [Ohm]
  double R_sssc = 0.0;
};

struct CertificateReport {
  std::vector<CertificateEntry> generators;
  bool holds = false;  ///< every entry holds
};

CertificateEntry single_machine_certificate(const GeneratorEquilibrium<double>& eq, const GeneratorParams<double>& p,
                                            double R_sssc);

/// ((L_ss I_x*)^2 + (L_ss I_y*)^2) / (4 D) - r, floored at zero. Throws if D <= 0.
double sssc_min_resistance(const GeneratorEquilibrium<double>& eq, const GeneratorParams<double>& p);

/// Evaluates the single-machine inequality for every generator of a network at
/// its operating point. Throws InconsistentOperatingPoint if `op` does not
/// satisfy the device and network equations to 1e-8 relative.
CertificateReport multi_machine_certificate(const NetworkDescription& system, const OperatingPoint& op);

}  // namespace phgrid
