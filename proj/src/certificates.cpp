#include "phgrid/certificates.hpp"

#include <Eigen/Eigenvalues>

#include "phgrid/network.hpp"

namespace phgrid {

CertificateEntry single_machine_certificate(const GeneratorEquilibrium<double>& eq, const GeneratorParams<double>& p,
                                            double R_sssc) {
  CertificateEntry e;
  const double ax = p.L_ss() * eq.I_star(0);
  const double ay = p.L_ss() * eq.I_star(1);
  e.lhs = ax * ax + ay * ay;
  e.rhs = 4.0 * p.D * (p.r + R_sssc);
  e.margin = e.rhs - e.lhs;
  e.holds = e.margin > 0.0;
  e.R_sssc = R_sssc;
  const Eigen::SelfAdjointEigenSolver<Matrix5<double>> es(dissipation_matrix(eq, p, R_sssc),
                                                           Eigen::EigenvaluesOnly);
  e.P_eigenvalues = es.eigenvalues();
  e.R_min = p.D > 0.0 ? sssc_min_resistance(eq, p) : 0.0;
  return e;
}

double sssc_min_resistance(const GeneratorEquilibrium<double>& eq, const GeneratorParams<double>& p) {
  if (!(p.D > 0.0)) throw ParameterError("sssc_min_resistance: D must be > 0");
  const double ax = p.L_ss() * eq.I_star(0);
  const double ay = p.L_ss() * eq.I_star(1);
  return std::max(0.0, (ax * ax + ay * ay) / (4.0 * p.D) - p.r);
}

CertificateReport multi_machine_certificate(const NetworkDescription& system, const OperatingPoint& op) {
  check_operating_point(system, op, 1e-8);
  CertificateReport report;
  report.holds = true;
  for (std::size_t i = 0; i < system.generators.size(); ++i) {
    const auto& g = system.generators[i];
    CertificateEntry e = single_machine_certificate(op.generators[i], op.generator_params(system, i), g.R_sssc);
    e.name = g.name;
    report.holds = report.holds && e.holds;
    report.generators.push_back(std::move(e));
  }
  return report;
}

}  // namespace phgrid
