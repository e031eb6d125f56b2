#include "phgrid/equilibrium.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <complex>

namespace phgrid {

std::vector<double> speed_cubic(double tau_m, const Vector3<double>& V, const GeneratorParams<double>& p) {
  const double L = p.L_ss(), Lm = p.L_m(), r = p.r, D = p.D, If = p.I_f;
  // (tau - D w)(r^2 + w^2 L^2) - Lm If (w L Vx + w r Lm If + r Vy) = 0
  return {
      -D * L * L,
      tau_m * L * L,
      -D * r * r - Lm * If * L * V(0) - r * Lm * Lm * If * If,
      tau_m * r * r - Lm * If * r * V(1),
  };
}

namespace {

std::complex<double> horner(std::span<const double> c, std::complex<double> x) {
  std::complex<double> acc = 0.0;
  for (double a : c) acc = acc * x + a;
  return acc;
}

std::complex<double> horner_derivative(std::span<const double> c, std::complex<double> x) {
  const std::size_t n = c.size() - 1;
  std::complex<double> acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) acc = acc * x + c[k] * static_cast<double>(n - k);
  return acc;
}

}  // namespace

std::vector<double> polynomial_real_roots(std::span<const double> coeffs) {
  std::size_t first = 0;
  while (first < coeffs.size() && coeffs[first] == 0.0) ++first;
  const std::span<const double> c = coeffs.subspan(first);
  if (c.size() <= 1) return {};
  const int n = static_cast<int>(c.size()) - 1;

  // Monic, with the variable rescaled so the roots are O(1).
  double scale = 0.0;
  for (int k = 1; k <= n; ++k) scale = std::max(scale, std::pow(std::abs(c[k] / c[0]), 1.0 / k));
  if (scale == 0.0) scale = 1.0;

  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k <= n; ++k) companion(0, k - 1) = -c[k] / c[0] / std::pow(scale, k);
  for (int i = 1; i < n; ++i) companion(i, i - 1) = 1.0;
  const Eigen::EigenSolver<Eigen::MatrixXd> solver(companion, false);

  std::vector<double> real_roots;
  for (int i = 0; i < n; ++i) {
    std::complex<double> z = solver.eigenvalues()(i) * scale;
    for (int it = 0; it < 8; ++it) {
      const std::complex<double> dp = horner_derivative(c, z);
      if (dp == 0.0) break;
      const std::complex<double> next = z - horner(c, z) / dp;
      if (!(std::abs(horner(c, next)) < std::abs(horner(c, z)))) break;
      z = next;
    }
    if (std::abs(z.imag()) <= 1e-7 * std::max(std::abs(z), 1e-9 * scale)) real_roots.push_back(z.real());
  }
  std::sort(real_roots.begin(), real_roots.end());

  std::vector<double> merged;
  for (double x : real_roots) {
    if (!merged.empty()) {
      const double tol = 1e-7 * std::max({std::abs(x), std::abs(merged.back()), 1e-9 * scale});
      if (std::abs(x - merged.back()) <= tol) {
        merged.back() = 0.5 * (merged.back() + x);
        continue;
      }
    }
    merged.push_back(x);
  }
  return merged;
}

UniquenessReport omega_equilibria(double tau_m, const Vector3<double>& V, const GeneratorParams<double>& p,
                                  double omega_s) {
  if (!(p.L_ss() > 0)) throw ParameterError("omega_equilibria: L_ss must be > 0");
  if (p.D < 0) throw ParameterError("omega_equilibria: D must be >= 0");

  UniquenessReport report;
  std::vector<double> c = speed_cubic(tau_m, V, p);
  if (p.r == 0.0) {
    // c[3] is identically zero: omega = 0 makes the I_y denominator vanish and is not an equilibrium.
    c.pop_back();
    report.reduced_degree = true;
  }
  if (p.D == 0.0) report.reduced_degree = true;

  std::size_t lead = 0;
  while (lead < c.size() && c[lead] == 0.0) ++lead;
  report.polynomial_degree = lead < c.size() ? static_cast<int>(c.size() - lead) - 1 : 0;
  report.roots = polynomial_real_roots(c);
  report.real_root_count = static_cast<int>(report.roots.size());

  const Vector3<double> Vxy(V(0), V(1), 0.0);
  const Vector3<double> I = equilibrium_currents(omega_s, Vxy, p);
  report.bcond_value = uniqueness_bcond(I, p);
  report.bcond_holds = report.bcond_value < 0.0;
  if (p.r == 0.0) {
    const double k = p.I_f * p.L_m() * p.L_ss();
    report.has_r0_reduced_form = true;
    report.r0_reduced_value = k * k * I(1);
    report.r0_reduced_holds = report.r0_reduced_value < 0.0;
  }
  for (const auto& msg : uniqueness_disagreements(report)) spdlog::warn("speed-equilibrium uniqueness: {}", msg);
  return report;
}

std::vector<std::string> uniqueness_disagreements(const UniquenessReport& report) {
  std::vector<std::string> out;
  const bool unique = report.numerically_unique();
  if (report.bcond_holds != unique) {
    out.push_back(fmt::format("printed inequality value {:.6e} says {} but {} real root(s) were found", report.bcond_value,
                              report.bcond_holds ? "unique" : "not unique", report.real_root_count));
  }
  if (report.has_r0_reduced_form && report.r0_reduced_holds != unique) {
    out.push_back(fmt::format("r = 0 reduced form I_f^2 L_m^2 L_ss^2 I_y* = {:.6e} says {} but {} real root(s) were found",
                              report.r0_reduced_value, report.r0_reduced_holds ? "unique" : "not unique",
                              report.real_root_count));
  }
  return out;
}

}  // namespace phgrid
