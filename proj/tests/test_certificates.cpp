#include <catch_amalgamated.hpp>

#include <Eigen/Eigenvalues>

#include "phgrid/certificates.hpp"
#include "phgrid/equilibrium.hpp"
#include "phgrid/network.hpp"
#include "phgrid/simulator.hpp"
#include "support.hpp"

using namespace phgrid;
using phgrid::test::kOmega60;
using phgrid::test::rel_err;

namespace {

GeneratorEquilibrium<double> eq_with_currents(double Ix, double Iy) {
  GeneratorEquilibrium<double> eq;
  eq.omega_s = kOmega60;
  eq.I_star = Vector3<double>(Ix, Iy, 0.0);
  return eq;
}

bool negative_definite(const Matrix5<double>& P) { return (-P).llt().info() == Eigen::Success; }

}  // namespace

TEST_CASE("dissipation matrix layout", "[certificates]") {
  auto p = phgrid::test::gen1_params();
  p.r = 0.05;
  const auto eq = eq_with_currents(19.83, -227.33);
  const Matrix5<double> P = dissipation_matrix(eq, p, 10.0);
  CHECK((P - P.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(P(0, 0) == -p.D);
  CHECK(P(1, 1) == -10.05);
  CHECK(P(3, 3) == -10.05);
  CHECK(P(4, 4) == -p.r_f);
  CHECK(P(0, 1) == Catch::Approx(0.5 * p.L_ss() * 227.33));
  CHECK(P(0, 2) == Catch::Approx(0.5 * p.L_ss() * 19.83));
}

TEST_CASE("eigenvalues without equilibrium currents", "[certificates]") {
  auto p = phgrid::test::gen1_params();
  p.r = 0.3;
  const auto ev = dissipation_eigenvalues_closed_form(eq_with_currents(0.0, 0.0), p, 0.0);
  Vector5<double> expect;
  expect << -p.D, -0.3, -0.3, -0.3, -0.1;
  std::sort(expect.data(), expect.data() + 5);
  CHECK((ev - expect).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("closed-form eigenvalues match a symmetric eigensolver", "[certificates]") {
  std::mt19937_64 rng(67);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int k = 0; k < 1000; ++k) {
    const auto p = phgrid::test::random_params(rng);
    const auto eq = eq_with_currents(10.0 * u(rng), 10.0 * u(rng));
    const double R = 2.0 * std::abs(u(rng));
    const auto cf = dissipation_eigenvalues_closed_form(eq, p, R);
    const Eigen::SelfAdjointEigenSolver<Matrix5<double>> es(dissipation_matrix(eq, p, R));
    for (int j = 0; j < 5; ++j) CHECK(rel_err(cf(j), es.eigenvalues()(j)) < 1e-9);
  }
}

TEST_CASE("negative definiteness coincides with the inequality", "[certificates]") {
  std::mt19937_64 rng(71);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  int holds = 0, fails = 0;
  for (int k = 0; k < 1000; ++k) {
    const auto p = phgrid::test::random_params(rng);
    const auto eq = eq_with_currents(5.0 * u(rng), 5.0 * u(rng));
    const double R = std::abs(u(rng));
    const auto e = single_machine_certificate(eq, p, R);
    if (std::abs(e.margin) < 1e-9 * e.rhs) continue;
    CHECK(e.holds == negative_definite(dissipation_matrix(eq, p, R)));
    if (e.holds) CHECK(e.P_eigenvalues.maxCoeff() < 0.0);
    (e.holds ? holds : fails)++;
  }
  CHECK(holds > 100);
  CHECK(fails > 100);
}

TEST_CASE("definiteness flips at the margin zero", "[certificates]") {
  std::mt19937_64 rng(73);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int k = 0; k < 200; ++k) {
    const auto p = phgrid::test::random_params(rng);
    const auto eq = eq_with_currents(3.0 * u(rng), 3.0 * u(rng));
    double lo = 0.0, hi = 1.0;
    while (!negative_definite(dissipation_matrix(eq, p, hi))) hi *= 2.0;
    if (negative_definite(dissipation_matrix(eq, p, lo))) continue;
    for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
      const double mid = 0.5 * (lo + hi);
      (negative_definite(dissipation_matrix(eq, p, mid)) ? hi : lo) = mid;
    }
    const auto e = single_machine_certificate(eq, p, 0.5 * (lo + hi));
    CHECK(std::abs(e.margin) <= 1e-9 * e.lhs);
  }
}

TEST_CASE("published operating point needs series resistance", "[certificates]") {
  const auto p1 = phgrid::test::gen1_params();
  const auto eq1 = eq_with_currents(19.83, -227.33);
  const auto bare = single_machine_certificate(eq1, p1, 0.0);
  CHECK(bare.lhs == Catch::Approx(2186.0).epsilon(1e-3));
  CHECK(bare.rhs == 0.0);
  CHECK_FALSE(bare.holds);
  const auto with = single_machine_certificate(eq1, p1, 10.0);
  CHECK(with.rhs == Catch::Approx(5e7));
  CHECK(with.holds);

  auto p = phgrid::test::gen1_params();
  p.r = 0.2;
  const auto zero = single_machine_certificate(eq_with_currents(0.0, 0.0), p, 0.0);
  CHECK(zero.holds);
  CHECK(zero.margin == Catch::Approx(4.0 * p.D * p.r));
}

TEST_CASE("SSSC minimum resistance", "[certificates]") {
  auto p1 = phgrid::test::gen1_params();
  const auto p2 = phgrid::test::gen2_params();
  const auto eq1 = eq_with_currents(19.83, -227.33);
  const auto eq2 = eq_with_currents(6.2, -50.9402);
  CHECK(rel_err(sssc_min_resistance(eq1, p1), 0.437e-3) < 0.01);
  CHECK(rel_err(sssc_min_resistance(eq2, p2), 1.53e-3) < 0.01);
  auto p1d = p1;
  p1d.D *= 2;
  CHECK(sssc_min_resistance(eq1, p1d) == Catch::Approx(0.5 * sssc_min_resistance(eq1, p1)));
  p1.r = 1.0;
  CHECK(sssc_min_resistance(eq1, p1) == 0.0);
  p1.D = 0.0;
  CHECK_THROWS_AS(sssc_min_resistance(eq1, p1), ParameterError);
}

TEST_CASE("verdict ignores the current sign convention", "[certificates]") {
  std::mt19937_64 rng(79);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int k = 0; k < 200; ++k) {
    const auto p = phgrid::test::random_params(rng);
    const double Ix = 5.0 * u(rng), Iy = 5.0 * u(rng), R = std::abs(u(rng));
    const auto a = single_machine_certificate(eq_with_currents(Ix, Iy), p, R);
    const auto b = single_machine_certificate(eq_with_currents(-Ix, -Iy), p, R);
    CHECK(a.holds == b.holds);
    CHECK(a.margin == b.margin);
  }
}

TEST_CASE("margin grows with the series resistance", "[certificates]") {
  const auto p = phgrid::test::gen1_params();
  const auto eq = eq_with_currents(19.83, -227.33);
  double prev = -std::numeric_limits<double>::infinity();
  for (double R = 0.0; R < 1e-2; R += 1e-4) {
    const double m = single_machine_certificate(eq, p, R).margin;
    CHECK(m > prev);
    prev = m;
  }
}

TEST_CASE("multi-machine certificate on the two-generator network", "[certificates]") {
  const auto nd = phgrid::test::two_gen(true);
  const auto rep = multi_machine_certificate(nd, steady_state(nd));
  CHECK(rep.holds);
  REQUIRE(rep.generators.size() == 2);
  for (const auto& e : rep.generators) CHECK(e.margin > 0.0);

  const auto bare = phgrid::test::two_gen(false);
  const auto op = steady_state(bare);
  const auto rep0 = multi_machine_certificate(bare, op);
  CHECK_FALSE(rep0.holds);
  CHECK_FALSE(rep0.generators[0].holds);
  CHECK_FALSE(rep0.generators[1].holds);
  CHECK(rel_err(rep0.generators[0].R_min, 0.437e-3) < 0.01);
  CHECK(rel_err(rep0.generators[1].R_min, 1.53e-3) < 0.01);

  auto broken = op;
  broken.generators[0].I_star(1) += 1.0;
  CHECK_THROWS_AS(multi_machine_certificate(bare, broken), InconsistentOperatingPoint);
}

TEST_CASE("single-generator network reduces to the single-machine verdict", "[certificates]") {
  NetworkDescription nd;
  nd.omega_s = kOmega60;
  nd.base_frequency_hz = 60.0;
  GeneratorSpec g;
  g.name = "g";
  g.bus = "b";
  g.params = phgrid::test::gen1_params();
  g.V_target = Eigen::Vector2d(-17560.0, 280160.0);
  g.R_sssc = 1e-4;
  nd.generators.push_back(g);
  nd.loads.push_back({"z", "b", LoadKind::LinearRL, 1000.0, 0.0, 0.0, 0.0});
  const auto op = steady_state(nd);
  const auto rep = multi_machine_certificate(nd, op);
  const auto e = single_machine_certificate(op.generators[0], op.generator_params(nd, 0), 1e-4);
  CHECK(rep.holds == e.holds);
  CHECK(rep.generators[0].margin == e.margin);
}

// Isolated machine with frozen terminal voltages and the series resistance in
// place: the shifted Hamiltonian decreases along trajectories when certified.
TEST_CASE("certified machine dissipates its shifted energy", "[certificates]") {
  auto p = phgrid::test::gen1_params();
  const Vector3<double> V(-17560.0, 280160.0, 0.0);
  p.I_f = consistent_field_current(19.83, V, kOmega60, p);
  const auto eq = solve_generator_equilibrium(kOmega60, V, p);
  const double R = 10.0;
  REQUIRE(single_machine_certificate(eq, p, R).holds);

  auto f = [&](double, const Eigen::VectorXd& x, Eigen::VectorXd& dx) {
    const auto s = GeneratorState<double>::from_vector(x);
    GeneratorInputs<double> in{eq.tau_m_star, eq.V_star - R * (s.currents() - eq.I_star)};
    dx = rhs_xyz(s, in, p);
  };
  Eigen::VectorXd x(5);
  x << 0.0, 2 * std::numbers::pi * 60.08, -62.46, -249.61, 0.0;
  double H = shifted_hamiltonian(GeneratorState<double>::from_vector(x), eq, p);
  const double H0 = H;
  for (int k = 0; k < 200; ++k) {
    x = integrate_rk4(f, x, 0.0, 1e-3, 1e-4);
    const double Hn = shifted_hamiltonian(GeneratorState<double>::from_vector(x), eq, p);
    CHECK(Hn < H);
    H = Hn;
  }
  CHECK(H < 1e-3 * H0);
}
