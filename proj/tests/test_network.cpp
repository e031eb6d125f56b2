#include <catch_amalgamated.hpp>

#include "phgrid/equilibrium.hpp"
#include "phgrid/network.hpp"
#include "support.hpp"

using namespace phgrid;
using phgrid::test::kOmega60;
using phgrid::test::rel_err;

namespace {

// Random deviation of every state from the operating point at time t.
Eigen::VectorXd perturbed_state(const CompositeSystem& cs, double t, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::VectorXd x = cs.operating_state(t);
  for (std::size_t i = 0; i < cs.description().generators.size(); ++i) {
    const auto o = static_cast<Eigen::Index>(cs.generator_offset(i));
    x(o) += 0.5 * u(rng);
    x(o + 1) += 2.0 * std::numbers::pi * 0.2 * u(rng);
    x(o + 2) += 50.0 * u(rng);
    x(o + 3) += 50.0 * u(rng);
    x(o + 4) += 5.0 * u(rng);
  }
  for (std::size_t j = 0; j < cs.description().lines.size(); ++j)
    for (int a = 0; a < 3; ++a) x(static_cast<Eigen::Index>(cs.line_offset(j)) + a) += 50.0 * u(rng);
  return cs.project_consistent(t, x);
}

NetworkDescription single_machine(double R_load) {
  NetworkDescription nd;
  nd.omega_s = kOmega60;
  nd.base_frequency_hz = 60.0;
  GeneratorSpec g;
  g.name = "g";
  g.bus = "b";
  g.params = phgrid::test::gen1_params();
  g.params.r = 0.05;
  g.params.I_f = -1000.0;
  g.setpoint = Setpoint::FieldAndTorque;
  g.tau_m = g.params.D * kOmega60;
  nd.generators.push_back(g);
  nd.loads.push_back({"z", "b", LoadKind::LinearRL, R_load, 0.0, 0.0, 0.0});
  return nd;
}

}  // namespace

TEST_CASE("bus ordering and validation", "[network]") {
  const auto nd = phgrid::test::two_gen();
  const auto buses = nd.buses();
  REQUIRE(buses.size() == 3);
  CHECK(buses[0] == "b1");
  CHECK(buses[1] == "b2");
  CHECK(buses[2] == "load");
  CHECK(nd.bus_index("load") == 2);
  CHECK_THROWS_AS(nd.bus_index("nowhere"), AssemblyError);
  CHECK(nd.warnings().empty());

  auto lossless = nd;
  lossless.lines[0].R = 0.0;
  CHECK_FALSE(lossless.warnings().empty());
}

TEST_CASE("assembly errors name the element", "[network]") {
  auto nd = phgrid::test::two_gen();
  auto island = nd;
  island.loads.push_back({"stray", "island", LoadKind::LinearRL, 10.0, 0.0, 0.0, 0.0});
  try {
    island.validate();
    FAIL("expected an error");
  } catch (const AssemblyError& e) {
    CHECK(std::string(e.what()).find("island") != std::string::npos);
  }

  auto zero_l = nd;
  zero_l.lines[1].L = 0.0;
  try {
    zero_l.validate();
    FAIL("expected an error");
  } catch (const AssemblyError& e) {
    CHECK(std::string(e.what()).find("z2") != std::string::npos);
  }

  auto loop = nd;
  loop.lines[0].to_bus = "b1";
  CHECK_THROWS_AS(loop.validate(), AssemblyError);

  auto none = nd;
  none.generators.clear();
  CHECK_THROWS_AS(none.validate(), AssemblyError);

  auto bad_gen = nd;
  bad_gen.generators[1].params.L_s0 = 2.0;
  try {
    bad_gen.validate();
    FAIL("expected an error");
  } catch (const ParameterError& e) {
    CHECK(std::string(e.what()).find("g2") != std::string::npos);
  }

  auto mixed = nd;
  mixed.generators[1].setpoint = Setpoint::FieldAndTorque;
  CHECK_THROWS_AS(steady_state(mixed), ParameterError);
}

TEST_CASE("steady state reproduces the published currents", "[network]") {
  const auto nd = phgrid::test::two_gen();
  const auto op = steady_state(nd);
  REQUIRE(op.generators.size() == 2);
  CHECK(rel_err(op.generators[0].I_star(0), 19.83) < 0.02);
  CHECK(rel_err(op.generators[0].I_star(1), -227.33) < 0.02);
  CHECK(rel_err(op.generators[1].I_star(0), 6.2) < 0.02);
  CHECK(rel_err(op.generators[1].I_star(1), -50.9402) < 0.02);
  CHECK(op.omega_s == Catch::Approx(kOmega60).epsilon(1e-15));
  CHECK(op.voltage_target_mismatch < 1.0);

  for (const auto& r : operating_point_residuals(nd, op)) {
    INFO(r.name);
    CHECK(r.value < 1e-8);
    if (r.name.rfind("KCL", 0) == 0) CHECK(r.value <= 1e-10);
  }
}

TEST_CASE("field and torque setpoints recover the voltage-specified operating point", "[network]") {
  const auto nd = phgrid::test::two_gen();
  const auto op = steady_state(nd);
  auto torque = nd;
  for (std::size_t i = 0; i < nd.generators.size(); ++i) {
    torque.generators[i].setpoint = Setpoint::FieldAndTorque;
    torque.generators[i].params.I_f = op.generators[i].I_f;
    torque.generators[i].tau_m = op.generators[i].tau_m_star;
  }
  const auto op2 = steady_state(torque);
  CHECK(op2.mode == Setpoint::FieldAndTorque);
  CHECK(rel_err(op2.omega_s, kOmega60) < 1e-9);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK((op2.generators[i].I_star - op.generators[i].I_star).norm() < 1e-6 * op.generators[i].I_star.norm());
    CHECK(rel_err(op2.generators[i].tau_m_star, op.generators[i].tau_m_star) < 1e-12);
  }
  CHECK(std::abs((op2.rotor_offsets[1] - op2.rotor_offsets[0]) - (op.rotor_offsets[1] - op.rotor_offsets[0])) < 1e-9);

  SteadyStateOptions warm;
  warm.initial_guess = op;
  CHECK(rel_err(steady_state(torque, warm).omega_s, kOmega60) < 1e-9);

  SteadyStateOptions starved;
  starved.max_iterations = 1;
  starved.initial_guess = op;
  starved.initial_guess->rotor_offsets[1] += 1.5;
  starved.initial_guess->omega_s *= 1.05;
  try {
    steady_state(torque, starved);
    FAIL("expected a solver error");
  } catch (const SolverError& e) {
    CHECK(std::isfinite(e.last_residual()));
    CHECK(e.last_residual() > 0.0);
  }
}

TEST_CASE("open-circuit limit of a single machine", "[network]") {
  const auto nd = single_machine(1e9);
  const auto op = steady_state(nd);
  const auto p = op.generator_params(nd, 0);
  const auto& eq = op.generators[0];
  const double emf = -op.omega_s * p.L_m() * p.I_f;
  CHECK(eq.I_star.norm() < 1e-3);
  CHECK(std::abs(eq.V_star(0)) < 1e-6 * emf);
  CHECK(rel_err(eq.V_star(1), emf) < 1e-6);
  CHECK(rel_err(op.omega_s, kOmega60) < 1e-9);

  // Currents shrink in proportion to the load conductance.
  const auto op6 = steady_state(single_machine(1e6));
  CHECK(op6.generators[0].I_star.norm() == Catch::Approx(1e3 * eq.I_star.norm()).epsilon(1e-3));
}

TEST_CASE("state layout", "[network]") {
  const auto nd = phgrid::test::two_gen();
  const auto cs = assemble(nd, steady_state(nd));
  CHECK(cs.dimension() == 16);
  CHECK(cs.line_offset(0) == 10);
  CHECK(cs.load_offset(0) == CompositeSystem::npos);

  auto rl = nd;
  rl.loads[0].L = 0.05;
  const auto cs_rl = assemble(rl, steady_state(rl));
  CHECK(cs_rl.dimension() == 19);
  CHECK(cs_rl.load_offset(0) == 16);
}

TEST_CASE("operating point is a fixed point of the composite dynamics", "[network]") {
  for (double L_load : {0.0, 0.05}) {
    auto nd = phgrid::test::two_gen();
    nd.loads[0].L = L_load;
    const auto cs = assemble(nd, steady_state(nd));
    for (double t : {0.0, 0.0123, 0.5}) {
      const Eigen::VectorXd x = cs.operating_state(t);
      const Eigen::VectorXd d = cs.rhs(t, x);
      // The angles advance at omega_s; everything else is stationary or rotates.
      for (std::size_t i = 0; i < 2; ++i) {
        const auto o = static_cast<Eigen::Index>(cs.generator_offset(i));
        CHECK(d(o) == Catch::Approx(kOmega60));
        CHECK(std::abs(d(o + 1)) < 1e-9 * kOmega60);
        const double scale = 280160.0 / nd.generators[i].params.L_ss();
        CHECK(d.segment<3>(o + 2).cwiseAbs().maxCoeff() < 1e-9 * scale);
      }
      // Network currents follow their synchronous references exactly.
      const double h = 1e-6;
      const Eigen::VectorXd ref = (cs.operating_state(t + h) - cs.operating_state(t - h)) / (2 * h);
      const auto o = static_cast<Eigen::Index>(cs.line_offset(0));
      const Eigen::Index n = static_cast<Eigen::Index>(cs.dimension()) - o;
      CHECK((d.tail(n) - ref.tail(n)).cwiseAbs().maxCoeff() < 1e-5 * ref.tail(n).cwiseAbs().maxCoeff());
      CHECK(cs.kcl_violation(t, x) < 1e-10 * 230.0);
    }
  }
}

TEST_CASE("unexcited network at rest stays at rest", "[network]") {
  NetworkDescription nd = phgrid::test::two_gen();
  for (auto& g : nd.generators) {
    g.setpoint = Setpoint::FieldAndTorque;
    g.params.I_f = 0.0;
    g.params.r = 0.1;
    g.tau_m = 0.0;
  }
  OperatingPoint op;
  op.omega_s = 0.0;
  op.mode = Setpoint::FieldAndTorque;
  for (const auto& g : nd.generators) {
    op.generators.push_back(solve_generator_equilibrium(0.0, Vector3<double>(Vector3<double>::Zero()), g.params));
    op.rotor_offsets.push_back(0.0);
  }
  op.bus_voltages.assign(3, Eigen::Vector2d::Zero());
  op.line_currents.assign(2, Eigen::Vector2d::Zero());
  op.load_currents.assign(1, Eigen::Vector2d::Zero());
  const auto cs = assemble(nd, op);
  const Eigen::VectorXd x0 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cs.dimension()));
  CHECK(cs.rhs(0.0, x0).isZero(0.0));
  CHECK(cs.bus_voltages(0.0, x0).isZero(0.0));
}

TEST_CASE("incremental power balance is an identity", "[network]") {
  for (double L_load : {0.0, 0.05}) {
    auto nd = phgrid::test::two_gen();
    nd.loads[0].L = L_load;
    const auto cs = assemble(nd, steady_state(nd));
    const auto at_op = incremental_power_balance(cs, 0.3, cs.operating_state(0.3));
    CHECK(std::abs(at_op.residual) < 1e-6);

    std::mt19937_64 rng(83);
    std::uniform_real_distribution<double> ut(0.0, 1.0);
    for (int k = 0; k < 200; ++k) {
      const double t = ut(rng);
      const auto pb = incremental_power_balance(cs, t, perturbed_state(cs, t, rng));
      CHECK(pb.scale > 0.0);
      CHECK(pb.relative() < 1e-6);
    }
  }
}

TEST_CASE("constant-current loads carry no incremental power or energy", "[network]") {
  auto nd = phgrid::test::two_gen();
  nd.loads.clear();
  nd.loads.push_back({"cc", "load", LoadKind::ConstantCurrent, 0.0, 0.0, 200.0, 0.3});
  nd.loads.push_back({"zl", "load", LoadKind::LinearRL, 1000.0, 0.0, 0.0, 0.0});
  const auto op = steady_state(nd);
  const auto cs = assemble(nd, op);
  CHECK(cs.dimension() == 16);

  auto cc_only = nd;
  cc_only.loads.pop_back();
  const auto cs_cc = assemble(cc_only, steady_state(cc_only));
  std::mt19937_64 rng(89);
  for (int k = 0; k < 50; ++k) {
    const double t = 0.01 * k;
    // Without a stateful load the summed generator currents are pinned by the
    // source; perturb the first machine and let the second absorb the rest.
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Eigen::VectorXd x = cs_cc.operating_state(t);
    const auto o1 = static_cast<Eigen::Index>(cs_cc.generator_offset(0));
    const auto o2 = static_cast<Eigen::Index>(cs_cc.generator_offset(1));
    const Eigen::Vector3d total = stator_transform(x(o1)).transpose() * x.segment<3>(o1 + 2) +
                                  stator_transform(x(o2)).transpose() * x.segment<3>(o2 + 2);
    for (const auto o : {o1, o2}) {
      x(o) += 0.5 * u(rng);
      x(o + 1) += 2.0 * std::numbers::pi * 0.2 * u(rng);
    }
    x(o1 + 2) += 50.0 * u(rng);
    x(o1 + 3) += 50.0 * u(rng);
    x.segment<3>(o2 + 2) = stator_transform(x(o2)) * (total - stator_transform(x(o1)).transpose() * x.segment<3>(o1 + 2));
    x = cs_cc.project_consistent(t, x);
    const auto pb = incremental_power_balance(cs_cc, t, x);
    CHECK(pb.loads == 0.0);
    CHECK(pb.relative() < 1e-6);
    CHECK(shifted_hamiltonian_parts(cs_cc, x).loads == 0.0);
  }
}

TEST_CASE("total shifted Hamiltonian", "[network]") {
  auto nd = phgrid::test::two_gen();
  nd.loads[0].L = 0.05;
  const auto cs = assemble(nd, steady_state(nd));
  CHECK(std::abs(total_shifted_hamiltonian(cs, cs.operating_state(0.2))) < 1e-9);

  std::mt19937_64 rng(97);
  for (int k = 0; k < 1000; ++k) {
    const Eigen::VectorXd x = perturbed_state(cs, 0.001 * k, rng);
    const auto parts = shifted_hamiltonian_parts(cs, x);
    CHECK(total_shifted_hamiltonian(cs, x) > 0.0);
    CHECK(parts.total() == Catch::Approx(total_shifted_hamiltonian(cs, x)));
    CHECK(parts.generators > 0.0);
    CHECK(parts.lines >= 0.0);
    CHECK(parts.loads >= 0.0);
  }

  // Invariant under a common rotor-angle shift at a synchronous steady state.
  Eigen::VectorXd x = cs.operating_state(0.0);
  const double shift = 0.7;
  for (std::size_t i = 0; i < 2; ++i) x(static_cast<Eigen::Index>(cs.generator_offset(i))) += shift;
  for (std::size_t j = 0; j < nd.lines.size(); ++j)
    x.segment<3>(static_cast<Eigen::Index>(cs.line_offset(j))) = sync_to_abc(cs.operating_point().line_currents[j], shift);
  x.segment<3>(static_cast<Eigen::Index>(cs.load_offset(0))) = sync_to_abc(cs.operating_point().load_currents[0], shift);
  CHECK(std::abs(total_shifted_hamiltonian(cs, x)) < 1e-9);
}

TEST_CASE("analytic energy rate matches a finite difference", "[network]") {
  const auto nd = phgrid::test::two_gen();
  const auto cs = assemble(nd, steady_state(nd));
  std::mt19937_64 rng(101);
  for (int k = 0; k < 50; ++k) {
    const double t = 0.02 * k;
    const Eigen::VectorXd x = perturbed_state(cs, t, rng);
    const Eigen::VectorXd d = cs.rhs(t, x);
    const double h = 1e-7;
    const double fd =
        (total_shifted_hamiltonian(cs, x + h * d) - total_shifted_hamiltonian(cs, x - h * d)) / (2 * h);
    const auto rate = shifted_hamiltonian_rate(cs, t, x);
    const double scale = std::abs(rate.generator_dissipation) + std::abs(rate.network_dissipation) +
                         std::abs(rate.interconnection);
    CHECK(std::abs(fd - rate.total) < 1e-5 * scale);
    CHECK(rate.generator_dissipation <= 0.0);
    CHECK(rate.network_dissipation <= 0.0);
  }
}

TEST_CASE("KCL projection", "[network]") {
  const auto nd = phgrid::test::two_gen();
  const auto cs = assemble(nd, steady_state(nd));
  std::mt19937_64 rng(103);
  Eigen::VectorXd x = cs.operating_state(0.1);
  x(static_cast<Eigen::Index>(cs.line_offset(0))) += 30.0;
  const Eigen::VectorXd y = cs.project_consistent(0.1, x);
  CHECK(cs.kcl_violation(0.1, y) < 1e-10 * 230.0);
  // Generator states are not touched.
  CHECK((y.head(10) - x.head(10)).isZero(0.0));
  // The composite system has a resistive shunt at the load bus only.
  const Eigen::VectorXd z = perturbed_state(cs, 0.2, rng);
  CHECK(cs.kcl_violation(0.2, z) < 1e-10 * 230.0);
}

TEST_CASE("sync_to_abc is a balanced set", "[network]") {
  const Eigen::Vector3d v = sync_to_abc(Eigen::Vector2d(3.0, -4.0), 0.4);
  CHECK(std::abs(v.sum()) < 1e-12);
  CHECK(v.norm() == Catch::Approx(5.0));
}
