#include <catch_amalgamated.hpp>

#include <fstream>

#include "phgrid/config.hpp"
#include "support.hpp"

using namespace phgrid;

namespace {

const char* kMinimal = R"(# one machine on a resistor
[system]
omega_s_hz = 60

[[generator]]
name = "g"
bus = "b"
M = 3.3e4
D = 1_250_000
r = 0.05
r_f = 0.1
L_s = 0.2049
L_s0 = 0
L_sf = 0.1673
L_f = 0.4098
I_f = -1000   # field current
tau_m = 4.7e8

[[load]]
bus = "b"
kind = "rl"
R = 1000
X_at_omega_s = 37.69911184307752
)";

std::string with(std::string text, const std::string& from, const std::string& to) {
  const auto at = text.find(from);
  REQUIRE(at != std::string::npos);
  return text.replace(at, from.size(), to);
}

// Returns the ConfigError message, failing the test when parsing succeeds.
std::string error_of(const std::string& text) {
  try {
    parse_network(text, "net.cfg");
  } catch (const ConfigError& e) {
    return e.what();
  }
  FAIL("expected a ConfigError");
  return {};
}

}  // namespace

TEST_CASE("minimal description", "[config]") {
  const auto nd = parse_network(kMinimal, "net.cfg");
  CHECK(nd.omega_s == Catch::Approx(phgrid::test::kOmega60));
  REQUIRE(nd.generators.size() == 1);
  const auto& g = nd.generators[0];
  CHECK(g.name == "g");
  CHECK(g.params.D == 1.25e6);
  CHECK(g.setpoint == Setpoint::FieldAndTorque);
  CHECK(g.params.I_f == -1000.0);
  CHECK(g.tau_m == 4.7e8);
  CHECK(g.R_sssc == 0.0);
  REQUIRE(nd.loads.size() == 1);
  CHECK(nd.loads[0].name == "load1");
  CHECK(nd.loads[0].L == Catch::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("shipped descriptions load", "[config]") {
  const auto nd = phgrid::test::two_gen();
  REQUIRE(nd.generators.size() == 2);
  CHECK(nd.generators[0].R_sssc == 10.0);
  CHECK(nd.generators[1].V_target(1) == 278760.0);
  CHECK(nd.lines.size() == 2);
  CHECK(nd.lines[1].L == 0.1);
  CHECK(nd.loads[0].is_resistive());
  const auto bare = phgrid::test::two_gen(false);
  CHECK(bare.generators[0].R_sssc == 0.0);
}

TEST_CASE("missing key names the section", "[config]") {
  const std::string msg = error_of(with(kMinimal, "L_s = 0.2049\n", ""));
  CHECK(msg.find("[[generator]] #1") != std::string::npos);
  CHECK(msg.find("L_s") != std::string::npos);
  CHECK(msg.rfind("net.cfg:5:1:", 0) == 0);
}

TEST_CASE("syntax errors carry line and column", "[config]") {
  CHECK(error_of(with(kMinimal, "D = 1_250_000", "D = 1.2.5")).rfind("net.cfg:9:5:", 0) == 0);
  CHECK(error_of(with(kMinimal, "M = 3.3e4", "M 3.3e4")).rfind("net.cfg:8:3:", 0) == 0);
  CHECK(error_of(with(kMinimal, "name = \"g\"", "name = \"g")).rfind("net.cfg:6:8:", 0) == 0);
  CHECK(error_of(with(kMinimal, "[[load]]", "[[load]")).rfind("net.cfg:19:", 0) == 0);
  CHECK(error_of(with(kMinimal, "[[load]]", "[[bus]]")).find("unknown section") != std::string::npos);
  CHECK(error_of("x = 1\n").find("before any section") != std::string::npos);
  CHECK(error_of(with(kMinimal, "r_f = 0.1", "r_f = 0.1 junk")).rfind("net.cfg:11:11:", 0) == 0);
}

TEST_CASE("semantic errors", "[config]") {
  CHECK(error_of(with(kMinimal, "r_f = 0.1", "r_f = 0.1\nwobble = 3")).find("unknown key 'wobble'") !=
        std::string::npos);
  CHECK(error_of(with(kMinimal, "r = 0.05", "r = 0.05\nr = 0.06")).find("duplicate key 'r'") != std::string::npos);
  CHECK(error_of(with(kMinimal, "bus = \"b\"", "bus = 3")).find("quoted string") != std::string::npos);
  CHECK(error_of(with(kMinimal, "I_f = -1000", "V_x_star = 1\nV_y_star = 2\nI_f = -1000"))
            .find("not both") != std::string::npos);
  CHECK(error_of(with(kMinimal, "kind = \"rl\"", "kind = \"rc\"")).find("unknown load kind") != std::string::npos);
  CHECK(error_of(with(kMinimal, "R = 1000\n", "R = 1000\nL = 0.1\n")).find("not both") != std::string::npos);
  CHECK(error_of(with(kMinimal, "[system]\nomega_s_hz = 60\n", "")).find("missing [system]") != std::string::npos);
  CHECK(error_of(with(kMinimal, "omega_s_hz = 60", "omega_s_hz = -60")).find("> 0") != std::string::npos);

  // Model violations point at the offending section.
  const std::string bad = error_of(with(kMinimal, "L_s0 = 0", "L_s0 = 0.3"));
  CHECK(bad.rfind("net.cfg:5:1:", 0) == 0);
  CHECK(bad.find("'g'") != std::string::npos);
  const std::string island = error_of(with(kMinimal, "bus = \"b\"\nkind", "bus = \"elsewhere\"\nkind"));
  CHECK(island.find("elsewhere") != std::string::npos);
}

TEST_CASE("load_network reports unreadable files", "[config]") {
  CHECK_THROWS_AS(load_network("/nonexistent/net.cfg"), ConfigError);
  const auto path = std::filesystem::temp_directory_path() / "phgrid_test_minimal.cfg";
  {
    std::ofstream out(path);
    out << kMinimal;
  }
  CHECK(load_network(path).generators.size() == 1);
  std::filesystem::remove(path);
}

TEST_CASE("comments, CRLF and constant-current loads", "[config]") {
  std::string text = with(kMinimal, "[[load]]", "[[load]]\r\nname = \"cc\"\r\nbus = \"b\"\r\nkind = \"const_current\"\r\n"
                                                "amplitude = 5\r\n\r\n[[load]]");
  const auto nd = parse_network(text, "net.cfg");
  REQUIRE(nd.loads.size() == 2);
  CHECK(nd.loads[0].kind == LoadKind::ConstantCurrent);
  CHECK(nd.loads[0].amplitude == 5.0);
  CHECK(nd.loads[0].phase == 0.0);
  CHECK(nd.has_constant_current_loads());
}
