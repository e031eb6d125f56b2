#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <memory>
#include <random>
#include <sstream>
#include <string>

#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "phgrid/config.hpp"
#include "phgrid/machine.hpp"
#include "phgrid/network.hpp"

namespace phgrid::test {

// Sweeps hit expected warnings thousands of times; keep test output readable.
inline const bool kQuietLogs = [] {
  spdlog::default_logger()->set_level(spdlog::level::err);
  return true;
}();

inline constexpr double kOmega60 = 2.0 * std::numbers::pi * 60.0;

inline std::string data_path(const std::string& file) { return std::string(PHGRID_TEST_DATA_DIR) + "/" + file; }

// Machine constants of the two shipped generators (field current left at 0).
inline GeneratorParams<double> gen1_params() {
  GeneratorParams<double> p;
  p.M = 33267.12196256758;
  p.D = 1.25e6;
  p.r = 0.0;
  p.r_f = 0.1;
  p.L_s = 0.2049;
  p.L_s0 = 0.0;
  p.L_sf = 0.2049 / std::sqrt(1.5);
  p.L_f = 0.4098;
  return p;
}

inline GeneratorParams<double> gen2_params() {
  GeneratorParams<double> p;
  p.M = 9006.32743487447;
  p.D = 0.68e6;
  p.r = 0.0;
  p.r_f = 0.1;
  p.L_s = 1.2570;
  p.L_s0 = 0.0;
  p.L_sf = 1.2570 / std::sqrt(1.5);
  p.L_f = 2.514;
  return p;
}

// Valid random machine with O(1) constants; L_f is chosen to keep L_xyz positive definite.
inline GeneratorParams<double> random_params(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  GeneratorParams<double> p;
  p.M = 0.5 + 5.0 * u(rng);
  p.D = 0.1 + 5.0 * u(rng);
  p.r = 0.01 + u(rng);
  p.r_f = 0.01 + u(rng);
  p.L_s = 0.1 + 2.0 * u(rng);
  p.L_s0 = 0.3 * p.L_s * u(rng);
  p.L_sf = (0.2 + 0.8 * u(rng)) * p.L_s;
  p.L_f = (1.1 + 2.0 * u(rng)) * p.L_m() * p.L_m() / p.L_ss();
  p.I_f = -10.0 + 20.0 * u(rng);
  return p;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

inline NetworkDescription two_gen(bool sssc = true) {
  return load_network(data_path(sssc ? "two_gen.cfg" : "two_gen_no_sssc.cfg"));
}

// Routes the default logger into a string for the lifetime of the object.
class LogCapture {
 public:
  LogCapture() : previous_(spdlog::default_logger()) {
    auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(out_);
    auto logger = std::make_shared<spdlog::logger>("capture", sink);
    logger->set_level(spdlog::level::debug);
    spdlog::set_default_logger(logger);
  }
  ~LogCapture() { spdlog::set_default_logger(previous_); }
  LogCapture(const LogCapture&) = delete;
  LogCapture& operator=(const LogCapture&) = delete;

  std::string text() const { return out_.str(); }

 private:
  std::shared_ptr<spdlog::logger> previous_;
  std::ostringstream out_;
};

}  // namespace phgrid::test
