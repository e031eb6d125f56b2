#include "phgrid/logging.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <string>

namespace phgrid {

void init_logging() {
  auto logger = spdlog::stderr_color_mt("phgrid");
  logger->set_pattern("%^[%l]%$ %v");
  spdlog::set_default_logger(logger);
  spdlog::level::level_enum level = spdlog::level::warn;
  if (const char* env = std::getenv("PHGRID_LOG")) {
    const std::string v(env);
    if (v == "error") level = spdlog::level::err;
    else if (v == "warn") level = spdlog::level::warn;
    else if (v == "info") level = spdlog::level::info;
    else if (v == "debug") level = spdlog::level::debug;
    else spdlog::warn("ignoring unknown PHGRID_LOG value '{}'", v);
  }
  spdlog::set_level(level);
}

}  // namespace phgrid
