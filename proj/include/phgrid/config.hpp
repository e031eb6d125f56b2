#pragma once

// Network description files: a TOML subset with [system], [[generator]],
// [[line]] and [[load]] sections, `key = value` pairs, numbers, double-quoted
// strings and `#` comments. Units are SI except omega_s_hz.

#include <filesystem>
#include <string>
#include <string_view>

#include "phgrid/errors.hpp"
#include "phgrid/network.hpp"

namespace phgrid {

/// Malformed or invalid description file; what() reads "file:line:col: message".
class ConfigError : public Error {
 public:
  ConfigError(const std::string& source, int line, int column, const std::string& message);

  int line() const noexcept { return line_; }
  int column() const noexcept { return column_; }

 private:
  int line_;
  int column_;
};

/// Parses and validates a description. `source` names the text in diagnostics.
NetworkDescription parse_network(std::string_view text, const std::string& source = "<string>");

NetworkDescription load_network(const std::filesystem::path& path);

}  // namespace phgrid
