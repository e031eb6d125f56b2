#include "phgrid/config.hpp"

#include <fmt/format.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <variant>
#include <vector>

namespace phgrid {

ConfigError::ConfigError(const std::string& source, int line, int column, const std::string& message)
    : Error(line > 0 ? fmt::format("{}:{}:{}: {}", source, line, column, message)
                     : fmt::format("{}: {}", source, message)),
      line_(line),
      column_(column) {}

namespace {

struct Value {
  std::variant<double, std::string> data;
  int line = 0;
  int column = 0;
};

struct Section {
  std::string kind;
  int index = 0;  // 1-based among sections of the same kind
  int line = 0;
  int column = 0;
  std::map<std::string, Value> entries;
};

bool is_key_char(char c) {
  return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
}

class Parser {
 public:
  Parser(std::string_view text, std::string source) : text_(text), source_(std::move(source)) {}

  std::vector<Section> run() {
    std::vector<Section> sections;
    std::map<std::string, int> counts;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text_.size()) {
      const std::size_t end = std::min(text_.find('\n', pos), text_.size());
      std::string_view line = text_.substr(pos, end - pos);
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      ++line_no;
      parse_line(line, line_no, sections, counts);
      if (end == text_.size()) break;
      pos = end + 1;
    }
    return sections;
  }

 private:
  [[noreturn]] void fail(int line, int col, const std::string& msg) const { throw ConfigError(source_, line, col, msg); }

  static std::size_t skip_ws(std::string_view s, std::size_t i) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    return i;
  }

  void expect_end(std::string_view s, std::size_t i, int line) const {
    i = skip_ws(s, i);
    if (i < s.size() && s[i] != '#') fail(line, static_cast<int>(i) + 1, fmt::format("unexpected '{}'", s[i]));
  }

  void parse_line(std::string_view s, int line, std::vector<Section>& sections, std::map<std::string, int>& counts) {
    std::size_t i = skip_ws(s, 0);
    if (i == s.size() || s[i] == '#') return;
    const int col = static_cast<int>(i) + 1;

    if (s[i] == '[') {
      const bool array = i + 1 < s.size() && s[i + 1] == '[';
      std::size_t j = i + (array ? 2 : 1);
      const std::size_t name_start = j = skip_ws(s, j);
      while (j < s.size() && is_key_char(s[j])) ++j;
      const std::string name(s.substr(name_start, j - name_start));
      if (name.empty()) fail(line, static_cast<int>(j) + 1, "expected a section name");
      j = skip_ws(s, j);
      const std::string_view close = array ? "]]" : "]";
      if (s.substr(j, close.size()) != close) fail(line, static_cast<int>(j) + 1, fmt::format("expected '{}'", close));
      expect_end(s, j + close.size(), line);

      static const std::set<std::string> arrays = {"generator", "line", "load"};
      if (array && !arrays.count(name)) fail(line, col, fmt::format("unknown section [[{}]]", name));
      if (!array && name != "system") fail(line, col, fmt::format("unknown section [{}]", name));
      if (!array && counts[name] > 0) fail(line, col, "duplicate [system] section");
      sections.push_back({name, ++counts[name], line, col, {}});
      return;
    }

    std::size_t j = i;
    while (j < s.size() && is_key_char(s[j])) ++j;
    if (j == i) fail(line, col, "expected a key, a [section] or a [[section]]");
    const std::string key(s.substr(i, j - i));
    j = skip_ws(s, j);
    if (j >= s.size() || s[j] != '=') fail(line, static_cast<int>(j) + 1, fmt::format("expected '=' after key '{}'", key));
    j = skip_ws(s, j + 1);
    if (sections.empty()) fail(line, col, fmt::format("key '{}' appears before any section", key));
    Value v{0.0, line, static_cast<int>(j) + 1};
    if (j >= s.size()) fail(line, static_cast<int>(j) + 1, fmt::format("missing value for key '{}'", key));

    if (s[j] == '"') {
      std::string str;
      std::size_t k = j + 1;
      for (;; ++k) {
        if (k >= s.size()) fail(line, static_cast<int>(j) + 1, "unterminated string");
        if (s[k] == '"') break;
        if (s[k] == '\\') {
          if (++k >= s.size()) fail(line, static_cast<int>(k) + 1, "unterminated escape");
          switch (s[k]) {
            case '"': str += '"'; break;
            case '\\': str += '\\'; break;
            case 'n': str += '\n'; break;
            case 't': str += '\t'; break;
            default: fail(line, static_cast<int>(k), fmt::format("unsupported escape '\\{}'", s[k]));
          }
          continue;
        }
        str += s[k];
      }
      v.data = std::move(str);
      expect_end(s, k + 1, line);
    } else {
      std::size_t k = j;
      std::string digits;
      while (k < s.size() && s[k] != ' ' && s[k] != '\t' && s[k] != '#') {
        if (s[k] != '_') digits += s[k];
        ++k;
      }
      if (!digits.empty() && digits.front() == '+') digits.erase(0, 1);
      double x = 0.0;
      const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), x);
      if (digits.empty() || ec != std::errc() || ptr != digits.data() + digits.size() || !std::isfinite(x))
        fail(line, static_cast<int>(j) + 1,
             fmt::format("value of '{}' must be a finite number or a double-quoted string", key));
      v.data = x;
      expect_end(s, k, line);
    }

    auto& entries = sections.back().entries;
    if (entries.count(key)) fail(line, col, fmt::format("duplicate key '{}'", key));
    entries.emplace(key, std::move(v));
  }

  std::string_view text_;
  std::string source_;
};

class SectionReader {
 public:
  SectionReader(const Section& s, const std::string& source) : s_(s), source_(source) {}

  std::string label() const {
    return s_.kind == "system" ? "[system]" : fmt::format("[[{}]] #{}", s_.kind, s_.index);
  }

  [[noreturn]] void fail_at(const Value* v, const std::string& msg) const {
    throw ConfigError(source_, v ? v->line : s_.line, v ? v->column : s_.column, fmt::format("{}: {}", label(), msg));
  }

  bool has(const std::string& key) const { return s_.entries.count(key) > 0; }
  const Value* find(const std::string& key) const {
    const auto it = s_.entries.find(key);
    return it == s_.entries.end() ? nullptr : &it->second;
  }

  double number(const std::string& key) const {
    const Value* v = find(key);
    if (!v) fail_at(nullptr, fmt::format("missing required key '{}'", key));
    if (!std::holds_alternative<double>(v->data)) fail_at(v, fmt::format("'{}' must be a number", key));
    return std::get<double>(v->data);
  }

  std::optional<double> optional_number(const std::string& key) const {
    if (!has(key)) return std::nullopt;
    return number(key);
  }

  std::string string(const std::string& key) const {
    const Value* v = find(key);
    if (!v) fail_at(nullptr, fmt::format("missing required key '{}'", key));
    if (!std::holds_alternative<std::string>(v->data)) fail_at(v, fmt::format("'{}' must be a quoted string", key));
    return std::get<std::string>(v->data);
  }

  std::string optional_string(const std::string& key, const std::string& fallback) const {
    return has(key) ? string(key) : fallback;
  }

  void allow_only(std::initializer_list<const char*> keys) const {
    const std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& [k, v] : s_.entries)
      if (!allowed.count(k)) fail_at(&v, fmt::format("unknown key '{}'", k));
  }

  const Section& section() const { return s_; }

 private:
  const Section& s_;
  const std::string& source_;
};

// L from L or X_at_omega_s (exactly one).
double inductance(const SectionReader& r, double omega_s) {
  const bool hasL = r.has("L"), hasX = r.has("X_at_omega_s");
  if (hasL && hasX) r.fail_at(r.find("X_at_omega_s"), "give either L or X_at_omega_s, not both");
  if (hasX) return r.number("X_at_omega_s") / omega_s;
  return r.number("L");
}

}  // namespace

NetworkDescription parse_network(std::string_view text, const std::string& source) {
  const std::vector<Section> sections = Parser(text, source).run();

  const Section* system = nullptr;
  for (const auto& s : sections)
    if (s.kind == "system") system = &s;
  if (!system) throw ConfigError(source, 1, 1, "missing [system] section");

  NetworkDescription nd;
  {
    SectionReader r(*system, source);
    r.allow_only({"omega_s_hz"});
    const double hz = r.number("omega_s_hz");
    if (!(hz > 0.0)) r.fail_at(r.find("omega_s_hz"), "omega_s_hz must be > 0");
    nd.base_frequency_hz = hz;
    nd.omega_s = 2.0 * std::numbers::pi * hz;
  }

  std::vector<const Section*> where_gen, where_line, where_load;
  for (const auto& s : sections) {
    if (s.kind == "system") continue;
    SectionReader r(s, source);
    if (s.kind == "generator") {
      r.allow_only({"name", "bus", "M", "D", "r", "r_f", "L_s", "L_s0", "L_sf", "L_f", "I_f", "tau_m", "V_x_star",
                    "V_y_star", "R_sssc"});
      GeneratorSpec g;
      g.name = r.optional_string("name", fmt::format("gen{}", s.index));
      g.bus = r.string("bus");
      auto& p = g.params;
      p.M = r.number("M");
      p.D = r.number("D");
      p.r = r.number("r");
      p.r_f = r.number("r_f");
      p.L_s = r.number("L_s");
      p.L_s0 = r.number("L_s0");
      p.L_sf = r.number("L_sf");
      p.L_f = r.number("L_f");
      g.R_sssc = r.optional_number("R_sssc").value_or(0.0);
      const bool volt = r.has("V_x_star") || r.has("V_y_star");
      const bool field = r.has("I_f") || r.has("tau_m");
      if (volt && field)
        r.fail_at(r.find(r.has("I_f") ? "I_f" : "tau_m"),
                  "give either V_x_star/V_y_star or I_f/tau_m, not both");
      if (volt) {
        g.setpoint = Setpoint::TerminalVoltage;
        g.V_target = Eigen::Vector2d(r.number("V_x_star"), r.number("V_y_star"));
      } else if (field) {
        g.setpoint = Setpoint::FieldAndTorque;
        p.I_f = r.number("I_f");
        g.tau_m = r.number("tau_m");
      } else {
        r.fail_at(nullptr, "missing setpoint: give V_x_star and V_y_star, or I_f and tau_m");
      }
      nd.generators.push_back(std::move(g));
      where_gen.push_back(&s);
    } else if (s.kind == "line") {
      r.allow_only({"name", "from", "to", "R", "L", "X_at_omega_s"});
      LineParams l;
      l.name = r.optional_string("name", fmt::format("line{}", s.index));
      l.from_bus = r.string("from");
      l.to_bus = r.string("to");
      l.R = r.number("R");
      l.L = inductance(r, nd.omega_s);
      nd.lines.push_back(std::move(l));
      where_line.push_back(&s);
    } else if (s.kind == "load") {
      LoadModel l;
      l.name = r.optional_string("name", fmt::format("load{}", s.index));
      l.bus = r.string("bus");
      const std::string kind = r.string("kind");
      if (kind == "rl") {
        r.allow_only({"name", "bus", "kind", "R", "L", "X_at_omega_s"});
        l.kind = LoadKind::LinearRL;
        l.R = r.number("R");
        l.L = (r.has("L") || r.has("X_at_omega_s")) ? inductance(r, nd.omega_s) : 0.0;
      } else if (kind == "const_current") {
        r.allow_only({"name", "bus", "kind", "amplitude", "phase"});
        l.kind = LoadKind::ConstantCurrent;
        l.amplitude = r.number("amplitude");
        l.phase = r.optional_number("phase").value_or(0.0);
      } else {
        r.fail_at(r.find("kind"), fmt::format("unknown load kind \"{}\" (expected \"rl\" or \"const_current\")", kind));
      }
      nd.loads.push_back(std::move(l));
      where_load.push_back(&s);
    }
  }
  if (nd.generators.empty()) throw ConfigError(source, system->line, system->column, "no [[generator]] section");

  // Re-raise model violations at the offending section.
  auto locate = [&](const std::string& msg) -> const Section* {
    for (std::size_t i = 0; i < nd.generators.size(); ++i)
      if (msg.find("'" + nd.generators[i].name + "'") != std::string::npos) return where_gen[i];
    for (std::size_t i = 0; i < nd.lines.size(); ++i)
      if (msg.find("'" + nd.lines[i].name + "'") != std::string::npos) return where_line[i];
    for (std::size_t i = 0; i < nd.loads.size(); ++i)
      if (msg.find("'" + nd.loads[i].name + "'") != std::string::npos) return where_load[i];
    return system;
  };
  try {
    nd.validate();
  } catch (const Error& e) {
    const Section* s = locate(e.what());
    throw ConfigError(source, s->line, s->column, e.what());
  }
  return nd;
}

NetworkDescription load_network(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string(), 0, 0, "cannot open file");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_network(buf.str(), path.string());
}

}  // namespace phgrid
