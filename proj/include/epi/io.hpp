// File formats: distribution JSON, flat key=value run configuration, JSON
// reports and CSV curves.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "epi/gauss_mix.hpp"
#include "epi/quadrature.hpp"

namespace epi {

inline constexpr const char* kVersion = "0.3.1";

/// Malformed or invalid user input (CLI exit code 2).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Weight-sum tolerance when reading distribution files.
inline constexpr double kFileWeightTol = 1e-9;

namespace detail {

inline std::string location(std::string_view text, std::size_t offset) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

inline std::vector<double> number_array(const nlohmann::json& j, const char* key,
                                        const std::string& origin) {
  if (!j.contains(key)) throw InputError(origin + ": missing \"" + key + "\"");
  const auto& a = j.at(key);
  if (!a.is_array()) throw InputError(origin + ": \"" + key + "\" must be an array");
  std::vector<double> out;
  for (const auto& v : a) {
    if (!v.is_number()) throw InputError(origin + ": \"" + key + "\" must hold numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline double parse_double(const std::string& s, const std::string& where) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw InputError(where + ": not a number: '" + s + "'");
  }
  if (used != s.size() || !std::isfinite(v)) throw InputError(where + ": not a number: '" + s + "'");
  return v;
}

inline std::uint64_t parse_count(const std::string& s, const std::string& where) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
    throw InputError(where + ": expected a non-negative integer, got '" + s + "'");
  try {
    return std::stoull(s);
  } catch (const std::exception&) {
    throw InputError(where + ": integer out of range: '" + s + "'");
  }
}

}  // namespace detail

/// Parse {"weights":[...], "means":[...], "variances":[...]}. Weights must
/// sum to 1 within 1e-9 unless `renormalize` is set.
inline GaussMix parse_distribution(std::string_view text, bool renormalize = false,
                                   const std::string& origin = "distribution") {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    // byte is 1-based and points one past the offending character.
    const std::size_t at = e.byte > 0 ? e.byte - 1 : 0;
    throw InputError(origin + ": JSON syntax error at " + detail::location(text, at));
  }
  if (!j.is_object()) throw InputError(origin + ": expected a JSON object");
  std::vector<double> w = detail::number_array(j, "weights", origin);
  std::vector<double> mu = detail::number_array(j, "means", origin);
  std::vector<double> var = detail::number_array(j, "variances", origin);
  if (w.empty()) throw InputError(origin + ": needs at least one component");
  if (w.size() != mu.size() || w.size() != var.size())
    throw InputError(origin + ": weights, means and variances differ in length");
  double total = 0.0;
  for (double x : w) total += x;
  if (!(std::abs(total - 1.0) <= kFileWeightTol)) {
    if (!renormalize || !(total > 0.0) || !std::isfinite(total)) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.17g", total);
      throw InputError(origin + ": weights sum to " + buf + ", not 1");
    }
  }
  for (double& x : w) x /= total;
  try {
    return {std::move(w), std::move(mu), std::move(var)};
  } catch (const std::invalid_argument& e) {
    throw InputError(origin + ": " + e.what());
  }
}

inline GaussMix load_distribution(const std::string& path, bool renormalize = false) {
  return parse_distribution(detail::read_file(path), renormalize, path);
}

inline nlohmann::json to_json(const GaussMix& gm) {
  return {{"weights", std::vector<double>(gm.weights().begin(), gm.weights().end())},
          {"means", std::vector<double>(gm.means().begin(), gm.means().end())},
          {"variances", std::vector<double>(gm.variances().begin(), gm.variances().end())}};
}

struct RunConfig {
  Settings quad;
  std::vector<double> gamma_grid{0.5, 1.0, 2.0};
  std::uint64_t mc_seed = 20240607;
  std::uint64_t mc_samples = 200000;
  std::string output_dir;  ///< empty: write the main artifact to stdout

  void validate() const {
    if (!(quad.tol1d > 0.0) || !(quad.tol2d > 0.0))
      throw InputError("config: tolerances must be > 0");
    if (quad.max_levels < 1 || quad.max_levels > 16)
      throw InputError("config: quad.max_levels must be in [1, 16]");
    if (gamma_grid.empty()) throw InputError("config: gamma.grid must not be empty");
    for (std::size_t i = 0; i < gamma_grid.size(); ++i) {
      if (!(gamma_grid[i] > 0.0)) throw InputError("config: gamma.grid values must be > 0");
      if (i > 0 && !(gamma_grid[i] > gamma_grid[i - 1]))
        throw InputError("config: gamma.grid must be increasing");
    }
    if (mc_samples == 0) throw InputError("config: mc.samples must be >= 1");
  }
};

inline std::vector<double> parse_list(const std::string& s, const std::string& where) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(detail::parse_double(detail::trim(item), where));
  if (out.empty()) throw InputError(where + ": empty list");
  return out;
}

/// Apply one key=value setting.
inline void set_config(RunConfig& cfg, const std::string& key, const std::string& value,
                       const std::string& where) {
  if (key == "quad.tol1d") {
    cfg.quad.tol1d = detail::parse_double(value, where);
  } else if (key == "quad.tol2d") {
    cfg.quad.tol2d = detail::parse_double(value, where);
  } else if (key == "quad.max_levels") {
    cfg.quad.max_levels = static_cast<int>(std::min<std::uint64_t>(detail::parse_count(value, where), 1000));
  } else if (key == "gamma.grid") {
    cfg.gamma_grid = parse_list(value, where);
  } else if (key == "mc.seed") {
    cfg.mc_seed = detail::parse_count(value, where);
  } else if (key == "mc.samples") {
    cfg.mc_samples = detail::parse_count(value, where);
  } else if (key == "output.dir") {
    cfg.output_dir = value;
  } else {
    throw InputError(where + ": unknown key '" + key + "'");
  }
}

/// Flat key=value text; '#' starts a comment. Later keys override earlier.
inline RunConfig parse_config(std::string_view text, const std::string& origin = "config") {
  RunConfig cfg;
  std::size_t lineno = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string line(text.substr(pos, end - pos));
    pos = end + 1;
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InputError(where + ": expected key=value");
    set_config(cfg, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)), where);
  }
  cfg.validate();
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  return parse_config(detail::read_file(path), path);
}

// ---------------------------------------------------------------------------
// Output

/// 17 significant digits, so the text reads back to the same double.
inline std::string format_number(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// `{value, est_error}` pair for reports.
inline nlohmann::json to_json(const Estimate& e) {
  return {{"value", e.value}, {"est_error", e.est_error}};
}

inline nlohmann::json to_json(const QuadResult& r) {
  nlohmann::json j{{"value", r.value},
                   {"est_error", r.est_error},
                   {"tol", r.tol},
                   {"levels", r.levels_used},
                   {"converged", r.converged}};
  if (std::isfinite(r.previous)) j["previous"] = r.previous;
  return j;
}

/// Command report with a fixed key layout.
struct Report {
  std::string command;
  nlohmann::json inputs = nlohmann::json::object();
  nlohmann::json results = nlohmann::json::object();
  nlohmann::json quad_diagnostics = nlohmann::json::array();

  nlohmann::json to_json() const {
    return {{"command", command},
            {"inputs", inputs},
            {"results", results},
            {"quad_diagnostics", quad_diagnostics},
            {"version", kVersion}};
  }

  void diagnostic(const std::string& name, const Estimate& e, double tol) {
    quad_diagnostics.push_back(
        {{"name", name}, {"value", e.value}, {"est_error", e.est_error}, {"tol", tol}});
  }
  void diagnostic(const std::string& name, const QuadResult& r) {
    nlohmann::json j = epi::to_json(r);
    j["name"] = name;
    quad_diagnostics.push_back(std::move(j));
  }
};

inline std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

/// Minimal CSV writer: header first, fields joined by ',', '\n' line ends.
class Csv {
 public:
  explicit Csv(std::vector<std::string> header) : width_(header.size()) { row_strings(header); }

  void row(const std::vector<double>& values) {
    if (values.size() != width_) throw std::logic_error("Csv: row width mismatch");
    std::vector<std::string> s;
    for (double v : values) s.push_back(format_number(v));
    row_strings(s);
  }

  const std::string& str() const noexcept { return text_; }

 private:
  void row_strings(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) text_ += ',';
      text_ += cells[i];
    }
    text_ += '\n';
  }

  std::size_t width_;
  std::string text_;
};

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  out << content;
  if (!out) throw InputError("write failed: " + path);
}

}  // namespace epi
