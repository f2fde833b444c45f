#include <charconv>
#include <cstdlib>
#include <sstream>

#include "mvavg/cli.hpp"

namespace mvavg::cli {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::string join(const std::vector<std::string>& problems) {
  std::string msg = "invalid configuration";
  for (const auto& p : problems) msg += "\n  " + p;
  return msg;
}

bool parse_double(std::string_view s, double& out) {
  const std::string t = trim(s);
  if (t.empty()) return false;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), out);
  return res.ec == std::errc() && res.ptr == t.data() + t.size();
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    parts.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::runtime_error(join(problems)), problems_(std::move(problems)) {}

Config Config::parse(std::string_view text, std::string_view origin, std::vector<std::string>& problems) {
  Config cfg;
  std::string section;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    const std::string where = std::string(origin) + ":" + std::to_string(line_no) + ": ";
    if (t.front() == '[') {
      if (t.back() != ']' || t.size() < 3) {
        problems.push_back(where + "malformed section header");
        continue;
      }
      section = trim(std::string_view(t).substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      problems.push_back(where + "expected key = value");
      continue;
    }
    if (section.empty()) {
      problems.push_back(where + "key outside of a section");
      continue;
    }
    const std::string key = trim(std::string_view(t).substr(0, eq));
    if (key.empty()) {
      problems.push_back(where + "empty key");
      continue;
    }
    cfg.set(section, key, trim(std::string_view(t).substr(eq + 1)));
  }
  return cfg;
}

void Config::set(const std::string& section, const std::string& key, const std::string& value) {
  sections_[section][key] = value;
}

std::optional<std::string> Config::get(const std::string& section, const std::string& key) const {
  const auto s = sections_.find(section);
  if (s == sections_.end()) return std::nullopt;
  const auto k = s->second.find(key);
  if (k == s->second.end()) return std::nullopt;
  return k->second;
}

void Config::overlay(const Config& other, std::string_view origin, std::vector<std::string>& problems) {
  for (const auto& [section, entries] : other.sections_) {
    for (const auto& [key, value] : entries) {
      if (!get(section, key)) {
        problems.push_back(std::string(origin) + ": unknown key " + section + "." + key);
        continue;
      }
      set(section, key, value);
    }
  }
}

std::string Config::to_text() const {
  std::string out;
  for (const auto& [section, entries] : sections_) {
    if (!out.empty()) out += '\n';
    out += "[" + section + "]\n";
    for (const auto& [key, value] : entries) out += key + " = " + value + "\n";
  }
  return out;
}

Config default_config() {
  Config c;
  auto put = [&c](const char* section, const char* key, const char* value) { c.set(section, key, value); };
  put("model", "name", "linear");
  put("model", "a1", "-1");
  put("model", "a2", "0.5");
  put("model", "a3", "1");
  put("model", "c1", "0.5");
  put("model", "c2", "0.25");
  put("model", "kappa", "2");
  put("model", "sigma_x", "0.3");
  put("model", "sigma_y", "1");

  put("run", "seed", "1");

  put("grid", "horizon", "1");
  put("grid", "slow_step", "0.00390625");
  put("grid", "checkpoints", "64");
  put("grid", "fine_per_step", "0");

  put("ensemble", "particles", "2000");
  put("ensemble", "replicates", "32");
  put("ensemble", "x0", "1");
  put("ensemble", "y0", "1");

  put("drift", "source", "analytic");
  put("drift", "burn_in", "0");
  put("drift", "samples", "100");
  put("drift", "thin", "0");
  put("drift", "h_frozen", "0.01");
  put("drift", "quantum", "0.001");

  put("converge", "epsilons", "0.0625,0.03125,0.015625,0.0078125,0.00390625,0.001953125");
  put("converge", "bootstrap", "1000");

  put("diagnostics", "epsilons", "0.0625,0.03125,0.015625,0.0078125,0.00390625,0.001953125");
  put("diagnostics", "particles", "500");
  put("diagnostics", "replicates", "4");
  put("diagnostics", "holder_epsilon", "0.015625");
  put("diagnostics", "holder_t0", "0.5");
  put("diagnostics", "holder_lags", "0.125,0.0625,0.03125,0.015625,0.0078125,0.00390625");
  put("diagnostics", "sweep_epsilon", "0.0009765625");
  put("diagnostics", "sweep_deltas", "0.0625,0.03125,0.015625,0.0078125,0.00390625");
  put("diagnostics", "sweep_particles", "1000");
  put("diagnostics", "sweep_replicates", "4");

  put("ergodicity", "x", "1");
  put("ergodicity", "mu", "1");
  put("ergodicity", "y0", "10");
  put("ergodicity", "horizon", "0");
  put("ergodicity", "h_frozen", "0.01");
  put("ergodicity", "n_traj", "200000");
  put("ergodicity", "n_points", "51");
  put("ergodicity", "contraction_y1", "10");
  put("ergodicity", "contraction_y2", "-10");

  put("poisson", "x", "1");
  put("poisson", "mu", "1");
  put("poisson", "y_points", "-2;-1;0;1;2");
  put("poisson", "s_max", "0");
  put("poisson", "h_frozen", "0.002");
  put("poisson", "n_traj", "10000");
  put("poisson", "tolerance", "0.0001");
  put("poisson", "fd_step", "0.0001");

  put("simulate", "epsilon", "0.015625");
  put("simulate", "particles", "200");
  put("simulate", "replicates", "1");

  put("probe", "n_probes", "1000");
  return c;
}

const std::string& Reader::raw(const std::string& section, const std::string& key) {
  const auto s = config_.sections().find(section);
  if (s != config_.sections().end()) {
    const auto k = s->second.find(key);
    if (k != s->second.end()) return k->second;
  }
  problems_.push_back("missing key " + section + "." + key);
  return empty_;
}

std::string Reader::text(const std::string& section, const std::string& key) { return raw(section, key); }

double Reader::real(const std::string& section, const std::string& key) {
  const std::string& v = raw(section, key);
  double out = 0.0;
  if (!parse_double(v, out)) {
    problems_.push_back(section + "." + key + ": '" + v + "' is not a number");
    return 0.0;
  }
  return out;
}

std::uint64_t Reader::u64(const std::string& section, const std::string& key) {
  const std::string v = trim(raw(section, key));
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    problems_.push_back(section + "." + key + ": '" + v + "' is not a non-negative integer");
    return 0;
  }
  return out;
}

std::size_t Reader::count(const std::string& section, const std::string& key) {
  return static_cast<std::size_t>(u64(section, key));
}

std::vector<double> Reader::reals(const std::string& section, const std::string& key) {
  const std::string& v = raw(section, key);
  std::vector<double> out;
  for (const auto& part : split(v, ',')) {
    double d = 0.0;
    if (!parse_double(part, d)) {
      problems_.push_back(section + "." + key + ": '" + part + "' is not a number");
      return {};
    }
    out.push_back(d);
  }
  return out;
}

std::vector<std::vector<double>> Reader::vectors(const std::string& section, const std::string& key) {
  const std::string& v = raw(section, key);
  std::vector<std::vector<double>> out;
  for (const auto& group : split(v, ';')) {
    std::vector<double> vec;
    for (const auto& part : split(group, ',')) {
      double d = 0.0;
      if (!parse_double(part, d)) {
        problems_.push_back(section + "." + key + ": '" + part + "' is not a number");
        return {};
      }
      vec.push_back(d);
    }
    out.push_back(std::move(vec));
  }
  return out;
}

std::filesystem::path default_output_dir() {
  if (const char* env = std::getenv("MVAVG_OUTPUT_DIR"); env != nullptr && *env != '\0') return env;
  return "mvavg-out";
}

}  // namespace mvavg::cli
