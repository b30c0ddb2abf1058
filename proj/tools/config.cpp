#include "config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "kinlub/errors.hpp"

namespace kinlub::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const std::string t = trim(v);
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
    throw InvalidArgument("config: " + key + " expects a number, got '" + v + "'");
  return out;
}

long long to_integer(const std::string& key, const std::string& v) {
  long long out = 0;
  const std::string t = trim(v);
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
    throw InvalidArgument("config: " + key + " expects an integer, got '" + v + "'");
  return out;
}

int to_int(const std::string& key, const std::string& v) {
  const long long n = to_integer(key, v);
  if (n < -1000000000LL || n > 1000000000LL) throw InvalidArgument("config: " + key + " is out of range");
  return static_cast<int>(n);
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> m;
    const auto integer = [](int RunConfig::*field) {
      return [field](RunConfig& c, const std::string& k, const std::string& v) { c.*field = to_int(k, v); };
    };
    const auto real = [](double RunConfig::*field) {
      return [field](RunConfig& c, const std::string& k, const std::string& v) { c.*field = to_double(k, v); };
    };
    const auto text = [](std::string RunConfig::*field) {
      return [field](RunConfig& c, const std::string&, const std::string& v) { c.*field = trim(v); };
    };
    const auto list = [](std::vector<double> RunConfig::*field) {
      return [field](RunConfig& c, const std::string&, const std::string& v) { c.*field = parse_list(v); };
    };
    m["order"] = integer(&RunConfig::order);
    m["z_nodes"] = integer(&RunConfig::z_nodes);
    m["height"] = real(&RunConfig::height);
    m["table_samples"] = integer(&RunConfig::table_samples);
    m["model"] = text(&RunConfig::model);
    m["plugin_kernel"] = text(&RunConfig::plugin_kernel);
    m["nu_const"] = real(&RunConfig::nu_const);
    m["nu_slope"] = real(&RunConfig::nu_slope);
    m["k0"] = real(&RunConfig::k0);
    m["domain"] = text(&RunConfig::domain);
    m["nx"] = integer(&RunConfig::nx);
    m["ny"] = integer(&RunConfig::ny);
    m["rho0"] = text(&RunConfig::rho0);
    m["rho_left"] = real(&RunConfig::rho_left);
    m["rho_right"] = real(&RunConfig::rho_right);
    m["rho_amplitude"] = real(&RunConfig::rho_amplitude);
    m["rho_table"] = list(&RunConfig::rho_table);
    m["expansion_order"] = integer(&RunConfig::expansion_order);
    m["expansion_z_nodes"] = integer(&RunConfig::expansion_z_nodes);
    m["epsilons"] = list(&RunConfig::epsilons);
    m["slab_tol"] = real(&RunConfig::slab_tol);
    m["gmres_tol"] = real(&RunConfig::gmres_tol);
    m["picard_tol"] = real(&RunConfig::picard_tol);
    m["rho_quantum"] = real(&RunConfig::rho_quantum);
    m["threads"] = integer(&RunConfig::threads);
    m["seed"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      const long long n = to_integer(k, v);
      if (n < 0) throw InvalidArgument("config: seed must be nonnegative");
      c.seed = static_cast<std::uint64_t>(n);
    };
    m["out"] = text(&RunConfig::out);
    return m;
  }();
  return table;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw InvalidArgument("config: " + message);
}

}  // namespace

std::vector<std::string> preset_names() { return {"default", "constant-rho"}; }

RunConfig preset(const std::string& name) {
  RunConfig c;
  c.preset = name;
  if (name == "default") return c;
  if (name == "constant-rho") {
    c.rho_left = c.rho_right = 1.3;
    return c;
  }
  throw InvalidArgument("config: unknown preset '" + name + "'");
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    if (trim(item).empty()) continue;
    out.push_back(to_double("list", item));
  }
  return out;
}

void set_key(RunConfig& cfg, const std::string& key, const std::string& value) {
  const std::string k = trim(key);
  if (k == "preset") {
    const RunConfig base = preset(trim(value));
    cfg = base;
    return;
  }
  const auto it = setters().find(k);
  if (it == setters().end()) throw InvalidArgument("config: unknown key '" + k + "'");
  it->second(cfg, k, value);
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("config: cannot read " + path);
  std::vector<std::pair<std::string, std::string>> entries;
  std::string base = "default";
  int line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InvalidArgument("config: " + path + ":" + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key == "preset")
      base = value;
    else
      entries.emplace_back(key, value);
  }
  RunConfig cfg = preset(base);
  for (const auto& [k, v] : entries) set_key(cfg, k, v);
  return cfg;
}

void apply_overrides(RunConfig& cfg, const std::vector<std::string>& assignments) {
  for (const std::string& a : assignments) {
    const auto eq = a.find('=');
    if (eq == std::string::npos) throw InvalidArgument("config: override '" + a + "' is not key=value");
    set_key(cfg, a.substr(0, eq), a.substr(eq + 1));
  }
}

double rho0_at(const RunConfig& cfg, double x, double y) {
  double base;
  if (cfg.rho0 == "table") {
    const auto& t = cfg.rho_table;
    const double s = std::clamp(x, 0.0, 1.0) * static_cast<double>(t.size() - 1);
    const auto i = std::min(static_cast<std::size_t>(s), t.size() - 2);
    const double f = s - static_cast<double>(i);
    base = (1.0 - f) * t[i] + f * t[i + 1];
  } else {
    base = cfg.rho_left + (cfg.rho_right - cfg.rho_left) * x;
  }
  if (cfg.domain == "rectangle") base += cfg.rho_amplitude * std::sin(M_PI * y);
  return base;
}

std::pair<double, double> rho0_range(const RunConfig& cfg) {
  double lo = INFINITY, hi = -INFINITY;
  const int ny = cfg.domain == "rectangle" ? cfg.ny : 1;
  for (int i = 0; i < cfg.nx; ++i)
    for (int j = 0; j < ny; ++j) {
      const double x = static_cast<double>(i) / (cfg.nx - 1);
      const double y = ny > 1 ? static_cast<double>(j) / (ny - 1) : 0.0;
      const double v = rho0_at(cfg, x, y);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  return {lo, hi};
}

void validate(const RunConfig& c) {
  require(c.order >= 2 && c.order <= 16, "order must lie in [2, 16]");
  require(c.z_nodes >= 4, "z_nodes must be at least 4");
  require(c.height > 0.0 && std::isfinite(c.height), "height must be positive");
  require(c.table_samples >= 4, "table_samples must be at least 4");
  require(c.model == "bgk" || c.model == "plugin", "model must be bgk or plugin");
  require(c.model != "plugin" || !c.plugin_kernel.empty(), "model = plugin needs plugin_kernel");
  require(c.nu_const > 0.0 && c.nu_slope > 0.0 && c.k0 > 0.0, "nu_const, nu_slope and k0 must be positive");
  require(c.domain == "interval" || c.domain == "rectangle", "domain must be interval or rectangle");
  require(c.nx >= 4, "nx must be at least 4");
  require(c.domain != "rectangle" || c.ny >= 3, "ny must be at least 3");
  require(c.rho0 == "linear" || c.rho0 == "table", "rho0 must be linear or table");
  require(c.rho0 != "table" || c.rho_table.size() >= 2, "rho0 = table needs at least two rho_table values");
  require(c.expansion_order >= 2 && c.expansion_order <= 12, "expansion_order must lie in [2, 12]");
  require(c.expansion_z_nodes >= 4, "expansion_z_nodes must be at least 4");
  require(c.epsilons.size() >= 3, "epsilons needs at least three values");
  for (std::size_t i = 0; i < c.epsilons.size(); ++i) {
    require(c.epsilons[i] > 0.0 && c.epsilons[i] < 1.0, "every epsilon must lie in (0, 1)");
    require(i == 0 || c.epsilons[i] < c.epsilons[i - 1], "epsilons must be strictly decreasing");
  }
  require(c.slab_tol > 0.0 && c.gmres_tol > 0.0 && c.picard_tol > 0.0, "tolerances must be positive");
  require(c.rho_quantum >= 0.0, "rho_quantum must be nonnegative");
  require(c.threads >= 1, "threads must be at least 1");
  require(!c.out.empty(), "out must not be empty");
  const auto [lo, hi] = rho0_range(c);
  require(lo > 0.0 && std::isfinite(hi), "rho0 must be positive everywhere");
}

const std::map<std::string, std::string>& config_schema() {
  static const std::map<std::string, std::string> schema = {
      {"preset", "base configuration: default | constant-rho"},
      {"order", "Gauss-Hermite nodes per velocity axis for slab solves (default 8)"},
      {"z_nodes", "z-nodes across the slab for slab solves (default 64)"},
      {"height", "slab height H (default 1)"},
      {"table_samples", "samples of A(rho) in the coefficient table (default 16)"},
      {"model", "collision model: bgk | plugin"},
      {"plugin_kernel", "kernel file for model = plugin"},
      {"nu_const", "collision frequency nu(v) = nu_const + nu_slope |v|"},
      {"nu_slope", "see nu_const"},
      {"k0", "collision scale k0 in L = (nu/k0)(I - Pi)"},
      {"domain", "planar domain: interval | rectangle (unit square)"},
      {"nx", "grid nodes in x (default 32)"},
      {"ny", "grid nodes in y on rectangles (default 17)"},
      {"rho0", "boundary density profile: linear | table"},
      {"rho_left", "rho0 at x = 0 for the linear profile"},
      {"rho_right", "rho0 at x = 1 for the linear profile"},
      {"rho_amplitude", "adds rho_amplitude sin(pi y) on rectangles"},
      {"rho_table", "comma-separated rho0 samples, uniform in x on [0, 1]"},
      {"expansion_order", "velocity order for the expansion and remainder (default 6)"},
      {"expansion_z_nodes", "z-nodes for the expansion and remainder (default 32)"},
      {"epsilons", "comma-separated, strictly decreasing values in (0, 1)"},
      {"slab_tol", "relative tolerance of slab solves"},
      {"gmres_tol", "relative tolerance of the remainder linear solves"},
      {"picard_tol", "Picard stopping threshold on the update norm"},
      {"rho_quantum", "density rounding for shared transport solves"},
      {"threads", "worker threads"},
      {"seed", "seed for randomized property checks"},
      {"out", "output directory"},
  };
  return schema;
}

nlohmann::json to_json(const RunConfig& c) {
  return {{"preset", c.preset},
          {"order", c.order},
          {"z_nodes", c.z_nodes},
          {"height", c.height},
          {"table_samples", c.table_samples},
          {"model", c.model},
          {"plugin_kernel", c.plugin_kernel},
          {"nu_const", c.nu_const},
          {"nu_slope", c.nu_slope},
          {"k0", c.k0},
          {"domain", c.domain},
          {"nx", c.nx},
          {"ny", c.ny},
          {"rho0", c.rho0},
          {"rho_left", c.rho_left},
          {"rho_right", c.rho_right},
          {"rho_amplitude", c.rho_amplitude},
          {"rho_table", c.rho_table},
          {"expansion_order", c.expansion_order},
          {"expansion_z_nodes", c.expansion_z_nodes},
          {"epsilons", c.epsilons},
          {"slab_tol", c.slab_tol},
          {"gmres_tol", c.gmres_tol},
          {"picard_tol", c.picard_tol},
          {"rho_quantum", c.rho_quantum},
          {"threads", c.threads},
          {"seed", c.seed}};
}

}  // namespace kinlub::cli
