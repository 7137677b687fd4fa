#pragma once

// Experiment runner behind the `chenflow` command line tool: INI
// configuration with fixture presets, the named fixtures themselves, CSV
// artifacts, the parallel row sweep and the oracle self-test.

#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <thread>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "chenflow/control.hpp"
#include "chenflow/csv.hpp"
#include "chenflow/learner.hpp"
#include "chenflow/oracles.hpp"
#include "chenflow/plant.hpp"

namespace chenflow::experiment {

namespace fs = std::filesystem;

enum ExitCode : int { exit_ok = 0, exit_validation = 2, exit_blow_up = 3 };

/// Bad fixture, malformed file, out-of-range value or unwritable output.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Topology { mimo, siso_y1, siso_y2, simo };

inline std::string to_string(Topology t) {
  switch (t) {
    case Topology::mimo: return "mimo";
    case Topology::siso_y1: return "siso_y1";
    case Topology::siso_y2: return "siso_y2";
    case Topology::simo: return "simo";
  }
  return "?";
}

inline LvActuation actuation_of(Topology t) {
  return t == Topology::mimo ? LvActuation::both_betas : LvActuation::beta1_only;
}

inline std::vector<std::size_t> tracked_outputs(Topology t) {
  switch (t) {
    case Topology::siso_y1: return {0};
    case Topology::siso_y2: return {1};
    default: return {0, 1};
  }
}

struct ExperimentConfig {
  std::string fixture = "exact_model";
  std::string row;
  std::uint64_t seed = 1;
  std::string out;  // empty: $CHENFLOW_OUT/<fixture>[/<row>] or ./chenflow_out/...

  DiscretizationConfig disc;
  LotkaVolterraParams plant;
  LotkaVolterraParams model;
  Vector z0 = Vector{{0.4, 0.6}};

  Topology topology = Topology::mimo;
  LoopMode mode = LoopMode::with_model;
  bool baseline = false;  // also run with θ̂ frozen at zero

  ControllerConfig controller;
  std::size_t reset_period = 25;
  double p0_scale = 1.0;
  OrbitTransferDesign reference;

  bool operator==(const ExperimentConfig& o) const {
    return fixture == o.fixture && row == o.row && seed == o.seed && out == o.out && disc == o.disc &&
           plant == o.plant && model == o.model && z0 == o.z0 && topology == o.topology && mode == o.mode &&
           baseline == o.baseline && controller.u_bound == o.controller.u_bound &&
           controller.weight == o.controller.weight && controller.search == o.controller.search &&
           reset_period == o.reset_period && p0_scale == o.p0_scale && reference == o.reference;
  }
};

// ---------------------------------------------------------------------------
// Fixtures

/// One table row: model parameter errors in percent, Δλ = (λ_model - λ_plant)·100.
struct FixtureRow {
  std::string name;
  double d_alpha12 = 0.0;
  double d_alpha21 = 0.0;
  double d_beta2 = 0.0;
  double u_bound = 2.0;
  bool model_free = false;
};

struct FixtureTable {
  std::string fixture;
  Topology topology;
  std::string default_row;
  std::vector<FixtureRow> rows;
};

inline const std::vector<FixtureTable>& fixture_tables() {
  static const std::vector<FixtureTable> tables = [] {
    std::vector<FixtureTable> out;
    FixtureTable t2{"table2", Topology::mimo, "a21_plus20", {{"exact", 0, 0, 0, 2.0, false}}};
    for (auto [size, bound] : {std::pair{5, 2.0}, {10, 1.5}, {20, 0.5}}) {
      const std::string s = std::to_string(size);
      t2.rows.push_back({"a12_minus" + s, -double(size), 0, 0, bound, false});
      t2.rows.push_back({"a21_minus" + s, 0, -double(size), 0, bound, false});
      t2.rows.push_back({"a12_plus" + s, double(size), 0, 0, bound, false});
      t2.rows.push_back({"a21_plus" + s, 0, double(size), 0, bound, false});
    }
    t2.rows.push_back({"a12_minus50", -50, 0, 0, 0.5, false});
    t2.rows.push_back({"a12_plus50", 50, 0, 0, 0.5, false});
    t2.rows.push_back({"a21_plus50", 0, 50, 0, 0.5, false});
    t2.rows.push_back({"model_free", 0, 0, 0, 1.0, true});
    out.push_back(std::move(t2));

    auto single = [](std::string name, Topology topo, double exact_bound, double free_bound) {
      return FixtureTable{std::move(name), topo, "exact",
                          {{"exact", 0, 0, 0, exact_bound, false},
                           {"a12_minus5", -5, 0, 0, 1.4, false},
                           {"a21_minus5", 0, -5, 0, 1.4, false},
                           {"b2_minus5", 0, 0, -5, 1.4, false},
                           {"model_free", 0, 0, 0, free_bound, true}}};
    };
    out.push_back(single("siso_y1", Topology::siso_y1, 1.4, 2.0));
    out.push_back(single("siso_y2", Topology::siso_y2, 1.4, 2.0));
    out.push_back(single("simo", Topology::simo, 2.0, 1.0));
    return out;
  }();
  return tables;
}

inline const FixtureTable* find_table(std::string_view fixture) {
  for (const FixtureTable& t : fixture_tables())
    if (t.fixture == fixture) return &t;
  return nullptr;
}

inline std::vector<std::string> fixture_names() {
  std::vector<std::string> names{"example3_learning", "exact_model", "model_free"};
  for (const FixtureTable& t : fixture_tables()) names.push_back(t.fixture);
  return names;
}

inline Matrix default_weight(Topology topo, bool model_free) {
  switch (topo) {
    case Topology::siso_y1:
    case Topology::siso_y2: return Matrix::Identity(1, 1);
    case Topology::simo: return Matrix{{1.0, 0.25}, {0.25, 2.0}};
    case Topology::mimo: break;
  }
  return model_free ? Matrix{{1.0, 0.25}, {0.25, 1.0}} : Matrix::Identity(2, 2);
}

/// Orbit-transfer designer input per topology: both β's pumped around 0.4
/// for MIMO, β1 alone around 1 when β2 is a fixed parameter.
inline OrbitTransferDesign default_reference(Topology topo) {
  OrbitTransferDesign d;
  if (topo != Topology::mimo) {
    d.base = Vector{{1.0}};
    d.max_deviation = 0.2;
  }
  return d;
}

inline void apply_topology(ExperimentConfig& cfg, Topology topo, bool model_free, double u_bound) {
  cfg.topology = topo;
  cfg.mode = model_free ? LoopMode::model_free : LoopMode::with_model;
  cfg.controller.u_bound = u_bound;
  cfg.controller.weight = default_weight(topo, model_free);
  cfg.reference = default_reference(topo);
}

/// Configuration of a named fixture before any file or override is applied.
/// An empty `row` selects the fixture's default row.
inline ExperimentConfig preset(const std::string& fixture, std::string row = {}) {
  ExperimentConfig cfg;
  cfg.fixture = fixture;
  if (fixture == "example3_learning" || fixture == "exact_model" || fixture == "model_free") {
    if (!row.empty()) throw ConfigError("fixture '" + fixture + "' has no rows");
    if (fixture == "model_free") apply_topology(cfg, Topology::mimo, true, 1.0);
    else apply_topology(cfg, Topology::mimo, false, 2.0);
    return cfg;
  }
  const FixtureTable* table = find_table(fixture);
  if (table == nullptr) throw ConfigError("unknown fixture '" + fixture + "'");
  if (row.empty()) row = table->default_row;
  for (const FixtureRow& r : table->rows) {
    if (r.name != row) continue;
    cfg.row = row;
    apply_topology(cfg, table->topology, r.model_free, r.u_bound);
    cfg.model.alpha12 = cfg.plant.alpha12 + r.d_alpha12 / 100.0;
    cfg.model.alpha21 = cfg.plant.alpha21 + r.d_alpha21 / 100.0;
    cfg.model.beta2 = cfg.plant.beta2 + r.d_beta2 / 100.0;
    cfg.baseline = !r.model_free && (r.d_alpha12 != 0.0 || r.d_alpha21 != 0.0 || r.d_beta2 != 0.0);
    return cfg;
  }
  throw ConfigError("fixture '" + fixture + "' has no row '" + row + "'");
}

// ---------------------------------------------------------------------------
// Value codecs

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    parts.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) return parts;
    start = pos + 1;
  }
}

/// Shortest representation that parses back to the same double.
inline std::string format_real(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw std::runtime_error("cannot format number");
  return std::string(buf, end);
}

inline double parse_real(const std::string& text, const std::string& key) {
  const std::string s = trim(text);
  double v = 0.0;
  const char* first = s.data();
  if (!s.empty() && s.front() == '+') ++first;
  auto [end, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || end != s.data() + s.size() || !std::isfinite(v))
    throw ConfigError(key + ": expected a finite number, got '" + text + "'");
  return v;
}

inline std::uint64_t parse_count(const std::string& text, const std::string& key) {
  const std::string s = trim(text);
  std::uint64_t v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || end != s.data() + s.size())
    throw ConfigError(key + ": expected a non-negative integer, got '" + text + "'");
  return v;
}

inline bool parse_bool(const std::string& text, const std::string& key) {
  const std::string s = trim(text);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + text + "'");
}

inline std::string format_vector(const Vector& v) {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) out += (i ? ", " : "") + format_real(v[i]);
  return out;
}

inline Vector parse_vector(const std::string& text, const std::string& key) {
  const auto parts = split(text, ',');
  Vector v(static_cast<Eigen::Index>(parts.size()));
  for (std::size_t i = 0; i < parts.size(); ++i) v[static_cast<Eigen::Index>(i)] = parse_real(parts[i], key);
  return v;
}

/// Rows separated by ';', entries by ','.
inline std::string format_matrix(const Matrix& m) {
  std::string out;
  for (Eigen::Index r = 0; r < m.rows(); ++r) out += (r ? "; " : "") + format_vector(m.row(r).transpose());
  return out;
}

inline Matrix parse_matrix(const std::string& text, const std::string& key) {
  const auto rows = split(text, ';');
  std::vector<Vector> parsed;
  for (const std::string& r : rows) parsed.push_back(parse_vector(r, key));
  const Eigen::Index cols = parsed.front().size();
  Matrix m(static_cast<Eigen::Index>(parsed.size()), cols);
  for (std::size_t r = 0; r < parsed.size(); ++r) {
    if (parsed[r].size() != cols) throw ConfigError(key + ": ragged matrix '" + text + "'");
    m.row(static_cast<Eigen::Index>(r)) = parsed[r].transpose();
  }
  return m;
}

inline Topology parse_topology(const std::string& text, const std::string& key) {
  for (Topology t : {Topology::mimo, Topology::siso_y1, Topology::siso_y2, Topology::simo})
    if (trim(text) == to_string(t)) return t;
  throw ConfigError(key + ": expected mimo, siso_y1, siso_y2 or simo, got '" + text + "'");
}

inline LoopMode parse_mode(const std::string& text, const std::string& key) {
  const std::string s = trim(text);
  if (s == "with_model") return LoopMode::with_model;
  if (s == "model_free") return LoopMode::model_free;
  throw ConfigError(key + ": expected with_model or model_free, got '" + text + "'");
}

struct Field {
  std::string section;
  std::string key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
};

template <class T>
Field real_field(std::string section, std::string key, T ExperimentConfig::*group, double T::*member) {
  return {std::move(section), std::move(key),
          [=](const ExperimentConfig& c) { return format_real(c.*group.*member); },
          [=](ExperimentConfig& c, const std::string& v, const std::string& name) {
            c.*group.*member = parse_real(v, name);
          }};
}

template <class T>
Field count_field(std::string section, std::string key, T ExperimentConfig::*group, std::size_t T::*member) {
  return {std::move(section), std::move(key),
          [=](const ExperimentConfig& c) { return std::to_string(c.*group.*member); },
          [=](ExperimentConfig& c, const std::string& v, const std::string& name) {
            c.*group.*member = static_cast<std::size_t>(parse_count(v, name));
          }};
}

inline const std::vector<Field>& fields() {
  using C = ExperimentConfig;
  static const std::vector<Field> all = [] {
    std::vector<Field> f;
    f.push_back({"run", "fixture", [](const C& c) { return c.fixture; },
                 [](C& c, const std::string& v, const std::string&) { c.fixture = trim(v); }});
    f.push_back({"run", "row", [](const C& c) { return c.row; },
                 [](C& c, const std::string& v, const std::string&) { c.row = trim(v); }});
    f.push_back({"run", "seed", [](const C& c) { return std::to_string(c.seed); },
                 [](C& c, const std::string& v, const std::string& k) { c.seed = parse_count(v, k); }});
    f.push_back({"run", "out", [](const C& c) { return c.out; },
                 [](C& c, const std::string& v, const std::string&) { c.out = trim(v); }});

    f.push_back(real_field("discretization", "T", &C::disc, &DiscretizationConfig::horizon));
    f.push_back(count_field("discretization", "L", &C::disc, &DiscretizationConfig::samples));
    f.push_back(count_field("discretization", "J", &C::disc, &DiscretizationConfig::degree));
    f.push_back(real_field("discretization", "epsilon", &C::disc, &DiscretizationConfig::epsilon));
    f.push_back(count_field("discretization", "substeps", &C::disc, &DiscretizationConfig::substeps));

    for (auto [section, group] : {std::pair{"plant", &C::plant}, {"model", &C::model}}) {
      f.push_back(real_field(section, "alpha12", group, &LotkaVolterraParams::alpha12));
      f.push_back(real_field(section, "alpha21", group, &LotkaVolterraParams::alpha21));
      f.push_back(real_field(section, "beta1", group, &LotkaVolterraParams::beta1));
      f.push_back(real_field(section, "beta2", group, &LotkaVolterraParams::beta2));
      if (group == &C::plant)
        f.push_back({"plant", "z0", [](const C& c) { return format_vector(c.z0); },
                     [](C& c, const std::string& v, const std::string& k) { c.z0 = parse_vector(v, k); }});
    }

    f.push_back({"loop", "topology", [](const C& c) { return to_string(c.topology); },
                 [](C& c, const std::string& v, const std::string& k) { c.topology = parse_topology(v, k); }});
    f.push_back({"loop", "mode",
                 [](const C& c) { return std::string(c.mode == LoopMode::with_model ? "with_model" : "model_free"); },
                 [](C& c, const std::string& v, const std::string& k) { c.mode = parse_mode(v, k); }});
    f.push_back({"loop", "baseline", [](const C& c) { return std::string(c.baseline ? "true" : "false"); },
                 [](C& c, const std::string& v, const std::string& k) { c.baseline = parse_bool(v, k); }});

    f.push_back(real_field("controller", "u_bound", &C::controller, &ControllerConfig::u_bound));
    f.push_back({"controller", "W", [](const C& c) { return format_matrix(c.controller.weight); },
                 [](C& c, const std::string& v, const std::string& k) { c.controller.weight = parse_matrix(v, k); }});
    auto search = [&f](const char* key, std::size_t BoxSearchConfig::*member) {
      f.push_back({"controller", key, [=](const C& c) { return std::to_string(c.controller.search.*member); },
                   [=](C& c, const std::string& v, const std::string& k) {
                     c.controller.search.*member = static_cast<std::size_t>(parse_count(v, k));
                   }});
    };
    search("grid_points", &BoxSearchConfig::grid_points);
    search("refine_rounds", &BoxSearchConfig::refine_rounds);
    search("multistart", &BoxSearchConfig::multistart);
    search("polish_iterations", &BoxSearchConfig::polish_iterations);
    f.push_back({"controller", "polish_tolerance",
                 [](const C& c) { return format_real(c.controller.search.polish_tolerance); },
                 [](C& c, const std::string& v, const std::string& k) {
                   c.controller.search.polish_tolerance = parse_real(v, k);
                 }});

    f.push_back({"learner", "reset_period", [](const C& c) { return std::to_string(c.reset_period); },
                 [](C& c, const std::string& v, const std::string& k) {
                   c.reset_period = static_cast<std::size_t>(parse_count(v, k));
                 }});
    f.push_back({"learner", "p0_scale", [](const C& c) { return format_real(c.p0_scale); },
                 [](C& c, const std::string& v, const std::string& k) { c.p0_scale = parse_real(v, k); }});

    f.push_back({"reference", "base", [](const C& c) { return format_vector(c.reference.base); },
                 [](C& c, const std::string& v, const std::string& k) { c.reference.base = parse_vector(v, k); }});
    f.push_back(real_field("reference", "gain", &C::reference, &OrbitTransferDesign::gain));
    f.push_back(real_field("reference", "max_deviation", &C::reference, &OrbitTransferDesign::max_deviation));
    f.push_back(real_field("reference", "level_increase", &C::reference, &OrbitTransferDesign::level_increase));
    return f;
  }();
  return all;
}

inline const Field* find_field(const std::string& section, const std::string& key) {
  for (const Field& f : fields())
    if (f.section == section && f.key == key) return &f;
  return nullptr;
}

}  // namespace detail

/// Range and shape checks that do not need a simulation.
inline void validate(const ExperimentConfig& cfg) {
  try {
    cfg.disc.validate();
    if (cfg.fixture == "example3_learning") {
      if (cfg.disc.samples < 4) throw ConfigError("discretization.L: the learning demo needs L >= 4");
    } else {
      cfg.plant.validate();
      cfg.model.validate();
      const auto inputs = static_cast<Eigen::Index>(actuation_of(cfg.topology) == LvActuation::both_betas ? 2 : 1);
      if (cfg.z0.size() != 2 || !(cfg.z0.array() > 0.0).all())
        throw ConfigError("plant.z0: need two positive entries");
      if (cfg.reference.base.size() != inputs)
        throw ConfigError("reference.base: need " + std::to_string(inputs) + " entries for topology " +
                          to_string(cfg.topology));
      if (!(cfg.reference.max_deviation >= 0.0)) throw ConfigError("reference.max_deviation must be >= 0");
      cfg.controller.validate(tracked_outputs(cfg.topology).size());
    }
    if (!(cfg.p0_scale > 0.0)) throw ConfigError("learner.p0_scale must be positive");
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (cfg.fixture != "example3_learning" && cfg.fixture != "exact_model" && cfg.fixture != "model_free" &&
      find_table(cfg.fixture) == nullptr)
    throw ConfigError("unknown fixture '" + cfg.fixture + "'");
}

inline void apply_setting(ExperimentConfig& cfg, const std::string& section, const std::string& key,
                          const std::string& value) {
  if (section == "discretization" && key == "delta") return;  // checked in apply_tree
  const detail::Field* f = detail::find_field(section, key);
  if (f == nullptr) throw ConfigError("unknown key '" + section + "." + key + "'");
  f->set(cfg, value, section + "." + key);
}

namespace detail {

inline void apply_tree(ExperimentConfig& cfg, const boost::property_tree::ptree& tree) {
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty())
      throw ConfigError("key '" + section + "' must live inside a [section]");
    for (const auto& [key, value] : body) {
      if ((section == "run" && (key == "fixture" || key == "row"))) continue;
      apply_setting(cfg, section, key, value.data());
    }
  }
  if (auto delta = tree.get_optional<std::string>("discretization.delta")) {
    const double d = parse_real(*delta, "discretization.delta");
    if (std::abs(d - cfg.disc.delta()) > 1e-12 * std::max(1.0, std::abs(d)))
      throw ConfigError("discretization.delta must equal T/L = " + format_real(cfg.disc.delta()));
  }
}

}  // namespace detail

/// Layers, lowest first: fixture preset, config file, `section.key=value`
/// overrides, then the explicit --fixture/--row flags for fixture selection.
inline ExperimentConfig load_config(const std::optional<std::string>& text,
                                    const std::vector<std::string>& overrides = {},
                                    const std::optional<std::string>& fixture_flag = std::nullopt,
                                    const std::optional<std::string>& row_flag = std::nullopt) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  if (text) {
    std::istringstream in(*text);
    try {
      pt::ini_parser::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
      throw ConfigError(std::string("malformed config: ") + e.message() + " (line " + std::to_string(e.line()) + ")");
    }
  }
  for (const std::string& o : overrides) {
    const auto eq = o.find('=');
    const auto dot = o.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq)
      throw ConfigError("override '" + o + "' is not of the form section.key=value");
    const std::string section = detail::trim(std::string_view(o).substr(0, dot));
    const std::string key = detail::trim(std::string_view(o).substr(dot + 1, eq - dot - 1));
    if (section.empty() || key.empty()) throw ConfigError("override '" + o + "' has an empty section or key");
    tree.put(pt::ptree::path_type(section + "\x1f" + key, '\x1f'), o.substr(eq + 1));
  }

  const std::string fixture =
      fixture_flag ? *fixture_flag : detail::trim(tree.get<std::string>("run.fixture", "exact_model"));
  std::string row = row_flag ? *row_flag : detail::trim(tree.get<std::string>("run.row", ""));
  if (fixture_flag && !row_flag && tree.get<std::string>("run.fixture", fixture) != fixture) row.clear();

  ExperimentConfig cfg = preset(fixture, row);
  detail::apply_tree(cfg, tree);
  validate(cfg);
  return cfg;
}

inline ExperimentConfig parse_config(const std::string& text) { return load_config(text); }

/// Every field, sections in a fixed order; parse_config(serialize(c)) == c.
inline std::string serialize(const ExperimentConfig& cfg) {
  std::string out;
  std::string section;
  for (const detail::Field& f : detail::fields()) {
    if (f.section != section) {
      out += (section.empty() ? "[" : "\n[") + f.section + "]\n";
      section = f.section;
      if (section == "discretization") out += "; delta = T/L = " + detail::format_real(cfg.disc.delta()) + "\n";
    }
    out += f.key + " = " + f.get(cfg) + "\n";
  }
  return out;
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// --out wins; otherwise $CHENFLOW_OUT (or ./chenflow_out) / fixture / row.
inline fs::path output_dir(const ExperimentConfig& cfg) {
  if (!cfg.out.empty()) return cfg.out;
  const char* root = std::getenv("CHENFLOW_OUT");
  fs::path dir = (root && *root) ? fs::path(root) : fs::path("chenflow_out");
  dir /= cfg.fixture;
  if (!cfg.row.empty()) dir /= cfg.row;
  return dir;
}

inline void prepare_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw ConfigError("cannot create output directory " + dir.string());
  const fs::path probe = dir / ".chenflow_probe";
  {
    std::ofstream test(probe);
    if (!test) throw ConfigError("output directory " + dir.string() + " is not writable");
  }
  fs::remove(probe, ec);
}

// ---------------------------------------------------------------------------
// Learning demo: ż = u, y = e^z, u(t) = 2 e^{-t/3} sin(2πt), one unit over
// the one-letter alphabet {x1}.

inline double demo_input(double t) { return 2.0 * std::exp(-t / 3.0) * std::sin(2.0 * std::numbers::pi * t); }

struct LearningDemo {
  Trajectory plant;
  std::vector<double> predicted;   // ŷ_p(N), N = 1..L
  std::vector<double> innovation;  // y(N) - ŷ_p(N)
  std::vector<double> theta_norm;
  double quarter_rms[4] = {0, 0, 0, 0};

  double improvement_ratio() const { return quarter_rms[3] / quarter_rms[0]; }
};

inline LearningDemo learning_demo(const DiscretizationConfig& disc, const LearnerConfig& learner) {
  if (disc.samples < 4) throw std::invalid_argument("learning demo: need L >= 4");
  const InputSignal u = [](double t) { return Vector{{demo_input(t)}}; };
  LearningDemo demo;
  demo.plant = integrate(exp_model(), u, disc);
  const auto samples = discretize_input(u, 1, disc);
  const auto order = OrderVector::make(Alphabet::driftless(1), disc.degree);
  LearnerState state = learner_init(learner, order);
  ChenState chen = chen_init(order, samples[0]);

  double sums[4] = {0, 0, 0, 0};
  std::size_t counts[4] = {0, 0, 0, 0};
  const std::size_t l = disc.samples;
  for (std::size_t n = 1; n <= l; ++n) {
    chen.advance(samples[n]);
    const LearnStep step = learn_step_in_place(state, chen, demo.plant.y[n][0]);
    demo.predicted.push_back(step.predicted);
    demo.innovation.push_back(step.innovation);
    demo.theta_norm.push_back(state.theta.theta.norm());
    const std::size_t q = std::min<std::size_t>(3, (4 * (n - 1)) / l);
    sums[q] += step.innovation * step.innovation;
    ++counts[q];
  }
  for (int q = 0; q < 4; ++q) demo.quarter_rms[q] = std::sqrt(sums[q] / static_cast<double>(counts[q]));
  return demo;
}

// ---------------------------------------------------------------------------
// Running fixtures

struct SummaryRow {
  std::string label;
  std::vector<std::pair<std::string, double>> values;
};

struct Outcome {
  int exit_code = exit_ok;
  fs::path dir;
  std::vector<SummaryRow> summary;
  std::string message;
};

inline LearnerConfig learner_config(const ExperimentConfig& cfg, std::size_t regressor_length) {
  LearnerConfig lc;
  lc.reset_period = cfg.reset_period;
  if (cfg.p0_scale != 1.0) {
    const auto l = static_cast<Eigen::Index>(regressor_length);
    lc.p0 = cfg.p0_scale * Matrix::Identity(l, l);
  }
  return lc;
}

namespace detail {

inline std::vector<std::string> numbered(const std::string& stem, std::size_t count) {
  std::vector<std::string> out;
  for (std::size_t i = 1; i <= count; ++i) out.push_back(stem + std::to_string(i));
  return out;
}

inline void append(std::vector<std::string>& to, const std::vector<std::string>& from) {
  to.insert(to.end(), from.begin(), from.end());
}

inline void append(std::vector<double>& to, const Vector& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) to.push_back(v[i]);
}

inline void write_summary(const fs::path& dir, const std::vector<SummaryRow>& rows) {
  CsvWriter csv(dir / "summary.csv");
  std::vector<std::string> header{rows.empty() ? "label" : "perturbation"};
  if (!rows.empty())
    for (const auto& [name, _] : rows.front().values) header.push_back(name);
  csv.row(header);
  for (const SummaryRow& r : rows) {
    std::vector<std::string> cells{r.label};
    for (const auto& [_, v] : r.values) cells.push_back(format_number(v));
    csv.row(cells);
  }
}

inline void write_run(const fs::path& dir, const RunReport& run, std::size_t inputs) {
  const std::size_t outputs = static_cast<std::size_t>(run.initial_output.size());
  {
    CsvWriter csv(dir / "trajectory.csv");
    std::vector<std::string> header{"N", "t"};
    append(header, numbered("yd", outputs));
    append(header, numbered("y", outputs));
    append(header, numbered("yhat", outputs));
    append(header, numbered("e", outputs));
    append(header, numbered("u", inputs));
    header.push_back("cost");
    csv.row(header);
    for (const RunRow& r : run.rows) {
      std::vector<double> v{static_cast<double>(r.n), r.t};
      append(v, r.y_desired);
      append(v, r.y);
      append(v, r.y_model);
      append(v, (r.y - r.y_model).eval());
      append(v, r.u);
      v.push_back(r.cost);
      csv.numbers(v);
    }
  }
  CsvWriter csv(dir / "learning_trace.csv");
  std::vector<std::string> header{"N", "t"};
  for (std::size_t out : run.tracked) {
    const std::string i = std::to_string(out + 1);
    append(header, {"target" + i, "yhat_p" + i, "e" + i, "theta_norm" + i});
  }
  csv.row(header);
  for (const RunRow& r : run.rows) {
    std::vector<double> v{static_cast<double>(r.n), r.t};
    for (Eigen::Index c = 0; c < r.error.size(); ++c) {
      v.push_back(r.error[c]);
      v.push_back(r.predicted[c]);
      v.push_back(r.innovation[c]);
      v.push_back(r.theta_norm[c]);
    }
    csv.numbers(v);
  }
}

inline std::string fixture_label(const ExperimentConfig& cfg) { return cfg.row.empty() ? cfg.fixture : cfg.row; }

inline Outcome run_learning_demo(const ExperimentConfig& cfg, const fs::path& dir) {
  const auto order = OrderVector::make(Alphabet::driftless(1), cfg.disc.degree);
  const LearningDemo demo = learning_demo(cfg.disc, learner_config(cfg, order->size()));
  {
    CsvWriter csv(dir / "trajectory.csv");
    csv.row({"t", "z1", "y1", "u1"});
    for (std::size_t n = 0; n < demo.plant.t.size(); ++n)
      csv.numbers({demo.plant.t[n], demo.plant.z[n][0], demo.plant.y[n][0], demo.plant.u[n][0]});
  }
  {
    CsvWriter csv(dir / "learning_trace.csv");
    csv.row({"N", "t", "target1", "yhat_p1", "e1", "theta_norm1"});
    for (std::size_t n = 1; n < demo.plant.t.size(); ++n)
      csv.numbers({static_cast<double>(n), demo.plant.t[n], demo.plant.y[n][0], demo.predicted[n - 1],
                   demo.innovation[n - 1], demo.theta_norm[n - 1]});
  }
  Outcome out;
  out.dir = dir;
  out.summary.push_back({cfg.fixture,
                         {{"rms_q1", demo.quarter_rms[0]},
                          {"rms_q2", demo.quarter_rms[1]},
                          {"rms_q3", demo.quarter_rms[2]},
                          {"rms_q4", demo.quarter_rms[3]},
                          {"ratio", demo.improvement_ratio()}}});
  CsvWriter csv(dir / "summary.csv");
  csv.row({"fixture", "rms_q1", "rms_q2", "rms_q3", "rms_q4", "ratio"});
  std::vector<std::string> cells{cfg.fixture};
  for (const auto& [_, v] : out.summary.front().values) cells.push_back(format_number(v));
  csv.row(cells);
  return out;
}

}  // namespace detail

struct OrbitExperiment {
  PlantModel plant;
  PlantModel model;
  ReferenceTrajectory reference;
  LoopOptions options;
};

/// Plant, model, reference and loop options for an orbit-transfer config.
/// The reference is generated on the plant's nominal parameters for every row.
inline OrbitExperiment build_orbit_experiment(const ExperimentConfig& cfg) {
  const LvActuation act = actuation_of(cfg.topology);
  OrbitExperiment e{lv_model(cfg.plant, act, cfg.z0), lv_model(cfg.model, act, cfg.z0), {}, {}};
  const auto u_ref = orbit_transfer_input(cfg.plant, act, cfg.z0, cfg.reference, cfg.disc);
  double peak = 0.0;
  for (const Vector& u : u_ref) peak = std::max(peak, u.cwiseAbs().maxCoeff());
  e.reference = make_reference(e.plant, u_ref, cfg.disc, std::max(peak, cfg.controller.u_bound), "orbit_transfer");
  e.options.mode = cfg.mode;
  e.options.tracked = tracked_outputs(cfg.topology);
  e.options.learner = learner_config(cfg, Alphabet::with_drift(e.plant.input_dim).word_count(cfg.disc.degree));
  return e;
}

/// Runs `cfg` into `dir` (created if needed). Never throws for simulation
/// blow-up; that is reported through the exit code.
inline Outcome run_fixture(const ExperimentConfig& cfg, const fs::path& dir) {
  validate(cfg);
  prepare_dir(dir);
  if (cfg.fixture == "example3_learning") return detail::run_learning_demo(cfg, dir);

  OrbitExperiment e = build_orbit_experiment(cfg);
  const PlantModel* model = cfg.mode == LoopMode::with_model ? &e.model : nullptr;
  Outcome out;
  out.dir = dir;

  auto one = [&](const LoopOptions& options, const fs::path& where, const std::string& label) {
    const RunReport run = closed_loop_run(e.plant, model, e.reference, cfg.controller, cfg.disc, options);
    detail::write_run(where, run, e.plant.input_dim);
    if (run.aborted_at) {
      out.exit_code = exit_blow_up;
      out.message += label + ": " + run.abort_reason + " at N=" + std::to_string(*run.aborted_at) + "\n";
    }
    SummaryRow row{label, {}};
    if (!run.rows.empty()) {
      const TrackingMetrics m = rms_report(run, e.reference);
      for (Eigen::Index i = 0; i < m.normalized_rms.size(); ++i)
        row.values.emplace_back("dy" + std::to_string(i + 1), m.normalized_rms[i]);
      row.values.emplace_back("u_inf", m.u_inf);
    }
    out.summary.push_back(std::move(row));
  };

  const std::string label = detail::fixture_label(cfg);
  one(e.options, dir, label);
  if (cfg.baseline) {
    LoopOptions off = e.options;
    off.learning = false;
    prepare_dir(dir / "learning_off");
    one(off, dir / "learning_off", label + "/learning_off");
  }
  detail::write_summary(dir, out.summary);
  return out;
}

inline std::string format_summary(const std::vector<SummaryRow>& rows) {
  std::string text;
  for (const SummaryRow& r : rows) {
    text += r.label;
    for (const auto& [name, v] : r.values) text += " " + name + "=" + format_number(v);
    text += "\n";
  }
  return text;
}

// ---------------------------------------------------------------------------
// Sweep over a fixture's rows, one worker thread per job.

struct SweepOutcome {
  int exit_code = exit_ok;
  std::vector<Outcome> rows;
};

inline SweepOutcome sweep(const ExperimentConfig& base_config, const std::vector<std::string>& overrides,
                          const std::string& config_text, const fs::path& root, std::size_t jobs) {
  const FixtureTable* table = find_table(base_config.fixture);
  if (table == nullptr) throw ConfigError("fixture '" + base_config.fixture + "' has no rows to sweep");
  std::vector<ExperimentConfig> configs;
  for (const FixtureRow& r : table->rows) {
    ExperimentConfig c = load_config(config_text.empty() ? std::nullopt : std::optional(config_text), overrides,
                                     base_config.fixture, r.name);
    c.out = (root / r.name).string();
    configs.push_back(std::move(c));
  }
  prepare_dir(root);

  SweepOutcome result;
  result.rows.resize(configs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < configs.size();) {
      try {
        result.rows[i] = run_fixture(configs[i], configs[i].out);
      } catch (const std::exception& ex) {
        result.rows[i].exit_code = exit_validation;
        result.rows[i].message = configs[i].row + ": " + ex.what() + "\n";
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t j = 1; j < std::max<std::size_t>(1, std::min(jobs, configs.size())); ++j) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();

  std::vector<SummaryRow> all;
  for (const Outcome& o : result.rows) {
    result.exit_code = std::max(result.exit_code, o.exit_code);
    all.insert(all.end(), o.summary.begin(), o.summary.end());
  }
  detail::write_summary(root, all);
  return result;
}

// ---------------------------------------------------------------------------
// Self-test: the oracle suites at their acceptance tolerances.

struct CheckResult {
  std::string name;
  double worst = 0.0;
  double tolerance = 0.0;
  bool passed() const { return worst <= tolerance; }
};

inline std::vector<CheckResult> selftest(std::uint64_t seed,
                                         const oracles::SMatrixBuilder& builder = oracles::production_builder) {
  std::mt19937_64 rng(seed);
  std::vector<CheckResult> out;
  auto name = [](const char* what, std::size_t m, std::size_t j) {
    return std::string(what) + " m=" + std::to_string(m) + " J=" + std::to_string(j);
  };
  for (std::size_t m : {1, 2}) {
    for (std::size_t j = 0; j <= 4; ++j) {
      const auto order = OrderVector::make(Alphabet::with_drift(m), j);
      out.push_back({name("s_matrix inductive vs direct", m, j), oracles::s_matrix_discrepancy(order, 100, rng, builder),
                     1e-12});
      out.push_back({name("apply_s_matrix vs dense product", m, j), oracles::apply_discrepancy(order, 20, rng), 1e-12});
    }
  }
  {
    const auto order = OrderVector::make(Alphabet::with_drift(2), 3);
    std::uniform_int_distribution<std::size_t> len(1, 10);
    double worst = 0.0, worst_reg = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
      const auto u = oracles::random_sequence(2, len(rng), rng);
      const auto v = oracles::random_sequence(2, len(rng), rng);
      worst = std::max(worst, oracles::chen_identity_error(order, u, v, builder));
      worst_reg = std::max(worst_reg, oracles::regressor_error(order, u));
    }
    out.push_back({"Chen identity m=2 J=3 (50 pairs)", worst, 1e-10});
    out.push_back({"regressor vs iterated sums m=2 J=3", worst_reg, 1e-10});
    out.push_back({"predict_next vs stepped evaluate m=2 J=3", oracles::predict_next_error(order, 50, rng), 1e-12});
  }
  {
    const auto check = oracles::rls_batch_check(10, 200, rng);
    out.push_back({"RLS vs batch least squares (200 steps)", check.relative_error, 1e-8});
    out.push_back({"RLS covariance symmetry", check.max_asymmetry, 1e-10});
  }
  return out;
}

}  // namespace chenflow::experiment
