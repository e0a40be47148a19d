#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "qstopwatch/cli_io.hpp"

namespace qstopwatch {

namespace {

using nlohmann::json;

// A JSON object being consumed key by key. finish() rejects whatever keys
// were never asked for.
class Reader {
public:
  Reader(const json &node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object())
      throw ConfigError(path_, "expected an object");
  }

  std::string child(const std::string &key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  bool has(const std::string &key) const { return node_.contains(key); }

  const json &at(const std::string &key) {
    seen_.insert(key);
    if (!node_.contains(key))
      throw ConfigError(child(key), "missing required field");
    return node_.at(key);
  }

  const json *find(const std::string &key) {
    seen_.insert(key);
    auto it = node_.find(key);
    return it == node_.end() ? nullptr : &*it;
  }

  double number(const std::string &key) { return as_number(at(key), child(key)); }

  double number(const std::string &key, double fallback) {
    const json *v = find(key);
    return v ? as_number(*v, child(key)) : fallback;
  }

  std::optional<double> optional_number(const std::string &key) {
    const json *v = find(key);
    if (!v)
      return std::nullopt;
    return as_number(*v, child(key));
  }

  std::size_t count(const std::string &key) { return as_count(at(key), child(key)); }

  std::size_t count(const std::string &key, std::size_t fallback) {
    const json *v = find(key);
    return v ? as_count(*v, child(key)) : fallback;
  }

  std::string string(const std::string &key) { return as_string(at(key), child(key)); }

  std::string string(const std::string &key, const std::string &fallback) {
    const json *v = find(key);
    return v ? as_string(*v, child(key)) : fallback;
  }

  Reader object(const std::string &key) { return Reader(at(key), child(key)); }

  void finish() const {
    for (auto it = node_.begin(); it != node_.end(); ++it)
      if (!seen_.count(it.key()))
        throw ConfigError(child(it.key()), "unknown key");
  }

  static double as_number(const json &v, const std::string &path) {
    if (!v.is_number())
      throw ConfigError(path, "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x))
      throw ConfigError(path, "must be finite");
    return x;
  }

  static std::size_t as_count(const json &v, const std::string &path) {
    if (!v.is_number_integer() || v.get<long long>() < 0)
      throw ConfigError(path, "expected a non-negative integer");
    return v.get<std::size_t>();
  }

  static std::string as_string(const json &v, const std::string &path) {
    if (!v.is_string())
      throw ConfigError(path, "expected a string");
    return v.get<std::string>();
  }

private:
  const json &node_;
  std::string path_;
  std::set<std::string> seen_;
};

void positive(double v, const std::string &path) {
  if (!(v > 0.0))
    throw ConfigError(path, "must be > 0");
}

GaussianPacket read_packet(Reader r) {
  GaussianPacket p;
  p.x0 = r.number("x0");
  p.sigma = r.number("sigma");
  positive(p.sigma, r.child("sigma"));
  p.k0 = r.number("k0", 0.0);
  r.finish();
  return p;
}

Interval read_interval(Reader r) {
  Interval i{r.number("z_min"), r.number("z_max")};
  if (i.z_max < i.z_min)
    throw ConfigError(r.child("z_max"), "must not be below z_min");
  r.finish();
  return i;
}

Lattice read_lattice(Reader &r, std::size_t sites) {
  Lattice l;
  l.sites = sites;
  l.spacing = r.number("a", 1.0);
  positive(l.spacing, r.child("a"));
  l.mass = r.number("m", 1.0);
  positive(l.mass, r.child("m"));
  return l;
}

Complex read_complex(const json &v, const std::string &path) {
  if (v.is_number())
    return {Reader::as_number(v, path), 0.0};
  if (v.is_array() && v.size() == 2)
    return {Reader::as_number(v[0], path + "[0]"), Reader::as_number(v[1], path + "[1]")};
  throw ConfigError(path, "expected a number or a [re, im] pair");
}

CustomParams read_custom(Reader &r) {
  CustomParams c;
  const json &h = r.at("hamiltonian");
  const std::string hp = r.child("hamiltonian");
  if (!h.is_array() || h.empty())
    throw ConfigError(hp, "expected a non-empty array of rows");
  const auto n = static_cast<Index>(h.size());
  c.hamiltonian.resize(n, n);
  for (Index i = 0; i < n; ++i) {
    const json &row = h[static_cast<std::size_t>(i)];
    const std::string rp = hp + "[" + std::to_string(i) + "]";
    if (!row.is_array() || static_cast<Index>(row.size()) != n)
      throw ConfigError(rp, "expected a row of length " + std::to_string(n));
    for (Index j = 0; j < n; ++j)
      c.hamiltonian(i, j) =
          read_complex(row[static_cast<std::size_t>(j)], rp + "[" + std::to_string(j) + "]");
  }
  const json &sites = r.at("detector_sites");
  if (!sites.is_array())
    throw ConfigError(r.child("detector_sites"), "expected an array of site indices");
  for (std::size_t i = 0; i < sites.size(); ++i) {
    const std::string sp = r.child("detector_sites") + "[" + std::to_string(i) + "]";
    const auto s = static_cast<Index>(Reader::as_count(sites[i], sp));
    if (s >= n)
      throw ConfigError(sp, "site index outside the basis");
    c.detector_sites.push_back(s);
  }
  const json &psi = r.at("initial");
  if (!psi.is_array() || static_cast<Index>(psi.size()) != n)
    throw ConfigError(r.child("initial"), "expected " + std::to_string(n) + " amplitudes");
  c.initial.resize(n);
  for (Index i = 0; i < n; ++i)
    c.initial[i] = read_complex(psi[static_cast<std::size_t>(i)],
                                r.child("initial") + "[" + std::to_string(i) + "]");
  return c;
}

ScenarioKind parse_kind(const std::string &name, const std::string &path) {
  for (auto k : {ScenarioKind::two_level_decay, ScenarioKind::ww_decay, ScenarioKind::arrival_1d,
                 ScenarioKind::dwell_1d, ScenarioKind::tunneling_1d, ScenarioKind::custom})
    if (name == to_string(k))
      return k;
  throw ConfigError(path, "unknown scenario kind '" + name + "'");
}

std::size_t lattice_sites(const std::optional<std::size_t> &n, const std::string &path) {
  if (!n)
    throw ConfigError(path, "missing required field (lattice size)");
  return *n;
}

ScenarioSpec read_scenario(Reader s) {
  ScenarioSpec spec;
  spec.kind = parse_kind(s.string("kind"), s.child("kind"));
  std::optional<std::size_t> n;
  if (s.has("N"))
    n = s.count("N");
  spec.dt = s.number("dt");
  positive(spec.dt, s.child("dt"));
  spec.t_max = s.number("T_max");
  if (spec.t_max < spec.dt)
    throw ConfigError(s.child("T_max"), "must be >= dt");
  spec.t_max_stage2 = s.optional_number("T_max_stage2");
  if (spec.t_max_stage2 && spec.kind != ScenarioKind::tunneling_1d)
    throw ConfigError(s.child("T_max_stage2"), "only valid for tunneling_1d");
  if (spec.t_max_stage2 && *spec.t_max_stage2 < spec.dt)
    throw ConfigError(s.child("T_max_stage2"), "must be >= dt");

  const json empty = json::object();
  const json *pj = s.find("parameters");
  Reader p(pj ? *pj : empty, s.child("parameters"));
  const std::string np = s.child("N");

  switch (spec.kind) {
  case ScenarioKind::two_level_decay: {
    TwoLevelParams t;
    t.omega = p.number("omega");
    if (t.omega < 0.0)
      throw ConfigError(p.child("omega"), "must be >= 0");
    spec.parameters = t;
    break;
  }
  case ScenarioKind::ww_decay: {
    WwParams w;
    w.modes = p.count("M", w.modes);
    w.coupling = p.number("g", w.coupling);
    w.band = p.number("band", w.band);
    if (w.modes < 32)
      throw ConfigError(p.child("M"), "must be >= 32");
    if (w.coupling < 0.0)
      throw ConfigError(p.child("g"), "must be >= 0");
    positive(w.band, p.child("band"));
    spec.parameters = w;
    break;
  }
  case ScenarioKind::arrival_1d: {
    ArrivalParams a;
    a.lattice = read_lattice(p, lattice_sites(n, np));
    a.packet = read_packet(p.object("packet"));
    a.detector = read_interval(p.object("detector"));
    spec.parameters = a;
    break;
  }
  case ScenarioKind::dwell_1d: {
    DwellParams d;
    d.lattice = read_lattice(p, lattice_sites(n, np));
    d.region = read_interval(p.object("region"));
    d.leak = p.optional_number("leak");
    if (d.leak && *d.leak < 0.0)
      throw ConfigError(p.child("leak"), "must be >= 0");
    const std::string exit = p.string("exit", "both");
    if (exit == "both")
      d.exit = DwellExit::both;
    else if (exit == "left")
      d.exit = DwellExit::left;
    else if (exit == "right")
      d.exit = DwellExit::right;
    else
      throw ConfigError(p.child("exit"), "expected both, left or right");
    if (const json *ij = p.find("initial")) {
      Reader ir(*ij, p.child("initial"));
      const std::string recipe = ir.string("recipe");
      if (recipe == "box_ground") {
        d.initial.recipe = DwellInitial::Recipe::box_ground;
      } else if (recipe == "box_mode") {
        d.initial.recipe = DwellInitial::Recipe::box_mode;
        d.initial.mode = static_cast<int>(ir.count("mode"));
      } else if (recipe == "gaussian") {
        d.initial.recipe = DwellInitial::Recipe::gaussian;
        d.initial.packet = read_packet(ir.object("packet"));
      } else {
        throw ConfigError(ir.child("recipe"), "expected box_ground, box_mode or gaussian");
      }
      ir.finish();
    }
    spec.parameters = d;
    break;
  }
  case ScenarioKind::tunneling_1d: {
    TunnelingParams t;
    t.lattice = read_lattice(p, lattice_sites(n, np));
    {
      Reader b = p.object("barrier");
      t.barrier = {b.number("left"), b.number("right"), b.number("height")};
      if (t.barrier.right < t.barrier.left)
        throw ConfigError(b.child("right"), "must not be below left");
      b.finish();
    }
    t.packet = read_packet(p.object("packet"));
    const std::string init = p.string("stage2_init", "median");
    if (init == "median") {
      t.stage2_init = Stage2Init::median;
    } else if (init == "mean") {
      t.stage2_init = Stage2Init::mean;
    } else if (init == "custom_time") {
      t.stage2_init = Stage2Init::custom_time;
      t.stage2_time = p.number("stage2_time");
      positive(t.stage2_time, p.child("stage2_time"));
    } else {
      throw ConfigError(p.child("stage2_init"), "expected median, mean or custom_time");
    }
    spec.parameters = t;
    break;
  }
  case ScenarioKind::custom:
    spec.parameters = read_custom(p);
    break;
  }
  p.finish();
  s.finish();

  spec.dimension = implied_dimension(spec.parameters);
  if (n && *n != spec.dimension)
    throw ConfigError(np, "does not match the dimension implied by the parameters (" +
                              std::to_string(spec.dimension) + ")");
  if (spec.dimension < 2 || spec.dimension > 2048)
    throw ConfigError(np, "must lie in [2, 2048]");
  return spec;
}

// Builds the scenario once so that builder preconditions fail at parse time.
void dry_build(const ScenarioSpec &spec) {
  try {
    validate(spec);
    if (spec.kind == ScenarioKind::tunneling_1d)
      (void)build_tunneling_1d(std::get<TunnelingParams>(spec.parameters), spec.dt);
    else
      (void)build_scenario(spec);
  } catch (const ConfigError &) {
    throw;
  } catch (const Error &e) {
    throw ConfigError("scenario.parameters", e.what());
  }
}

} // namespace

const char *to_string(CheckKind kind) {
  switch (kind) {
  case CheckKind::zeno:
    return "zeno";
  case CheckKind::povm:
    return "povm";
  case CheckKind::residual:
    return "residual";
  case CheckKind::cross_engine:
    return "cross_engine";
  }
  return "unknown";
}

CheckKind parse_check(std::string_view name) {
  for (auto k : {CheckKind::zeno, CheckKind::povm, CheckKind::residual, CheckKind::cross_engine})
    if (name == to_string(k))
      return k;
  throw ConfigError("checks", "unknown check '" + std::string(name) + "'");
}

RunConfig parse_config(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error &e) {
    throw ConfigError("", std::string("malformed config: ") + e.what());
  }
  Reader root(doc, "");
  RunConfig cfg;
  cfg.scenario = read_scenario(root.object("scenario"));

  const json &engines = root.at("engines");
  if (!engines.is_array() || engines.empty())
    throw ConfigError("engines", "expected a non-empty array");
  cfg.approx = cfg.exact = false;
  for (std::size_t i = 0; i < engines.size(); ++i) {
    const std::string e = Reader::as_string(engines[i], "engines[" + std::to_string(i) + "]");
    if (e == "approx" || e == "both")
      cfg.approx = true;
    if (e == "exact" || e == "both")
      cfg.exact = true;
    if (e != "approx" && e != "exact" && e != "both")
      throw ConfigError("engines[" + std::to_string(i) + "]",
                        "unknown engine '" + e + "' (expected approx, exact or both)");
  }

  if (const json *o = root.find("outputs")) {
    Reader out(*o, "outputs");
    if (const json *c = out.find("csv_path"))
      cfg.outputs.csv_path = Reader::as_string(*c, "outputs.csv_path");
    if (const json *j = out.find("json_path"))
      cfg.outputs.json_path = Reader::as_string(*j, "outputs.json_path");
    out.finish();
  }

  if (const json *c = root.find("checks")) {
    if (!c->is_array())
      throw ConfigError("checks", "expected an array");
    for (std::size_t i = 0; i < c->size(); ++i) {
      const std::string name = Reader::as_string((*c)[i], "checks[" + std::to_string(i) + "]");
      const CheckKind k = parse_check(name);
      if (std::find(cfg.checks.begin(), cfg.checks.end(), k) == cfg.checks.end())
        cfg.checks.push_back(k);
    }
  }

  cfg.validity_warn_threshold = root.number("validity_warn_threshold", cfg.validity_warn_threshold);
  positive(cfg.validity_warn_threshold, "validity_warn_threshold");

  if (const json *z = root.find("zeno_dt")) {
    if (!z->is_array() || z->size() < 3)
      throw ConfigError("zeno_dt", "expected at least three dt values");
    cfg.zeno_dts.clear();
    for (std::size_t i = 0; i < z->size(); ++i) {
      const std::string zp = "zeno_dt[" + std::to_string(i) + "]";
      const double v = Reader::as_number((*z)[i], zp);
      positive(v, zp);
      if (i > 0 && !(v < cfg.zeno_dts.back()))
        throw ConfigError(zp, "values must be strictly decreasing");
      cfg.zeno_dts.push_back(v);
    }
  }
  root.finish();

  dry_build(cfg.scenario);
  return cfg;
}

RunConfig load_config(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IoError("cannot open config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad())
    throw IoError("failed reading config " + path.string());
  return parse_config(buf.str());
}

} // namespace qstopwatch
