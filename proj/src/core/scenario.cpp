#include "pstab/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "pstab/svg.hpp"

namespace pstab {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------------------
// Names

const std::pair<Experiment, const char*> kExperimentNames[] = {
    {Experiment::PowerFlow, "powerflow"},
    {Experiment::Modes, "modes"},
    {Experiment::RootLocus, "root-locus"},
    {Experiment::TuneResidues, "tune-residues"},
    {Experiment::TunePVref, "tune-pvref"},
    {Experiment::RetuneSequential, "retune-sequential"},
    {Experiment::RetuneUncoordinated, "retune-uncoordinated"},
    {Experiment::Simulate, "simulate"},
    {Experiment::PVrefSweep, "pvref-sweep"},
};

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

// "A", "a", "set-A", "Set A", "set_a" -> "A"
std::string set_key(const std::string& name) {
  std::string s = lower(name);
  for (const char* pre : {"set-", "set_", "set "})
    if (s.rfind(pre, 0) == 0) s = s.substr(4);
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

const char* bus_type_name(BusType t) {
  switch (t) {
    case BusType::Slack: return "slack";
    case BusType::PV: return "PV";
    case BusType::PQ: return "PQ";
  }
  return "PQ";
}

// ---------------------------------------------------------------------------
// Schema-checked reading

class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  [[noreturn]] static void fail(const std::string& path, const std::string& msg) {
    throw Error(ErrorCode::Schema, path + ": " + msg);
  }

  std::string at(const std::string& key) const { return path_ + "." + key; }
  bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

  /// Optional key; null when absent or null.
  const json* opt(const std::string& key) {
    used_.insert(key);
    return has(key) ? &j_.at(key) : nullptr;
  }

  const json& raw(const std::string& key) {
    used_.insert(key);
    if (!j_.contains(key)) fail(at(key), "required key missing");
    return j_.at(key);
  }

  double num(const std::string& key, double def) {
    used_.insert(key);
    if (!has(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_number()) fail(at(key), "expected a number");
    return v.get<double>();
  }
  double num(const std::string& key) {
    raw(key);
    return num(key, 0.0);
  }
  int integer(const std::string& key, int def) {
    used_.insert(key);
    if (!has(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_number_integer()) fail(at(key), "expected an integer");
    return v.get<int>();
  }
  int integer(const std::string& key) {
    raw(key);
    return integer(key, 0);
  }
  std::string str(const std::string& key, const std::string& def) {
    used_.insert(key);
    if (!has(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_string()) fail(at(key), "expected a string");
    return v.get<std::string>();
  }
  std::string str(const std::string& key) {
    raw(key);
    return str(key, "");
  }
  bool boolean(const std::string& key, bool def) {
    used_.insert(key);
    if (!has(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_boolean()) fail(at(key), "expected true or false");
    return v.get<bool>();
  }

  /// Rejects keys nobody asked for (typos).
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) fail(at(it.key()), "unknown key");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

const json& array_at(Reader& r, const std::string& key) {
  const auto& v = r.raw(key);
  if (!v.is_array()) Reader::fail(r.at(key), "expected an array");
  return v;
}

const json& empty_array() {
  static const json e = json::array();
  return e;
}

/// Optional array key; empty when absent.
const json& array_opt(Reader& r, const std::string& key) {
  const auto* v = r.opt(key);
  if (!v) return empty_array();
  if (!v->is_array()) Reader::fail(r.at(key), "expected an array");
  return *v;
}

std::string item(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

// ---------------------------------------------------------------------------
// Device (de)serialization

json pss_to_json(const PssParams& p) {
  return {{"K", p.k}, {"T_W", p.tw}, {"T1", p.t1}, {"T2", p.t2},
          {"T3", p.t3}, {"T4", p.t4}, {"V_min", p.vmin}, {"V_max", p.vmax}};
}

PssParams pss_from_json(const json& j, const std::string& path, PssParams p = {}) {
  Reader r(j, path);
  p.k = r.num("K", p.k);
  p.tw = r.num("T_W", p.tw);
  p.t1 = r.num("T1", p.t1);
  p.t2 = r.num("T2", p.t2);
  p.t3 = r.num("T3", p.t3);
  p.t4 = r.num("T4", p.t4);
  p.vmin = r.num("V_min", p.vmin);
  p.vmax = r.num("V_max", p.vmax);
  r.finish();
  return p;
}

json avr_to_json(const ExciterAvr& a) {
  return {{"KA", a.ka}, {"TR", a.tr}, {"TA", a.ta}, {"Efd_min", a.efd_min}, {"Efd_max", a.efd_max}};
}

ExciterAvr avr_from_json(const json& j, const std::string& path) {
  Reader r(j, path);
  ExciterAvr a;
  a.ka = r.num("KA", a.ka);
  a.tr = r.num("TR", a.tr);
  a.ta = r.num("TA", a.ta);
  a.efd_min = r.num("Efd_min", a.efd_min);
  a.efd_max = r.num("Efd_max", a.efd_max);
  r.finish();
  return a;
}

json gov_to_json(const Governor& g) {
  return {{"droop", g.droop}, {"TS", g.ts}, {"TRH", g.trh}, {"FHP", g.fhp}, {"Pmin", g.pmin}, {"Pmax", g.pmax}};
}

Governor gov_from_json(const json& j, const std::string& path) {
  Reader r(j, path);
  Governor g;
  g.droop = r.num("droop", g.droop);
  g.ts = r.num("TS", g.ts);
  g.trh = r.num("TRH", g.trh);
  g.fhp = r.num("FHP", g.fhp);
  g.pmin = r.num("Pmin", g.pmin);
  g.pmax = r.num("Pmax", g.pmax);
  r.finish();
  return g;
}

json machine_to_json(const SyncMachine& m) {
  json j = {{"name", m.name}, {"bus", m.bus},   {"mva", m.mva},   {"H", m.h},       {"D", m.d},
            {"ra", m.ra},     {"xd", m.xd},     {"xq", m.xq},     {"xd1", m.xd1},   {"xq1", m.xq1},
            {"xd2", m.xd2},   {"xq2", m.xq2},   {"Td01", m.td01}, {"Tq01", m.tq01}, {"Td02", m.td02},
            {"Tq02", m.tq02}};
  j["avr"] = m.avr ? avr_to_json(*m.avr) : json(nullptr);
  j["governor"] = m.gov ? gov_to_json(*m.gov) : json(nullptr);
  j["pss"] = m.pss ? pss_to_json(*m.pss) : json(nullptr);
  return j;
}

SyncMachine machine_from_json(const json& j, const std::string& path) {
  Reader r(j, path);
  SyncMachine m;
  m.name = r.str("name");
  m.bus = r.integer("bus");
  m.mva = r.num("mva", m.mva);
  m.h = r.num("H", m.h);
  m.d = r.num("D", m.d);
  m.ra = r.num("ra", m.ra);
  m.xd = r.num("xd", m.xd);
  m.xq = r.num("xq", m.xq);
  m.xd1 = r.num("xd1", m.xd1);
  m.xq1 = r.num("xq1", m.xq1);
  m.xd2 = r.num("xd2", m.xd2);
  m.xq2 = r.num("xq2", m.xq2);
  m.td01 = r.num("Td01", m.td01);
  m.tq01 = r.num("Tq01", m.tq01);
  m.td02 = r.num("Td02", m.td02);
  m.tq02 = r.num("Tq02", m.tq02);
  if (const auto* a = r.opt("avr")) m.avr = avr_from_json(*a, r.at("avr"));
  if (const auto* g = r.opt("governor")) m.gov = gov_from_json(*g, r.at("governor"));
  if (const auto* p = r.opt("pss")) m.pss = pss_from_json(*p, r.at("pss"));
  r.finish();
  return m;
}

json converter_to_json(const GflConverter& c) {
  return {{"name", c.name},     {"bus", c.bus},       {"mva", c.mva},   {"pll_kp", c.pll_kp}, {"pll_ki", c.pll_ki},
          {"p_kp", c.p_kp},     {"p_ki", c.p_ki},     {"q_kp", c.q_kp}, {"q_ki", c.q_ki},     {"kv", c.kv},
          {"Tc", c.tc},         {"Tv", c.tv},         {"r", c.r},       {"x", c.x},           {"Imax", c.imax}};
}

GflConverter converter_from_json(const json& j, const std::string& path) {
  Reader r(j, path);
  GflConverter c;
  c.name = r.str("name");
  c.bus = r.integer("bus");
  c.mva = r.num("mva", c.mva);
  c.pll_kp = r.num("pll_kp", c.pll_kp);
  c.pll_ki = r.num("pll_ki", c.pll_ki);
  c.p_kp = r.num("p_kp", c.p_kp);
  c.p_ki = r.num("p_ki", c.p_ki);
  c.q_kp = r.num("q_kp", c.q_kp);
  c.q_ki = r.num("q_ki", c.q_ki);
  c.kv = r.num("kv", c.kv);
  c.tc = r.num("Tc", c.tc);
  c.tv = r.num("Tv", c.tv);
  c.r = r.num("r", c.r);
  c.x = r.num("x", c.x);
  c.imax = r.num("Imax", c.imax);
  r.finish();
  return c;
}

json model_to_json(const PowerSystemModel& m) {
  json j;
  j["name"] = m.name;
  j["base_mva"] = m.base_mva;
  j["f_nom"] = m.f_nom;
  j["buses"] = json::array();
  for (const auto& b : m.buses)
    j["buses"].push_back({{"id", b.id},
                          {"type", bus_type_name(b.type)},
                          {"v_set", b.v_set},
                          {"angle_set", b.angle_set},
                          {"p_gen", b.p_gen},
                          {"q_gen", b.q_gen},
                          {"shunt_b", b.shunt_b}});
  j["branches"] = json::array();
  for (const auto& br : m.branches)
    j["branches"].push_back({{"from", br.from}, {"to", br.to}, {"r", br.z.real()}, {"x", br.z.imag()}, {"b", br.b}});
  j["loads"] = json::array();
  for (const auto& l : m.loads)
    j["loads"].push_back({{"name", l.name}, {"bus", l.bus}, {"p", l.p}, {"q", l.q}, {"scale", l.scale}});
  j["machines"] = json::array();
  for (const auto& s : m.machines) j["machines"].push_back(machine_to_json(s));
  j["converters"] = json::array();
  for (const auto& c : m.converters) j["converters"].push_back(converter_to_json(c));
  return j;
}

PowerSystemModel model_from_json(const json& j, const std::string& path) {
  Reader r(j, path);
  PowerSystemModel m;
  m.name = r.str("name", "custom");
  m.base_mva = r.num("base_mva", m.base_mva);
  m.f_nom = r.num("f_nom", m.f_nom);
  const auto& buses = array_at(r, "buses");
  for (std::size_t i = 0; i < buses.size(); ++i) {
    const auto p = item(r.at("buses"), i);
    Reader b(buses[i], p);
    Bus bus;
    bus.id = b.integer("id");
    const auto t = b.str("type", "PQ");
    if (lower(t) == "slack")
      bus.type = BusType::Slack;
    else if (lower(t) == "pv")
      bus.type = BusType::PV;
    else if (lower(t) == "pq")
      bus.type = BusType::PQ;
    else
      Reader::fail(p + ".type", "expected slack, PV or PQ");
    bus.v_set = b.num("v_set", bus.v_set);
    bus.angle_set = b.num("angle_set", bus.angle_set);
    bus.p_gen = b.num("p_gen", bus.p_gen);
    bus.q_gen = b.num("q_gen", bus.q_gen);
    bus.shunt_b = b.num("shunt_b", bus.shunt_b);
    b.finish();
    m.buses.push_back(bus);
  }
  const auto& branches = array_at(r, "branches");
  for (std::size_t i = 0; i < branches.size(); ++i) {
    Reader b(branches[i], item(r.at("branches"), i));
    Branch br;
    br.from = b.integer("from");
    br.to = b.integer("to");
    br.z = Complex(b.num("r", 0.0), b.num("x"));
    br.b = b.num("b", 0.0);
    b.finish();
    m.branches.push_back(br);
  }
  {
    const auto& loads = array_opt(r, "loads");
    for (std::size_t i = 0; i < loads.size(); ++i) {
      Reader b(loads[i], item(r.at("loads"), i));
      Load l;
      l.name = b.str("name");
      l.bus = b.integer("bus");
      l.p = b.num("p", 0.0);
      l.q = b.num("q", 0.0);
      l.scale = b.num("scale", 1.0);
      b.finish();
      m.loads.push_back(l);
    }
  }
  const auto& ms = array_opt(r, "machines");
  for (std::size_t i = 0; i < ms.size(); ++i) m.machines.push_back(machine_from_json(ms[i], item(r.at("machines"), i)));
  const auto& cs = array_opt(r, "converters");
  for (std::size_t i = 0; i < cs.size(); ++i) m.converters.push_back(converter_from_json(cs[i], item(r.at("converters"), i)));
  r.finish();
  try {
    m.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::Schema, path + ": " + e.what());
  }
  return m;
}

json disturbance_to_json(const Disturbance& d) {
  if (d.kind == DisturbanceKind::LoadStep)
    return {{"type", "load-step"}, {"target", d.target}, {"magnitude", d.magnitude}, {"time", d.start_time}};
  return {{"type", "vref-sine"},
          {"target", d.target},
          {"magnitude", d.magnitude},
          {"time", d.start_time},
          {"frequency", d.frequency}};
}

Disturbance disturbance_from_json(const json& j, const std::string& path, const PowerSystemModel& model) {
  Reader r(j, path);
  const auto type = r.str("type");
  Disturbance d;
  if (type == "load-step") {
    const double t = r.num("time", 1.0);
    if (r.has("bus")) {
      const double frac = r.num("fraction", r.num("magnitude", 0.01));
      try {
        d = apply_load_step(model, r.integer("bus"), frac, t);
      } catch (const Error& e) {
        Reader::fail(r.at("bus"), e.what());
      }
    } else {
      r.integer("bus", 0);
      d.kind = DisturbanceKind::LoadStep;
      d.target = r.str("target");
      d.magnitude = r.num("magnitude", r.num("fraction", 0.01));
      d.start_time = t;
    }
  } else if (type == "vref-sine") {
    d.kind = DisturbanceKind::VrefSinusoid;
    d.target = r.str("target");
    d.magnitude = r.num("magnitude");
    d.frequency = r.num("frequency");
    d.start_time = r.num("time", 0.0);
  } else {
    Reader::fail(r.at("type"), "expected load-step or vref-sine");
  }
  r.finish();
  try {
    d.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::Schema, path + ": " + e.what());
  }
  return d;
}

json options_to_json(const ExperimentOptions& o) {
  return {{"t_end", o.t_end},
          {"dt", o.dt},
          {"channel", o.channel},
          {"fit_from", o.fit_from},
          {"slot", o.slot},
          {"order", o.order},
          {"method", to_string(o.method)},
          {"gain_min", o.gain_min},
          {"gain_max", o.gain_max},
          {"gain_points", o.gain_points},
          {"max_lead_ratio", o.max_lead_ratio},
          {"use_probe", o.use_probe},
          {"sweep_points", o.sweep_points}};
}

ExperimentOptions options_from_json(const json& j, const std::string& path) {
  Reader r(j, path);
  ExperimentOptions o;
  o.t_end = r.num("t_end", o.t_end);
  o.dt = r.num("dt", o.dt);
  o.channel = r.str("channel", o.channel);
  o.fit_from = r.num("fit_from", o.fit_from);
  o.slot = r.str("slot", o.slot);
  if (r.has("order")) {
    const auto& a = array_at(r, "order");
    o.order.clear();
    if (a.empty()) Reader::fail(r.at("order"), "needs at least one PSS slot");
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (!a[i].is_string()) Reader::fail(item(r.at("order"), i), "expected a PSS slot name");
      o.order.push_back(a[i].get<std::string>());
    }
  }
  if (r.has("method")) {
    try {
      o.method = parse_tuning_method(r.str("method"));
    } catch (const Error& e) {
      Reader::fail(r.at("method"), e.what());
    }
  }
  o.gain_min = r.num("gain_min", o.gain_min);
  o.gain_max = r.num("gain_max", o.gain_max);
  o.gain_points = r.integer("gain_points", o.gain_points);
  o.max_lead_ratio = r.num("max_lead_ratio", o.max_lead_ratio);
  o.use_probe = r.boolean("use_probe", o.use_probe);
  o.sweep_points = r.integer("sweep_points", o.sweep_points);
  r.finish();
  if (!(o.dt > 0) || !(o.t_end > o.dt)) Reader::fail(path + ".dt", "need 0 < dt < t_end");
  if (!(o.gain_min > 0) || !(o.gain_max > o.gain_min) || o.gain_points < 2)
    Reader::fail(path + ".gain_min", "need 0 < gain_min < gain_max and gain_points >= 2");
  if (o.sweep_points < 2) Reader::fail(path + ".sweep_points", "need at least 2 points");
  if (o.max_lead_ratio < 0) Reader::fail(path + ".max_lead_ratio", "must be >= 0");
  return o;
}

void check_slot(const Scenario& sc, const std::string& slot, const std::string& path) {
  if (sc.state_space) return;
  const auto slots = sc.model.pss_slots();
  if (std::find(slots.begin(), slots.end(), slot) == slots.end())
    Reader::fail(path, "PSS slot " + slot + " does not exist in this system");
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + p.string());
  out << text;
  if (!out) throw Error(ErrorCode::Io, "write failed: " + p.string());
}

}  // namespace

// ---------------------------------------------------------------------------
// Public names

const char* to_string(Experiment e) {
  for (const auto& [k, v] : kExperimentNames)
    if (k == e) return v;
  return "?";
}

Experiment parse_experiment(const std::string& s) {
  const auto l = lower(s);
  for (const auto& [k, v] : kExperimentNames)
    if (l == v) return k;
  if (l == "rootlocus") return Experiment::RootLocus;
  if (l == "sweep") return Experiment::PVrefSweep;
  throw Error(ErrorCode::InvalidArgument, "unknown experiment '" + s + "'");
}

bool is_legacy_set(const std::string& name) {
  const auto k = set_key(name);
  return k == "A" || k == "B";
}

PssParams legacy_set(const std::string& name) {
  PssParams p;
  const auto k = set_key(name);
  if (k == "A") {
    p.k = 20;
    p.tw = 10;
    p.t1 = p.t3 = 0.4863;
    p.t2 = p.t4 = 0.1415;
  } else if (k == "B") {
    p.k = 40;
    p.tw = 10;
    p.t1 = p.t3 = 0.2460;
    p.t2 = p.t4 = 0.0352;
  } else {
    throw Error(ErrorCode::InvalidArgument, "unknown PSS parameter set '" + name + "' (expected A or B)");
  }
  return p;
}

void assign_pss(Scenario& sc, const std::string& slot, const PssParams& p, const std::string& source) {
  p.validate(slot);
  auto& host = sc.model.pss_host(slot);
  auto q = p;
  if (host.pss) {
    // limits stay with the slot unless explicitly given
    if (source != "explicit") {
      q.vmin = host.pss->vmin;
      q.vmax = host.pss->vmax;
    }
  }
  host.pss = q;
  sc.pss_source[slot] = source;
}

void assign_pss(Scenario& sc, const std::string& set) {
  const auto l = lower(set);
  for (const auto& slot : sc.model.pss_slots()) {
    if (l == "off" || l == "none") {
      auto p = *sc.model.pss_host(slot).pss;
      p.k = 0.0;
      assign_pss(sc, slot, p, "off");
    } else {
      assign_pss(sc, slot, legacy_set(set), "set-" + set_key(set));
    }
  }
}

Scenario preset_scenario(const std::string& preset) {
  Scenario sc;
  const auto l = lower(preset);
  if (l == "two-area-0ibr")
    sc.model = build_two_area(IbrShare::Zero);
  else if (l == "two-area-50ibr")
    sc.model = build_two_area(IbrShare::Fifty);
  else
    throw Error(ErrorCode::InvalidArgument, "unknown preset '" + preset + "' (expected two-area-0ibr or two-area-50ibr)");
  sc.preset = l;
  sc.name = l;
  for (const auto& slot : sc.model.pss_slots()) sc.pss_source[slot] = "off";
  sc.disturbances.push_back(apply_load_step(sc.model, 9, 0.01, 1.0));
  return sc;
}

Scenario parse_scenario(const std::string& json_text, const std::string& origin) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::Parse, origin + ": " + e.what());
  }
  Reader r(j, "$");
  const auto schema = r.str("schema");
  if (schema != kScenarioSchema) Reader::fail("$.schema", "expected \"" + std::string(kScenarioSchema) + "\"");

  Scenario sc;
  const auto& sys = r.raw("system");
  if (sys.is_string()) {
    try {
      sc = preset_scenario(sys.get<std::string>());
    } catch (const Error& e) {
      Reader::fail("$.system", e.what());
    }
  } else if (sys.is_object() && sys.contains("state_space")) {
    Reader s(sys, "$.system");
    auto path = s.str("state_space");
    sc.state_space_host = s.str("host");
    s.finish();
    fs::path p(path);
    if (p.is_relative() && origin != "<string>") p = fs::path(origin).parent_path() / p;
    try {
      sc.state_space = load_state_space(p.string());
    } catch (const Error& e) {
      Reader::fail("$.system.state_space", e.what());
    }
    sc.preset = "state-space";
    sc.name = "state-space";
  } else if (sys.is_object()) {
    sc.model = model_from_json(sys, "$.system");
    sc.preset = "custom";
    sc.name = sc.model.name;
    for (const auto& slot : sc.model.pss_slots())
      sc.pss_source[slot] = sc.model.pss_host(slot).pss->k == 0.0 ? "off" : "explicit";
  } else {
    Reader::fail("$.system", "expected a preset name, a model object or a state_space reference");
  }
  sc.name = r.str("name", sc.name);

  if (const auto* pp = r.opt("pss")) {
    const auto& p = *pp;
    if (sc.state_space) Reader::fail("$.pss", "not applicable to a state-space system");
    if (p.is_string()) {
      try {
        assign_pss(sc, p.get<std::string>());
      } catch (const Error& e) {
        Reader::fail("$.pss", e.what());
      }
    } else if (p.is_object()) {
      for (auto it = p.begin(); it != p.end(); ++it) {
        const auto path = "$.pss." + it.key();
        check_slot(sc, it.key(), path);
        const auto& v = it.value();
        try {
          if (v.is_string()) {
            const auto l = lower(v.get<std::string>());
            if (l == "off" || l == "none") {
              auto q = *sc.model.pss_host(it.key()).pss;
              q.k = 0.0;
              assign_pss(sc, it.key(), q, "off");
            } else {
              assign_pss(sc, it.key(), legacy_set(v.get<std::string>()), "set-" + set_key(v.get<std::string>()));
            }
          } else if (v.is_object()) {
            assign_pss(sc, it.key(), pss_from_json(v, path, *sc.model.pss_host(it.key()).pss), "explicit");
          } else {
            Reader::fail(path, "expected a set name or a parameter object");
          }
        } catch (const Error& e) {
          if (e.code() == ErrorCode::Schema) throw;
          Reader::fail(path, e.what());
        }
      }
    } else {
      Reader::fail("$.pss", "expected a set name or an object keyed by PSS slot");
    }
  }

  if (r.has("disturbances")) {
    const auto& a = array_at(r, "disturbances");
    sc.disturbances.clear();
    for (std::size_t i = 0; i < a.size(); ++i)
      sc.disturbances.push_back(disturbance_from_json(a[i], item("$.disturbances", i), sc.model));
  } else {
    r.opt("disturbances");
  }

  const auto exp = r.str("experiment", "modes");
  try {
    sc.experiment = parse_experiment(exp);
  } catch (const Error& e) {
    Reader::fail("$.experiment", e.what());
  }
  if (const auto* o = r.opt("options")) sc.options = options_from_json(*o, "$.options");
  r.finish();

  check_slot(sc, sc.options.slot, "$.options.slot");
  for (std::size_t i = 0; i < sc.options.order.size(); ++i) check_slot(sc, sc.options.order[i], item("$.options.order", i));
  if (sc.state_space) {
    const bool tune_only = sc.experiment == Experiment::TuneResidues || sc.experiment == Experiment::TunePVref ||
                           sc.experiment == Experiment::RootLocus || sc.experiment == Experiment::Modes;
    if (!tune_only) Reader::fail("$.experiment", "a state-space system supports modes, root-locus and tune experiments");
  }
  return sc;
}

Scenario load_scenario(const std::string& path_or_preset) {
  const auto l = lower(path_or_preset);
  if (l == "two-area-0ibr" || l == "two-area-50ibr") return preset_scenario(l);
  if (!fs::exists(path_or_preset))
    throw Error(ErrorCode::Io, "no scenario file or preset named '" + path_or_preset + "'");
  auto sc = parse_scenario(read_file(path_or_preset), path_or_preset);
  sc.source_path = path_or_preset;
  return sc;
}

std::string export_scenario(const Scenario& sc) {
  json j;
  j["schema"] = kScenarioSchema;
  j["name"] = sc.name;
  if (sc.state_space) throw Error(ErrorCode::InvalidArgument, "state-space scenarios reference their model file; nothing to export");
  j["system"] = model_to_json(sc.model);
  json pss = json::object();
  for (const auto& slot : sc.model.pss_slots()) {
    const auto& p = *sc.model.pss_host(slot).pss;
    const auto it = sc.pss_source.find(slot);
    const std::string src = it == sc.pss_source.end() ? "explicit" : it->second;
    if (src != "explicit" && src != "off" && is_legacy_set(src)) {
      auto ref = legacy_set(src);
      ref.vmin = p.vmin;
      ref.vmax = p.vmax;
      if (ref == p) {
        pss[slot] = src;
        continue;
      }
    }
    pss[slot] = pss_to_json(p);
  }
  j["pss"] = pss;
  j["disturbances"] = json::array();
  for (const auto& d : sc.disturbances) j["disturbances"].push_back(disturbance_to_json(d));
  j["experiment"] = to_string(sc.experiment);
  j["options"] = options_to_json(sc.options);
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Experiments

int Report::exit_code() const {
  if (experiment != Experiment::Simulate || !verdict) return 0;
  return verdict->cls == StabilityClass::Decaying ? 0 : 2;
}

namespace {

std::vector<std::pair<std::string, PssParams>> pss_rows(const PowerSystemModel& m) {
  std::vector<std::pair<std::string, PssParams>> rows;
  for (const auto& slot : m.pss_slots()) rows.emplace_back(slot, *m.pss_host(slot).pss);
  return rows;
}

void fill_modes(Report& rep, const StateSpaceModel& ss) {
  auto ma = eigen_modes(ss);
  const auto pf = participation_factors(ma);
  classify_modes(ma, pf);
  rep.has_modes = true;
  rep.modal_stable = ma.stable;
  rep.max_sigma = -std::numeric_limits<double>::infinity();
  rep.min_rotor_damping = 1.0;
  for (const auto& m : ma.modes)
    if (!m.neutral) rep.max_sigma = std::max(rep.max_sigma, m.lambda.real());
  for (auto i : rotor_modes(ma, pf)) {
    const auto& m = ma.modes[i];
    if (m.lambda.imag() > 0.0) rep.min_rotor_damping = std::min(rep.min_rotor_damping, m.damping);
  }
  auto order = ma.upper_modes();
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return ma.modes[a].damping < ma.modes[b].damping; });
  for (auto i : order) {
    const auto& m = ma.modes[i];
    ModeRow row;
    row.lambda = m.lambda;
    row.freq_hz = m.freq_hz;
    row.damping = m.damping;
    row.cls = to_string(m.cls);
    row.rotor = rotor_participation(ma, pf, i);
    Eigen::Index best = 0;
    pf.col(static_cast<Eigen::Index>(i)).maxCoeff(&best);
    row.dominant = ma.state_labels[static_cast<std::size_t>(best)];
    rep.modes.push_back(row);
  }
  rep.participation = pf;
  rep.modal = std::move(ma);
}

void fill_model_modes(Report& rep, const PowerSystemModel& model) {
  const auto sys = solve_system(model);
  fill_modes(rep, linearize(*sys.dae, sys.op.point, {}, {}));
}

TuneOptions tune_options(const ExperimentOptions& o) {
  TuneOptions t;
  t.gains = gain_grid(o.gain_min, o.gain_max, o.gain_points);
  t.max_lead_ratio = o.max_lead_ratio;
  t.use_probe = o.use_probe;
  return t;
}

void collect(Report& rep, const TuningResult& r) {
  rep.warnings.insert(rep.warnings.end(), r.warnings.begin(), r.warnings.end());
  rep.tuning.push_back(r);
}

void run_tune(Report& rep, const Scenario& sc, TuningMethod method) {
  const auto opt = tune_options(sc.options);
  if (sc.state_space) {
    const auto plant = state_space_plant(*sc.state_space, sc.state_space_host, sc.options.slot);
    auto r = tune(plant, method, opt);
    fill_modes(rep, plant.closed_loop(r.params));
    collect(rep, r);
    return;
  }
  auto r = tune_slot(sc.model, sc.options.slot, method, opt);
  auto m = sc.model;
  auto& slot = *m.pss_host(r.slot).pss;
  const double vmin = slot.vmin, vmax = slot.vmax;
  slot = r.params;
  slot.vmin = vmin;
  slot.vmax = vmax;
  rep.pss_after = pss_rows(m);
  fill_model_modes(rep, m);
  collect(rep, r);
}

void run_root_locus(Report& rep, const Scenario& sc) {
  const auto plant = sc.state_space ? state_space_plant(*sc.state_space, sc.state_space_host, sc.options.slot)
                                    : model_plant(sc.model, sc.options.slot);
  PssParams cand = sc.state_space ? PssParams{} : *sc.model.pss_host(sc.options.slot).pss;
  auto closed = [&](double k) {
    auto p = cand;
    p.k = k;
    return plant.closed_loop(p);
  };
  TuningResult r;
  r.slot = sc.options.slot;
  r.params = cand;
  r.locus = root_locus(closed, gain_grid(sc.options.gain_min, sc.options.gain_max, sc.options.gain_points));
  const auto choice = select_gain(r.locus);
  r.params.k = choice.gain;
  r.min_damping = choice.min_damping;
  r.stabilizable = choice.stabilizable;
  if (!r.stabilizable) r.warnings.push_back(r.slot + ": not stabilizable by this PSS (best minimum damping ratio <= 0)");
  if (plant.zeros) r.locus.zeros = plant.zeros(r.params);
  fill_modes(rep, closed(0.0));
  collect(rep, r);
}

void run_retune(Report& rep, const Scenario& sc, bool sequential) {
  const auto opt = tune_options(sc.options);
  const auto out = sequential ? retune_sequential(sc.model, sc.options.order, sc.options.method, opt)
                              : retune_uncoordinated(sc.model, sc.options.order, sc.options.method, opt);
  for (const auto& r : out.steps) collect(rep, r);
  rep.errors = out.errors;
  rep.pss_after = pss_rows(out.model);
  fill_model_modes(rep, out.model);
}

void run_simulate(Report& rep, const Scenario& sc) {
  const auto sys = solve_system(sc.model);
  fill_modes(rep, linearize(*sys.dae, sys.op.point, {}, {}));
  SimOptions so;
  so.t_end = sc.options.t_end;
  so.dt = sc.options.dt;
  so.scenario = sc.name;
  for (const auto& m : sc.model.machines) so.channels.push_back(m.name + ".P");
  if (std::find(so.channels.begin(), so.channels.end(), sc.options.channel) == so.channels.end())
    so.channels.push_back(sc.options.channel);
  rep.trajectory = simulate(*sys.dae, sys.op.point, sc.disturbances, so);
  rep.verdict = classify_stability(*rep.trajectory, sc.options.channel, sc.options.fit_from);
  rep.sign_agreement = rep.modal_stable == (rep.verdict->cls == StabilityClass::Decaying);
}

void run_sweep(Report& rep, const Scenario& sc) {
  const auto& host = sc.model.pss_host(sc.options.slot);
  auto base = sc.model;
  base.pss_host(sc.options.slot).pss->k = 0.0;
  const auto f = pvref_grid(sc.options.sweep_points);
  const auto tf = frozen_shaft_phase(base, host.name, f);
  const auto probe = probe_pvref_phase(base, host.name, f);
  rep.sweep_fit = fit_leadlag_to_phase(tf, 2, 0.2, 2.0, sc.options.max_lead_ratio);
  PssParams p;
  p.k = 1.0;
  p.t1 = rep.sweep_fit.t1;
  p.t2 = rep.sweep_fit.t2;
  p.t3 = rep.sweep_fit.t3;
  p.t4 = rep.sweep_fit.t4;
  for (std::size_t i = 0; i < f.size(); ++i) {
    SweepRow row;
    row.freq_hz = f[i];
    row.tf_phase = tf.phase_deg[i];
    row.probe_phase = probe.phase_deg[i];
    row.compensated = tf.phase_deg[i] + deg(std::arg(pss_response(p, 2.0 * kPi * f[i], false)));
    rep.sweep.push_back(row);
  }
  if (rep.sweep_fit.warning) rep.warnings.push_back(sc.options.slot + ": lead-lag fit residual above 20 degrees RMS");
}

}  // namespace

Report run_experiment(const Scenario& sc) {
  Report rep;
  rep.scenario = sc.name;
  rep.experiment = sc.experiment;
  rep.pss_source = sc.pss_source;
  if (!sc.state_space) {
    sc.model.validate();
    rep.pss_before = pss_rows(sc.model);
    rep.pss_after = rep.pss_before;
  }
  switch (sc.experiment) {
    case Experiment::PowerFlow: {
      rep.powerflow = solve_power_flow(sc.model);
      for (const auto& b : sc.model.buses) rep.bus_ids.push_back(b.id);
      break;
    }
    case Experiment::Modes:
      if (sc.state_space)
        fill_modes(rep, *sc.state_space);
      else
        fill_model_modes(rep, sc.model);
      break;
    case Experiment::RootLocus: run_root_locus(rep, sc); break;
    case Experiment::TuneResidues: run_tune(rep, sc, TuningMethod::Residues); break;
    case Experiment::TunePVref: run_tune(rep, sc, TuningMethod::PVref); break;
    case Experiment::RetuneSequential: run_retune(rep, sc, true); break;
    case Experiment::RetuneUncoordinated: run_retune(rep, sc, false); break;
    case Experiment::Simulate: run_simulate(rep, sc); break;
    case Experiment::PVrefSweep: run_sweep(rep, sc); break;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Output

std::string format_pss_row(const PssParams& p) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%.6g,%g,%.4f,%.4f,%.4f,%.4f", p.k, p.tw, p.t1, p.t2, p.t3, p.t4);
  return buf;
}

void write_pss_table(std::ostream& os, const std::vector<std::pair<std::string, PssParams>>& rows) {
  os << "slot,K_PSS,T_W,T1,T2,T3,T4\n";
  for (const auto& [slot, p] : rows) os << slot << ',' << format_pss_row(p) << '\n';
}

namespace {

json complex_json(Complex z) { return json::array({z.real(), z.imag()}); }

json pss_rows_json(const std::vector<std::pair<std::string, PssParams>>& rows) {
  json j = json::object();
  for (const auto& [slot, p] : rows) j[slot] = pss_to_json(p);
  return j;
}

}  // namespace

std::string report_json(const Report& r) {
  json j;
  j["scenario"] = r.scenario;
  j["experiment"] = to_string(r.experiment);
  j["pss_source"] = r.pss_source;
  j["pss_before"] = pss_rows_json(r.pss_before);
  j["pss_after"] = pss_rows_json(r.pss_after);
  if (r.powerflow) {
    json buses = json::array();
    for (std::size_t i = 0; i < r.bus_ids.size(); ++i) {
      const auto v = r.powerflow->v(static_cast<Eigen::Index>(i));
      const auto s = r.powerflow->s_gen(static_cast<Eigen::Index>(i));
      buses.push_back({{"id", r.bus_ids[i]},
                       {"v", std::abs(v)},
                       {"angle_deg", deg(std::arg(v))},
                       {"p_gen", s.real()},
                       {"q_gen", s.imag()}});
    }
    j["powerflow"] = {{"iterations", r.powerflow->iterations}, {"mismatch", r.powerflow->mismatch}, {"buses", buses}};
  }
  if (r.has_modes) {
    json modes = json::array();
    for (const auto& m : r.modes)
      modes.push_back({{"lambda", complex_json(m.lambda)},
                       {"freq_hz", m.freq_hz},
                       {"damping", m.damping},
                       {"class", m.cls},
                       {"rotor_participation", m.rotor},
                       {"dominant_state", m.dominant}});
    j["modal"] = {{"stable", r.modal_stable},
                  {"min_rotor_damping", r.min_rotor_damping},
                  {"max_sigma", r.max_sigma},
                  {"modes", modes}};
  }
  if (!r.tuning.empty()) {
    json t = json::array();
    for (const auto& x : r.tuning) {
      json zeros = json::array();
      for (auto z : x.locus.zeros) zeros.push_back(complex_json(z));
      t.push_back({{"slot", x.slot},
                   {"method", to_string(x.method)},
                   {"params", pss_to_json(x.params)},
                   {"min_damping", x.min_damping},
                   {"stabilizable", x.stabilizable},
                   {"critical", complex_json(x.critical)},
                   {"residue", complex_json(x.residue)},
                   {"residue_angle_deg", x.residue_angle},
                   {"compensation_deg", x.compensation},
                   {"blocks", x.blocks},
                   {"capped", x.capped},
                   {"fit_rms_deg", x.fit_rms},
                   {"gains", x.locus.gains.size()},
                   {"zeros", zeros}});
    }
    j["tuning"] = t;
  }
  if (r.verdict) {
    j["verdict"] = {{"class", to_string(r.verdict->cls)},
                    {"sigma", r.verdict->sigma},
                    {"freq_hz", r.verdict->freq_hz},
                    {"channel", r.verdict->channel},
                    {"fallback", r.verdict->fallback}};
    j["sign_agreement"] = r.sign_agreement.value_or(false);
  }
  if (r.trajectory) {
    const auto& tr = *r.trajectory;
    json fin = json::object();
    for (std::size_t c = 0; c < tr.channels.size(); ++c) fin[tr.channels[c]] = tr.data[c].empty() ? 0.0 : tr.data[c].back();
    j["trajectory"] = {{"samples", tr.time.size()}, {"dt", tr.dt}, {"final", fin}};
  }
  if (!r.sweep.empty()) {
    json s = json::array();
    for (const auto& row : r.sweep)
      s.push_back({{"freq_hz", row.freq_hz},
                   {"tf_phase_deg", row.tf_phase},
                   {"probe_phase_deg", row.probe_phase},
                   {"compensated_deg", row.compensated}});
    j["sweep"] = {{"points", s},
                  {"fit", {{"T1", r.sweep_fit.t1}, {"T2", r.sweep_fit.t2}, {"T3", r.sweep_fit.t3}, {"T4", r.sweep_fit.t4},
                           {"rms_deg", r.sweep_fit.rms_deg}}}};
  }
  j["errors"] = r.errors;
  j["warnings"] = r.warnings;
  j["exit_code"] = r.exit_code();
  return j.dump(2) + "\n";
}

std::string report_summary(const Report& r) {
  std::ostringstream os;
  char buf[256];
  os << "scenario " << r.scenario << ", experiment " << to_string(r.experiment) << '\n';
  if (!r.pss_after.empty()) {
    const bool changed = r.pss_after != r.pss_before;
    os << (changed ? "PSS parameters after re-tuning" : "PSS parameters") << " (K_PSS, T_W, T1, T2, T3, T4):\n";
    for (const auto& [slot, p] : r.pss_after) {
      const auto it = r.pss_source.find(slot);
      std::string src = it == r.pss_source.end() ? "" : it->second;
      for (const auto& t : r.tuning)
        if (t.slot == slot) src = std::string("re-tuned, ") + to_string(t.method);
      os << "  " << slot << "  " << format_pss_row(p) << "  (" << src << ")\n";
    }
  }
  if (r.powerflow) {
    std::snprintf(buf, sizeof buf, "power flow: %d iterations, mismatch %.2e\n", r.powerflow->iterations,
                  r.powerflow->mismatch);
    os << buf << "  bus      V(pu)   angle(deg)    Pg(pu)    Qg(pu)\n";
    for (std::size_t i = 0; i < r.bus_ids.size(); ++i) {
      const auto v = r.powerflow->v(static_cast<Eigen::Index>(i));
      const auto sg = r.powerflow->s_gen(static_cast<Eigen::Index>(i));
      std::snprintf(buf, sizeof buf, "  %3d  %9.5f  %11.4f  %8.4f  %8.4f\n", r.bus_ids[i], std::abs(v),
                    deg(std::arg(v)), sg.real(), sg.imag());
      os << buf;
    }
  }
  if (r.has_modes) {
    std::snprintf(buf, sizeof buf, "modal: %s, minimum rotor-mode damping %.4f, largest real part %.4f\n",
                  r.modal_stable ? "stable" : "UNSTABLE", r.min_rotor_damping, r.max_sigma);
    os << buf << "  least damped modes:\n";
    std::size_t shown = 0;
    for (const auto& m : r.modes) {
      if (shown++ == 10) break;
      std::snprintf(buf, sizeof buf, "  %10.4f %+10.4fj  f=%7.4f Hz  xi=%8.4f  %-10s rotor=%.2f  %s\n",
                    m.lambda.real(), m.lambda.imag(), m.freq_hz, m.damping, m.cls.c_str(), m.rotor,
                    m.dominant.c_str());
      os << buf;
    }
  }
  for (const auto& t : r.tuning) {
    std::snprintf(buf, sizeof buf,
                  "tuning %s (%s): K=%.6g T_W=%g T1=%.4f T2=%.4f T3=%.4f T4=%.4f, min xi %.4f, %s\n", t.slot.c_str(),
                  to_string(t.method), t.params.k, t.params.tw, t.params.t1, t.params.t2, t.params.t3, t.params.t4,
                  t.min_damping, t.stabilizable ? "stabilizable" : "NOT stabilizable");
    os << buf;
    if (t.method == TuningMethod::Residues && t.blocks > 0) {
      std::snprintf(buf, sizeof buf, "  critical mode %.4f%+.4fj, residue angle %.1f deg, compensation %.1f deg in %d block(s)\n",
                    t.critical.real(), t.critical.imag(), t.residue_angle, t.compensation, t.blocks);
      os << buf;
    } else if (t.method == TuningMethod::PVref) {
      std::snprintf(buf, sizeof buf, "  phase fit residual %.2f deg RMS\n", t.fit_rms);
      os << buf;
    }
  }
  if (r.verdict) {
    std::snprintf(buf, sizeof buf, "simulation: %s on %s (sigma %.4f 1/s, f %.4f Hz); modal %s, agreement %s\n",
                  to_string(r.verdict->cls), r.verdict->channel.c_str(), r.verdict->sigma, r.verdict->freq_hz,
                  r.modal_stable ? "stable" : "unstable", r.sign_agreement.value_or(false) ? "yes" : "NO");
    os << buf;
  }
  if (!r.sweep.empty()) {
    os << "P-Vref phase (deg):\n   f(Hz)   frozen-shaft      probe  compensated\n";
    for (const auto& row : r.sweep) {
      std::snprintf(buf, sizeof buf, "  %6.3f  %12.3f  %9.3f  %11.3f\n", row.freq_hz, row.tf_phase, row.probe_phase,
                    row.compensated);
      os << buf;
    }
    std::snprintf(buf, sizeof buf, "  fit T1=T3=%.4f T2=T4=%.4f, residual %.2f deg RMS\n", r.sweep_fit.t1,
                  r.sweep_fit.t2, r.sweep_fit.rms_deg);
    os << buf;
  }
  for (const auto& e : r.errors) os << "error: " << e << '\n';
  for (const auto& w : r.warnings) os << "warning: " << w << '\n';
  for (const auto& a : r.artifacts) os << "wrote " << a << '\n';
  return os.str();
}

Report write_artifacts(Report r, const Scenario& sc, const std::string& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create " + out_dir + ": " + ec.message());
  const fs::path dir(out_dir);
  r.artifacts.clear();
  auto emit = [&](const std::string& name, const std::string& text) {
    write_file(dir / name, text);
    r.artifacts.push_back(name);
  };
  auto csv = [&](const std::string& name, auto&& fn) {
    std::ostringstream os;
    fn(os);
    emit(name, os.str());
  };

  if (!sc.state_space) emit("scenario.json", export_scenario(sc));
  if (!r.pss_before.empty()) {
    csv("pss_before.csv", [&](std::ostream& os) { write_pss_table(os, r.pss_before); });
    csv("pss_after.csv", [&](std::ostream& os) { write_pss_table(os, r.pss_after); });
  }
  if (r.powerflow) {
    csv("powerflow.csv", [&](std::ostream& os) {
      os << "bus,v_pu,angle_deg,p_gen_pu,q_gen_pu\n";
      char buf[160];
      for (std::size_t i = 0; i < r.bus_ids.size(); ++i) {
        const auto v = r.powerflow->v(static_cast<Eigen::Index>(i));
        const auto s = r.powerflow->s_gen(static_cast<Eigen::Index>(i));
        std::snprintf(buf, sizeof buf, "%d,%.8f,%.6f,%.8f,%.8f\n", r.bus_ids[i], std::abs(v), deg(std::arg(v)), s.real(),
                      s.imag());
        os << buf;
      }
    });
  }
  if (r.has_modes) {
    csv("modes.csv", [&](std::ostream& os) { write_mode_table(os, r.modal, r.participation); });
    PoleMap pm;
    pm.title = sc.name + ": eigenvalues";
    for (const auto& m : r.modal.modes)
      if (!m.neutral) pm.poles.push_back(m.lambda);
    csv("modes.svg", [&](std::ostream& os) { write_pole_map_svg(os, pm); });
  }
  if (!r.tuning.empty()) {
    csv("tuning.csv", [&](std::ostream& os) { write_tuning_csv(os, r.tuning); });
    for (std::size_t k = 0; k < r.tuning.size(); ++k) {
      const auto& t = r.tuning[k];
      const auto& rl = t.locus;
      if (rl.gains.empty()) continue;
      const auto stem = "rootlocus_" + std::to_string(k + 1) + "_" + t.slot;
      csv(stem + ".csv", [&](std::ostream& os) {
        os << "gain,branch,real,imag,rotor_participation\n";
        char buf[160];
        for (std::size_t g = 0; g < rl.gains.size(); ++g)
          for (std::size_t b = 0; b < rl.poles[g].size(); ++b) {
            std::snprintf(buf, sizeof buf, "%.8g,%zu,%.10g,%.10g,%.4f\n", rl.gains[g], b, rl.poles[g][b].real(),
                          rl.poles[g][b].imag(), rl.rotor[g][b]);
            os << buf;
          }
      });
      PoleMap pm;
      pm.title = sc.name + ": " + t.slot + " root locus (" + to_string(t.method) + ")";
      const auto nb = rl.poles.front().size();
      pm.branches.assign(nb, {});
      std::size_t sel = 0;
      for (std::size_t g = 0; g < rl.gains.size(); ++g) {
        if (rl.gains[g] == t.params.k) sel = g;
        for (std::size_t b = 0; b < nb; ++b) pm.branches[b].push_back(rl.poles[g][b]);
      }
      pm.open_loop = rl.poles.front();
      pm.selected = rl.poles[sel];
      pm.zeros = rl.zeros;
      csv(stem + ".svg", [&](std::ostream& os) { write_pole_map_svg(os, pm); });
    }
  }
  if (r.trajectory) {
    csv("trajectory.csv", [&](std::ostream& os) { write_trajectory_csv(os, *r.trajectory); });
    std::vector<PlotSeries> series;
    const auto& tr = *r.trajectory;
    for (std::size_t c = 0; c < tr.channels.size(); ++c) {
      if (tr.channels[c] != sc.options.channel) continue;
      series.push_back({tr.channels[c], tr.time, tr.data[c], false, false});
    }
    PlotLabels lab{sc.name + ": " + sc.options.channel, "time (s)", sc.options.channel + " (pu)", false};
    csv("trajectory.svg", [&](std::ostream& os) { write_line_plot_svg(os, series, lab); });
  }
  if (!r.sweep.empty()) {
    csv("sweep.csv", [&](std::ostream& os) {
      os << "freq_hz,tf_phase_deg,probe_phase_deg,compensated_deg\n";
      char buf[160];
      for (const auto& row : r.sweep) {
        std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%.6f\n", row.freq_hz, row.tf_phase, row.probe_phase,
                      row.compensated);
        os << buf;
      }
    });
    PlotSeries a{"frozen-shaft model", {}, {}, false, true}, b{"simulation probe", {}, {}, true, false},
        c{"compensated", {}, {}, false, false};
    for (const auto& row : r.sweep) {
      a.x.push_back(row.freq_hz);
      a.y.push_back(row.tf_phase);
      b.x.push_back(row.freq_hz);
      b.y.push_back(row.probe_phase);
      c.x.push_back(row.freq_hz);
      c.y.push_back(row.compensated);
    }
    PlotLabels lab{sc.name + ": P-Vref phase", "frequency (Hz)", "phase (deg)", true};
    csv("sweep.svg", [&](std::ostream& os) { write_line_plot_svg(os, {a, b, c}, lab); });
  }
  emit("report.json", report_json(r));

  json man;
  man["tool"] = "pstab";
  man["version"] = kVersion;
  man["scenario_schema"] = kScenarioSchema;
  man["scenario"] = sc.name;
  man["scenario_source"] = sc.source_path.empty() ? (sc.preset.empty() ? "<memory>" : sc.preset) : sc.source_path;
  man["experiment"] = to_string(sc.experiment);
  man["inputs"] = sc.state_space ? json::array({sc.source_path}) : json::array({"scenario.json"});
  man["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                 std::to_string(EIGEN_MINOR_VERSION);
  man["json"] = std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." + std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                std::to_string(NLOHMANN_JSON_VERSION_PATCH);
#if defined(__VERSION__)
  man["compiler"] = __VERSION__;
#endif
  man["artifacts"] = r.artifacts;
  man["exit_code"] = r.exit_code();
  r.artifacts.push_back("manifest.json");
  write_file(dir / "manifest.json", man.dump(2) + "\n");
  for (auto& a : r.artifacts) a = (dir / a).string();
  return r;
}

}  // namespace pstab
