#include "pstab/grid_model.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace pstab {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw Error(ErrorCode::InvalidArgument, msg);
}

double clamp(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

// Non-windup integrator: derivative is zeroed when the state sits on a bound
// and would leave the admissible range.
double nonwindup(double dx, double x, double lo, double hi) {
  if (x >= hi && dx > 0.0) return 0.0;
  if (x <= lo && dx < 0.0) return 0.0;
  return dx;
}

// Park rotation of a phasor onto the machine dq frame.
std::pair<double, double> to_dq(Complex z, double delta) {
  const double s = std::sin(delta), c = std::cos(delta);
  return {z.real() * s - z.imag() * c, z.real() * c + z.imag() * s};
}

}  // namespace

void PssParams::validate(const std::string& who) const {
  require(tw > 0 && t1 > 0 && t2 > 0 && t3 > 0 && t4 > 0, who + ": PSS time constants must be > 0");
  require(tw >= 1.0 && tw <= 20.0, who + ": washout T_W must lie in [1, 20] s");
  require(vmin < 0.0 && vmax > 0.0, who + ": PSS limits must satisfy V_min < 0 < V_max");
  require(k >= 0.0, who + ": PSS gain must be >= 0");
}

void SyncMachine::validate() const {
  require(h > 0, name + ": inertia H must be > 0");
  require(xd >= xd1 && xd1 >= xd2 && xd2 > 0, name + ": d-axis reactances must satisfy X_d >= X_d' >= X_d'' > 0");
  require(xq >= xq1 && xq1 >= xq2 && xq2 > 0, name + ": q-axis reactances must satisfy X_q >= X_q' >= X_q'' > 0");
  require(td01 > 0 && tq01 > 0 && td02 > 0 && tq02 > 0, name + ": machine time constants must be > 0");
  require(mva > 0 && ra >= 0, name + ": rating must be > 0 and R_a >= 0");
  if (avr) {
    require(avr->efd_min < avr->efd_max, name + ": AVR limits must satisfy E_FD_min < E_FD_max");
    require(avr->tr > 0 && avr->ta >= 0 && avr->ka > 0, name + ": AVR gain and time constants must be positive");
  }
  if (gov) {
    require(gov->droop > 0, name + ": governor droop must be > 0");
    require(gov->pmin < gov->pmax, name + ": governor limits must be ordered");
    require(gov->ts > 0 && gov->trh > 0 && gov->fhp >= 0 && gov->fhp <= 1, name + ": governor time constants invalid");
  }
  if (pss) pss->validate(name + " PSS");
}

void GflConverter::validate() const {
  require(pll_kp > 0 && pll_ki > 0, name + ": PLL gains must be > 0");
  require(imax > 0, name + ": current limit must be > 0");
  require(p_ki > 0 && q_ki > 0 && tc > 0 && tv > 0 && mva > 0, name + ": control constants must be > 0");
}

void PowerSystemModel::validate() const {
  require(base_mva > 0 && f_nom > 0, "system base and frequency must be > 0");
  require(!buses.empty(), "model has no buses");
  std::set<int> ids;
  int slack = 0;
  for (const auto& b : buses) {
    require(ids.insert(b.id).second, "duplicate bus id " + std::to_string(b.id));
    require(b.v_set > 0, "bus " + std::to_string(b.id) + ": voltage magnitude must be > 0");
    if (b.type == BusType::Slack) ++slack;
  }
  require(slack == 1, "model must have exactly one slack bus (found " + std::to_string(slack) + ")");
  for (const auto& br : branches) {
    require(ids.count(br.from) && ids.count(br.to), "branch references unknown bus");
    require(br.from != br.to, "branch from_bus equals to_bus (" + std::to_string(br.from) + ")");
    require(std::abs(br.z) > 0, "branch " + std::to_string(br.from) + "-" + std::to_string(br.to) + ": zero impedance");
  }
  std::set<std::string> names;
  for (const auto& l : loads) {
    require(ids.count(l.bus), l.name + ": unknown bus");
    require(l.scale > 0, l.name + ": scale factor must be > 0");
    require(names.insert(l.name).second, "duplicate device name " + l.name);
  }
  std::set<int> dev_bus;
  for (const auto& m : machines) {
    require(ids.count(m.bus), m.name + ": unknown bus");
    require(dev_bus.insert(m.bus).second, m.name + ": more than one dynamic device at bus " + std::to_string(m.bus));
    require(names.insert(m.name).second, "duplicate device name " + m.name);
    m.validate();
  }
  for (const auto& c : converters) {
    require(ids.count(c.bus), c.name + ": unknown bus");
    require(dev_bus.insert(c.bus).second, c.name + ": more than one dynamic device at bus " + std::to_string(c.bus));
    require(names.insert(c.name).second, "duplicate device name " + c.name);
    c.validate();
  }
  // Connectivity.
  std::map<int, std::vector<int>> adj;
  for (const auto& br : branches) {
    adj[br.from].push_back(br.to);
    adj[br.to].push_back(br.from);
  }
  std::set<int> seen{buses.front().id};
  std::vector<int> stack{buses.front().id};
  while (!stack.empty()) {
    int b = stack.back();
    stack.pop_back();
    for (int n : adj[b])
      if (seen.insert(n).second) stack.push_back(n);
  }
  require(seen.size() == buses.size(), "network is not connected");
}

std::size_t PowerSystemModel::bus_index(int id) const {
  for (std::size_t i = 0; i < buses.size(); ++i)
    if (buses[i].id == id) return i;
  throw Error(ErrorCode::InvalidArgument, "unknown bus " + std::to_string(id));
}

const SyncMachine& PowerSystemModel::machine(const std::string& n) const {
  for (const auto& m : machines)
    if (m.name == n) return m;
  throw Error(ErrorCode::InvalidArgument, "unknown synchronous machine '" + n + "'");
}

SyncMachine& PowerSystemModel::machine(const std::string& n) {
  return const_cast<SyncMachine&>(std::as_const(*this).machine(n));
}

std::string pss_slot_name(const SyncMachine& m) { return "PSS" + std::to_string(m.bus); }

std::vector<std::string> PowerSystemModel::pss_slots() const {
  std::vector<std::string> out;
  for (const auto& m : machines)
    if (m.pss) out.push_back(pss_slot_name(m));
  return out;
}

const SyncMachine& PowerSystemModel::pss_host(const std::string& slot) const {
  for (const auto& m : machines)
    if (m.pss && pss_slot_name(m) == slot) return m;
  throw Error(ErrorCode::InvalidArgument, "unknown PSS slot '" + slot + "'");
}

SyncMachine& PowerSystemModel::pss_host(const std::string& slot) {
  return const_cast<SyncMachine&>(std::as_const(*this).pss_host(slot));
}

PowerSystemModel build_two_area(IbrShare share) {
  PowerSystemModel m;
  m.name = share == IbrShare::Zero ? "two-area-0ibr" : "two-area-50ibr";
  m.base_mva = 100.0;
  m.f_nom = 60.0;
  for (int id = 1; id <= 11; ++id) {
    Bus b;
    b.id = id;
    m.buses.push_back(b);
  }
  auto bus = [&](int id) -> Bus& { return m.buses[static_cast<std::size_t>(id - 1)]; };
  bus(1) = Bus{1, BusType::PV, 1.03, 0.0, 7.0, 0.0, 0.0};
  bus(2) = Bus{2, BusType::PV, 1.01, 0.0, 7.0, 0.0, 0.0};
  bus(3) = Bus{3, BusType::Slack, 1.03, rad(-6.8), 7.19, 0.0, 0.0};
  bus(4) = Bus{4, BusType::PV, 1.01, 0.0, 7.0, 0.0, 0.0};
  bus(7).shunt_b = 2.0;
  bus(9).shunt_b = 3.5;

  // 20/230 kV step-up transformers, 0.15 pu on 900 MVA.
  const Complex xt{0.0, 0.15 * m.base_mva / 900.0};
  for (auto [f, t] : {std::pair{1, 5}, {2, 6}, {3, 11}, {4, 10}}) m.branches.push_back({f, t, xt, 0.0});
  // 230 kV lines: r = 1e-4, x = 1e-3, b = 1.75e-3 pu/km on 100 MVA.
  auto line = [&](int f, int t, double km) {
    m.branches.push_back({f, t, Complex{1e-4 * km, 1e-3 * km}, 1.75e-3 * km});
  };
  line(5, 6, 25);
  line(6, 7, 10);
  line(7, 8, 110);
  line(7, 8, 110);
  line(8, 9, 110);
  line(8, 9, 110);
  line(9, 10, 10);
  line(10, 11, 25);

  m.loads.push_back({"L7", 7, 9.67, 1.0, 1.0});
  m.loads.push_back({"L9", 9, 17.67, 1.0, 1.0});

  const PssParams legacy{};  // slot placeholder; scenarios install Set A / Set B
  for (int g = 1; g <= 4; ++g) {
    const bool replaced = share == IbrShare::Fifty && (g == 1 || g == 3);
    if (replaced) {
      GflConverter c;
      c.name = "GFL" + std::to_string(g);
      c.bus = g;
      m.converters.push_back(c);
      continue;
    }
    SyncMachine s;
    s.name = "G" + std::to_string(g);
    s.bus = g;
    s.h = g <= 2 ? 6.5 : 6.175;
    s.avr = ExciterAvr{};
    s.gov = Governor{};
    s.pss = legacy;
    m.machines.push_back(s);
  }
  return m;
}

CMat build_ybus(const PowerSystemModel& model) {
  const auto n = static_cast<Eigen::Index>(model.buses.size());
  CMat y = CMat::Zero(n, n);
  for (const auto& br : model.branches) {
    const auto i = static_cast<Eigen::Index>(model.bus_index(br.from));
    const auto j = static_cast<Eigen::Index>(model.bus_index(br.to));
    const Complex ys = 1.0 / br.z;
    const Complex ysh{0.0, br.b / 2.0};
    y(i, i) += ys + ysh;
    y(j, j) += ys + ysh;
    y(i, j) -= ys;
    y(j, i) -= ys;
  }
  for (std::size_t k = 0; k < model.buses.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    y(i, i) += Complex{0.0, model.buses[k].shunt_b};
  }
  return y;
}

PowerFlowResult solve_power_flow(const PowerSystemModel& model, const PowerFlowOptions& opt) {
  model.validate();
  const auto nb = model.buses.size();
  const CMat ybus = build_ybus(model);

  CVec s_spec = CVec::Zero(static_cast<Eigen::Index>(nb));
  for (std::size_t k = 0; k < nb; ++k) s_spec[k] = Complex{model.buses[k].p_gen, model.buses[k].q_gen};
  for (const auto& l : model.loads) s_spec[model.bus_index(l.bus)] -= Complex{l.p, l.q} * l.scale;

  std::vector<std::size_t> pvpq, pq;
  std::size_t slack = 0;
  for (std::size_t k = 0; k < nb; ++k) {
    const auto t = model.buses[k].type;
    if (t == BusType::Slack) slack = k;
    else pvpq.push_back(k);
    if (t == BusType::PQ) pq.push_back(k);
  }

  Vec vm(nb), va(nb);
  for (std::size_t k = 0; k < nb; ++k) {
    vm[k] = model.buses[k].type == BusType::PQ ? 1.0 : model.buses[k].v_set;
    va[k] = 0.0;
  }
  va[slack] = model.buses[slack].angle_set;

  const auto npv = pvpq.size(), npq = pq.size();
  const auto nx = npv + npq;
  auto phasors = [&] {
    CVec v(static_cast<Eigen::Index>(nb));
    for (std::size_t k = 0; k < nb; ++k) v[k] = std::polar(vm[k], va[k]);
    return v;
  };

  PowerFlowResult res;
  for (int it = 0;; ++it) {
    const CVec v = phasors();
    const CVec ibus = ybus * v;
    const CVec s_calc = v.cwiseProduct(ibus.conjugate());
    const CVec mis = s_spec - s_calc;
    Vec f(nx);
    for (std::size_t i = 0; i < npv; ++i) f[i] = mis[pvpq[i]].real();
    for (std::size_t i = 0; i < npq; ++i) f[npv + i] = mis[pq[i]].imag();
    res.mismatch = nx ? f.cwiseAbs().maxCoeff() : 0.0;
    res.iterations = it;
    if (res.mismatch <= opt.tol) {
      res.v = v;
      res.s_inj = s_calc;
      res.s_gen = s_calc;
      for (const auto& l : model.loads) res.s_gen[model.bus_index(l.bus)] += Complex{l.p, l.q} * l.scale;
      return res;
    }
    if (it >= opt.max_iter) {
      std::ostringstream os;
      os << "power flow did not converge after " << opt.max_iter << " iterations; final mismatch " << res.mismatch
         << " pu";
      throw Error(ErrorCode::Convergence, os.str());
    }
    // dS/dtheta and dS/d|V| in complex form.
    const CMat diag_v = v.asDiagonal();
    CVec vnorm(static_cast<Eigen::Index>(nb));
    for (std::size_t k = 0; k < nb; ++k) vnorm[k] = v[k] / vm[k];
    const CMat ds_dva = Complex{0, 1} * diag_v * (CMat(ibus.asDiagonal()) - ybus * diag_v).conjugate();
    const CMat ds_dvm = diag_v * (ybus * CMat(vnorm.asDiagonal())).conjugate() +
                        CMat(ibus.conjugate().asDiagonal()) * CMat(vnorm.asDiagonal());
    Mat j(nx, nx);
    for (std::size_t r = 0; r < npv; ++r) {
      for (std::size_t c = 0; c < npv; ++c) j(r, c) = ds_dva(pvpq[r], pvpq[c]).real();
      for (std::size_t c = 0; c < npq; ++c) j(r, npv + c) = ds_dvm(pvpq[r], pq[c]).real();
    }
    for (std::size_t r = 0; r < npq; ++r) {
      for (std::size_t c = 0; c < npv; ++c) j(npv + r, c) = ds_dva(pq[r], pvpq[c]).imag();
      for (std::size_t c = 0; c < npq; ++c) j(npv + r, npv + c) = ds_dvm(pq[r], pq[c]).imag();
    }
    Eigen::FullPivLU<Mat> lu(j);
    lu.setThreshold(1e-12);
    if (!lu.isInvertible()) {
      const Mat ker = lu.kernel();
      Eigen::Index worst = 0;
      ker.col(0).cwiseAbs().maxCoeff(&worst);
      const auto w = static_cast<std::size_t>(worst);
      const std::size_t bus = w < npv ? pvpq[w] : pq[w - npv];
      throw Error(ErrorCode::Singular,
                  "singular power-flow Jacobian at bus " + std::to_string(model.buses[bus].id));
    }
    const Vec dx = lu.solve(f);
    for (std::size_t i = 0; i < npv; ++i) va[pvpq[i]] += dx[i];
    for (std::size_t i = 0; i < npq; ++i) vm[pq[i]] += dx[npv + i];
  }
}

double branch_flow(const PowerSystemModel& model, const PowerFlowResult& pf, int from, int to) {
  double p = 0.0;
  bool found = false;
  for (const auto& br : model.branches) {
    int sign = 0;
    if (br.from == from && br.to == to) sign = 1;
    if (br.from == to && br.to == from) sign = -1;
    if (!sign) continue;
    found = true;
    const Complex vf = pf.v[model.bus_index(sign > 0 ? br.from : br.to)];
    const Complex vt = pf.v[model.bus_index(sign > 0 ? br.to : br.from)];
    const Complex i = (vf - vt) / br.z + vf * Complex{0.0, br.b / 2.0};
    p += (vf * std::conj(i)).real();
  }
  if (!found) throw Error(ErrorCode::InvalidArgument, "no branch between buses " + std::to_string(from) + " and " +
                                                           std::to_string(to));
  return p;
}

// ---------------------------------------------------------------------------
// GridDae

struct GridDae::MachineEval {
  double id = 0, iq = 0, te = 0, pm = 0, efd = 0, efd_cmd = 0, vpss = 0, y2 = 0, pv = 0;
  double p = 0, q = 0, vt = 0;
  Complex inj;  // system base
};

struct GridDae::ConverterEval {
  double vd = 0, vq = 0, dw_pll = 0, p = 0, q = 0, vt = 0;
  double id_ref = 0, iq_ref = 0, id_cmd = 0, iq_cmd = 0, ep = 0, eq = 0;
  Complex inj;
  Complex vconv;
};

GridDae::GridDae(PowerSystemModel model, const PowerFlowResult& pf) : model_(std::move(model)) {
  model_.validate();
  ybus_ = build_ybus(model_);
  if (static_cast<std::size_t>(pf.v.size()) != model_.buses.size())
    throw Error(ErrorCode::InvalidArgument, "power-flow result does not match the model");
  for (const auto& l : model_.loads) {
    load_bus_.push_back(model_.bus_index(l.bus));
    load_v0_.push_back(std::abs(pf.v[load_bus_.back()]));
  }

  auto add_state = [&](const std::string& label, const char* group) {
    state_labels_.push_back(label);
    groups_.push_back(group);
    return state_labels_.size() - 1;
  };
  auto add_input = [&](const std::string& label) {
    input_labels_.push_back(label);
    return input_labels_.size() - 1;
  };

  for (const auto& m : model_.machines) {
    MachineLayout l;
    l.bus = model_.bus_index(m.bus);
    l.x0 = add_state(m.name + ".delta", "rotor");
    add_state(m.name + ".dw", "rotor");
    add_state(m.name + ".eq1", "flux");
    add_state(m.name + ".ed1", "flux");
    add_state(m.name + ".eq2", "flux");
    add_state(m.name + ".ed2", "flux");
    if (m.avr) {
      l.avr = add_state(m.name + ".vm", "avr");
      if (m.avr->ta > 0) l.efd = add_state(m.name + ".efd", "avr");
    }
    if (m.gov) {
      l.gov = add_state(m.name + ".pv", "governor");
      add_state(m.name + ".xrh", "governor");
    }
    if (m.pss) {
      const auto slot = pss_slot_name(m);
      l.pss = add_state(slot + ".xw", "pss");
      add_state(slot + ".x1", "pss");
      add_state(slot + ".x2", "pss");
    }
    l.in_vref = add_input(m.name + (m.avr ? ".Vref" : ".Efd"));
    l.in_pref = add_input(m.name + (m.gov ? ".Pref" : ".Pm"));
    if (m.pss) l.in_pss = add_input(pss_slot_name(m) + ".u");
    ml_.push_back(l);
  }
  for (const auto& c : model_.converters) {
    ConverterLayout l;
    l.bus = model_.bus_index(c.bus);
    l.x0 = add_state(c.name + ".theta", "gfl");
    for (const char* s : {".xpll", ".xp", ".xq", ".id", ".iq", ".vm"}) add_state(c.name + s, "gfl");
    l.in_pref = add_input(c.name + ".Pref");
    l.in_qref = add_input(c.name + ".Qref");
    l.in_vref = add_input(c.name + ".Vref");
    cl_.push_back(l);
  }
  for (const auto& l : model_.loads) add_input(l.name + ".scale");

  for (const auto& b : model_.buses) {
    alg_labels_.push_back("B" + std::to_string(b.id) + ".Vr");
    alg_labels_.push_back("B" + std::to_string(b.id) + ".Vi");
  }
  for (const auto& m : model_.machines)
    for (const char* s : {".P", ".Q", ".dw", ".delta", ".V", ".Efd", ".Vpss", ".Pm"}) output_labels_.push_back(m.name + s);
  for (const auto& c : model_.converters)
    for (const char* s : {".P", ".Q", ".V", ".dw_pll", ".Vconv"}) output_labels_.push_back(c.name + s);
  for (const auto& b : model_.buses) output_labels_.push_back("B" + std::to_string(b.id) + ".V");
}

GridDae::MachineEval GridDae::eval_machine(std::size_t k, const Vec& x, const Vec& y, const Vec& u) const {
  const auto& m = model_.machines[k];
  const auto& l = ml_[k];
  MachineEval e;
  const double delta = x[l.x0], dw = x[l.x0 + 1];
  const double ed2 = x[l.x0 + 5], eq2 = x[l.x0 + 4];
  const Complex v{y[2 * l.bus], y[2 * l.bus + 1]};
  e.vt = std::abs(v);
  const auto [vd, vq] = to_dq(v, delta);
  const double det = m.ra * m.ra + m.xd2 * m.xq2;
  const double r1 = ed2 - vd, r2 = eq2 - vq;
  e.id = (m.ra * r1 + m.xq2 * r2) / det;
  e.iq = (-m.xd2 * r1 + m.ra * r2) / det;
  e.te = ed2 * e.id + eq2 * e.iq + (m.xq2 - m.xd2) * e.id * e.iq;

  if (m.pss) {
    const auto& p = *m.pss;
    const std::size_t s = *l.pss;
    const double sin = p.k * dw + u[l.in_pss];
    const double yw = sin - x[s];
    const double y1 = x[s + 1] + (p.t1 / p.t2) * (yw - x[s + 1]);
    e.y2 = x[s + 2] + (p.t3 / p.t4) * (y1 - x[s + 2]);
    e.vpss = clamp(e.y2, p.vmin, p.vmax);
  }
  if (m.avr) {
    const double verr = u[l.in_vref] - x[*l.avr] + e.vpss;
    e.efd_cmd = m.avr->ka * verr;
    e.efd = l.efd ? x[*l.efd] : clamp(e.efd_cmd, m.avr->efd_min, m.avr->efd_max);
  } else {
    e.efd = u[l.in_vref];
  }
  if (m.gov) {
    const double pv = x[*l.gov];
    e.pv = clamp(pv, m.gov->pmin, m.gov->pmax);
    e.pm = m.gov->fhp * e.pv + (1.0 - m.gov->fhp) * x[*l.gov + 1];
  } else {
    e.pm = u[l.in_pref];
  }
  const double scale = m.mva / model_.base_mva;
  const double s = std::sin(delta), c = std::cos(delta);
  e.inj = Complex{e.id * s + e.iq * c, -e.id * c + e.iq * s} * scale;
  const Complex sp = v * std::conj(e.inj);
  e.p = sp.real();
  e.q = sp.imag();
  return e;
}

GridDae::ConverterEval GridDae::eval_converter(std::size_t k, const Vec& x, const Vec& y, const Vec& u) const {
  const auto& c = model_.converters[k];
  const auto& l = cl_[k];
  ConverterEval e;
  const double theta = x[l.x0], xpll = x[l.x0 + 1], xp = x[l.x0 + 2], xq = x[l.x0 + 3];
  const double id = x[l.x0 + 4], iq = x[l.x0 + 5], vm = x[l.x0 + 6];
  const Complex v{y[2 * l.bus], y[2 * l.bus + 1]};
  e.vt = std::abs(v);
  const double cs = std::cos(theta), sn = std::sin(theta);
  e.vd = v.real() * cs + v.imag() * sn;
  e.vq = -v.real() * sn + v.imag() * cs;
  e.dw_pll = c.pll_kp * e.vq + c.pll_ki * xpll;
  const double scale = c.mva / model_.base_mva;
  e.p = e.vd * id - e.vq * iq;
  e.q = e.vd * iq + e.vq * id;
  e.ep = u[l.in_pref] / scale - e.p;
  e.eq = u[l.in_qref] / scale + c.kv * (u[l.in_vref] - vm) - e.q;
  e.id_ref = c.p_kp * e.ep + c.p_ki * xp;
  e.iq_ref = c.q_kp * e.eq + c.q_ki * xq;
  e.id_cmd = clamp(e.id_ref, -c.imax, c.imax);
  const double iq_lim = std::sqrt(std::max(c.imax * c.imax - e.id_cmd * e.id_cmd, 0.0));
  e.iq_cmd = clamp(e.iq_ref, -iq_lim, iq_lim);
  const Complex ic = Complex{id, -iq} * std::polar(1.0, theta);
  e.inj = ic * scale;
  e.vconv = v + Complex{c.r, c.x} * ic;
  e.p *= scale;
  e.q *= scale;
  return e;
}

void GridDae::residual(const Vec& x, const Vec& y, const Vec& u, Vec& f, Vec& g) const {
  check_dims(x, y, u);
  const double wb = model_.omega_base();
  f = Vec::Zero(static_cast<Eigen::Index>(num_states()));
  const auto nb = model_.buses.size();
  CVec v(static_cast<Eigen::Index>(nb));
  for (std::size_t b = 0; b < nb; ++b) v[b] = Complex{y[2 * b], y[2 * b + 1]};
  CVec mis = -(ybus_ * v);

  for (std::size_t k = 0; k < model_.machines.size(); ++k) {
    const auto& m = model_.machines[k];
    const auto& l = ml_[k];
    const auto e = eval_machine(k, x, y, u);
    const double dw = x[l.x0 + 1];
    const double eq1 = x[l.x0 + 2], ed1 = x[l.x0 + 3], eq2 = x[l.x0 + 4], ed2 = x[l.x0 + 5];
    f[l.x0] = wb * dw;
    f[l.x0 + 1] = (e.pm - e.te - m.d * dw) / (2.0 * m.h);
    f[l.x0 + 2] = (-eq1 - (m.xd - m.xd1) * e.id + e.efd) / m.td01;
    f[l.x0 + 3] = (-ed1 + (m.xq - m.xq1) * e.iq) / m.tq01;
    f[l.x0 + 4] = (-eq2 + eq1 - (m.xd1 - m.xd2) * e.id) / m.td02;
    f[l.x0 + 5] = (-ed2 + ed1 + (m.xq1 - m.xq2) * e.iq) / m.tq02;
    if (m.avr) {
      f[*l.avr] = (e.vt - x[*l.avr]) / m.avr->tr;
      if (l.efd) {
        const double efd = x[*l.efd];
        f[*l.efd] = nonwindup((e.efd_cmd - efd) / m.avr->ta, efd, m.avr->efd_min, m.avr->efd_max);
      }
    }
    if (m.gov) {
      const auto& gv = *m.gov;
      const double pv = x[*l.gov];
      f[*l.gov] = nonwindup((u[l.in_pref] - dw / gv.droop - pv) / gv.ts, pv, gv.pmin, gv.pmax);
      f[*l.gov + 1] = (e.pv - x[*l.gov + 1]) / gv.trh;
    }
    if (m.pss) {
      const auto& p = *m.pss;
      const std::size_t s = *l.pss;
      const double sin = p.k * dw + u[l.in_pss];
      const double yw = sin - x[s];
      const double y1 = x[s + 1] + (p.t1 / p.t2) * (yw - x[s + 1]);
      const bool saturated = e.y2 > p.vmax || e.y2 < p.vmin;
      f[s] = saturated ? 0.0 : yw / p.tw;
      f[s + 1] = (yw - x[s + 1]) / p.t2;
      f[s + 2] = (y1 - x[s + 2]) / p.t4;
    }
    mis[l.bus] += e.inj;
  }

  for (std::size_t k = 0; k < model_.converters.size(); ++k) {
    const auto& c = model_.converters[k];
    const auto& l = cl_[k];
    const auto e = eval_converter(k, x, y, u);
    f[l.x0] = wb * e.dw_pll;
    f[l.x0 + 1] = e.vq;
    // Integrators freeze while their current reference is clipped.
    f[l.x0 + 2] = e.id_ref != e.id_cmd && (e.id_ref > e.id_cmd) == (e.ep > 0) ? 0.0 : e.ep;
    f[l.x0 + 3] = e.iq_ref != e.iq_cmd && (e.iq_ref > e.iq_cmd) == (e.eq > 0) ? 0.0 : e.eq;
    f[l.x0 + 4] = (e.id_cmd - x[l.x0 + 4]) / c.tc;
    f[l.x0 + 5] = (e.iq_cmd - x[l.x0 + 5]) / c.tc;
    f[l.x0 + 6] = (e.vt - x[l.x0 + 6]) / c.tv;
    mis[l.bus] += e.inj;
  }

  const std::size_t load_in0 = input_labels_.size() - model_.loads.size();
  for (std::size_t k = 0; k < model_.loads.size(); ++k) {
    const auto& ld = model_.loads[k];
    const Complex vb = v[load_bus_[k]];
    const double vmag = std::abs(vb);
    const double scale = u[load_in0 + k];
    const double v0 = load_v0_[k];
    Complex il = Complex{0.0, -ld.q * scale / (v0 * v0)} * vb;
    if (vmag > 0.0) il += (ld.p * scale / v0) * (vb / vmag);
    mis[load_bus_[k]] -= il;
  }

  g.resize(static_cast<Eigen::Index>(2 * nb));
  for (std::size_t b = 0; b < nb; ++b) {
    g[2 * b] = mis[b].real();
    g[2 * b + 1] = mis[b].imag();
  }
}

void GridDae::outputs(const Vec& x, const Vec& y, const Vec& u, Vec& z) const {
  check_dims(x, y, u);
  z.resize(static_cast<Eigen::Index>(output_labels_.size()));
  Eigen::Index o = 0;
  for (std::size_t k = 0; k < model_.machines.size(); ++k) {
    const auto e = eval_machine(k, x, y, u);
    const auto& l = ml_[k];
    for (double val : {e.p, e.q, x[l.x0 + 1], x[l.x0], e.vt, e.efd, e.vpss, e.pm}) z[o++] = val;
  }
  for (std::size_t k = 0; k < model_.converters.size(); ++k) {
    const auto e = eval_converter(k, x, y, u);
    for (double val : {e.p, e.q, e.vt, e.dw_pll, std::abs(e.vconv)}) z[o++] = val;
  }
  for (std::size_t b = 0; b < model_.buses.size(); ++b) z[o++] = std::hypot(y[2 * b], y[2 * b + 1]);
}

Labels GridDae::active_limiters(const Vec& x, const Vec& y, const Vec& u) const {
  Labels out;
  for (std::size_t k = 0; k < model_.machines.size(); ++k) {
    const auto& m = model_.machines[k];
    const auto& l = ml_[k];
    const auto e = eval_machine(k, x, y, u);
    if (m.avr) {
      const double efd = l.efd ? x[*l.efd] : e.efd_cmd;
      if (efd >= m.avr->efd_max) out.push_back(m.name + ".Efd_max");
      if (efd <= m.avr->efd_min) out.push_back(m.name + ".Efd_min");
    }
    if (m.gov) {
      if (x[*l.gov] >= m.gov->pmax) out.push_back(m.name + ".Pmax");
      if (x[*l.gov] <= m.gov->pmin) out.push_back(m.name + ".Pmin");
    }
    if (m.pss) {
      if (e.y2 >= m.pss->vmax) out.push_back(pss_slot_name(m) + ".Vmax");
      if (e.y2 <= m.pss->vmin) out.push_back(pss_slot_name(m) + ".Vmin");
    }
  }
  for (std::size_t k = 0; k < model_.converters.size(); ++k) {
    const auto e = eval_converter(k, x, y, u);
    if (e.id_ref != e.id_cmd || e.iq_ref != e.iq_cmd) out.push_back(model_.converters[k].name + ".Imax");
  }
  return out;
}

DaePoint GridDae::initialize(const PowerFlowResult& pf) const {
  DaePoint p;
  p.x = Vec::Zero(static_cast<Eigen::Index>(num_states()));
  p.y = Vec::Zero(static_cast<Eigen::Index>(num_algebraic()));
  p.u = Vec::Zero(static_cast<Eigen::Index>(num_inputs()));
  for (std::size_t b = 0; b < model_.buses.size(); ++b) {
    p.y[2 * b] = pf.v[b].real();
    p.y[2 * b + 1] = pf.v[b].imag();
  }
  auto limit_error = [](const std::string& dev, const std::string& what, double val, double lo, double hi) {
    std::ostringstream os;
    os << dev << ": " << what << " " << val << " outside limits [" << lo << ", " << hi << "]";
    return Error(ErrorCode::Numeric, os.str());
  };

  for (std::size_t k = 0; k < model_.machines.size(); ++k) {
    const auto& m = model_.machines[k];
    const auto& l = ml_[k];
    const Complex v = pf.v[l.bus];
    const double scale = m.mva / model_.base_mva;
    const Complex i_m = std::conj(pf.s_gen[l.bus] / v) / scale;
    const Complex eq = v + Complex{m.ra, m.xq} * i_m;
    const double delta = std::arg(eq);
    const auto [vd, vq] = to_dq(v, delta);
    const auto [id, iq] = to_dq(i_m, delta);
    const double efd = vq + m.ra * iq + m.xd * id;
    const double eq1 = efd - (m.xd - m.xd1) * id;
    const double eq2 = eq1 - (m.xd1 - m.xd2) * id;
    const double ed1 = (m.xq - m.xq1) * iq;
    const double ed2 = ed1 + (m.xq1 - m.xq2) * iq;
    (void)vd;
    p.x[l.x0] = delta;
    p.x[l.x0 + 1] = 0.0;
    p.x[l.x0 + 2] = eq1;
    p.x[l.x0 + 3] = ed1;
    p.x[l.x0 + 4] = eq2;
    p.x[l.x0 + 5] = ed2;
    const double te = ed2 * id + eq2 * iq + (m.xq2 - m.xd2) * id * iq;
    if (m.avr) {
      if (!(efd > m.avr->efd_min && efd < m.avr->efd_max))
        throw limit_error(m.name, "field voltage", efd, m.avr->efd_min, m.avr->efd_max);
      p.x[*l.avr] = std::abs(v);
      if (l.efd) p.x[*l.efd] = efd;
      p.u[l.in_vref] = efd / m.avr->ka + std::abs(v);
    } else {
      p.u[l.in_vref] = efd;
    }
    if (m.gov) {
      if (!(te > m.gov->pmin && te < m.gov->pmax))
        throw limit_error(m.name, "mechanical power", te, m.gov->pmin, m.gov->pmax);
      p.x[*l.gov] = te;
      p.x[*l.gov + 1] = te;
    }
    p.u[l.in_pref] = te;
  }
  for (std::size_t k = 0; k < model_.converters.size(); ++k) {
    const auto& c = model_.converters[k];
    const auto& l = cl_[k];
    const Complex v = pf.v[l.bus];
    const double scale = c.mva / model_.base_mva;
    const Complex s = pf.s_gen[l.bus];
    const double vm = std::abs(v);
    const double id = s.real() / scale / vm;
    const double iq = s.imag() / scale / vm;
    if (std::hypot(id, iq) >= c.imax) throw limit_error(c.name, "current", std::hypot(id, iq), 0.0, c.imax);
    p.x[l.x0] = std::arg(v);
    p.x[l.x0 + 1] = 0.0;
    p.x[l.x0 + 2] = id / c.p_ki;
    p.x[l.x0 + 3] = iq / c.q_ki;
    p.x[l.x0 + 4] = id;
    p.x[l.x0 + 5] = iq;
    p.x[l.x0 + 6] = vm;
    p.u[l.in_pref] = s.real();
    p.u[l.in_qref] = s.imag();
    p.u[l.in_vref] = vm;
  }
  const std::size_t load_in0 = input_labels_.size() - model_.loads.size();
  for (std::size_t k = 0; k < model_.loads.size(); ++k) p.u[load_in0 + k] = model_.loads[k].scale;
  return p;
}

std::vector<std::size_t> GridDae::voltage_sensing_states(int bus) const {
  const auto b = model_.bus_index(bus);
  std::vector<std::size_t> out;
  const std::size_t n = num_states();
  auto device_range = [&](std::size_t from) {
    std::size_t to = from + 1;
    while (to < n && state_labels_[to].substr(0, state_labels_[to].find('.')) ==
                         state_labels_[from].substr(0, state_labels_[from].find('.')))
      ++to;
    return to;
  };
  for (std::size_t k = 0; k < ml_.size(); ++k) {
    if (ml_[k].bus != b) continue;
    for (std::size_t i = ml_[k].x0, e = device_range(ml_[k].x0); i < e; ++i) out.push_back(i);
  }
  for (std::size_t k = 0; k < cl_.size(); ++k) {
    if (cl_[k].bus != b) continue;
    for (std::size_t i = cl_[k].x0, e = device_range(cl_[k].x0); i < e; ++i) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> GridDae::shaft_states() const {
  std::vector<std::size_t> out;
  for (const auto& l : ml_) {
    out.push_back(l.x0);
    out.push_back(l.x0 + 1);
  }
  return out;
}

std::string GridDae::state_group(std::size_t i) const { return groups_.at(i); }

OperatingPoint init_dynamic_states(const GridDae& dae, const PowerFlowResult& pf) {
  OperatingPoint op{pf, dae.initialize(pf)};
  Vec f, g;
  dae.residual(op.point.x, op.point.y, op.point.u, f, g);
  const double rf = f.size() ? f.cwiseAbs().maxCoeff() : 0.0;
  const double rg = g.size() ? g.cwiseAbs().maxCoeff() : 0.0;
  if (rf > 1e-8 || rg > 1e-8) {
    std::ostringstream os;
    os << "dynamic initialization left residuals |f| = " << rf << ", |g| = " << rg;
    throw Error(ErrorCode::Numeric, os.str());
  }
  const auto lim = dae.active_limiters(op.point.x, op.point.y, op.point.u);
  if (!lim.empty()) throw Error(ErrorCode::Numeric, "device initialized on its limit: " + lim.front());
  return op;
}

SolvedSystem solve_system(const PowerSystemModel& model) {
  auto pf = solve_power_flow(model);
  auto dae = std::make_shared<const GridDae>(model, pf);
  auto op = init_dynamic_states(*dae, pf);
  return {std::move(dae), std::move(op)};
}

}  // namespace pstab
