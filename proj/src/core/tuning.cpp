#include "pstab/tuning.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>

#include <Eigen/Eigenvalues>

namespace pstab {

double compensation_angle(double residue_angle_deg) {
  if (!(residue_angle_deg >= 0.0 && residue_angle_deg < 360.0))
    throw Error(ErrorCode::InvalidArgument, "residue angle must lie in [0, 360) degrees");
  return std::abs(residue_angle_deg - 180.0);
}

int block_count(double theta_deg) {
  if (!(theta_deg >= 0.0)) throw Error(ErrorCode::InvalidArgument, "compensation angle must be >= 0");
  if (theta_deg >= 180.0) throw Error(ErrorCode::InvalidArgument, "compensation of 180 degrees or more is unachievable");
  if (theta_deg < 60.0) return 1;
  if (theta_deg < 120.0) return 2;
  return 3;
}

LeadLagDesign leadlag_design(double theta_deg, int n, double omega_c) {
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "block count must be >= 1");
  if (!(omega_c > 0.0)) throw Error(ErrorCode::InvalidArgument, "design frequency must be > 0");
  const double per = theta_deg / n;
  if (!(std::abs(per) < 90.0)) throw Error(ErrorCode::InvalidArgument, "per-block phase must be below 90 degrees");
  const double s = std::sin(rad(per));
  LeadLagDesign d;
  d.theta_deg = theta_deg;
  d.n = n;
  d.omega_c = omega_c;
  d.a = (1.0 - s) / (1.0 + s);
  d.t = 1.0 / (omega_c * std::sqrt(d.a));
  return d;
}

double leadlag_phase_deg(const LeadLagDesign& d, double w) {
  return d.n * deg(std::atan(w * d.t) - std::atan(w * d.a * d.t));
}

Complex pss_response(const PssParams& p, double w, bool with_washout) {
  const Complex s{0.0, w};
  Complex h = p.k * (1.0 + s * p.t1) / (1.0 + s * p.t2) * (1.0 + s * p.t3) / (1.0 + s * p.t4);
  if (with_washout) h *= s * p.tw / (1.0 + s * p.tw);
  return h;
}

double washout_for(double freq_hz) { return freq_hz < 2.0 ? 10.0 : 1.0; }

StateSpaceModel pss_state_space(const PssParams& p, const std::string& prefix) {
  const double r1 = p.t1 / p.t2, r2 = p.t3 / p.t4;
  StateSpaceModel ss;
  ss.a = Mat::Zero(3, 3);
  ss.b = Mat::Zero(3, 1);
  ss.c = Mat::Zero(1, 3);
  ss.d = Mat::Zero(1, 1);
  ss.a(0, 0) = -1.0 / p.tw;
  ss.b(0, 0) = p.k / p.tw;
  ss.a(1, 0) = -1.0 / p.t2;
  ss.a(1, 1) = -1.0 / p.t2;
  ss.b(1, 0) = p.k / p.t2;
  ss.a(2, 0) = -r1 / p.t4;
  ss.a(2, 1) = (1.0 - r1) / p.t4;
  ss.a(2, 2) = -1.0 / p.t4;
  ss.b(2, 0) = r1 * p.k / p.t4;
  ss.c(0, 0) = -r2 * r1;
  ss.c(0, 1) = r2 * (1.0 - r1);
  ss.c(0, 2) = 1.0 - r2;
  ss.d(0, 0) = r2 * r1 * p.k;
  ss.state_labels = {prefix + ".xw", prefix + ".x1", prefix + ".x2"};
  ss.input_labels = {prefix + ".dw"};
  ss.output_labels = {prefix + ".Vpss"};
  return ss;
}

StateSpaceModel close_pss_loop(const StateSpaceModel& plant, const std::string& input, const std::string& output,
                               const PssParams& p, const std::string& prefix) {
  const auto g = plant.siso(input, output);
  const auto h = pss_state_space(p, prefix);
  const auto n = g.a.rows();
  const double d = g.d(0, 0), dp = h.d(0, 0);
  const double den = 1.0 - dp * d;
  if (std::abs(den) < 1e-12) throw Error(ErrorCode::Singular, "PSS loop has an algebraic singularity");
  // u = (Cp xp + Dp c x) / den, y = c x + d u
  const Mat ux = dp * g.c / den;  // 1 x n
  const Mat up = h.c / den;       // 1 x 3
  const Mat yx = g.c + d * ux;
  const Mat yp = d * up;
  StateSpaceModel cl;
  cl.a = Mat::Zero(n + 3, n + 3);
  cl.a.topLeftCorner(n, n) = g.a + g.b * ux;
  cl.a.topRightCorner(n, 3) = g.b * up;
  cl.a.bottomLeftCorner(3, n) = h.b * yx;
  cl.a.bottomRightCorner(3, 3) = h.a + h.b * yp;
  cl.b = Mat::Zero(n + 3, 0);
  cl.c = Mat::Zero(0, n + 3);
  cl.d = Mat::Zero(0, 0);
  cl.state_labels = g.state_labels;
  cl.state_labels.insert(cl.state_labels.end(), h.state_labels.begin(), h.state_labels.end());
  return cl;
}

namespace {

// PSS with unit gain in series ahead of the plant input; used for the loop zeros.
StateSpaceModel series_loop(const StateSpaceModel& g, const PssParams& p) {
  PssParams unit = p;
  unit.k = 1.0;
  const auto h = pss_state_space(unit, "PSS");
  const auto n = g.a.rows();
  StateSpaceModel s;
  s.a = Mat::Zero(n + 3, n + 3);
  s.a.topLeftCorner(n, n) = g.a;
  s.a.topRightCorner(n, 3) = g.b * h.c;
  s.a.bottomRightCorner(3, 3) = h.a;
  s.b = Mat::Zero(n + 3, 1);
  s.b.topRows(n) = g.b * h.d;
  s.b.bottomRows(3) = h.b;
  s.c = Mat::Zero(1, n + 3);
  s.c.leftCols(n) = g.c;
  s.c.rightCols(3) = g.d * h.c;
  s.d = g.d * h.d;
  return s;
}

std::vector<Complex> transmission_zeros(const StateSpaceModel& s) {
  const auto n = s.a.rows();
  Mat m = Mat::Zero(n + 1, n + 1), e = Mat::Zero(n + 1, n + 1);
  m.topLeftCorner(n, n) = s.a;
  m.topRightCorner(n, 1) = s.b;
  m.bottomLeftCorner(1, n) = s.c;
  m(n, n) = s.d(0, 0);
  e.topLeftCorner(n, n).setIdentity();
  Eigen::GeneralizedEigenSolver<Mat> ges(m, e, false);
  std::vector<Complex> out;
  const auto& al = ges.alphas();
  const auto& be = ges.betas();
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < al.size(); ++i) {
    if (std::abs(be[i]) <= 1e-10 * std::abs(al[i]) || std::abs(be[i]) < 1e-14) continue;
    const Complex z = al[i] / be[i];
    if (std::abs(z) < 1e8 * scale) out.push_back(z);
  }
  std::sort(out.begin(), out.end(), [](Complex a, Complex b) {
    return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
  });
  return out;
}

struct Spectrum {
  std::vector<Complex> lambda;
  std::vector<double> rotor;
};

Spectrum spectrum(const StateSpaceModel& ss) {
  const auto n = ss.a.rows();
  Eigen::EigenSolver<Mat> es(ss.a, true);
  if (es.info() != Eigen::Success) throw Error(ErrorCode::Numeric, "eigenvalue iteration did not converge");
  const CMat v = es.eigenvectors();
  const CMat w = v.partialPivLu().inverse();
  std::vector<bool> is_rotor(static_cast<std::size_t>(n));
  for (Eigen::Index k = 0; k < n; ++k)
    is_rotor[static_cast<std::size_t>(k)] = state_group(ss.state_labels[static_cast<std::size_t>(k)]) == "rotor";
  Spectrum sp;
  for (Eigen::Index i = 0; i < n; ++i) {
    sp.lambda.push_back(es.eigenvalues()[i]);
    double top = 0.0, rot = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      const double pf = std::abs(v(k, i) * w(i, k));
      top = std::max(top, pf);
      if (is_rotor[static_cast<std::size_t>(k)]) rot = std::max(rot, pf);
    }
    sp.rotor.push_back(top > 0 ? rot / top : 0.0);
  }
  return sp;
}

// Greedy nearest-neighbour assignment of `next` onto the order of `prev`.
std::vector<std::size_t> match(const std::vector<Complex>& prev, const std::vector<Complex>& next) {
  const std::size_t n = prev.size();
  std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
  pairs.reserve(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) pairs.emplace_back(std::abs(prev[i] - next[j]), i, j);
  std::sort(pairs.begin(), pairs.end());
  std::vector<std::size_t> perm(n, n);
  std::vector<bool> used(n, false);
  std::size_t left = n;
  for (const auto& [dist, i, j] : pairs) {
    if (perm[i] != n || used[j]) continue;
    perm[i] = j;
    used[j] = true;
    if (--left == 0) break;
  }
  return perm;
}

}  // namespace

RootLocus root_locus(const ClosedLoopFn& closed_loop, const std::vector<double>& gains) {
  if (gains.empty()) throw Error(ErrorCode::InvalidArgument, "gain grid is empty");
  for (std::size_t i = 1; i < gains.size(); ++i)
    if (!(gains[i] > gains[i - 1])) throw Error(ErrorCode::InvalidArgument, "gain grid must be strictly ascending");
  RootLocus rl;
  rl.gains = gains;
  for (std::size_t g = 0; g < gains.size(); ++g) {
    const auto ss = closed_loop(gains[g]);
    auto sp = spectrum(ss);
    if (g == 0) {
      rl.state_labels = ss.state_labels;
    } else {
      if (sp.lambda.size() != rl.poles.back().size())
        throw Error(ErrorCode::Internal, "closed-loop order changed along the gain grid");
      const auto perm = match(rl.poles.back(), sp.lambda);
      Spectrum ordered;
      for (auto j : perm) {
        ordered.lambda.push_back(sp.lambda[j]);
        ordered.rotor.push_back(sp.rotor[j]);
      }
      sp = std::move(ordered);
    }
    rl.poles.push_back(std::move(sp.lambda));
    rl.rotor.push_back(std::move(sp.rotor));
  }
  return rl;
}

std::vector<double> gain_grid(double lo, double hi, int points) {
  if (!(lo > 0 && hi > lo) || points < 2) throw Error(ErrorCode::InvalidArgument, "invalid gain grid bounds");
  std::vector<double> g{0.0};
  const double a = std::log10(lo), b = std::log10(hi);
  for (int i = 0; i < points; ++i) g.push_back(std::pow(10.0, a + (b - a) * i / (points - 1)));
  return g;
}

double electromechanical_min_damping(const RootLocus& rl, std::size_t i) {
  double best = 1.0;
  for (std::size_t b = 0; b < rl.poles[i].size(); ++b) {
    const Complex l = rl.poles[i][b];
    if (std::abs(l) < kNeutralTol) continue;
    const bool counts = (rl.rotor[i][b] >= 0.3 && l.imag() != 0.0) || l.real() >= 0.0;
    if (counts) best = std::min(best, damping_ratio(l));
  }
  return best;
}

GainChoice select_gain(const RootLocus& rl) {
  GainChoice c;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < rl.gains.size(); ++i) {
    if (rl.gains[i] <= 0.0) continue;
    const double xi = electromechanical_min_damping(rl, i);
    if (xi > best) {
      best = xi;
      c.gain = rl.gains[i];
    }
  }
  if (!std::isfinite(best)) throw Error(ErrorCode::InvalidArgument, "gain grid has no positive gain");
  c.min_damping = best;
  c.stabilizable = best > 0.0;
  return c;
}

const char* to_string(TuningMethod m) { return m == TuningMethod::Residues ? "residues" : "pvref"; }

TuningMethod parse_tuning_method(const std::string& s) {
  if (s == "residues") return TuningMethod::Residues;
  if (s == "pvref" || s == "p-vref") return TuningMethod::PVref;
  throw Error(ErrorCode::InvalidArgument, "unknown tuning method '" + s + "' (expected residues or pvref)");
}

std::vector<double> pvref_grid(int points) {
  if (points < 2) throw Error(ErrorCode::InvalidArgument, "phase grid needs at least 2 points");
  std::vector<double> f;
  for (int i = 0; i < points; ++i) f.push_back(std::pow(10.0, -1.0 + 2.0 * i / (points - 1)));
  f.front() = 0.1;
  f.back() = 10.0;
  return f;
}

namespace {

void check_grid(const std::vector<double>& f) {
  if (f.empty()) throw Error(ErrorCode::InvalidArgument, "frequency grid is empty");
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (f[i] < 0.1 - 1e-12 || f[i] > 10.0 + 1e-12)
      throw Error(ErrorCode::InvalidArgument, "phase grid frequencies must lie in [0.1, 10] Hz");
    if (i && !(f[i] > f[i - 1])) throw Error(ErrorCode::InvalidArgument, "phase grid must be strictly ascending");
  }
}

void unwrap(std::vector<double>& ph) {
  for (std::size_t i = 1; i < ph.size(); ++i) {
    while (ph[i] - ph[i - 1] > 180.0) ph[i] -= 360.0;
    while (ph[i] - ph[i - 1] < -180.0) ph[i] += 360.0;
  }
}

PhaseResponse from_gains(const std::vector<double>& f, const std::vector<Complex>& h, const char* source) {
  PhaseResponse r;
  r.freq_hz = f;
  r.source = source;
  for (const auto& v : h) {
    r.phase_deg.push_back(deg(std::arg(v)));
    r.magnitude.push_back(std::abs(v));
  }
  unwrap(r.phase_deg);
  return r;
}

}  // namespace

PhaseResponse tf_phase(const StateSpaceModel& siso, const std::vector<double>& freq_hz) {
  check_grid(freq_hz);
  std::vector<Complex> poles;
  Eigen::EigenSolver<Mat> es(siso.a, false);
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) poles.push_back(es.eigenvalues()[i]);
  std::vector<Complex> h;
  for (double f : freq_hz) h.push_back(tf_eval(siso, Complex{0.0, 2.0 * kPi * f}, poles));
  return from_gains(freq_hz, h, "frozen-shaft-tf");
}

LeadLagFit fit_leadlag_to_phase(const PhaseResponse& target, int n, double band_lo, double band_hi,
                                double max_ratio) {
  if (n != 1 && n != 2) throw Error(ErrorCode::InvalidArgument, "phase fit supports 1 or 2 blocks");
  if (target.freq_hz.size() != target.phase_deg.size() || target.freq_hz.empty())
    throw Error(ErrorCode::InvalidArgument, "phase response is empty or inconsistent");
  std::vector<double> w, wt, ph;
  for (std::size_t i = 0; i < target.freq_hz.size(); ++i) {
    const double f = target.freq_hz[i];
    w.push_back(2.0 * kPi * f);
    wt.push_back(f >= band_lo - 1e-12 && f <= band_hi + 1e-12 ? 5.0 : 1.0);
    ph.push_back(target.phase_deg[i]);
  }
  const double wsum = std::accumulate(wt.begin(), wt.end(), 0.0);
  auto cost = [&](double lt1, double lt2) {
    const double t1 = std::pow(10.0, lt1), t2 = std::pow(10.0, lt2);
    double c = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double e = ph[i] + n * deg(std::atan(w[i] * t1) - std::atan(w[i] * t2));
      c += wt[i] * e * e;
    }
    return c;
  };
  constexpr double lo1 = -3.0, hi1 = 1.0, lo2 = -4.0, hi2 = 1.0;
  const double max_span = max_ratio > 0.0 ? std::log10(std::max(max_ratio, 1.0)) : 1e9;
  double b1 = 0.0, b2 = 0.0, bc = std::numeric_limits<double>::infinity();
  auto scan = [&](double a1, double z1, double a2, double z2, int steps) {
    for (int i = 0; i <= steps; ++i) {
      const double l1 = std::clamp(a1 + (z1 - a1) * i / steps, lo1, hi1);
      for (int j = 0; j <= steps; ++j) {
        const double l2 = std::clamp(a2 + (z2 - a2) * j / steps, lo2, hi2);
        if (std::abs(l1 - l2) > max_span + 1e-12) continue;
        const double c = cost(l1, l2);
        if (c < bc) {
          bc = c;
          b1 = l1;
          b2 = l2;
        }
      }
    }
  };
  scan(lo1, hi1, lo2, hi2, 100);
  double h1 = (hi1 - lo1) / 100, h2 = (hi2 - lo2) / 100;
  for (int round = 0; round < 12; ++round) {
    scan(b1 - 2 * h1, b1 + 2 * h1, b2 - 2 * h2, b2 + 2 * h2, 20);
    h1 *= 0.2;
    h2 *= 0.2;
  }
  LeadLagFit fit;
  fit.t1 = std::pow(10.0, b1);
  fit.t2 = std::pow(10.0, b2);
  if (n == 2) {
    fit.t3 = fit.t1;
    fit.t4 = fit.t2;
  }
  fit.rms_deg = std::sqrt(bc / wsum);
  fit.warning = fit.rms_deg > 20.0;
  return fit;
}

// ---------------------------------------------------------------------------
// Plants

namespace {

PowerSystemModel with_slot(const PowerSystemModel& model, const std::string& slot, const PssParams& p) {
  auto m = model;
  auto& host = m.pss_host(slot);
  host.pss = p;
  return m;
}

PssParams disabled(const PssParams& p) {
  auto q = p;
  q.k = 0.0;
  return q;
}

StateSpaceModel remove_shaft_states(const StateSpaceModel& ss) {
  std::vector<Eigen::Index> keep;
  for (std::size_t i = 0; i < ss.state_labels.size(); ++i)
    if (state_group(ss.state_labels[i]) != "rotor") keep.push_back(static_cast<Eigen::Index>(i));
  const auto n = static_cast<Eigen::Index>(keep.size());
  StateSpaceModel r;
  r.a.resize(n, n);
  r.b.resize(n, ss.b.cols());
  r.c.resize(ss.c.rows(), n);
  for (Eigen::Index i = 0; i < n; ++i) {
    r.b.row(i) = ss.b.row(keep[static_cast<std::size_t>(i)]);
    r.c.col(i) = ss.c.col(keep[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < n; ++j) r.a(i, j) = ss.a(keep[static_cast<std::size_t>(i)], keep[static_cast<std::size_t>(j)]);
    r.state_labels.push_back(ss.state_labels[static_cast<std::size_t>(keep[static_cast<std::size_t>(i)])]);
  }
  r.d = ss.d;
  r.input_labels = ss.input_labels;
  r.output_labels = ss.output_labels;
  return r;
}

}  // namespace

TuningPlant model_plant(const PowerSystemModel& model, const std::string& slot) {
  const auto& host = model.pss_host(slot);
  TuningPlant plant;
  plant.slot = slot;
  plant.host = host.name;
  const auto base = with_slot(model, slot, disabled(*host.pss));
  const auto sys = solve_system(base);
  plant.vref_speed = linearize(*sys.dae, sys.op.point, {host.name + ".Vref"}, {host.name + ".dw"});
  plant.frozen_shaft = frozen_shaft_linearize(*sys.dae, sys.op.point, host.name);
  const auto pf = sys.op.pf;
  const auto point = sys.op.point;
  plant.closed_loop = [base, slot, pf, point](const PssParams& p) {
    // The PSS does not move the equilibrium, so the base point is reused.
    const GridDae dae(with_slot(base, slot, p), pf);
    return linearize(dae, point, {}, {});
  };
  const auto g = plant.vref_speed;
  plant.zeros = [g](const PssParams& p) { return transmission_zeros(series_loop(g, p)); };
  return plant;
}

TuningPlant state_space_plant(const StateSpaceModel& ss, const std::string& host, const std::string& slot) {
  ss.validate();
  TuningPlant plant;
  plant.slot = slot;
  plant.host = host;
  const auto in = host + ".Vref", out = host + ".dw";
  plant.vref_speed = ss.siso(in, out);
  if (std::find(ss.output_labels.begin(), ss.output_labels.end(), host + ".P") != ss.output_labels.end())
    plant.frozen_shaft = remove_shaft_states(ss.siso(in, host + ".P"));
  plant.closed_loop = [ss, in, out, slot](const PssParams& p) { return close_pss_loop(ss, in, out, p, slot); };
  const auto g = plant.vref_speed;
  plant.zeros = [g](const PssParams& p) { return transmission_zeros(series_loop(g, p)); };
  return plant;
}

// ---------------------------------------------------------------------------
// Tuning

namespace {

struct Critical {
  std::size_t mode = 0;
  Complex lambda;
  Complex residue;
  double angle = 0.0;
};

Critical critical_mode(const StateSpaceModel& g) {
  const auto ma = eigen_modes(g);
  const auto pf = participation_factors(ma);
  const auto rot = rotor_modes(ma, pf);
  const auto res = residues(g, ma, g.input_labels.at(0), g.output_labels.at(0));
  std::vector<std::size_t> cand;
  for (auto i : rot)
    if (ma.modes[i].lambda.imag() > 0.0) cand.push_back(i);
  if (cand.empty()) throw Error(ErrorCode::Numeric, "no oscillatory rotor mode to target");
  bool any_unstable = false;
  for (auto i : cand) any_unstable |= ma.modes[i].lambda.real() > 0.0;
  // Largest growth rate among unstable modes, else smallest damping ratio;
  // ties go to the larger residue.
  auto key = [&](std::size_t i) { return any_unstable ? ma.modes[i].lambda.real() : -ma.modes[i].damping; };
  std::size_t best = cand.size();
  for (auto i : cand) {
    if (any_unstable && !(ma.modes[i].lambda.real() > 0.0)) continue;
    if (best == cand.size() || key(i) > key(best) ||
        (key(i) == key(best) && res[i].magnitude > res[best].magnitude))
      best = i;
  }
  return {best, ma.modes[best].lambda, res[best].residue, res[best].angle_deg};
}

void finish(TuningResult& r, const TuningPlant& plant, const TuneOptions& opt) {
  const auto cand = r.params;
  auto closed = [&](double k) {
    auto p = cand;
    p.k = k;
    return plant.closed_loop(p);
  };
  auto rl = root_locus(closed, opt.gains);
  auto choice = select_gain(rl);
  // One refinement pass between the neighbours of the coarse optimum.
  const auto it = std::find(rl.gains.begin(), rl.gains.end(), choice.gain);
  const auto idx = static_cast<std::size_t>(it - rl.gains.begin());
  const double lo = rl.gains[std::max<std::size_t>(1, idx - 1)];
  const double hi = rl.gains[std::min(rl.gains.size() - 1, idx + 1)];
  if (hi > lo) {
    std::vector<double> merged = rl.gains;
    for (int i = 1; i < 20; ++i) merged.push_back(lo * std::pow(hi / lo, i / 20.0));
    std::sort(merged.begin(), merged.end());
    merged.erase(std::unique(merged.begin(), merged.end()), merged.end());
    rl = root_locus(closed, merged);
    choice = select_gain(rl);
  }
  r.params.k = choice.gain;
  r.min_damping = choice.min_damping;
  r.stabilizable = choice.stabilizable;
  if (!r.stabilizable) r.warnings.push_back(r.slot + ": not stabilizable by this PSS (best minimum damping ratio <= 0)");
  if (plant.zeros) rl.zeros = plant.zeros(r.params);
  r.locus = std::move(rl);
}

}  // namespace

TuningResult tune_residues(const TuningPlant& plant, const TuneOptions& opt) {
  TuningResult r;
  r.slot = plant.slot;
  r.method = TuningMethod::Residues;
  const auto c = critical_mode(plant.vref_speed);
  r.critical = c.lambda;
  r.residue = c.residue;
  r.residue_angle = c.angle;
  const double theta = compensation_angle(c.angle);
  const double sign = c.angle < 180.0 ? 1.0 : -1.0;
  int n = block_count(theta);
  double design = theta;
  if (n > 2) {
    n = 2;
    design = 2.0 * kMaxBlockPhase;
    r.capped = true;
    r.warnings.push_back(r.slot + ": compensation needs three blocks; two blocks at 60 degrees each used");
  }
  r.blocks = n;
  r.compensation = sign * design;
  const double wc = c.lambda.imag();
  const auto d = leadlag_design(r.compensation, n, wc);
  PssParams p;
  p.tw = washout_for(wc / (2.0 * kPi));
  p.t1 = d.t;
  p.t2 = d.a * d.t;
  if (n == 2) {
    p.t3 = d.t;
    p.t4 = d.a * d.t;
  } else {
    p.t3 = p.t4 = 1.0;
  }
  r.params = p;
  finish(r, plant, opt);
  return r;
}

namespace {

TuningResult pvref_from_phase(const TuningPlant& plant, PhaseResponse phase, const TuneOptions& opt) {
  TuningResult r;
  r.slot = plant.slot;
  r.method = TuningMethod::PVref;
  const auto c = critical_mode(plant.vref_speed);
  r.critical = c.lambda;
  r.residue = c.residue;
  r.residue_angle = c.angle;
  r.phase = std::move(phase);
  const auto fit = fit_leadlag_to_phase(r.phase, 2, 0.2, 2.0, opt.max_lead_ratio);
  r.blocks = 2;
  r.fit_rms = fit.rms_deg;
  if (fit.warning) r.warnings.push_back(r.slot + ": lead-lag fit residual above 20 degrees RMS");
  PssParams p;
  p.tw = washout_for(c.lambda.imag() / (2.0 * kPi));
  p.t1 = fit.t1;
  p.t2 = fit.t2;
  p.t3 = fit.t3;
  p.t4 = fit.t4;
  r.params = p;
  finish(r, plant, opt);
  return r;
}

}  // namespace

TuningResult tune_pvref(const TuningPlant& plant, const TuneOptions& opt) {
  if (opt.use_probe) throw Error(ErrorCode::InvalidArgument, "probe phase needs the model-level tuning entry point");
  if (!plant.frozen_shaft)
    throw Error(ErrorCode::InvalidArgument, "P-Vref tuning needs a frozen-shaft V_ref -> P model of " + plant.host);
  return pvref_from_phase(plant, tf_phase(*plant.frozen_shaft, pvref_grid()), opt);
}

TuningResult tune(const TuningPlant& plant, TuningMethod method, const TuneOptions& opt) {
  return method == TuningMethod::Residues ? tune_residues(plant, opt) : tune_pvref(plant, opt);
}

PhaseResponse frozen_shaft_phase(const PowerSystemModel& model, const std::string& gen,
                                 const std::vector<double>& freq_hz) {
  const auto sys = solve_system(model);
  return tf_phase(frozen_shaft_linearize(*sys.dae, sys.op.point, gen), freq_hz);
}

PhaseResponse probe_pvref_phase(const PowerSystemModel& model, const std::string& gen,
                                const std::vector<double>& freq_hz, double inertia_scale, const ProbeOptions& opt) {
  check_grid(freq_hz);
  if (!(inertia_scale > 0)) throw Error(ErrorCode::InvalidArgument, "inertia scale must be > 0");
  auto m = model;
  for (auto& s : m.machines) s.h *= inertia_scale;
  const auto sys = solve_system(m);
  std::vector<Complex> h;
  for (double f : freq_hz) h.push_back(vref_probe(*sys.dae, sys.op.point, gen, f, 1e-3, opt));
  return from_gains(freq_hz, h, "simulation-probe");
}

TuningResult tune_slot(const PowerSystemModel& model, const std::string& slot, TuningMethod method,
                       const TuneOptions& opt) {
  const auto plant = model_plant(model, slot);
  if (method == TuningMethod::PVref && opt.use_probe) {
    auto base = model;
    base.pss_host(slot).pss->k = 0.0;
    return pvref_from_phase(plant, probe_pvref_phase(base, plant.host, pvref_grid(), 1e6, opt.probe), opt);
  }
  return tune(plant, method, opt);
}

// ---------------------------------------------------------------------------
// Orchestration

ModalSummary modal_summary(const PowerSystemModel& model) {
  const auto sys = solve_system(model);
  const auto ss = linearize(*sys.dae, sys.op.point, {}, {});
  const auto ma = eigen_modes(ss);
  const auto pf = participation_factors(ma);
  ModalSummary s;
  s.stable = ma.stable;
  s.max_sigma = -std::numeric_limits<double>::infinity();
  for (const auto& m : ma.modes)
    if (!m.neutral) s.max_sigma = std::max(s.max_sigma, m.lambda.real());
  for (auto i : rotor_modes(ma, pf)) {
    const auto& m = ma.modes[i];
    if (m.lambda.imag() <= 0.0) continue;
    if (m.damping < s.min_rotor_damping) {
      s.min_rotor_damping = m.damping;
      s.least_damped_rotor = m.lambda;
    }
  }
  return s;
}

namespace {

void install(PowerSystemModel& m, const TuningResult& r) {
  auto& slot = *m.pss_host(r.slot).pss;
  const double vmin = slot.vmin, vmax = slot.vmax;
  slot = r.params;
  slot.vmin = vmin;
  slot.vmax = vmax;
}

void summarize(RetuneOutcome& out) {
  const auto s = modal_summary(out.model);
  out.stable = s.stable;
  out.min_rotor_damping = s.min_rotor_damping;
}

}  // namespace

RetuneOutcome retune_sequential(const PowerSystemModel& model, const std::vector<std::string>& order,
                                TuningMethod method, const TuneOptions& opt) {
  if (order.empty()) throw Error(ErrorCode::InvalidArgument, "sequential re-tuning needs at least one PSS slot");
  RetuneOutcome out;
  out.model = model;
  for (const auto& slot : order) {
    try {
      auto r = tune_slot(out.model, slot, method, opt);
      install(out.model, r);
      out.steps.push_back(std::move(r));
    } catch (const Error& e) {
      out.errors.push_back(slot + ": " + e.what());
    }
  }
  summarize(out);
  return out;
}

RetuneOutcome retune_uncoordinated(const PowerSystemModel& model, const std::vector<std::string>& slots,
                                   TuningMethod method, const TuneOptions& opt) {
  if (slots.empty()) throw Error(ErrorCode::InvalidArgument, "uncoordinated re-tuning needs at least one PSS slot");
  RetuneOutcome out;
  out.model = model;
  for (const auto& slot : slots) {
    try {
      out.steps.push_back(tune_slot(model, slot, method, opt));
    } catch (const Error& e) {
      out.errors.push_back(slot + ": " + e.what());
    }
  }
  for (const auto& r : out.steps) install(out.model, r);
  summarize(out);
  return out;
}

void write_tuning_csv(std::ostream& os, const std::vector<TuningResult>& results) {
  os << "slot,method,K_PSS,T_W,T1,T2,T3,T4,min_damping,stabilizable\n";
  char buf[256];
  for (const auto& r : results) {
    const auto& p = r.params;
    std::snprintf(buf, sizeof buf, "%s,%s,%.6g,%g,%.4f,%.4f,%.4f,%.4f,%.6f,%s\n", r.slot.c_str(), to_string(r.method),
                  p.k, p.tw, p.t1, p.t2, p.t3, p.t4, r.min_damping, r.stabilizable ? "yes" : "no");
    os << buf;
  }
}

}  // namespace pstab
