#include "pstab/time_sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <sstream>

#include <unsupported/Eigen/NonLinearOptimization>

namespace pstab {

void Disturbance::validate() const {
  if (start_time < 0) throw Error(ErrorCode::InvalidArgument, "disturbance start_time must be >= 0");
  if (target.empty()) throw Error(ErrorCode::InvalidArgument, "disturbance has no target");
  if (kind == DisturbanceKind::VrefSinusoid) {
    if (magnitude == 0.0) throw Error(ErrorCode::InvalidArgument, "sinusoid amplitude must be nonzero");
    if (!(frequency > 0.0)) throw Error(ErrorCode::InvalidArgument, "sinusoid frequency must be > 0");
  }
  if (!std::isfinite(magnitude)) throw Error(ErrorCode::InvalidArgument, "disturbance magnitude must be finite");
}

std::string Disturbance::input_label() const {
  if (target.find('.') != std::string::npos) return target;
  return target + (kind == DisturbanceKind::LoadStep ? ".scale" : ".Vref");
}

Disturbance apply_load_step(const PowerSystemModel& model, int bus, double fraction, double t) {
  for (const auto& l : model.loads) {
    if (l.bus == bus) {
      Disturbance d{DisturbanceKind::LoadStep, l.name, fraction, t, 0.0};
      d.validate();
      return d;
    }
  }
  throw Error(ErrorCode::InvalidArgument, "no load at bus " + std::to_string(bus));
}

Disturbance vref_sinusoid(const std::string& gen, double amplitude, double freq_hz, double start_time) {
  Disturbance d{DisturbanceKind::VrefSinusoid, gen, amplitude, start_time, freq_hz};
  d.validate();
  return d;
}

const std::vector<double>& Trajectory::channel(const std::string& name) const {
  return data[index_of(channels, name, "trajectory channel")];
}

const char* to_string(StabilityClass c) {
  switch (c) {
    case StabilityClass::Decaying: return "decaying";
    case StabilityClass::Sustained: return "sustained";
    case StabilityClass::Growing: return "growing";
  }
  return "decaying";
}

namespace {

constexpr double kEventEps = 1e-9;

struct InputSchedule {
  struct Item {
    std::size_t index;
    Disturbance d;
  };
  std::vector<Item> items;
  Vec u0;

  // Right limit at t (events at t already applied) or left limit.
  Vec at(double t, bool right) const {
    Vec u = u0;
    for (const auto& it : items) {
      const auto& d = it.d;
      const bool on = right ? t >= d.start_time - kEventEps : t > d.start_time + kEventEps;
      if (!on) continue;
      if (d.kind == DisturbanceKind::LoadStep) {
        u[static_cast<Eigen::Index>(it.index)] *= 1.0 + d.magnitude;
      } else {
        u[static_cast<Eigen::Index>(it.index)] += d.magnitude * std::sin(2.0 * kPi * d.frequency * (t - d.start_time));
      }
    }
    return u;
  }
};

class Stepper {
 public:
  Stepper(const Dae& dae, const SimOptions& opt) : dae_(dae), opt_(opt) {
    nx_ = static_cast<Eigen::Index>(dae.num_states());
    ny_ = static_cast<Eigen::Index>(dae.num_algebraic());
  }

  // Solve g(x, y, u) = 0 for y with x held.
  void reinit_algebraic(const Vec& x, Vec& y, const Vec& u, double t) {
    if (ny_ == 0) return;
    Vec f, g;
    for (int it = 0; it < opt_.max_newton * 2; ++it) {
      dae_.residual(x, y, u, f, g);
      if (g.cwiseAbs().maxCoeff() <= 1e-12) return;
      Mat gy(ny_, ny_);
      Vec f1, g1, f2, g2;
      for (Eigen::Index k = 0; k < ny_; ++k) {
        Vec yp = y, ym = y;
        const double h = 1e-7 * std::max(1.0, std::abs(y[k]));
        yp[k] += h;
        ym[k] -= h;
        dae_.residual(x, yp, u, f1, g1);
        dae_.residual(x, ym, u, f2, g2);
        gy.col(k) = (g1 - g2) / (2 * h);
      }
      y -= gy.partialPivLu().solve(g);
    }
    dae_.residual(x, y, u, f, g);
    if (g.cwiseAbs().maxCoeff() > opt_.newton_tol) fail(t, "algebraic re-initialization did not converge");
  }

  // One trapezoidal step; x, y updated in place.
  void step(Vec& x, Vec& y, const Vec& f_prev, const Vec& u_next, double dt, double t_next) {
    const Vec x_prev = x;
    Vec f, g;
    auto residual = [&](Vec& r) {
      dae_.residual(x, y, u_next, f, g);
      r.resize(nx_ + ny_);
      r.head(nx_) = x - x_prev - 0.5 * dt * (f_prev + f);
      r.tail(ny_) = g;
    };
    for (int attempt = 0; attempt < 2; ++attempt) {
      if (!have_lu_ || dt != lu_dt_) refresh(x, y, u_next, dt);
      Vec r;
      bool ok = false;
      for (int it = 0; it < opt_.max_newton; ++it) {
        residual(r);
        const double rn = r.cwiseAbs().maxCoeff();
        if (!std::isfinite(rn)) break;
        if (rn <= 1e-13) {
          ok = true;
          break;
        }
        const Vec dz = lu_.solve(r);
        x -= dz.head(nx_);
        y -= dz.tail(ny_);
        const double scale = std::max(1.0, std::max(x.cwiseAbs().maxCoeff(), ny_ ? y.cwiseAbs().maxCoeff() : 0.0));
        if (dz.cwiseAbs().maxCoeff() <= 1e-11 * scale && rn <= opt_.newton_tol) {
          ok = true;
          break;
        }
        if (it >= 3 && attempt == 0) break;  // slow contraction: refresh the Jacobian
      }
      if (ok) return;
      x = x_prev;
      have_lu_ = false;
      if (attempt == 0) {
        // restart from the previous point with a fresh Jacobian
        continue;
      }
    }
    fail(t_next, "Newton corrector diverged");
  }

  void invalidate() { have_lu_ = false; }

 private:
  [[noreturn]] void fail(double t, const char* what) const {
    std::ostringstream os;
    os << "time simulation failed at t = " << t << " s: " << what;
    throw Error(ErrorCode::Convergence, os.str());
  }

  void refresh(const Vec& x, const Vec& y, const Vec& u, double dt) {
    const auto n = nx_ + ny_;
    Mat j(n, n);
    Vec f1, g1, f2, g2;
    for (Eigen::Index k = 0; k < n; ++k) {
      Vec xp = x, yp = y, xm = x, ym = y;
      double& vp = k < nx_ ? xp[k] : yp[k - nx_];
      double& vm = k < nx_ ? xm[k] : ym[k - nx_];
      const double h = 1e-7 * std::max(1.0, std::abs(vp));
      vp += h;
      vm -= h;
      dae_.residual(xp, yp, u, f1, g1);
      dae_.residual(xm, ym, u, f2, g2);
      j.col(k).head(nx_) = -0.5 * dt * (f1 - f2) / (2 * h);
      j.col(k).tail(ny_) = (g1 - g2) / (2 * h);
      if (k < nx_) j(k, k) += 1.0;
    }
    lu_.compute(j);
    lu_dt_ = dt;
    have_lu_ = true;
  }

  const Dae& dae_;
  const SimOptions& opt_;
  Eigen::Index nx_ = 0, ny_ = 0;
  Eigen::PartialPivLU<Mat> lu_;
  double lu_dt_ = 0.0;
  bool have_lu_ = false;
};

}  // namespace

Trajectory simulate(const Dae& dae, const DaePoint& p0, const std::vector<Disturbance>& disturbances,
                    const SimOptions& opt) {
  dae.check_dims(p0.x, p0.y, p0.u);
  if (!(opt.dt > 0.0)) throw Error(ErrorCode::InvalidArgument, "time step must be > 0");
  if (!(opt.t_end > 0.0)) throw Error(ErrorCode::InvalidArgument, "t_end must be > 0");

  InputSchedule sched;
  sched.u0 = p0.u;
  for (const auto& d : disturbances) {
    d.validate();
    sched.items.push_back({index_of(dae.input_labels(), d.input_label(), "input"), d});
  }

  // Channel sources: outputs first, then states.
  Labels channels = opt.channels.empty() ? dae.output_labels() : opt.channels;
  std::vector<std::pair<bool, std::size_t>> src;  // (is_output, index)
  for (const auto& c : channels) {
    const auto& outs = dae.output_labels();
    const auto& sts = dae.state_labels();
    if (auto it = std::find(outs.begin(), outs.end(), c); it != outs.end())
      src.emplace_back(true, static_cast<std::size_t>(it - outs.begin()));
    else
      src.emplace_back(false, index_of(sts, c, "channel"));
  }

  Trajectory traj;
  traj.channels = channels;
  traj.data.resize(channels.size());
  traj.scenario = opt.scenario;
  traj.dt = opt.dt;
  const auto steps = static_cast<long>(std::llround(opt.t_end / opt.dt));
  traj.time.reserve(static_cast<std::size_t>(steps) + 1);
  for (auto& d : traj.data) d.reserve(static_cast<std::size_t>(steps) + 1);

  Vec x = p0.x, y = p0.y, z;
  auto record = [&](double t, const Vec& u) {
    traj.time.push_back(t);
    dae.outputs(x, y, u, z);
    for (std::size_t c = 0; c < src.size(); ++c)
      traj.data[c].push_back(src[c].first ? z[static_cast<Eigen::Index>(src[c].second)]
                                          : x[static_cast<Eigen::Index>(src[c].second)]);
  };
  record(0.0, sched.at(0.0, false));

  Stepper stepper(dae, opt);
  Vec f, g;
  for (long k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) * opt.dt;
    const double t_next = static_cast<double>(k + 1) * opt.dt;
    const Vec u_left = sched.at(t, false);
    const Vec u_right = sched.at(t, true);
    if (u_right != u_left) {
      stepper.reinit_algebraic(x, y, u_right, t);
      stepper.invalidate();
    }
    dae.residual(x, y, u_right, f, g);
    stepper.step(x, y, f, sched.at(t_next, false), opt.dt, t_next);
    record(t_next, sched.at(t_next, false));
  }
  return traj;
}

// ---------------------------------------------------------------------------
// Stability classification

namespace {

struct DampedCosine {
  using Scalar = double;
  using InputType = Vec;
  using ValueType = Vec;
  using JacobianType = Mat;
  enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };

  const std::vector<double>* tau;
  const std::vector<double>* s;

  int inputs() const { return 7; }
  int values() const { return static_cast<int>(tau->size()); }

  // p = [A, sigma, omega, phi, c, B, rho]
  int operator()(const Vec& p, Vec& r) const {
    for (std::size_t i = 0; i < tau->size(); ++i) {
      const double t = (*tau)[i];
      r[static_cast<Eigen::Index>(i)] =
          p[0] * std::exp(p[1] * t) * std::cos(p[2] * t + p[3]) + p[4] + p[5] * std::exp(p[6] * t) - (*s)[i];
    }
    return 0;
  }
  int df(const Vec& p, Mat& j) const {
    for (std::size_t i = 0; i < tau->size(); ++i) {
      const double t = (*tau)[i];
      const auto r = static_cast<Eigen::Index>(i);
      const double e = std::exp(p[1] * t), c = std::cos(p[2] * t + p[3]), sn = std::sin(p[2] * t + p[3]);
      const double er = std::exp(p[6] * t);
      j(r, 0) = e * c;
      j(r, 1) = p[0] * t * e * c;
      j(r, 2) = -p[0] * e * t * sn;
      j(r, 3) = -p[0] * e * sn;
      j(r, 4) = 1.0;
      j(r, 5) = er;
      j(r, 6) = p[5] * t * er;
    }
    return 0;
  }
};

double rms(const std::vector<double>& v, std::size_t a, std::size_t b, double c) {
  double s = 0.0;
  for (std::size_t i = a; i < b; ++i) s += (v[i] - c) * (v[i] - c);
  return std::sqrt(s / static_cast<double>(std::max<std::size_t>(1, b - a)));
}

struct WindowFit {
  bool flat = false;
  bool fallback = false;
  double sigma = 0.0;
  double freq_hz = 0.0;
  double amplitude = 0.0;  // largest fitted oscillation amplitude in the window
  double r2 = 0.0;
};

// tau starts at 0.
WindowFit fit_damped_cosine(const std::vector<double>& tau, const std::vector<double>& s, double dt) {
  WindowFit out;
  const std::size_t n = s.size();
  const double span = tau.back();
  double mean = 0.0;
  for (double val : s) mean += val;
  mean /= static_cast<double>(n);
  const auto [lo, hi] = std::minmax_element(s.begin(), s.end());
  const double range = *hi - *lo;
  if (range <= 1e-10 * (1.0 + std::abs(mean))) {
    out.flat = true;
    out.sigma = -1e3;
    return out;
  }
  double ss_tot = 0.0;
  for (double val : s) ss_tot += (val - mean) * (val - mean);

  // Frequency seed: Hann-windowed periodogram peak.
  const double f_max = std::min(10.0, 0.4 / std::max(dt, 1e-6));
  const double f_step = 0.2 / span;
  double best_w = 0.0, best_p = -1.0;
  for (double fhz = 0.05; fhz <= f_max; fhz += f_step) {
    const double w = 2.0 * kPi * fhz;
    Complex acc{0.0, 0.0};
    for (std::size_t i = 0; i < n; ++i) {
      const double win = 0.5 - 0.5 * std::cos(2.0 * kPi * tau[i] / span);
      acc += win * (s[i] - mean) * std::polar(1.0, -w * tau[i]);
    }
    if (std::abs(acc) > best_p) {
      best_p = std::abs(acc);
      best_w = w;
    }
  }
  const std::size_t half = n / 2;
  const double c_end = [&] {
    double acc = 0.0;
    const std::size_t from = n - n / 5;
    for (std::size_t i = from; i < n; ++i) acc += s[i];
    return acc / static_cast<double>(n - from);
  }();
  const double r1 = rms(s, 0, half, c_end), r2 = rms(s, half, n, c_end);
  const double sigma_env = r1 > 0 && r2 > 0 ? std::log(r2 / r1) / (span / 2.0) : 0.0;

  DampedCosine fn{&tau, &s};
  double best_cost = std::numeric_limits<double>::infinity();
  Vec best;
  for (double rho0 : {-0.2, -1.0}) {
    for (double phi0 : {0.0, kPi / 2, kPi, -kPi / 2}) {
      Vec p(7);
      p << std::sqrt(2.0) * r1 * std::exp(-sigma_env * span / 4.0), sigma_env, best_w, phi0, c_end, 0.0, rho0;
      Eigen::LevenbergMarquardt<DampedCosine> lm(fn);
      lm.parameters.maxfev = 4000;
      lm.minimize(p);
      Vec r(static_cast<Eigen::Index>(n));
      fn(p, r);
      const double cost = r.squaredNorm();
      if (p.allFinite() && cost < best_cost) {
        best_cost = cost;
        best = p;
      }
    }
  }
  const double nyquist = kPi / std::max(dt, 1e-6);
  const bool fit_ok = best.size() == 7 && std::abs(best[2]) > 1e-3 && std::abs(best[2]) < nyquist &&
                      best_cost <= 0.5 * ss_tot;
  if (fit_ok) {
    out.sigma = best[1];
    out.freq_hz = std::abs(best[2]) / (2.0 * kPi);
    out.amplitude = std::abs(best[0]) * std::max(1.0, std::exp(best[1] * span));
    out.r2 = 1.0 - best_cost / ss_tot;
    // A growing aperiodic component also counts as instability.
    const double drift_end = std::abs(best[5]) * std::exp(best[6] * span);
    if (best[6] > kGrowingSigma && drift_end > 0.05 * range) out.sigma = std::max(out.sigma, best[6]);
  } else {
    out.fallback = true;
    out.sigma = sigma_env;
    out.freq_hz = best_w / (2.0 * kPi);
    out.amplitude = std::sqrt(2.0) * std::max(r1, r2);
  }
  return out;
}

StabilityClass classify_sigma(double sigma) {
  return sigma > kGrowingSigma ? StabilityClass::Growing
         : sigma < -kGrowingSigma ? StabilityClass::Decaying
                                  : StabilityClass::Sustained;
}

}  // namespace

StabilityVerdict classify_stability(const Trajectory& traj, const std::string& channel, double t_from) {
  const auto& raw = traj.channel(channel);
  StabilityVerdict v;
  v.channel = channel;
  std::vector<double> tau, s;
  for (std::size_t i = 0; i < traj.time.size(); ++i) {
    if (traj.time[i] >= t_from - 1e-12) {
      tau.push_back(traj.time[i] - t_from);
      s.push_back(raw[i]);
    }
  }
  if (tau.empty() || tau.back() < 10.0 - 1e-9)
    throw Error(ErrorCode::InvalidArgument, "stability classification needs >= 10 s of post-disturbance data");

  const auto global = fit_damped_cosine(tau, s, traj.dt);
  if (global.flat) {
    v.cls = StabilityClass::Decaying;
    v.sigma = global.sigma;
    v.oscillation_free = true;
    return v;
  }
  v.sigma = global.sigma;
  v.freq_hz = global.freq_hz;
  v.fallback = global.fallback;

  // Growth that later saturates on a limiter shows up only in part of the
  // record, so shorter windows are fitted as well.
  constexpr double kWindow = 5.0, kStride = 2.5;
  std::vector<WindowFit> fits;
  for (double w0 = 0.0; w0 + kWindow <= tau.back() + 1e-9; w0 += kStride) {
    std::vector<double> wt, ws;
    for (std::size_t i = 0; i < tau.size(); ++i) {
      if (tau[i] >= w0 - 1e-12 && tau[i] <= w0 + kWindow + 1e-12) {
        wt.push_back(tau[i] - w0);
        ws.push_back(s[i]);
      }
    }
    if (wt.size() >= 20) fits.push_back(fit_damped_cosine(wt, ws, traj.dt));
  }
  double top_amp = 0.0;
  for (const auto& f : fits)
    if (!f.flat && !f.fallback) top_amp = std::max(top_amp, f.amplitude);
  for (const auto& f : fits) {
    if (f.flat || f.fallback || f.r2 < 0.9 || f.amplitude < 0.05 * top_amp) continue;
    if (f.sigma > kGrowingSigma && f.sigma > (classify_sigma(v.sigma) == StabilityClass::Growing ? v.sigma : 0.0)) {
      v.sigma = f.sigma;
      v.freq_hz = f.freq_hz;
      v.fallback = false;
    }
  }
  v.cls = classify_sigma(v.sigma);
  return v;
}

// ---------------------------------------------------------------------------
// Sinusoidal probe

namespace {

// Phasor a - jb of s ~ a cos wt + b sin wt + c + d t.
Complex single_frequency_fit(const std::vector<double>& t, const std::vector<double>& s, double w) {
  const auto n = static_cast<Eigen::Index>(t.size());
  Mat m(n, 4);
  Vec rhs(n);
  const double t0 = t.front();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double ti = t[static_cast<std::size_t>(i)];
    m(i, 0) = std::cos(w * ti);
    m(i, 1) = std::sin(w * ti);
    m(i, 2) = 1.0;
    m(i, 3) = ti - t0;
    rhs[i] = s[static_cast<std::size_t>(i)];
  }
  const Vec coef = m.colPivHouseholderQr().solve(rhs);
  return {coef[0], -coef[1]};
}

}  // namespace

Complex sinusoid_probe(const Dae& dae, const DaePoint& p0, const std::string& input, const std::string& output,
                       double freq_hz, double amplitude, const ProbeOptions& opt) {
  if (!(freq_hz > 0)) throw Error(ErrorCode::InvalidArgument, "probe frequency must be > 0");
  const double period = 1.0 / freq_hz;
  const long per_cycle =
      std::max<long>(opt.min_samples_per_cycle, static_cast<long>(std::ceil(period / opt.max_dt - 1e-9)));
  SimOptions so;
  so.dt = period / static_cast<double>(per_cycle);
  so.t_end = period * (opt.discard_cycles + opt.measure_cycles);
  so.channels = {output};
  Disturbance d{DisturbanceKind::VrefSinusoid, input, amplitude, 0.0, freq_hz};
  const auto traj = simulate(dae, p0, {d}, so);

  const std::size_t measured = static_cast<std::size_t>(per_cycle * opt.measure_cycles);
  std::vector<double> t(traj.time.end() - static_cast<long>(measured) - 1, traj.time.end() - 1);
  std::vector<double> y(traj.data[0].end() - static_cast<long>(measured) - 1, traj.data[0].end() - 1);
  const double w = 2.0 * kPi * freq_hz;
  std::vector<double> uin(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) uin[i] = amplitude * std::sin(w * t[i]);
  const Complex out = single_frequency_fit(t, y, w);
  const Complex in = single_frequency_fit(t, uin, w);
  if (std::abs(out) < 1e-14 * std::abs(amplitude))
    throw Error(ErrorCode::Numeric, "probe response of " + output + " is below the numerical floor");
  return out / in;
}

Complex vref_probe(const GridDae& dae, const DaePoint& p0, const std::string& gen, double freq_hz, double amplitude,
                   const ProbeOptions& opt) {
  const auto& m = dae.model().machine(gen);
  if (!m.avr) throw Error(ErrorCode::InvalidArgument, gen + " has no AVR");
  return sinusoid_probe(dae, p0, gen + ".Vref", gen + ".P", freq_hz, amplitude, opt);
}

void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  os << "time";
  for (const auto& c : traj.channels) os << ',' << c;
  os << '\n';
  char buf[40];
  for (std::size_t i = 0; i < traj.time.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.6f", traj.time[i]);
    os << buf;
    for (const auto& d : traj.data) {
      std::snprintf(buf, sizeof buf, ",%.12g", d[i]);
      os << buf;
    }
    os << '\n';
  }
}

}  // namespace pstab
