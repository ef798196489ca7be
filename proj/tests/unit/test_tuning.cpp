#include <doctest.h>

#include "pstab/scenario.hpp"
#include "pstab/tuning.hpp"
#include "support.hpp"

using namespace pstab;

namespace {

double chain_phase_deg(double t1, double t2, double t3, double t4, double w) {
  const Complex j{0.0, 1.0};
  return deg(std::arg((1.0 + j * w * t1) / (1.0 + j * w * t2) * (1.0 + j * w * t3) / (1.0 + j * w * t4)));
}

// Swing plant with a first-order field lag: V_ref -> field -> speed.
StateSpaceModel swing_plant(double t_field) {
  const double wb = 2.0 * kPi * 60.0, h = 5.0, ks = 1.0, d = 0.5;
  StateSpaceModel ss;
  ss.a = Mat{{0.0, wb, 0.0}, {-ks / (2 * h), -d / (2 * h), -1.0 / (2 * h)}, {0.0, 0.0, -1.0 / t_field}};
  ss.b = Mat{{0.0}, {0.0}, {1.0 / t_field}};
  ss.c = Mat{{0.0, 1.0, 0.0}};
  ss.d = Mat::Zero(1, 1);
  ss.state_labels = {"G4.delta", "G4.dw", "G4.eq1"};
  ss.input_labels = {"G4.Vref"};
  ss.output_labels = {"G4.dw"};
  return ss;
}

PowerSystemModel with_set(IbrShare share, const std::string& set) {
  auto m = build_two_area(share);
  for (auto& g : m.machines)
    if (g.pss) *g.pss = legacy_set(set);
  return m;
}

RootLocus synthetic_locus(const std::vector<double>& gains, const std::vector<std::vector<double>>& xi) {
  RootLocus rl;
  rl.gains = gains;
  for (std::size_t i = 0; i < gains.size(); ++i) {
    std::vector<Complex> row;
    for (const auto& branch : xi) {
      const double z = branch[i], w = 5.0;
      row.push_back(w * Complex{-z, std::sqrt(1.0 - z * z)});
    }
    rl.poles.push_back(row);
    rl.rotor.emplace_back(xi.size(), 1.0);
  }
  return rl;
}

}  // namespace

TEST_CASE("compensation angle") {
  CHECK(compensation_angle(100.0) == doctest::Approx(80.0).epsilon(1e-12));
  CHECK(compensation_angle(350.0) == doctest::Approx(170.0).epsilon(1e-12));
  CHECK(compensation_angle(180.0) == 0.0);
  CHECK_THROWS_AS(compensation_angle(360.0), Error);
}

TEST_CASE("block count boundaries") {
  CHECK(block_count(45.0) == 1);
  CHECK(block_count(59.999) == 1);
  CHECK(block_count(60.0) == 2);
  CHECK(block_count(119.999) == 2);
  CHECK(block_count(120.0) == 3);
  CHECK(block_count(130.0) == 3);
}

TEST_CASE("lead-lag design worked example") {
  const double wc = 2.0 * kPi * 0.6;
  const auto d = leadlag_design(80.0, 2, wc);
  // Independent evaluation: 40 degrees per block.
  const double s = std::sin(40.0 * kPi / 180.0);
  const double a = (1.0 - s) / (1.0 + s);
  const double t = 1.0 / (wc * std::sqrt(a));
  CHECK(d.a == doctest::Approx(a).epsilon(1e-6));
  CHECK(d.t == doctest::Approx(t).epsilon(1e-6));
  CHECK(s == doctest::Approx(0.64279).epsilon(1e-5));
}

TEST_CASE("every design satisfies the per-block phase identity") {
  for (double theta : {-110.0, -75.0, -30.0, -5.0, 5.0, 30.0, 59.0, 60.0, 80.0, 119.0}) {
    for (int n : {1, 2, 3}) {
      if (std::abs(theta / n) >= 90.0) continue;
      for (double wc : {0.5, 3.77, 20.0}) {
        const auto d = leadlag_design(theta, n, wc);
        const double sin_phi = (1.0 - d.a) / (1.0 + d.a);
        CHECK(std::abs(sin_phi - std::sin(rad(theta / n))) <= 1e-9);
        // Direct complex evaluation of the N-block chain at the design frequency.
        const Complex j{0.0, 1.0};
        const Complex block = (1.0 + j * wc * d.t) / (1.0 + j * wc * d.a * d.t);
        CHECK(std::abs(deg(std::arg(std::pow(block, n))) - theta) <= 1e-6);
        CHECK(std::abs(leadlag_phase_deg(d, wc) - theta) <= 1e-6);
      }
    }
  }
}

TEST_CASE("damping ratio") {
  CHECK(damping_ratio(Complex{-1.0, 1.0}) == doctest::Approx(0.70711).epsilon(1e-5));
  CHECK(damping_ratio(Complex{-1.0, 1.0}) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
  CHECK(damping_ratio(Complex{0.5, 3.0}) < 0.0);
}

TEST_CASE("washout follows the critical-mode frequency") {
  CHECK(washout_for(0.6) == 10.0);
  CHECK(washout_for(1.99) == 10.0);
  CHECK(washout_for(2.0) == 1.0);
  CHECK(washout_for(6.0) == 1.0);
}

TEST_CASE("PSS state-space model reproduces the PSS transfer function") {
  const PssParams p{25.0, 10.0, 0.3, 0.05, 0.2, 0.02, -0.1, 0.1};
  const auto ss = pss_state_space(p, "PSS4");
  for (double w : {0.1, 1.0, 6.0, 40.0}) {
    const Complex j{0.0, 1.0};
    const Complex oracle = p.k * (j * w * p.tw) / (1.0 + j * w * p.tw) * (1.0 + j * w * p.t1) / (1.0 + j * w * p.t2) *
                           (1.0 + j * w * p.t3) / (1.0 + j * w * p.t4);
    CHECK(std::abs(tf_eval(ss, j * w) - oracle) <= 1e-10 * std::abs(oracle));
    CHECK(std::abs(pss_response(p, w) - oracle) <= 1e-12 * std::abs(oracle));
  }
}

TEST_CASE("closing a PSS loop matches the hand-built interconnection") {
  const auto g = swing_plant(0.5);
  const PssParams p{12.0, 10.0, 0.3, 0.05, 0.3, 0.05, -0.1, 0.1};
  const auto cl = close_pss_loop(g, "G4.Vref", "G4.dw", p, "PSS4");
  const auto ps = pss_state_space(p, "PSS4");
  const Eigen::Index n = g.a.rows(), m = ps.a.rows();
  Mat a(n + m, n + m);
  a << g.a + g.b * ps.d * g.c, g.b * ps.c, ps.b * g.c, ps.a;
  Eigen::VectorXcd l1 = cl.a.eigenvalues(), l2 = a.eigenvalues();
  for (const auto& l : l1) {
    double best = 1e300;
    for (const auto& k : l2) best = std::min(best, std::abs(k - l));
    CHECK(best <= 1e-9 * std::max(1.0, std::abs(l)));
  }
}

TEST_CASE("root locus of a scalar proportional loop") {
  const auto gains = gain_grid(0.1, 10.0, 15);
  const auto rl = root_locus(
      [](double k) {
        StateSpaceModel ss;
        ss.a = Mat{{-1.0 + k}};
        ss.b = Mat::Zero(1, 1);
        ss.c = Mat::Zero(1, 1);
        ss.d = Mat::Zero(1, 1);
        ss.state_labels = {"x"};
        ss.input_labels = {"u"};
        ss.output_labels = {"y"};
        return ss;
      },
      gains);
  REQUIRE(rl.gains.size() == 16);
  CHECK(rl.gains.front() == 0.0);
  for (std::size_t i = 0; i < rl.gains.size(); ++i) {
    REQUIRE(rl.poles[i].size() == 1);
    CHECK(std::abs(rl.poles[i][0] - Complex(-1.0 + rl.gains[i])) <= 1e-12);
  }
}

TEST_CASE("gain grid spans the requested decades") {
  const auto g = gain_grid();
  REQUIRE(g.size() == 61);
  CHECK(g[0] == 0.0);
  CHECK(g[1] == doctest::Approx(0.1));
  CHECK(g.back() == doctest::Approx(1000.0));
  for (std::size_t i = 2; i < g.size(); ++i) CHECK(g[i] > g[i - 1]);
}

TEST_CASE("gain selection picks the crossing of two trading branches") {
  std::vector<double> gains{0.0};
  std::vector<double> rising, falling;
  for (int i = 0; i < 30; ++i) gains.push_back(std::pow(10.0, -1.0 + 4.0 * i / 29.0));
  for (std::size_t i = 0; i < gains.size(); ++i) {
    const double t = static_cast<double>(i) / (gains.size() - 1);
    rising.push_back(0.02 + 0.5 * t);
    falling.push_back(0.4 - 0.45 * t * t);
  }
  const auto rl = synthetic_locus(gains, {rising, falling});
  std::size_t oracle = 1;
  for (std::size_t i = 1; i < gains.size(); ++i)
    if (std::min(rising[i], falling[i]) > std::min(rising[oracle], falling[oracle])) oracle = i;
  const auto choice = select_gain(rl);
  CHECK(choice.gain == gains[oracle]);
  CHECK(choice.min_damping == doctest::Approx(std::min(rising[oracle], falling[oracle])).epsilon(1e-12));
  CHECK(choice.stabilizable);

  SUBCASE("uniform scaling of the damping curves keeps the choice") {
    for (double c : {0.25, 0.6, 1.7}) {
      std::vector<double> r2, f2;
      for (std::size_t i = 0; i < gains.size(); ++i) {
        r2.push_back(c * rising[i] / 1.7);
        f2.push_back(c * falling[i] / 1.7);
      }
      CHECK(select_gain(synthetic_locus(gains, {r2, f2})).gain == choice.gain);
    }
  }
  SUBCASE("an unstable best point is flagged") {
    std::vector<double> neg;
    for (double x : rising) neg.push_back(x - 0.6);
    CHECK_FALSE(select_gain(synthetic_locus(gains, {neg})).stabilizable);
  }
}

TEST_CASE("phase of a first-order plant") {
  const double t = 0.2;
  StateSpaceModel ss;
  ss.a = Mat{{-1.0 / t}};
  ss.b = Mat{{1.0 / t}};
  ss.c = Mat{{1.0}};
  ss.d = Mat::Zero(1, 1);
  ss.state_labels = {"x"};
  ss.input_labels = {"u"};
  ss.output_labels = {"y"};
  const auto grid = pvref_grid();
  const auto ph = tf_phase(ss, grid);
  for (std::size_t i = 0; i < grid.size(); ++i)
    CHECK(std::abs(ph.phase_deg[i] + deg(std::atan(2.0 * kPi * grid[i] * t))) <= 0.1);
}

TEST_CASE("lead-lag fit recovers a known compensator") {
  PhaseResponse target;
  target.freq_hz = pvref_grid();
  for (double f : target.freq_hz)
    target.phase_deg.push_back(-chain_phase_deg(0.25, 0.04, 0.25, 0.04, 2.0 * kPi * f));
  const auto fit = fit_leadlag_to_phase(target, 2);
  CHECK(fit.t1 == doctest::Approx(0.25).epsilon(0.02));
  CHECK(fit.t2 == doctest::Approx(0.04).epsilon(0.02));
  CHECK(fit.t3 == fit.t1);
  CHECK(fit.t4 == fit.t2);
  CHECK(fit.rms_deg < 0.5);
  CHECK_FALSE(fit.warning);

  const auto bounded = fit_leadlag_to_phase(target, 2, 0.2, 2.0, 4.0);
  CHECK(bounded.t1 / bounded.t2 <= 4.0 * (1.0 + 1e-9));
}

TEST_CASE("residue tuning on a plant needing one block") {
  const auto g = swing_plant(0.02);
  const auto plant = state_space_plant(g, "G4", "PSS4");
  const auto r = tune_residues(plant);
  REQUIRE(r.blocks == 1);
  CHECK(r.params.t3 == 1.0);
  CHECK(r.params.t4 == 1.0);
  CHECK(std::abs(r.compensation) < 60.0);
  CHECK(std::abs(chain_phase_deg(r.params.t1, r.params.t2, 1.0, 1.0, r.critical.imag()) - r.compensation) <= 1e-6);
  CHECK(r.stabilizable);
  CHECK(r.min_damping > 0.0);
}

TEST_CASE("residue tuning on a plant needing two blocks") {
  const auto g = swing_plant(1.0);
  const auto r = tune_residues(state_space_plant(g, "G4", "PSS4"));
  REQUIRE(r.blocks == 2);
  CHECK(r.params.t1 == r.params.t3);
  CHECK(r.params.t2 == r.params.t4);
  const double achieved = chain_phase_deg(r.params.t1, r.params.t2, r.params.t3, r.params.t4, r.critical.imag());
  CHECK(std::abs(achieved - r.compensation) <= 1e-6);
  // The compensated residue points along 180 degrees.
  double rotated = std::fmod(r.residue_angle + r.compensation + 720.0, 360.0);
  CHECK(std::abs(rotated - 180.0) <= 1e-6);

  // K = 0 leaves the open-loop plant spectrum in the locus.
  const Eigen::VectorXcd open = g.a.eigenvalues();
  for (const auto& l : open) {
    double best = 1e300;
    for (const auto& p : r.locus.poles.front()) best = std::min(best, std::abs(p - l));
    CHECK(best <= 1e-8);
  }
}

TEST_CASE("single-slot residue re-tuning improves the 50% IBR system under set A") {
  const auto model = with_set(IbrShare::Fifty, "A");
  const auto before = modal_summary(model);
  REQUIRE_FALSE(before.stable);
  const auto r = tune_slot(model, "PSS4", TuningMethod::Residues);
  auto tuned = model;
  *tuned.pss_host("PSS4").pss = r.params;
  const auto after = modal_summary(tuned);
  CHECK(after.min_rotor_damping > before.min_rotor_damping);
  CHECK(after.min_rotor_damping > 0.0);
  CHECK(after.stable);

  // The selected-gain branch matches a from-scratch eigen-analysis.
  const auto sys = solve_system(tuned);
  const auto ss = linearize(*sys.dae, sys.op.point, {}, {});
  const Eigen::VectorXcd lam = ss.a.eigenvalues();
  std::size_t sel = 0;
  for (std::size_t i = 0; i < r.locus.gains.size(); ++i)
    if (r.locus.gains[i] == r.params.k) sel = i;
  REQUIRE(sel > 0);
  for (const auto& p : r.locus.poles[sel]) {
    double best = 1e300;
    for (const auto& l : lam) best = std::min(best, std::abs(l - p));
    CHECK(best <= 1e-8 * std::max(1.0, std::abs(p)));
  }
}

TEST_CASE("set B residue locus crosses into the right half-plane at high gain") {
  const auto r = tune_slot(with_set(IbrShare::Fifty, "B"), "PSS4", TuningMethod::Residues);
  bool crossed = false;
  for (std::size_t i = 0; i < r.locus.gains.size(); ++i) {
    if (r.locus.gains[i] <= r.params.k) continue;
    for (const auto& p : r.locus.poles[i]) crossed |= std::abs(p) > kNeutralTol && p.real() > 0.0;
  }
  CHECK(crossed);
}

TEST_CASE("set B: P-Vref re-tuning of PSS4 alone is flagged") {
  const auto r = tune_slot(with_set(IbrShare::Fifty, "B"), "PSS4", TuningMethod::PVref);
  CHECK_FALSE(r.stabilizable);
  CHECK(r.params.t1 == r.params.t3);
  CHECK(r.params.t2 == r.params.t4);
  CHECK(r.params.t1 / r.params.t2 <= 20.0 * (1.0 + 1e-9));
  bool warned = false;
  for (const auto& w : r.warnings) warned |= w.find("not stabilizable") != std::string::npos;
  CHECK(warned);
}

TEST_CASE("set B re-tuning outcomes on the 50% IBR system") {
  const auto model = with_set(IbrShare::Fifty, "B");
  const std::vector<std::string> order{"PSS4", "PSS2"};

  SUBCASE("sequential P-Vref stabilizes") {
    const auto out = retune_sequential(model, order, TuningMethod::PVref);
    CHECK(out.stable);
    CHECK(out.min_rotor_damping > 0.0);
    REQUIRE(out.steps.size() == 2);
    CHECK(out.steps[1].slot == "PSS2");
  }
  SUBCASE("sequential residues leaves PSS2 unable to push the mode") {
    const auto out = retune_sequential(model, order, TuningMethod::Residues);
    REQUIRE(out.steps.size() == 2);
    CHECK_FALSE(out.steps[1].stabilizable);
    CHECK(out.steps[1].params.k >= 50.0);
    CHECK_FALSE(out.stable);
  }
  SUBCASE("uncoordinated residues does not stabilize") {
    CHECK_FALSE(retune_uncoordinated(model, order, TuningMethod::Residues).stable);
  }
  SUBCASE("uncoordinated P-Vref stabilizes") {
    CHECK(retune_uncoordinated(model, order, TuningMethod::PVref).stable);
  }
}
