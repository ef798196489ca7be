#include <doctest.h>

#include <sstream>

#include "pstab/modal.hpp"
#include "support.hpp"

using namespace pstab;

namespace {

// Durand-Kerner iteration for the roots of a monic-normalized polynomial.
std::vector<Complex> poly_roots(std::vector<double> coef) {
  const std::size_t n = coef.size() - 1;
  const double lead = coef.front();
  for (auto& c : coef) c /= lead;
  std::vector<Complex> z(n);
  for (std::size_t i = 0; i < n; ++i) z[i] = std::pow(Complex{0.4, 0.9}, static_cast<double>(i));
  auto eval = [&](Complex s) {
    Complex v = 0.0;
    for (double c : coef) v = v * s + c;
    return v;
  };
  for (int it = 0; it < 5000; ++it) {
    double move = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      Complex den = 1.0;
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) den *= z[i] - z[j];
      const Complex step = eval(z[i]) / den;
      z[i] -= step;
      move = std::max(move, std::abs(step));
    }
    if (move < 1e-15) break;
  }
  return z;
}

double nearest(const std::vector<Complex>& set, Complex x) {
  double best = 1e300;
  for (const auto& s : set) best = std::min(best, std::abs(s - x));
  return best;
}

std::size_t conjugate_of(const ModalAnalysis& ma, std::size_t i) {
  std::size_t best = i;
  double d = 1e300;
  for (std::size_t j = 0; j < ma.modes.size(); ++j) {
    if (j == i) continue;
    const double e = std::abs(ma.modes[j].lambda - std::conj(ma.modes[i].lambda));
    if (e < d) d = e, best = j;
  }
  return best;
}

ModalAnalysis oscillator(double sigma, double freq_hz, const Labels& labels) {
  const double w = 2.0 * kPi * freq_hz;
  Mat a{{sigma, w}, {-w, sigma}};
  return eigen_modes(a, labels);
}

}  // namespace

TEST_CASE("two-mass swing eigenvalues are the roots of the hand-derived quartic") {
  const double m1 = 2.0, m2 = 3.0, d1 = 0.4, d2 = 0.7, k = 5.0, k0 = 2.0;
  Mat a = Mat::Zero(4, 4);
  a(0, 1) = 1.0;
  a(1, 0) = -(k0 + k) / m1;
  a(1, 1) = -d1 / m1;
  a(1, 2) = k / m1;
  a(2, 3) = 1.0;
  a(3, 0) = k / m2;
  a(3, 2) = -k / m2;
  a(3, 3) = -d2 / m2;
  const auto ma = eigen_modes(a, {"G1.delta", "G1.dw", "G2.delta", "G2.dw"});
  const auto roots = poly_roots({m1 * m2, m1 * d2 + d1 * m2, m1 * k + d1 * d2 + (k0 + k) * m2,
                                 d1 * k + (k0 + k) * d2, k0 * k});
  REQUIRE(ma.modes.size() == 4);
  for (const auto& m : ma.modes) CHECK(nearest(roots, m.lambda) <= 1e-8);
  CHECK(ma.stable);
}

TEST_CASE("eigenvectors are bi-orthonormal") {
  const auto ss = test::random_stable_ss(6, 11);
  const auto ma = eigen_modes(ss);
  for (std::size_t i = 0; i < ma.modes.size(); ++i)
    for (std::size_t j = 0; j < ma.modes.size(); ++j) {
      const Complex wv = ma.modes[i].left.transpose() * ma.modes[j].right;
      CHECK(std::abs(wv - Complex(i == j ? 1.0 : 0.0)) <= 1e-9);
    }
  for (const auto& m : ma.modes) {
    CHECK((ss.a * m.right - m.lambda * m.right).norm() <= 1e-9 * std::max(1.0, std::abs(m.lambda)));
    CHECK((m.left.transpose() * ss.a - m.lambda * m.left.transpose()).norm() <= 1e-9 * std::max(1.0, std::abs(m.lambda)));
  }
}

TEST_CASE("residues of a diagonal system by partial fractions") {
  StateSpaceModel ss;
  ss.a = Mat{{-1.0, 0.0}, {0.0, -2.0}};
  ss.b = Mat{{1.0}, {1.0}};
  ss.c = Mat{{1.0, 1.0}};
  ss.d = Mat::Zero(1, 1);
  ss.state_labels = {"x0", "x1"};
  ss.input_labels = {"u"};
  ss.output_labels = {"y"};
  const auto res = residues(ss, "u", "y");
  REQUIRE(res.size() == 2);
  for (const auto& r : res) CHECK(std::abs(r.residue - Complex(1.0)) <= 1e-12);
  CHECK(std::abs(tf_eval(ss, Complex{0.0, 0.0}) - Complex(1.5)) <= 1e-12);
}

TEST_CASE("residues reconstruct the transfer function of random systems") {
  for (unsigned seed : {1u, 2u, 3u, 4u, 5u}) {
    const auto ss = test::random_stable_ss(4, seed);
    const auto ma = eigen_modes(ss);
    const auto res = residues(ss, ma, "u", "y");
    for (int k = 0; k < 10; ++k) {
      const Complex s{0.0, 0.3 + 1.7 * k};
      Complex sum = ss.d(0, 0);
      for (const auto& r : res) sum += r.residue / (s - r.lambda);
      CHECK(std::abs(tf_eval(ss, s) - sum) <= 1e-8);
    }
    for (std::size_t i = 0; i < res.size(); ++i) {
      const auto& m = ma.modes[res[i].mode];
      const Complex cv = (ss.c * m.right)(0);
      const Complex wb = (m.left.transpose() * ss.b)(0);
      CHECK(std::abs(res[i].residue - cv * wb) <= 1e-10);
      CHECK(std::abs(res[i].residue - res[i].controllability * res[i].observability) <= 1e-10);
      CHECK(res[i].angle_deg >= 0.0);
      CHECK(res[i].angle_deg < 360.0);
    }
  }
}

TEST_CASE("conjugate modes carry conjugate vectors, residues and participation") {
  const auto ss = test::random_stable_ss(6, 21);
  const auto ma = eigen_modes(ss);
  const auto pf = participation_factors(ma);
  const auto res = residues(ss, ma, "u", "y");
  int pairs = 0;
  for (std::size_t i = 0; i < ma.modes.size(); ++i) {
    const auto& m = ma.modes[i];
    if (m.lambda.imag() <= 1e-9) continue;
    const auto j = conjugate_of(ma, i);
    const auto& c = ma.modes[j];
    ++pairs;
    CHECK(std::abs(c.lambda - std::conj(m.lambda)) <= 1e-9);
    CHECK((c.right - m.right.conjugate()).norm() <= 1e-9);
    CHECK((c.left - m.left.conjugate()).norm() <= 1e-9);
    CHECK(std::abs(res[j].residue - std::conj(res[i].residue)) <= 1e-10);
    CHECK((pf.col(static_cast<Eigen::Index>(i)) - pf.col(static_cast<Eigen::Index>(j))).cwiseAbs().maxCoeff() <= 1e-10);
  }
  CHECK(pairs > 0);
}

TEST_CASE("scaling the input scales every residue and leaves the spectrum") {
  const auto ss = test::random_stable_ss(5, 8);
  auto scaled = ss;
  scaled.b *= 3.5;
  const auto r1 = residues(ss, "u", "y");
  const auto r2 = residues(scaled, "u", "y");
  REQUIRE(r1.size() == r2.size());
  for (std::size_t i = 0; i < r1.size(); ++i) {
    CHECK(r2[i].lambda == r1[i].lambda);
    CHECK(std::abs(r2[i].residue - 3.5 * r1[i].residue) <= 1e-12 * std::max(1.0, std::abs(r2[i].residue)));
  }
}

TEST_CASE("participation columns peak at one") {
  const auto ss = test::random_stable_ss(6, 4);
  const auto pf = participation_factors(eigen_modes(ss));
  for (Eigen::Index j = 0; j < pf.cols(); ++j) CHECK(pf.col(j).maxCoeff() == doctest::Approx(1.0));
  CHECK(pf.minCoeff() >= 0.0);
}

TEST_CASE("rotor-dominant modes are classified by frequency band") {
  SUBCASE("0.55 Hz is inter-area") {
    auto ma = oscillator(-0.1, 0.55, {"G1.delta", "G1.dw"});
    classify_modes(ma, participation_factors(ma));
    for (const auto& m : ma.modes) CHECK(m.cls == ModeClass::InterArea);
  }
  SUBCASE("1.1 Hz is local") {
    auto ma = oscillator(-0.1, 1.1, {"G1.delta", "G1.dw"});
    classify_modes(ma, participation_factors(ma));
    for (const auto& m : ma.modes) CHECK(m.cls == ModeClass::Local);
  }
  SUBCASE("controller-dominant modes are control modes") {
    auto ma = oscillator(-0.1, 1.1, {"PSS4.x1", "PSS4.x2"});
    classify_modes(ma, participation_factors(ma));
    for (const auto& m : ma.modes) CHECK(m.cls == ModeClass::Control);
  }
}

TEST_CASE("state groups from labels") {
  CHECK(state_group("G1.delta") == "rotor");
  CHECK(state_group("G1.dw") == "rotor");
  CHECK(state_group("G3.eq2") == "flux");
  CHECK(state_group("G2.vm") == "avr");
  CHECK(state_group("G2.xrh") == "governor");
  CHECK(state_group("PSS4.xw") == "pss");
  CHECK(state_group("GFL1.xpll") == "gfl");
}

TEST_CASE("a zero eigenvalue is neutral and does not decide stability") {
  Mat a{{0.0, 1.0}, {0.0, -1.0}};
  const auto ma = eigen_modes(a, {"G1.delta", "G1.dw"});
  int neutral = 0;
  for (const auto& m : ma.modes) neutral += m.neutral;
  CHECK(neutral == 1);
  CHECK(ma.stable);
  Mat b{{0.2, 1.0}, {0.0, -1.0}};
  CHECK_FALSE(eigen_modes(b, {"G1.delta", "G1.dw"}).stable);
}

TEST_CASE("two-area inter-area mode swings one area against the other") {
  const auto model = build_two_area(IbrShare::Zero);  // PSS slots hold K = 0
  const auto sys = solve_system(model);
  const auto ss = linearize(*sys.dae, sys.op.point, {}, {});
  auto ma = eigen_modes(ss);
  const auto pf = participation_factors(ma);
  classify_modes(ma, pf);
  const auto rm = rotor_modes(ma, pf);
  REQUIRE_FALSE(rm.empty());
  auto rotor_pf = [&](std::size_t mode, const char* g) {
    const auto k = static_cast<Eigen::Index>(index_of(ss.state_labels, std::string(g) + ".dw", "state"));
    return pf(k, static_cast<Eigen::Index>(mode));
  };

  // Slowest oscillatory rotor mode: machines of both areas take part.
  std::size_t slowest = rm.front(), weakest = rm.front();
  for (auto i : rm) {
    if (ma.modes[i].freq_hz < ma.modes[slowest].freq_hz) slowest = i;
    if (ma.modes[i].damping < ma.modes[weakest].damping) weakest = i;
  }
  CHECK(std::max(rotor_pf(slowest, "G1"), rotor_pf(slowest, "G2")) >= 0.1);
  CHECK(std::max(rotor_pf(slowest, "G3"), rotor_pf(slowest, "G4")) >= 0.1);

  // Least-damped rotor mode: area 1 swings against area 2.
  const auto& m = ma.modes[weakest];
  CHECK(m.freq_hz >= 0.1);
  CHECK(m.freq_hz <= 0.7);
  CHECK(m.cls == ModeClass::InterArea);
  auto angle = [&](const char* g) { return m.right[static_cast<Eigen::Index>(index_of(ss.state_labels, g, "state"))]; };
  const Complex ref = angle("G1.delta");
  auto aligned = [&](const char* g) { return (angle(g) * std::conj(ref)).real(); };
  CHECK(aligned("G2.delta") > 0.0);
  CHECK(aligned("G3.delta") < 0.0);
  CHECK(aligned("G4.delta") < 0.0);

  std::ostringstream table;
  write_mode_table(table, ma, pf);
  CHECK(table.str().find("inter-area") != std::string::npos);
  CHECK(table.str().find("local") != std::string::npos);
}
