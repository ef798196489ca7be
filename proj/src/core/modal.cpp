#include "pstab/modal.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

namespace pstab {

const char* to_string(ModeClass c) {
  switch (c) {
    case ModeClass::InterArea: return "inter-area";
    case ModeClass::Local: return "local";
    case ModeClass::Control: return "control";
    case ModeClass::Other: return "other";
  }
  return "other";
}

std::vector<std::size_t> ModalAnalysis::upper_modes() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < modes.size(); ++i)
    if (!modes[i].neutral && modes[i].lambda.imag() >= 0.0) out.push_back(i);
  return out;
}

ModalAnalysis eigen_modes(const StateSpaceModel& ss) {
  ss.validate();
  return eigen_modes(ss.a, ss.state_labels);
}

ModalAnalysis eigen_modes(const Mat& a, const Labels& state_labels) {
  if (a.rows() != a.cols() || a.rows() == 0) throw Error(ErrorCode::InvalidArgument, "state matrix must be square and non-empty");
  if (!a.allFinite()) throw Error(ErrorCode::Numeric, "state matrix has non-finite entries");
  const auto n = a.rows();
  Eigen::EigenSolver<Mat> es(a, true);
  if (es.info() != Eigen::Success) throw Error(ErrorCode::Numeric, "eigenvalue iteration did not converge");
  CMat v = es.eigenvectors();
  const CVec lam = es.eigenvalues();

  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index k = 0;
    double best = -1.0;
    for (Eigen::Index r = 0; r < n; ++r) {
      const double m = std::abs(v(r, i));
      if (m > best * (1.0 + 1e-12)) {
        best = m;
        k = r;
      }
    }
    v.col(i) *= 1.0 / v(k, i);
  }
  Eigen::JacobiSVD<CMat> svd(v);
  const auto& sv = svd.singularValues();
  const double cond = sv(n - 1) > 0 ? sv(0) / sv(n - 1) : std::numeric_limits<double>::infinity();
  if (!(cond <= 1e10)) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "eigenvector basis is ill-conditioned (condition %.3g); A is not diagonalizable", cond);
    throw Error(ErrorCode::Numeric, buf);
  }
  const CMat w = v.partialPivLu().inverse();

  ModalAnalysis ma;
  ma.state_labels = state_labels;
  ma.modes.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    auto& m = ma.modes[static_cast<std::size_t>(i)];
    m.lambda = lam[i];
    m.freq_hz = std::abs(lam[i].imag()) / (2.0 * kPi);
    m.damping = damping_ratio(lam[i]);
    m.right = v.col(i);
    m.left = w.row(i).transpose();
    m.neutral = std::abs(lam[i]) < kNeutralTol;
    if (!m.neutral && lam[i].real() >= 0.0) ma.stable = false;
  }
  return ma;
}

Mat participation_factors(const ModalAnalysis& ma) {
  const auto n = static_cast<Eigen::Index>(ma.modes.size());
  Mat p(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& m = ma.modes[static_cast<std::size_t>(i)];
    for (Eigen::Index k = 0; k < n; ++k) p(k, i) = std::abs(m.right[k] * m.left[k]);
    const double top = p.col(i).maxCoeff();
    if (top > 0) p.col(i) /= top;
  }
  return p;
}

std::vector<ResidueInfo> residues(const StateSpaceModel& ss, const ModalAnalysis& ma, const std::string& input,
                                  const std::string& output) {
  const auto siso = ss.siso(input, output);
  const CVec b = siso.b.col(0).cast<Complex>();
  const CVec c = siso.c.row(0).transpose().cast<Complex>();
  std::vector<ResidueInfo> out;
  for (std::size_t i = 0; i < ma.modes.size(); ++i) {
    const auto& m = ma.modes[i];
    ResidueInfo r;
    r.mode = i;
    r.lambda = m.lambda;
    r.controllability = (m.left.transpose() * b)(0);
    r.observability = (c.transpose() * m.right)(0);
    r.residue = r.observability * r.controllability;
    r.magnitude = std::abs(r.residue);
    double ang = deg(std::arg(r.residue));
    if (ang < 0) ang += 360.0;
    if (ang >= 360.0) ang -= 360.0;
    r.angle_deg = ang;
    r.input = input;
    r.output = output;
    out.push_back(r);
  }
  return out;
}

std::vector<ResidueInfo> residues(const StateSpaceModel& ss, const std::string& input, const std::string& output) {
  return residues(ss, eigen_modes(ss), input, output);
}

Complex tf_eval(const StateSpaceModel& siso, Complex s) {
  if (siso.b.cols() != 1 || siso.c.rows() != 1) throw Error(ErrorCode::InvalidArgument, "tf_eval needs a SISO model");
  std::vector<Complex> poles;
  Eigen::EigenSolver<Mat> es(siso.a, false);
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) poles.push_back(es.eigenvalues()[i]);
  return tf_eval(siso, s, poles);
}

Complex tf_eval(const StateSpaceModel& siso, Complex s, const std::vector<Complex>& poles) {
  if (siso.b.cols() != 1 || siso.c.rows() != 1) throw Error(ErrorCode::InvalidArgument, "tf_eval needs a SISO model");
  for (const auto& p : poles)
    if (std::abs(s - p) <= 1e-9) throw Error(ErrorCode::Numeric, "tf_eval: s is within 1e-9 of a pole");
  const auto n = siso.a.rows();
  const CMat m = s * CMat::Identity(n, n) - siso.a.cast<Complex>();
  const CVec x = m.partialPivLu().solve(siso.b.col(0).cast<Complex>());
  return (siso.c.row(0).cast<Complex>() * x)(0) + siso.d(0, 0);
}

std::string state_group(const std::string& label) {
  const auto dot = label.rfind('.');
  const std::string dev = label.substr(0, dot == std::string::npos ? 0 : dot);
  const std::string var = dot == std::string::npos ? label : label.substr(dot + 1);
  if (dev.rfind("PSS", 0) == 0) return "pss";
  if (dev.rfind("GFL", 0) == 0) return "gfl";
  if (var == "delta" || var == "dw") return "rotor";
  if (var == "eq1" || var == "ed1" || var == "eq2" || var == "ed2") return "flux";
  if (var == "vm" || var == "efd") return "avr";
  if (var == "pv" || var == "xrh") return "governor";
  return "other";
}

bool is_controller_group(const std::string& g) {
  return g == "avr" || g == "governor" || g == "pss" || g == "gfl";
}

void classify_modes(ModalAnalysis& ma, const Mat& participation) {
  std::vector<std::string> groups;
  for (const auto& l : ma.state_labels) groups.push_back(state_group(l));
  for (std::size_t i = 0; i < ma.modes.size(); ++i) {
    auto& m = ma.modes[i];
    m.cls = ModeClass::Other;
    if (m.neutral) continue;
    Eigen::Index k = 0;
    participation.col(static_cast<Eigen::Index>(i)).maxCoeff(&k);
    const auto& g = groups[static_cast<std::size_t>(k)];
    if (is_controller_group(g)) {
      m.cls = ModeClass::Control;
    } else if (g == "rotor" && m.lambda.imag() != 0.0) {
      if (m.freq_hz >= 0.1 && m.freq_hz <= 0.7) m.cls = ModeClass::InterArea;
      else if (m.freq_hz > 0.7 && m.freq_hz <= 2.0) m.cls = ModeClass::Local;
    }
  }
}

double rotor_participation(const ModalAnalysis& ma, const Mat& participation, std::size_t i) {
  double best = 0.0;
  for (std::size_t k = 0; k < ma.state_labels.size(); ++k)
    if (state_group(ma.state_labels[k]) == "rotor")
      best = std::max(best, participation(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)));
  return best;
}

std::vector<std::size_t> rotor_modes(const ModalAnalysis& ma, const Mat& participation, double threshold) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < ma.modes.size(); ++i) {
    const auto& m = ma.modes[i];
    if (m.neutral || m.lambda.imag() == 0.0) continue;
    if (rotor_participation(ma, participation, i) >= threshold) out.push_back(i);
  }
  return out;
}

void write_mode_table(std::ostream& os, const ModalAnalysis& ma, const Mat& participation) {
  os << "real,imag,freq_hz,damping,class,top1,top2,top3\n";
  std::vector<std::size_t> order = ma.upper_modes();
  std::stable_sort(order.begin(), order.end(),
                   [&](auto a, auto b) { return ma.modes[a].damping < ma.modes[b].damping; });
  char buf[160];
  for (auto i : order) {
    const auto& m = ma.modes[i];
    std::vector<std::size_t> idx(ma.state_labels.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const auto col = static_cast<Eigen::Index>(i);
    const auto top = std::min<std::size_t>(3, idx.size());
    std::partial_sort(idx.begin(), idx.begin() + static_cast<long>(top), idx.end(), [&](auto a, auto b) {
      return participation(static_cast<Eigen::Index>(a), col) > participation(static_cast<Eigen::Index>(b), col);
    });
    std::snprintf(buf, sizeof buf, "%.10g,%.10g,%.6f,%.6f,%s", m.lambda.real(), m.lambda.imag(), m.freq_hz, m.damping,
                  to_string(m.cls));
    os << buf;
    for (std::size_t t = 0; t < 3; ++t) {
      os << ',';
      if (t < top) {
        std::snprintf(buf, sizeof buf, "%s(%.3f)", ma.state_labels[idx[t]].c_str(),
                      participation(static_cast<Eigen::Index>(idx[t]), col));
        os << buf;
      }
    }
    os << '\n';
  }
}

}  // namespace pstab
