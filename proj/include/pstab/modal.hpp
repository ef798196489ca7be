#pragma once

#include <iosfwd>

#include "pstab/linearization.hpp"

namespace pstab {

enum class ModeClass { InterArea, Local, Control, Other };
const char* to_string(ModeClass c);

struct Mode {
  Complex lambda;
  double freq_hz = 0.0;
  double damping = 1.0;
  CVec right;  // v: A v = lambda v, largest entry real-positive and equal to 1
  CVec left;   // w: w A = lambda w, w v = 1
  ModeClass cls = ModeClass::Other;
  /// Eigenvalue at the origin from the angle-reference invariance of an
  /// islanded network; carries no stability information.
  bool neutral = false;
};

struct ModalAnalysis {
  std::vector<Mode> modes;
  Labels state_labels;
  bool stable = true;

  /// Indices of modes with imag >= 0 that are not neutral.
  std::vector<std::size_t> upper_modes() const;
};

/// |lambda| below this is treated as the neutral reference mode.
inline constexpr double kNeutralTol = 1e-5;

/// Eigen-decomposition with bi-orthonormal left/right eigenvectors. Throws if
/// the eigenvector basis has condition number above 1e10.
ModalAnalysis eigen_modes(const StateSpaceModel& ss);
ModalAnalysis eigen_modes(const Mat& a, const Labels& state_labels);

/// |v_ki w_ik| for state k (row) and mode i (column); each column scaled so
/// its largest entry is 1.
Mat participation_factors(const ModalAnalysis& ma);

struct ResidueInfo {
  std::size_t mode = 0;
  Complex lambda;
  Complex residue;
  double magnitude = 0.0;
  double angle_deg = 0.0;  // [0, 360)
  std::string input, output;
  Complex controllability;  // w b
  Complex observability;    // c v
};

/// Residue of the SISO transfer function input -> output at every mode.
std::vector<ResidueInfo> residues(const StateSpaceModel& ss, const ModalAnalysis& ma, const std::string& input,
                                  const std::string& output);
std::vector<ResidueInfo> residues(const StateSpaceModel& ss, const std::string& input, const std::string& output);

/// c (sI - A)^-1 b + d for a SISO model, by direct linear solve.
Complex tf_eval(const StateSpaceModel& siso, Complex s);
/// Same, with the pole-distance check against precomputed eigenvalues.
Complex tf_eval(const StateSpaceModel& siso, Complex s, const std::vector<Complex>& poles);

/// State category from its label: "rotor", "flux", "avr", "governor", "pss",
/// "gfl" or "other".
std::string state_group(const std::string& label);
bool is_controller_group(const std::string& group);

/// Participation test first (dominant state's group), then frequency band.
void classify_modes(ModalAnalysis& ma, const Mat& participation);

/// Largest normalized participation of any rotor state in mode i.
double rotor_participation(const ModalAnalysis& ma, const Mat& participation, std::size_t i);

/// Oscillatory, non-neutral modes with rotor participation >= `threshold`.
std::vector<std::size_t> rotor_modes(const ModalAnalysis& ma, const Mat& participation, double threshold = 0.3);

/// CSV mode table: real, imag, freq_hz, damping, class, top-3 participating states.
void write_mode_table(std::ostream& os, const ModalAnalysis& ma, const Mat& participation);

}  // namespace pstab
