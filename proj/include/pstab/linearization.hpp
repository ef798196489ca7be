#pragma once

#include <iosfwd>

#include "pstab/grid_model.hpp"

namespace pstab {

/// Linear model  dx' = A dx + B du,  dz = C dx + D du.
struct StateSpaceModel {
  Mat a, b, c, d;
  Labels state_labels, input_labels, output_labels;

  /// Throws if dimensions or labels are inconsistent.
  void validate() const;
  std::size_t num_states() const { return static_cast<std::size_t>(a.rows()); }
  /// SISO sub-model (b column, c row, d scalar) selected by label.
  StateSpaceModel siso(const std::string& input, const std::string& output) const;
};

struct Jacobians {
  Mat fx, fy, fu, gx, gy, gu, hx, hy, hu;
};

/// Central differences with step 1e-6 * max(1, |v_i|) per variable unless
/// `rel_step` overrides the 1e-6.
Jacobians numeric_jacobians(const Dae& dae, const DaePoint& p, double rel_step = 1e-6);

struct LinearizeOptions {
  double equilibrium_tol = 1e-7;
  double rel_step = 1e-6;
  bool allow_active_limiters = false;
};

/// Reduced state-space model at an equilibrium with the algebraic variables
/// eliminated:  A = f_x - f_y g_y^-1 g_x  (and likewise for B, C, D).
/// Empty `inputs`/`outputs` select none.
StateSpaceModel linearize(const Dae& dae, const DaePoint& p, const Labels& inputs, const Labels& outputs,
                          const LinearizeOptions& opt = {});

/// Reduction of precomputed Jacobians.
StateSpaceModel reduce_jacobians(const Jacobians& j, const Dae& dae, const Labels& inputs, const Labels& outputs);

/// V_ref -> P model of machine `gen` with every machine's rotor angle and
/// speed held constant (shaft states removed from the state set).
StateSpaceModel frozen_shaft_linearize(const GridDae& dae, const DaePoint& p, const std::string& gen,
                                       const LinearizeOptions& opt = {});

/// Frozen-shaft DAE used by both the linear and the time-domain routes.
std::shared_ptr<const FrozenStateDae> frozen_shaft_dae(std::shared_ptr<const GridDae> dae, const DaePoint& p);

/// Labeled CSV block format:
///   #pstab-statespace,1
///   #states,<n>   then one label per line, likewise #inputs, #outputs
///   #A,<rows>,<cols>  then comma-separated rows, likewise B, C, D
void write_state_space(std::ostream& os, const StateSpaceModel& ss);
StateSpaceModel read_state_space(std::istream& is);
void save_state_space(const std::string& path, const StateSpaceModel& ss);
StateSpaceModel load_state_space(const std::string& path);

}  // namespace pstab
