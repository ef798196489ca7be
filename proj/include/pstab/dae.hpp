#pragma once

#include <memory>
#include <span>

#include "pstab/common.hpp"

namespace pstab {

/// Semi-explicit DAE  x' = f(x, y, u),  0 = g(x, y, u),  z = h(x, y, u).
///
/// Implementations must be pure: residual evaluation may run concurrently
/// from several threads on the same object.
class Dae {
 public:
  virtual ~Dae() = default;

  virtual const Labels& state_labels() const = 0;
  virtual const Labels& algebraic_labels() const = 0;
  virtual const Labels& input_labels() const = 0;
  virtual const Labels& output_labels() const = 0;

  virtual void residual(const Vec& x, const Vec& y, const Vec& u, Vec& f, Vec& g) const = 0;
  virtual void outputs(const Vec& x, const Vec& y, const Vec& u, Vec& z) const = 0;

  /// Names of limiters sitting on a bound at (x, y, u).
  virtual Labels active_limiters(const Vec&, const Vec&, const Vec&) const { return {}; }

  std::size_t num_states() const { return state_labels().size(); }
  std::size_t num_algebraic() const { return algebraic_labels().size(); }
  std::size_t num_inputs() const { return input_labels().size(); }
  std::size_t num_outputs() const { return output_labels().size(); }

  /// Throws if the vectors are not dimensioned to this system.
  void check_dims(const Vec& x, const Vec& y, const Vec& u) const;
};

/// A full DAE point (x, y, u).
struct DaePoint {
  Vec x;
  Vec y;
  Vec u;
};

/// Holds a subset of the states of another DAE at fixed values. The frozen
/// states vanish from the state vector; the remaining dynamics see them as
/// constants.
class FrozenStateDae final : public Dae {
 public:
  FrozenStateDae(std::shared_ptr<const Dae> base, std::vector<std::size_t> frozen, Vec frozen_values);

  const Labels& state_labels() const override { return labels_; }
  const Labels& algebraic_labels() const override { return base_->algebraic_labels(); }
  const Labels& input_labels() const override { return base_->input_labels(); }
  const Labels& output_labels() const override { return base_->output_labels(); }

  void residual(const Vec& x, const Vec& y, const Vec& u, Vec& f, Vec& g) const override;
  void outputs(const Vec& x, const Vec& y, const Vec& u, Vec& z) const override;
  Labels active_limiters(const Vec& x, const Vec& y, const Vec& u) const override;

  /// Drop frozen entries from a full state vector.
  Vec reduce(const Vec& full_x) const;
  Vec expand(const Vec& x) const;

 private:
  std::shared_ptr<const Dae> base_;
  std::vector<std::size_t> kept_;
  std::vector<std::size_t> frozen_;
  Vec frozen_values_;
  Labels labels_;
};

}  // namespace pstab
