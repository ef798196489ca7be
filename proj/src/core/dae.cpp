#include "pstab/dae.hpp"

#include <algorithm>

namespace pstab {

void Dae::check_dims(const Vec& x, const Vec& y, const Vec& u) const {
  if (static_cast<std::size_t>(x.size()) != num_states() || static_cast<std::size_t>(y.size()) != num_algebraic() ||
      static_cast<std::size_t>(u.size()) != num_inputs()) {
    throw Error(ErrorCode::InvalidArgument,
                "dimension mismatch: got (" + std::to_string(x.size()) + ", " + std::to_string(y.size()) + ", " +
                    std::to_string(u.size()) + "), expected (" + std::to_string(num_states()) + ", " +
                    std::to_string(num_algebraic()) + ", " + std::to_string(num_inputs()) + ")");
  }
}

FrozenStateDae::FrozenStateDae(std::shared_ptr<const Dae> base, std::vector<std::size_t> frozen, Vec frozen_values)
    : base_(std::move(base)), frozen_(std::move(frozen)), frozen_values_(std::move(frozen_values)) {
  if (static_cast<std::size_t>(frozen_values_.size()) != frozen_.size())
    throw Error(ErrorCode::InvalidArgument, "frozen value count does not match frozen state count");
  const auto n = base_->num_states();
  std::vector<bool> is_frozen(n, false);
  for (auto i : frozen_) {
    if (i >= n) throw Error(ErrorCode::InvalidArgument, "frozen state index out of range");
    is_frozen[i] = true;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!is_frozen[i]) {
      kept_.push_back(i);
      labels_.push_back(base_->state_labels()[i]);
    }
  }
}

Vec FrozenStateDae::expand(const Vec& x) const {
  Vec full(base_->num_states());
  for (std::size_t i = 0; i < kept_.size(); ++i) full[kept_[i]] = x[i];
  for (std::size_t i = 0; i < frozen_.size(); ++i) full[frozen_[i]] = frozen_values_[i];
  return full;
}

Vec FrozenStateDae::reduce(const Vec& full_x) const {
  Vec x(kept_.size());
  for (std::size_t i = 0; i < kept_.size(); ++i) x[i] = full_x[kept_[i]];
  return x;
}

void FrozenStateDae::residual(const Vec& x, const Vec& y, const Vec& u, Vec& f, Vec& g) const {
  Vec full_f;
  base_->residual(expand(x), y, u, full_f, g);
  f = reduce(full_f);
}

void FrozenStateDae::outputs(const Vec& x, const Vec& y, const Vec& u, Vec& z) const {
  base_->outputs(expand(x), y, u, z);
}

Labels FrozenStateDae::active_limiters(const Vec& x, const Vec& y, const Vec& u) const {
  return base_->active_limiters(expand(x), y, u);
}

}  // namespace pstab
