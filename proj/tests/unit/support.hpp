#pragma once

#include <functional>
#include <random>

#include "pstab/dae.hpp"
#include "pstab/linearization.hpp"

namespace pstab::test {

/// DAE assembled from lambdas, for hand-built test systems.
class FnDae final : public Dae {
 public:
  using ResidualFn = std::function<void(const Vec&, const Vec&, const Vec&, Vec&, Vec&)>;
  using OutputFn = std::function<void(const Vec&, const Vec&, const Vec&, Vec&)>;

  FnDae(Labels x, Labels y, Labels u, Labels z, ResidualFn res, OutputFn out)
      : x_(std::move(x)), y_(std::move(y)), u_(std::move(u)), z_(std::move(z)), res_(std::move(res)),
        out_(std::move(out)) {}

  const Labels& state_labels() const override { return x_; }
  const Labels& algebraic_labels() const override { return y_; }
  const Labels& input_labels() const override { return u_; }
  const Labels& output_labels() const override { return z_; }

  void residual(const Vec& x, const Vec& y, const Vec& u, Vec& f, Vec& g) const override {
    f.resize(static_cast<Eigen::Index>(x_.size()));
    g.resize(static_cast<Eigen::Index>(y_.size()));
    res_(x, y, u, f, g);
  }
  void outputs(const Vec& x, const Vec& y, const Vec& u, Vec& z) const override {
    z.resize(static_cast<Eigen::Index>(z_.size()));
    out_(x, y, u, z);
  }

 private:
  Labels x_, y_, u_, z_;
  ResidualFn res_;
  OutputFn out_;
};

inline Labels numbered(const std::string& prefix, int n) {
  Labels l;
  for (int i = 0; i < n; ++i) l.push_back(prefix + std::to_string(i));
  return l;
}

/// Random stable state-space model with distinct eigenvalues.
inline StateSpaceModel random_stable_ss(int n, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  StateSpaceModel ss;
  ss.a = Mat::NullaryExpr(n, n, [&] { return u(rng); });
  // Shift so every eigenvalue sits left of -0.1.
  const double shift = ss.a.eigenvalues().real().maxCoeff() + 0.1 + 0.5 * (u(rng) + 1.0);
  ss.a -= shift * Mat::Identity(n, n);
  ss.b = Mat::NullaryExpr(n, 1, [&] { return u(rng); });
  ss.c = Mat::NullaryExpr(1, n, [&] { return u(rng); });
  ss.d = Mat::Zero(1, 1);
  ss.state_labels = numbered("x", n);
  ss.input_labels = {"u"};
  ss.output_labels = {"y"};
  return ss;
}

inline double max_rel_diff(const Mat& a, const Mat& b, double floor = 1e-8) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      const double scale = std::max(std::abs(a(i, j)), std::abs(b(i, j)));
      if (scale <= floor) continue;
      worst = std::max(worst, std::abs(a(i, j) - b(i, j)) / scale);
    }
  return worst;
}

}  // namespace pstab::test
