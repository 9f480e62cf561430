#pragma once

#include <Eigen/Dense>

namespace qmono {

struct Interval {
  double lo = -1.0;
  double hi = 1.0;

  double width() const { return hi - lo; }
  double center() const { return 0.5 * (lo + hi); }
  bool contains(double v) const { return v >= lo && v <= hi; }
  /// affine map onto [-1, 1]
  double to_unit(double v) const { return (2.0 * v - lo - hi) / (hi - lo); }
  double from_unit(double u) const { return 0.5 * (lo + hi) + 0.5 * (hi - lo) * u; }
};

struct Rectangle {
  Interval first;
  Interval second;
};

struct QuadratureRule {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
};

/// n-point Gauss-Legendre rule on [a, b] (Newton iteration on P_n).
QuadratureRule gauss_legendre(int n, const Interval& interval);

/// Chebyshev-Lobatto points cos(pi k / n), k = 0..n, mapped onto the interval.
Eigen::VectorXd chebyshev_lobatto(int n, const Interval& interval);

/// Row i interpolates a function sampled on the Chebyshev-Lobatto points `nodes`
/// (as returned by chebyshev_lobatto) at `targets[i]` (barycentric formula).
Eigen::MatrixXd lobatto_interpolation_matrix(const Eigen::VectorXd& nodes, const Eigen::VectorXd& targets);

/// T_0..T_degree and their first and second derivatives with respect to u at u.
template <typename Scalar>
void chebyshev_basis(int degree, Scalar u, Eigen::Ref<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> t,
                     Eigen::Ref<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> dt,
                     Eigen::Ref<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> ddt) {
  t[0] = Scalar(1);
  dt[0] = Scalar(0);
  ddt[0] = Scalar(0);
  if (degree == 0) return;
  t[1] = u;
  dt[1] = Scalar(1);
  ddt[1] = Scalar(0);
  for (int k = 1; k < degree; ++k) {
    t[k + 1] = Scalar(2) * u * t[k] - t[k - 1];
    dt[k + 1] = Scalar(2) * t[k] + Scalar(2) * u * dt[k] - dt[k - 1];
    ddt[k + 1] = Scalar(4) * dt[k] + Scalar(2) * u * ddt[k] - ddt[k - 1];
  }
}

/// Tensor Chebyshev series sum_{a,b} c(a,b) T_a(u) T_b(v) on a rectangle, with
/// (u, v) the unit coordinates of (y, y').
class ChebyshevSeries2D {
public:
  ChebyshevSeries2D() = default;
  ChebyshevSeries2D(Rectangle domain, Eigen::MatrixXd coefficients)
      : domain_(domain), coeffs_(std::move(coefficients)) {}

  struct Jet {
    double value;
    double d_first;   // d/dy
    double d_second;  // d/dy'
    double d_mixed;   // d^2/dy dy'
  };

  Jet jet(double y, double yp) const;

  /// Jets on the tensor grid ys x yps, one matrix per component (rows follow ys).
  struct GridJet {
    Eigen::MatrixXd value, d_first, d_second, d_mixed;
  };
  GridJet on_grid(const Eigen::VectorXd& ys, const Eigen::VectorXd& yps) const;
  double operator()(double y, double yp) const { return jet(y, yp).value; }

  int degree() const { return static_cast<int>(coeffs_.rows()) - 1; }
  const Rectangle& domain() const { return domain_; }
  const Eigen::MatrixXd& coefficients() const { return coeffs_; }

private:
  Rectangle domain_;
  Eigen::MatrixXd coeffs_;
};

}  // namespace qmono
