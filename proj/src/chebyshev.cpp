#include "qmono/chebyshev.hpp"

#include "qmono/errors.hpp"

#include <cmath>
#include <numbers>

namespace qmono {

QuadratureRule gauss_legendre(int n, const Interval& interval) {
  if (n < 1) throw ParameterError("Gauss-Legendre rule needs at least one node");
  QuadratureRule rule{Eigen::VectorXd(n), Eigen::VectorXd(n)};
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) p0 = 1.0;
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    {
      // final derivative at the converged node
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) p0 = 1.0;
      dp = n * (x * p1 - p0) / (x * x - 1.0);
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[i] = -x;
    rule.nodes[n - 1 - i] = x;
    rule.weights[i] = w;
    rule.weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
  const double half = 0.5 * interval.width();
  for (int i = 0; i < n; ++i) {
    rule.nodes[i] = interval.from_unit(rule.nodes[i]);
    rule.weights[i] *= half;
  }
  return rule;
}

Eigen::VectorXd chebyshev_lobatto(int n, const Interval& interval) {
  Eigen::VectorXd pts(n + 1);
  for (int k = 0; k <= n; ++k) pts[k] = interval.from_unit(std::cos(std::numbers::pi * (n - k) / n));
  return pts;
}

Eigen::MatrixXd lobatto_interpolation_matrix(const Eigen::VectorXd& nodes, const Eigen::VectorXd& targets) {
  const Eigen::Index n = nodes.size();
  Eigen::VectorXd w(n);
  for (Eigen::Index k = 0; k < n; ++k) w[k] = ((k % 2) ? -1.0 : 1.0) * ((k == 0 || k == n - 1) ? 0.5 : 1.0);
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(targets.size(), n);
  for (Eigen::Index i = 0; i < targets.size(); ++i) {
    const double x = targets[i];
    Eigen::Index exact = -1;
    for (Eigen::Index k = 0; k < n; ++k)
      if (x == nodes[k]) exact = k;
    if (exact >= 0) {
      m(i, exact) = 1.0;
      continue;
    }
    double denom = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      const double c = w[k] / (x - nodes[k]);
      m(i, k) = c;
      denom += c;
    }
    m.row(i) /= denom;
  }
  return m;
}

ChebyshevSeries2D::Jet ChebyshevSeries2D::jet(double y, double yp) const {
  const int da = static_cast<int>(coeffs_.rows()) - 1;
  const int db = static_cast<int>(coeffs_.cols()) - 1;
  const double su = 2.0 / domain_.first.width();
  const double sv = 2.0 / domain_.second.width();
  Eigen::VectorXd tu(da + 1), dtu(da + 1), ddtu(da + 1), tv(db + 1), dtv(db + 1), ddtv(db + 1);
  chebyshev_basis<double>(da, domain_.first.to_unit(y), tu, dtu, ddtu);
  chebyshev_basis<double>(db, domain_.second.to_unit(yp), tv, dtv, ddtv);
  const Eigen::VectorXd ctv = coeffs_ * tv;
  const Eigen::VectorXd cdtv = coeffs_ * dtv;
  return {tu.dot(ctv), su * dtu.dot(ctv), sv * tu.dot(cdtv), su * sv * dtu.dot(cdtv)};
}

ChebyshevSeries2D::GridJet ChebyshevSeries2D::on_grid(const Eigen::VectorXd& ys, const Eigen::VectorXd& yps) const {
  const int da = static_cast<int>(coeffs_.rows()) - 1;
  const int db = static_cast<int>(coeffs_.cols()) - 1;
  auto basis = [](int degree, const Interval& iv, const Eigen::VectorXd& pts, double scale) {
    Eigen::MatrixXd t(pts.size(), degree + 1), dt(pts.size(), degree + 1);
    Eigen::VectorXd a(degree + 1), b(degree + 1), c(degree + 1);
    for (Eigen::Index m = 0; m < pts.size(); ++m) {
      chebyshev_basis<double>(degree, iv.to_unit(pts[m]), a, b, c);
      t.row(m) = a.transpose();
      dt.row(m) = scale * b.transpose();
    }
    return std::pair{t, dt};
  };
  const auto [tu, dtu] = basis(da, domain_.first, ys, 2.0 / domain_.first.width());
  const auto [tv, dtv] = basis(db, domain_.second, yps, 2.0 / domain_.second.width());
  const Eigen::MatrixXd ctv = coeffs_ * tv.transpose();
  const Eigen::MatrixXd cdtv = coeffs_ * dtv.transpose();
  return {tu * ctv, dtu * ctv, tu * cdtv, dtu * cdtv};
}

}  // namespace qmono
