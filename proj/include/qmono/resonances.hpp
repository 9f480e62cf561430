#pragma once

#include <Eigen/Dense>

#include <complex>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace qmono {

using Complex = std::complex<double>;
/// z -> finite-dimensional operator M(z).
using OperatorBuilder = std::function<Eigen::MatrixXcd(Complex)>;

/// det(I - M) split as phase * exp(log_abs) so that large dimensions do not underflow.
struct ZetaValue {
  Complex phase{1.0, 0.0};
  double log_abs = 0.0;

  Complex value() const { return phase * std::exp(log_abs); }
  bool is_zero() const { return log_abs == -std::numeric_limits<double>::infinity(); }
};

/// det(I - m) by partial-pivot LU. Throws ParameterError on non-finite entries.
ZetaValue zeta(const Eigen::MatrixXcd& m);
inline ZetaValue zeta(const OperatorBuilder& builder, Complex z) { return zeta(builder(z)); }

/// Search region: closed disk or axis-aligned rectangle in the complex plane.
struct ZeroDomain {
  enum class Kind { Disk, Rectangle };
  Kind kind = Kind::Disk;
  Complex center{0.0, 0.0};
  double radius = 1.0;
  double re_lo = -1.0, re_hi = 1.0, im_lo = -1.0, im_hi = 1.0;

  static ZeroDomain disk(Complex c, double r);
  static ZeroDomain rectangle(double re_lo, double re_hi, double im_lo, double im_hi);
  bool contains(Complex z) const;
  double scale() const;
  ZeroDomain inflated(double factor) const;
};

struct ZeroFinderOptions {
  int coarse_grid = 16;        // initial samples per boundary edge
  int cell_cap = 1;            // windings up to this are refined by Newton
  int max_depth = 40;          // quadtree depth
  double zero_tol = 0.0;       // absolute; 0: relative_zero_tol * median |zeta| on the refined cell's boundary
  double relative_zero_tol = 1e-9;
  double cluster_size = 1e-7;  // relative cell size below which a winding > 1 counts as one zero
  int boundary_retries = 3;
};

struct Zero {
  Complex z;
  int multiplicity = 1;
  double residual = 0.0;  // |zeta(z)| after refinement
};

struct ResonanceSet {
  std::vector<Zero> zeros;
  ZeroDomain domain;
  double h = 0.0;
  std::string provenance;
  int winding = 0;             // winding of zeta around the full domain boundary
  int subdivision_checks = 0;  // number of parent/children winding balances verified
  int evaluations = 0;

  int total_multiplicity() const;
};

/// Zeros of det(I - M(z)) in the domain: recursive subdivision driven by
/// boundary winding numbers, Newton refinement, multiplicity = winding of a small
/// circle. Throws BoundaryAmbiguityError if zeta keeps vanishing on the boundary
/// after the domain has been inflated by 1% `boundary_retries` times, and
/// ConsistencyError if a winding balance fails.
ResonanceSet find_zeros(const OperatorBuilder& builder, const ZeroDomain& domain,
                        const ZeroFinderOptions& options = {});

struct DensityFit {
  double exponent;
  double residual;
  std::vector<double> sizes;
  std::vector<double> counts;
};

/// Least-squares slope of log(count) against log(size). Needs at least four
/// sizes with non-zero counts.
DensityFit resonance_density(const std::vector<double>& sizes, const std::vector<double>& counts);

/// Slope of log #{|lambda| > threshold} against log N over the eigenvalues of the
/// given matrices (one per size N = rows).
DensityFit eigenvalue_density(const std::vector<Eigen::MatrixXcd>& matrices, double threshold);

struct GapReport {
  double gap;               // min |Im z| / h over the zeros
  double pressure_bound;    // -P(-(1/2) log J^u) expressed per unit h-scaled width
  double difference;        // gap - pressure_bound
};

/// Purely descriptive comparison of the resonance gap with the classical bound.
GapReport spectral_gap_report(const ResonanceSet& set, double half_jacobian_pressure);

/// Gap of an eigenvalue spectrum: z = i h log lambda, so |Im z|/h = -log|lambda|,
/// minimized over the eigenvalues (largest |lambda|).
GapReport spectral_gap_report(const Eigen::VectorXcd& eigenvalues, double half_jacobian_pressure);

}  // namespace qmono
