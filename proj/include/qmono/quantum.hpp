#pragma once

#include "qmono/chebyshev.hpp"
#include "qmono/resonances.hpp"
#include "qmono/section.hpp"

#include <Eigen/Dense>

#include <map>
#include <utility>
#include <vector>

namespace qmono {

/// Gauss-Legendre grids of one block: target y (rows) and source y' (columns).
struct BlockGrid {
  QuadratureRule target;
  QuadratureRule source;
};

/// Smallest node count resolving total phase `phase_variation` (radians) on an
/// interval with the given oversampling, plus a fixed floor of 16 nodes.
int nyquist_nodes(double phase_variation, double oversampling);

/// Grid on a block rectangle resolving the kernel phase S/h together with
/// states of momentum up to eta_max (target, source).
BlockGrid block_grid(const ChebyshevSeries2D& action, double h, double oversampling, double target_eta_max,
                     double source_eta_max);

/// Kernel matrix of one block on its grid:
/// K(y_m, y'_n) = w_n (2 pi h)^{-1/2} |S_yy'|^{1/2} exp(i [S + z tau] / h).
struct QuantumBlock {
  int target = 0;  // j
  int source = 0;  // i
  double h = 0.0;
  Complex z;
  BlockGrid grid;
  Eigen::MatrixXcd kernel;
};

/// Throws AliasingError (with the required node count) when a grid axis is too
/// coarse for the phase variation, and TwistError when |S_yy'| < twist_floor at a node.
QuantumBlock quantize_block(const ChebyshevSeries2D& action, const ChebyshevSeries2D& return_time, Complex z,
                            double h, const BlockGrid& grid, double oversampling = 4.0, double twist_floor = 1e-3,
                            double source_eta_max = 0.0, double target_eta_max = 0.0);

/// Range of 1_{(-inf, 0]}(q^w) for q = ((y - y0)/a)^2 + ((eta - eta0)/b)^2 - 1.
/// q^w has eigenvalues (2k + 1) h / (ab) - 1 on the scaled Hermite functions
/// e_k(y) = sigma^{-1/2} psi_k((y - y0)/sigma) exp(i eta0 (y - y0)/h), sigma^2 = h a / b,
/// hence rank floor(ab/(2h) + 1/2).
struct SectionProjector {
  int chart = 0;
  double h = 0.0;
  Ellipse ellipse;
  int rank = 0;
  QuadratureRule grid;     // chart grid on which the basis is orthonormalized
  Eigen::MatrixXcd basis;  // grid values times sqrt(weights), orthonormal columns
  Eigen::MatrixXcd lowdin; // r x r map from raw Hermite functions to the basis

  /// Basis functions (columns) at arbitrary points, consistent with `basis`.
  Eigen::MatrixXcd evaluate(const Eigen::VectorXd& y) const;
  /// Pi = basis basis^* on the chart grid.
  Eigen::MatrixXcd matrix() const { return basis * basis.adjoint(); }
};

int projector_rank(const Ellipse& e, double h);

/// Normalized Hermite functions psi_0..psi_{n-1} at u (stable three-term recurrence).
Eigen::MatrixXd hermite_functions(const Eigen::VectorXd& u, int n);

/// Throws ResolutionError when the rank is 0 and ParameterError when the ellipse
/// leaves the chart domain.
SectionProjector build_projector(const SectionChart& chart, const Ellipse& ellipse, double h, double oversampling = 4.0);
inline SectionProjector build_projector(const SectionChart& chart, double h, double oversampling = 4.0) {
  return build_projector(chart, chart.trapped_neighborhood, h, oversampling);
}

struct QuantumTransferOperator {
  double h = 0.0;
  Complex z;
  std::vector<int> ranks;
  std::map<std::pair<int, int>, Eigen::MatrixXcd> blocks;  // (j, i) -> r_j x r_i

  int dimension() const;
  Eigen::MatrixXcd dense() const;
};

/// Block (j, i) = Pi_j K_ji Pi_i in the projector bases. Throws ConsistencyError
/// when a block does not fit the projector ranks or charts.
QuantumTransferOperator assemble_M(const std::vector<QuantumBlock>& blocks, const std::vector<SectionProjector>& projectors,
                                   Complex z);

struct QuantumOptions {
  double h = 1.0 / 64.0;
  double oversampling = 4.0;
  double twist_floor = 1e-3;
  double min_semi_axis_y = 0.0;    // projector ellipse a >= this
  double min_semi_axis_eta = 0.0;  // projector ellipse b >= this
  double grid_scale = 1.0;         // multiplies every quadrature node count
};

/// Projector ellipse for a chart: its trapped ellipse with the semi-axes raised to
/// the minima, clipped to the chart domain.
Ellipse projector_ellipse(const SectionChart& chart, const QuantumOptions& options);

/// z -> M(z, h) for a section-built return map with everything z-independent
/// precomputed: M_ji(z) = L_j (K0_ji o exp(i z tau_ji / h)) R_i.
class QuantumMap {
public:
  QuantumMap(const ReturnMapData& data, const QuantumOptions& options);

  Eigen::MatrixXcd operator()(Complex z) const;
  QuantumTransferOperator assemble(Complex z) const;
  std::vector<QuantumBlock> blocks(Complex z) const;

  int dimension() const { return dimension_; }
  double h() const { return options_.h; }
  const std::vector<SectionProjector>& projectors() const { return projectors_; }
  const QuantumOptions& options() const { return options_; }

private:
  struct Piece {
    int target, source;
    ChebyshevSeries2D action, return_time;
    BlockGrid grid;
    Eigen::MatrixXcd k0;    // kernel at z = 0
    Eigen::MatrixXd tau;    // return time on the grid
    Eigen::MatrixXcd left;  // r_j x N_y: U_j^* diag(w)
    Eigen::MatrixXcd right; // N_y' x r_i: U_i
  };
  QuantumOptions options_;
  std::vector<SectionProjector> projectors_;
  std::vector<Piece> pieces_;
  std::vector<int> offsets_;
  int dimension_ = 0;
};

/// Discrete-Fourier quantization of the three-branch baker map:
/// B = G_N^{-1} (G_{N/3} + G_{N/3} + G_{N/3}) with half-shifted DFTs
/// (G_N)_{kl} = N^{-1/2} exp(-2 pi i (k + 1/2)(l + 1/2) / N); the middle
/// column block is zeroed when open_middle. Throws ParameterError unless 3 | N.
Eigen::MatrixXcd open_baker(int n, bool open_middle);

}  // namespace qmono
