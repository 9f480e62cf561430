#pragma once

#include "qmono/chebyshev.hpp"
#include "qmono/resonances.hpp"
#include "qmono/section.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace qmono {

/// One inverse branch psi: cells[to_cell] -> cells[from_cell] of an expanding
/// Markov interval map kappa. kappa maps psi(cells[to_cell]) onto cells[to_cell].
struct Branch {
  int from_cell = 0;
  int to_cell = 0;
  std::function<double(double)> inverse;
  std::function<double(double)> inverse_derivative;
};

/// Markov interval map given by its inverse branches. The alphabet is the set of
/// branches; branch b may follow branch a iff to_cell(a) == from_cell(b).
class SymbolicModel {
public:
  SymbolicModel(std::string name, std::vector<Interval> cells, std::vector<Branch> branches);

  static SymbolicModel doubling();            // 2x mod 1, full 2-shift
  static SymbolicModel ternary_cut();         // 3x mod 1 with the middle third open
  static SymbolicModel golden_mean();         // beta-map, cell transitions 11, 12, 21
  static SymbolicModel single_fixed_point();  // x -> 2x on [0, 1/2], fixed point 0

  const std::string& name() const { return name_; }
  const std::vector<Interval>& cells() const { return cells_; }
  const std::vector<Branch>& branches() const { return branches_; }
  int alphabet_size() const { return static_cast<int>(branches_.size()); }
  /// transitions(a, b) = 1 iff branch b may follow branch a.
  Eigen::MatrixXi transitions() const;
  /// Point kappa(y) for y in the image of branch a (bisection on the inverse).
  double forward(int branch, double y) const;

private:
  std::string name_;
  std::vector<Interval> cells_;
  std::vector<Branch> branches_;
};

/// Weight or roof function evaluated at a preimage y = psi_a(x), x = kappa(y).
using BranchFunction = std::function<double(int branch, double y, double x)>;

BranchFunction constant_weight(double c);
/// value[a] on branch a.
BranchFunction branch_weight(std::vector<double> values);
/// s * log|kappa'(y)|; s = -1 gives the normalized (geometric) weight.
BranchFunction expansion_weight(const SymbolicModel& model, double s);

struct Discretization {
  enum class Kind { Ulam, Collocation };
  Kind kind = Kind::Collocation;
  int resolution = 32;  // Ulam: cells per model cell; collocation: Chebyshev degree per cell

  static Discretization ulam(int cells) { return {Kind::Ulam, cells}; }
  static Discretization collocation(int degree) { return {Kind::Collocation, degree}; }
  Discretization refined() const { return {kind, 2 * resolution}; }
};

struct Roof {
  BranchFunction tau;
  Complex z;
};

struct TransferMatrix {
  Eigen::MatrixXcd entries;
  Discretization discretization;
  std::optional<Complex> z;

  Eigen::VectorXcd eigenvalues() const;
  double spectral_radius() const;
};

/// Precomputed pieces of z -> L_{f - z tau}: entries = sum_a diag(exp(f_a - z tau_a)) P_a.
class TransferFamily {
public:
  TransferFamily(const SymbolicModel& model, const BranchFunction& f, const Discretization& d,
                 const BranchFunction& tau = nullptr, double min_expansion = 1.0);

  Eigen::MatrixXcd operator()(Complex z) const;
  const Discretization& discretization() const { return disc_; }
  Eigen::Index dimension() const { return dim_; }

private:
  // collocation: rows [row, row + p.rows()) x cols [col, col + p.cols()) get
  // diag(exp(f - z tau)) * p
  struct Block {
    Eigen::Index row, col;
    Eigen::MatrixXd p;
    Eigen::VectorXd f, tau;
  };
  // Ulam: one quadrature point, coeff * exp(f - z tau) added to (row, col)
  struct Term {
    Eigen::Index row, col;
    double coeff, f, tau;
  };
  Discretization disc_;
  Eigen::Index dim_ = 0;
  std::vector<Block> blocks_;
  std::vector<Term> terms_;
};

/// Matrix of L_{f - z tau} (L_f without a roof). Resolution must be >= 8.
/// Throws ModelError for a non-expanding branch under collocation.
TransferMatrix build_transfer_matrix(const SymbolicModel& model, const BranchFunction& f, const Discretization& d,
                                     const std::optional<Roof>& roof = std::nullopt);

struct PressureEstimate {
  double value;  // log spectral radius at the requested resolution
  double error;  // |P(res) - P(2 res)|
  Discretization discretization;
};

PressureEstimate topological_pressure(const SymbolicModel& model, const BranchFunction& f,
                                      const Discretization& d = Discretization::collocation(32));

/// (1/T) log of the weighted sum over all points of period T (all closed
/// admissible words of length exactly T). Throws BudgetError past max_words.
double orbit_pressure(const SymbolicModel& model, const BranchFunction& f, int period,
                      std::int64_t max_words = std::int64_t(1) << 22);

struct Bracket {
  double lo;
  double hi;
};

/// Root s* of P(f - s tau) = 0 (bracketing + TOMS 748, tolerance 1e-12 in s).
/// Without a bracket one is grown from s = 0; throws BracketError when no sign change is found.
double flow_pressure(const SymbolicModel& model, const BranchFunction& f, const BranchFunction& tau,
                     const Discretization& d = Discretization::collocation(32),
                     std::optional<Bracket> bracket = std::nullopt);

/// Zeros of z -> det(1 - L_{f - z tau}) in a rectangle (collocation only).
ResonanceSet ruelle_resonances(const SymbolicModel& model, const BranchFunction& f, const BranchFunction& tau,
                               const ZeroDomain& domain, int degree = 32, const ZeroFinderOptions& options = {});

/// Ulam data for a section-built return map: each chart's trapped ellipse box is
/// cut into cells^2 cells, uniform departures per cell are followed to their
/// first return, and the arrival cells are recorded.
struct SampledReturnMap {
  struct Transition {
    int from_cell;
    int to_cell;
    double tau;
    Eigen::Vector2d departure;
    int chart;
    // log of the largest |eigenvalue| of D kappa at the departure (NaN when not computed)
    double log_expansion = std::numeric_limits<double>::quiet_NaN();
  };
  std::vector<Rectangle> boxes;  // one per chart
  int cells = 0;
  int samples_per_cell = 0;
  std::vector<Transition> transitions;

  int dimension() const { return static_cast<int>(boxes.size()) * cells * cells; }
  /// Cell index of chart point (y, eta); -1 outside every box.
  int cell_of(int chart, const Eigen::Vector2d& p) const;
};

/// log of the largest |eigenvalue| of D kappa at a departure (central differences
/// of the first return, step 1e-6); NaN when a perturbed orbit escapes or lands elsewhere.
double return_log_expansion(const std::vector<SectionChart>& charts, const ScatteringSystem& system,
                            const SectionPoint& departure, const SectionOptions& options);

/// With `expansion`, every transition also gets return_log_expansion at its departure.
SampledReturnMap sample_return_map(const std::vector<SectionChart>& charts, const ScatteringSystem& system,
                                   int cells, int samples_per_cell, const SectionOptions& options,
                                   std::uint64_t seed, bool expansion = false);

/// Weight on a departure point of the sampled map.
using ChartFunction = std::function<double(int chart, const Eigen::Vector2d& departure)>;

/// Ulam matrix (area-normalized push-forward) with weight exp(f - z tau).
TransferMatrix build_transfer_matrix(const SampledReturnMap& map, const ChartFunction& f,
                                     const std::optional<Complex>& z = std::nullopt);

/// Root s* of P(-beta log J_u - s tau) = 0 on the sampled map, J_u the unstable
/// Jacobian (Ulam matrices; transitions without an expansion estimate dropped).
/// beta = 1: minus the escape rate; beta = 1/2: the resonance-gap pressure;
/// beta = 0: topological entropy of the flow.
double flow_pressure(const SampledReturnMap& map, double beta, std::optional<Bracket> bracket = std::nullopt);

}  // namespace qmono
