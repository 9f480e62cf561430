#pragma once

#include "qmono/chebyshev.hpp"
#include "qmono/dynamics.hpp"

#include <map>
#include <optional>
#include <set>
#include <utility>
#include <vector>

namespace qmono {

/// Sublevel set {q < 0} of q(y, eta) = ((y - y0)/a)^2 + ((eta - eta0)/b)^2 - 1.
struct Ellipse {
  double y0 = 0.0;
  double eta0 = 0.0;
  double a = 1.0;
  double b = 1.0;

  double q(double y, double eta) const {
    const double u = (y - y0) / a, v = (eta - eta0) / b;
    return u * u + v * v - 1.0;
  }
  bool contains(double y, double eta) const { return q(y, eta) < 0.0; }
};

/// One component of the Poincare section with symplectic chart coordinates
/// (y', eta'). Disk charts use Birkhoff coordinates on a billiard boundary
/// (arclength from a reference angle, tangential momentum of the outgoing ray);
/// line charts are segments {(x - origin).normal = 0} crossed in the +normal
/// direction, with y' the position along the segment and eta' = xi . tangent.
struct SectionChart {
  enum class Kind { DiskBoundary, Line };

  int index = 0;
  Kind kind = Kind::Line;
  double energy = 0.0;
  int disk = -1;                  // DiskBoundary
  double reference_angle = 0.0;   // DiskBoundary: s = radius * (phi - reference_angle)
  Eigen::Vector2d origin = Eigen::Vector2d::Zero();  // disk center, or the segment midpoint
  Eigen::Vector2d normal = Eigen::Vector2d::UnitX();  // Line
  double radius = 0.0;            // DiskBoundary
  Rectangle domain;               // y' range x eta' range
  Ellipse trapped_neighborhood;

  Eigen::Vector2d tangent() const { return {-normal[1], normal[0]}; }

  /// Phase point on the energy shell for chart coordinates; throws DomainError
  /// where the section is not transverse (no outgoing momentum exists).
  PhasePoint embed(const ScatteringSystem& system, double y, double eta) const;
  /// Chart coordinates of a phase point lying on the section surface.
  Eigen::Vector2d coordinates(const PhasePoint& p) const;
  /// Cosine between the flow and the section normal at chart coordinates.
  double transversality(const ScatteringSystem& system, double y, double eta) const;
  bool in_domain(double y, double eta) const {
    return domain.first.contains(y) && domain.second.contains(eta);
  }
  double diameter() const { return std::hypot(domain.first.width(), domain.second.width()); }
};

struct SectionOptions {
  double max_diameter = 10.0;
  double boundary_clearance = 0.05;  // delta_bdry
  double tau_max = 12.0;
  double min_transversality = 0.05;  // minimal cosine between flow and section normal
  double ellipse_padding = 0.02;
  double chart_margin = 0.3;         // extra room between the ellipse and the chart boundary
  double tol = 1e-10;
  double escape_radius = 10.0;
};

/// Chart point: component index and coordinates (y', eta').
struct SectionPoint {
  int chart;
  Eigen::Vector2d coords;
};

struct ReturnSample {
  Eigen::Vector2d departure;  // (y', eta') on the source chart
  Eigen::Vector2d arrival;    // (y, eta) on the target chart
  double tau;
  double action;
};

struct Crossing {
  int chart;
  Eigen::Vector2d coords;
  double tau;     // return time
  double action;  // integral of xi . dx from departure to arrival
};

/// First transversal crossing of any chart after leaving `departure`.
/// Throws EscapeError when no crossing happens within tau_max.
Crossing first_return(const std::vector<SectionChart>& charts, const ScatteringSystem& system,
                      const SectionPoint& departure, const SectionOptions& options);

/// First crossing of any chart by the forward orbit of an arbitrary phase point.
std::optional<Crossing> first_crossing(const std::vector<SectionChart>& charts, const ScatteringSystem& system,
                                       const PhasePoint& start, const SectionOptions& options);

/// Return connecting y' on chart `source` to y on chart `target`: solves for the
/// departure momentum eta' by Newton iteration started at `eta_guess`.
/// Absent when no such return exists near the guess.
std::optional<ReturnSample> connect(const std::vector<SectionChart>& charts, const ScatteringSystem& system,
                                           int target, int source, double y, double y_prime, double eta_guess,
                                           const SectionOptions& options);

/// Builds section components covering every trapped sample within tau_max.
/// Billiards get one Birkhoff chart per disk that trapped orbits hit.
std::vector<SectionChart> build_sections(const ScatteringSystem& system, double energy,
                                         const std::vector<PhasePoint>& trapped_samples,
                                         const SectionOptions& options);

struct GeneratingFunctionFit {
  ChebyshevSeries2D action;       // S(y, y'): eta = dS/dy, eta' = -dS/dy'
  ChebyshevSeries2D return_time;  // tau(y, y')
  double residual = 0.0;          // max violation of the identities on the samples
  double tau_residual = 0.0;
};

struct FitOptions {
  int degree = 8;
  double twist_floor = 1e-3;
};

/// Least-squares fit in a tensor Chebyshev basis on `domain` (arrival y x
/// departure y'; the bounding rectangle of the samples when absent) so that
/// dS/dy = eta, -dS/dy' = eta' and S = action at the samples.
GeneratingFunctionFit fit_generating_function(const std::vector<ReturnSample>& samples,
                                              const FitOptions& options,
                                              std::optional<Rectangle> domain = std::nullopt);

/// Samples of one component kappa_{ji}: departures on chart i arriving on chart j.
struct ReturnBlock {
  int source = 0;  // i
  int target = 0;  // j
  std::vector<ReturnSample> trapped;  // returns of trapped-set points (D_ji -> A_ji)
  std::vector<ReturnSample> samples;  // fitting samples on a neighbourhood
  Rectangle domain;                   // arrival y x departure y' covered by the fit
  GeneratingFunctionFit fit;
};

struct ReturnMapData {
  std::vector<SectionChart> charts;
  std::map<std::pair<int, int>, ReturnBlock> blocks;  // keyed by (target j, source i)

  std::set<int> outflow(int i) const;  // J+(i)
  std::set<int> inflow(int i) const;   // J-(i)
  const ReturnBlock& block(int target, int source) const;
};

struct PartitionOptions {
  SectionOptions section;
  FitOptions fit;
  int sample_budget = 600;        // fitting samples per block
  double separation_floor = 1e-6; // minimal distance between different D_ji on one chart
  double fit_margin = 0.05;       // padding of the fit rectangle around the trapped returns
};

/// Sorts the trapped samples into the blocks D_ji -> A_ji, checks the block
/// structure and fits a generating function for every block.
ReturnMapData partition_blocks(const std::vector<SectionChart>& charts, const ScatteringSystem& system,
                               const std::vector<PhasePoint>& trapped_samples,
                               const PartitionOptions& options);

}  // namespace qmono
