#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

namespace qmono {

/// A point (x, xi) of planar phase space T*R^2.
struct PhasePoint {
  Eigen::Vector2d x = Eigen::Vector2d::Zero();
  Eigen::Vector2d xi = Eigen::Vector2d::Zero();

  PhasePoint() = default;
  PhasePoint(const Eigen::Vector2d& pos, const Eigen::Vector2d& mom) : x(pos), xi(mom) {}

  Eigen::Vector4d stacked() const { return {x[0], x[1], xi[0], xi[1]}; }
  bool finite() const { return x.allFinite() && xi.allFinite(); }
};

struct GaussianBump {
  Eigen::Vector2d center;
  double amplitude;
  double width;  // standard deviation of the Gaussian
};

struct Disk {
  Eigen::Vector2d center;
  double radius;
};

enum class SystemKind { SmoothPotential, DiskBilliard };

/// Planar scattering system: either p = |xi|^2/2 + V(x) with V a sum of Gaussians
/// multiplied by a C-infinity cutoff vanishing outside B(0, R0), or free motion
/// outside a set of hard disks with specular reflection.
class ScatteringSystem {
public:
  static ScatteringSystem smooth(std::vector<GaussianBump> bumps, double support_radius,
                                 double cutoff_width);
  static ScatteringSystem billiard(std::vector<Disk> disks);
  /// V = 0 everywhere; a smooth system without bumps.
  static ScatteringSystem free_motion(double support_radius = 1.0);

  SystemKind kind() const { return kind_; }
  const std::vector<GaussianBump>& bumps() const { return bumps_; }
  const std::vector<Disk>& disks() const { return disks_; }
  double support_radius() const { return support_radius_; }
  double cutoff_width() const { return cutoff_width_; }

  double potential(const Eigen::Vector2d& x) const;
  Eigen::Vector2d gradient(const Eigen::Vector2d& x) const;
  /// Index of the disk containing x (closed disk), if any.
  std::optional<int> disk_containing(const Eigen::Vector2d& x) const;

  /// Centers of the scatterers (bump or disk centers).
  std::vector<Eigen::Vector2d> scatterer_centers() const;
  /// Largest k in [2, 8] such that rotation by 2*pi/k about the origin maps the
  /// system onto itself; 1 if there is none.
  int rotation_order() const;

private:
  SystemKind kind_ = SystemKind::SmoothPotential;
  std::vector<GaussianBump> bumps_;
  std::vector<Disk> disks_;
  double support_radius_ = 1.0;
  double cutoff_width_ = 0.5;
};

/// p(x, xi) = |xi|^2/2 + V(x). Throws DomainError inside a billiard disk.
double evaluate_hamiltonian(const ScatteringSystem& system, const PhasePoint& point);

struct TrajectorySample {
  double t;
  PhasePoint point;
};

struct Trajectory {
  std::vector<TrajectorySample> samples;
  double energy = 0.0;
  int bounces = 0;
  /// max |p - E| over the recorded samples
  double max_energy_drift = 0.0;

  const PhasePoint& end() const { return samples.back().point; }
};

/// Integrates the flow for `duration` (negative means backward in time).
/// Smooth systems use an adaptive 8th-order Runge-Kutta-Fehlberg scheme whose
/// per-step energy drift is held below tol * elapsed time; billiards use exact
/// ray-circle intersections.
Trajectory integrate_flow(const ScatteringSystem& system, const PhasePoint& start, double duration,
                          double tol);

struct EscapeTimes {
  std::optional<double> forward;
  std::optional<double> backward;
};

/// First times (in each direction) at which the orbit is outside B(0, escape_radius)
/// and moving outward, i.e. has left for good; absent if not reached by t_max.
EscapeTimes escape_time(const ScatteringSystem& system, const PhasePoint& point, double escape_radius,
                        double t_max, double tol = 1e-10);

// Incremental propagator shared by the escape, sampling and section code.
class FlowStepper {
public:
  // Events reported by step().
  enum class Event { None, Bounce };

  FlowStepper(const ScatteringSystem& system, const PhasePoint& start, double tol);

  /// Advances by one adaptive step (or one free-flight leg up to the next bounce),
  /// never past t_limit.
  Event step(double t_limit);

  double time() const { return t_; }
  const PhasePoint& point() const { return point_; }
  /// Reduced action accumulated since the start, the integral of xi . dx.
  double action() const { return action_; }
  int last_disk() const { return last_disk_; }
  int bounces() const { return bounces_; }
  double energy() const { return energy_; }
  double max_energy_drift() const { return max_drift_; }

  /// Time after which free flight from the current state stays outside `radius`
  /// and moves outward; assumes no further scattering.
  std::optional<double> free_exit_time(double radius) const;
  /// True when no further scattering can happen (billiard: no disk ahead; smooth:
  /// outside B(0, R0) and not re-entering it).
  bool free_forever() const;

  struct State {
    PhasePoint point;
    double action;
  };
  /// State at time t inside the last completed step [previous_time(), time()].
  /// For billiards this is the straight leg after the previous event.
  State state_in_last_step(double t) const;
  double previous_time() const { return t_prev_; }
  const PhasePoint& previous_point() const { return point_prev_; }

private:
  Event step_smooth(double t_limit);
  Event step_billiard(double t_limit);
  std::optional<std::pair<int, double>> next_disk_hit() const;

  const ScatteringSystem* system_;
  double tol_;
  double energy_ = 0.0;
  double t_ = 0.0;
  double t_prev_ = 0.0;
  double dt_ = 0.0;
  double action_ = 0.0;
  double action_prev_ = 0.0;
  PhasePoint point_;
  PhasePoint point_prev_;
  int last_disk_ = -1;
  int bounces_ = 0;
  double max_drift_ = 0.0;
};

struct TrappedSamplingOptions {
  double t_max = 12.0;
  double escape_radius = 10.0;
  double tol = 1e-10;
  std::uint64_t seed = 1;
  /// spacing in time between samples taken along one shadowing trajectory
  double sample_spacing = 0.5;
  /// add the images of every sample under the rotation symmetry of the system
  bool symmetrize = true;
  int max_families = 400;
};

/// Points of p^{-1}(E) whose forward and backward escape times both exceed t_max,
/// found by refining escape-time maxima along one-parameter families and
/// following the refined trajectories. An empty result is valid.
std::vector<PhasePoint> sample_trapped_set(const ScatteringSystem& system, double energy,
                                           int budget, const TrappedSamplingOptions& options);

struct DimensionFit {
  double dimension;
  double residual;
};

/// Box-counting dimension of the columns of `points` (one point per column):
/// least-squares slope of log N(eps) against log(1/eps).
DimensionFit box_counting_dimension(const Eigen::MatrixXd& points, const std::vector<double>& scales);

}  // namespace qmono
