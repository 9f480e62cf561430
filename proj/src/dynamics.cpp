#include "qmono/dynamics.hpp"

#include "qmono/errors.hpp"

#include <boost/numeric/odeint.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace qmono {

namespace odeint = boost::numeric::odeint;

namespace {

// exp(-1/t) for t > 0, 0 otherwise, and its derivative.
double flat_ramp(double t) { return t > 0.0 ? std::exp(-1.0 / t) : 0.0; }
double flat_ramp_d(double t) { return t > 0.0 ? std::exp(-1.0 / t) / (t * t) : 0.0; }

struct Cutoff {
  double value;
  double derivative;  // d/dr
};

// 1 for r <= R0 - w, 0 for r >= R0, C-infinity in between.
Cutoff radial_cutoff(double r, double support_radius, double width) {
  const double inner = support_radius - width;
  if (r <= inner) return {1.0, 0.0};
  if (r >= support_radius) return {0.0, 0.0};
  const double a = flat_ramp((support_radius - r) / width);
  const double b = flat_ramp((r - inner) / width);
  const double da = -flat_ramp_d((support_radius - r) / width) / width;
  const double db = flat_ramp_d((r - inner) / width) / width;
  const double s = a + b;
  return {a / s, (da * s - a * (da + db)) / (s * s)};
}

void require_finite(const PhasePoint& p) {
  if (!p.finite()) throw ParameterError("phase point has non-finite components");
}

Eigen::Vector2d rotate(const Eigen::Vector2d& v, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {c * v[0] - s * v[1], s * v[0] + c * v[1]};
}

constexpr double kGrazingFloor = 1e-12;

}  // namespace

ScatteringSystem ScatteringSystem::smooth(std::vector<GaussianBump> bumps, double support_radius,
                                          double cutoff_width) {
  if (!(support_radius > 0.0) || !(cutoff_width > 0.0) || cutoff_width >= support_radius)
    throw ParameterError("smooth potential needs 0 < cutoff_width < support_radius");
  for (const auto& b : bumps)
    if (!(b.width > 0.0) || !b.center.allFinite() || !std::isfinite(b.amplitude))
      throw ParameterError("Gaussian bump needs a finite center/amplitude and positive width");
  ScatteringSystem s;
  s.kind_ = SystemKind::SmoothPotential;
  s.bumps_ = std::move(bumps);
  s.support_radius_ = support_radius;
  s.cutoff_width_ = cutoff_width;
  return s;
}

ScatteringSystem ScatteringSystem::free_motion(double support_radius) {
  return smooth({}, support_radius, 0.5 * support_radius);
}

ScatteringSystem ScatteringSystem::billiard(std::vector<Disk> disks) {
  if (disks.empty()) throw ParameterError("billiard needs at least one disk");
  for (const auto& d : disks)
    if (!(d.radius > 0.0) || !d.center.allFinite()) throw ParameterError("disk radius must be positive");
  const auto n = disks.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if ((disks[i].center - disks[j].center).norm() <= disks[i].radius + disks[j].radius)
        throw ParameterError("billiard disks must be pairwise disjoint");
  // No-eclipse: no disk meets the convex hull of two others.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      for (std::size_t k = 0; k < n; ++k) {
        if (k == i || k == j) continue;
        const Eigen::Vector2d a = disks[i].center, b = disks[j].center;
        const Eigen::Vector2d d = (b - a).normalized();
        const Eigen::Vector2d nrm(-d[1], d[0]);
        const Eigen::Vector2d c = disks[k].center - a;
        const double along = c.dot(d);
        const double across = std::abs(c.dot(nrm));
        const double slab = std::max(disks[i].radius, disks[j].radius);
        if (along > -disks[k].radius && along < (b - a).norm() + disks[k].radius &&
            across < slab + disks[k].radius)
          throw ParameterError("billiard violates the no-eclipse condition");
      }
  ScatteringSystem s;
  s.kind_ = SystemKind::DiskBilliard;
  s.disks_ = std::move(disks);
  double r0 = 0.0;
  for (const auto& d : s.disks_) r0 = std::max(r0, d.center.norm() + d.radius);
  s.support_radius_ = r0;
  s.cutoff_width_ = 0.0;
  return s;
}

double ScatteringSystem::potential(const Eigen::Vector2d& x) const {
  if (kind_ == SystemKind::DiskBilliard) return 0.0;
  const double r = x.norm();
  const Cutoff chi = radial_cutoff(r, support_radius_, cutoff_width_);
  if (chi.value == 0.0) return 0.0;
  double v = 0.0;
  for (const auto& b : bumps_) {
    const double s2 = b.width * b.width;
    v += b.amplitude * std::exp(-(x - b.center).squaredNorm() / (2.0 * s2));
  }
  return chi.value * v;
}

Eigen::Vector2d ScatteringSystem::gradient(const Eigen::Vector2d& x) const {
  Eigen::Vector2d g = Eigen::Vector2d::Zero();
  if (kind_ == SystemKind::DiskBilliard) return g;
  const double r = x.norm();
  const Cutoff chi = radial_cutoff(r, support_radius_, cutoff_width_);
  if (chi.value == 0.0 && chi.derivative == 0.0) return g;
  double v = 0.0;
  Eigen::Vector2d dv = Eigen::Vector2d::Zero();
  for (const auto& b : bumps_) {
    const double s2 = b.width * b.width;
    const Eigen::Vector2d d = x - b.center;
    const double e = b.amplitude * std::exp(-d.squaredNorm() / (2.0 * s2));
    v += e;
    dv -= e * d / s2;
  }
  g = chi.value * dv;
  if (chi.derivative != 0.0 && r > 0.0) g += chi.derivative * v * x / r;
  return g;
}

std::optional<int> ScatteringSystem::disk_containing(const Eigen::Vector2d& x) const {
  for (std::size_t i = 0; i < disks_.size(); ++i)
    if ((x - disks_[i].center).norm() <= disks_[i].radius) return static_cast<int>(i);
  return std::nullopt;
}

std::vector<Eigen::Vector2d> ScatteringSystem::scatterer_centers() const {
  std::vector<Eigen::Vector2d> c;
  if (kind_ == SystemKind::DiskBilliard)
    for (const auto& d : disks_) c.push_back(d.center);
  else
    for (const auto& b : bumps_) c.push_back(b.center);
  return c;
}

int ScatteringSystem::rotation_order() const {
  const auto centers = scatterer_centers();
  if (centers.empty()) return 1;
  auto params = [&](std::size_t i) -> Eigen::Vector2d {
    if (kind_ == SystemKind::DiskBilliard) return {disks_[i].radius, 0.0};
    return {bumps_[i].amplitude, bumps_[i].width};
  };
  for (int k = 8; k >= 2; --k) {
    const double angle = 2.0 * std::numbers::pi / k;
    bool ok = true;
    for (std::size_t i = 0; i < centers.size() && ok; ++i) {
      const Eigen::Vector2d image = rotate(centers[i], angle);
      bool found = false;
      for (std::size_t j = 0; j < centers.size() && !found; ++j)
        found = (image - centers[j]).norm() < 1e-12 * (1.0 + centers[j].norm()) &&
                (params(i) - params(j)).norm() < 1e-12;
      ok = found;
    }
    if (ok) return k;
  }
  return 1;
}

double evaluate_hamiltonian(const ScatteringSystem& system, const PhasePoint& point) {
  require_finite(point);
  if (system.kind() == SystemKind::DiskBilliard) {
    if (auto d = system.disk_containing(point.x)) {
      // Points on the boundary itself are admissible (bounce states).
      const auto& disk = system.disks()[*d];
      if ((point.x - disk.center).norm() < disk.radius * (1.0 - 1e-12))
        throw DomainError("phase point lies inside billiard disk " + std::to_string(*d));
    }
  }
  return 0.5 * point.xi.squaredNorm() + system.potential(point.x);
}

// ---------------------------------------------------------------------------
// FlowStepper

namespace {

using Rk78 = odeint::runge_kutta_fehlberg78<std::array<double, 5>>;

struct HamiltonRhs {
  const ScatteringSystem* system;
  void operator()(const std::array<double, 5>& s, std::array<double, 5>& ds, double) const {
    const Eigen::Vector2d g = system->gradient({s[0], s[1]});
    ds[0] = s[2];
    ds[1] = s[3];
    ds[2] = -g[0];
    ds[3] = -g[1];
    ds[4] = s[2] * s[2] + s[3] * s[3];
  }
};

}  // namespace

FlowStepper::FlowStepper(const ScatteringSystem& system, const PhasePoint& start, double tol)
    : system_(&system), tol_(tol), point_(start), point_prev_(start) {
  require_finite(start);
  if (!(tol > 0.0)) throw ParameterError("integration tolerance must be positive");
  energy_ = evaluate_hamiltonian(system, start);
  if (system.kind() == SystemKind::DiskBilliard) {
    if (auto d = system.disk_containing(start.x)) last_disk_ = *d;  // starting on a boundary
  }
  dt_ = 1e-2;
}

bool FlowStepper::free_forever() const {
  if (system_->kind() == SystemKind::DiskBilliard) return !next_disk_hit().has_value();
  const double r0 = system_->support_radius();
  const Eigen::Vector2d& x = point_.x;
  const Eigen::Vector2d& xi = point_.xi;
  const double speed2 = xi.squaredNorm();
  if (speed2 == 0.0) return x.norm() >= r0;
  if (x.norm() < r0) return false;
  const double b = x.dot(xi);
  if (b >= 0.0) return true;
  const double closest2 = x.squaredNorm() - b * b / speed2;
  return closest2 >= r0 * r0;
}

std::optional<double> FlowStepper::free_exit_time(double radius) const {
  const Eigen::Vector2d& x = point_.x;
  const Eigen::Vector2d& xi = point_.xi;
  const double a = xi.squaredNorm();
  const double b = x.dot(xi);
  if (x.norm() > radius && b >= 0.0) return 0.0;
  if (a == 0.0) return std::nullopt;
  const double c = x.squaredNorm() - radius * radius;
  const double disc = b * b - a * c;
  if (disc < 0.0) return -b / a;  // outside and missing the ball: turns outward at closest approach
  return (-b + std::sqrt(disc)) / a;
}

FlowStepper::Event FlowStepper::step(double t_limit) {
  if (t_limit <= t_) return Event::None;
  point_prev_ = point_;
  t_prev_ = t_;
  action_prev_ = action_;
  return system_->kind() == SystemKind::DiskBilliard ? step_billiard(t_limit) : step_smooth(t_limit);
}

FlowStepper::Event FlowStepper::step_smooth(double t_limit) {
  const double r0 = system_->support_radius();
  const double speed2 = point_.xi.squaredNorm();
  // Outside the support the flow is a straight line.
  if (point_.x.norm() >= r0) {
    double leg = t_limit - t_;
    if (!free_forever()) {
      const double b = point_.x.dot(point_.xi);
      const double c = point_.x.squaredNorm() - r0 * r0;
      const double disc = std::max(0.0, b * b - speed2 * c);
      const double enter = c / (-b + std::sqrt(disc));  // smaller positive root
      // stop slightly inside so the next step starts in the integration region
      leg = std::min(leg, enter * (1.0 + 1e-12) + 1e-14);
    }
    point_.x += leg * point_.xi;
    action_ += speed2 * leg;
    t_ += leg;
    return Event::None;
  }

  HamiltonRhs rhs{system_};
  auto stepper = odeint::make_controlled<Rk78>(1e-2 * tol_, 0.0);
  const double floor = 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(energy_));
  for (int attempt = 0; attempt < 200; ++attempt) {
    double dt = std::min(dt_, t_limit - t_);
    std::array<double, 5> s{point_.x[0], point_.x[1], point_.xi[0], point_.xi[1], action_};
    double t = t_;
    const double dt_try = dt;
    const auto result = stepper.try_step(rhs, s, t, dt);
    if (result == odeint::fail) {
      dt_ = dt;
      if (dt_ < 1e-14 * std::max(1.0, std::abs(t_)))
        throw TangencyError("integrator step size underflow", t_);
      continue;
    }
    const PhasePoint next({s[0], s[1]}, {s[2], s[3]});
    const double drift = std::abs(0.5 * next.xi.squaredNorm() + system_->potential(next.x) - energy_);
    if (drift > tol_ * std::abs(t) + floor) {
      dt_ = 0.5 * dt_try;
      continue;
    }
    max_drift_ = std::max(max_drift_, drift);
    point_ = next;
    action_ = s[4];
    t_ = (t_limit - t < 1e-15 * std::max(1.0, std::abs(t_limit))) ? t_limit : t;
    // a step clipped by t_limit says nothing about the admissible size
    const bool clipped = dt_try < dt_;
    dt_ = clipped ? std::max(dt_, dt) : dt;
    return Event::None;
  }
  throw TangencyError("integrator failed to find an admissible step", t_);
}

std::optional<std::pair<int, double>> FlowStepper::next_disk_hit() const {
  const Eigen::Vector2d& x = point_.x;
  const Eigen::Vector2d& xi = point_.xi;
  const double speed2 = xi.squaredNorm();
  double best = std::numeric_limits<double>::infinity();
  int hit = -1;
  const auto& disks = system_->disks();
  for (std::size_t i = 0; i < disks.size(); ++i) {
    if (static_cast<int>(i) == last_disk_) continue;
    const Eigen::Vector2d rel = x - disks[i].center;
    const double b = xi.dot(rel);
    if (b >= 0.0) continue;
    const double c = rel.squaredNorm() - disks[i].radius * disks[i].radius;
    const double disc = b * b - speed2 * c;
    if (disc < 0.0) continue;
    const double s = c / (-b + std::sqrt(disc));
    if (s > 0.0 && s < best) {
      best = s;
      hit = static_cast<int>(i);
    }
  }
  if (hit < 0) return std::nullopt;
  return std::make_pair(hit, best);
}

FlowStepper::Event FlowStepper::step_billiard(double t_limit) {
  const Eigen::Vector2d x = point_.x;
  const Eigen::Vector2d xi = point_.xi;
  const double speed2 = xi.squaredNorm();
  const auto next = next_disk_hit();
  const int hit = next ? next->first : -1;
  const double best = next ? next->second : 0.0;
  const auto& disks = system_->disks();
  if (hit < 0 || t_ + best > t_limit) {
    const double leg = t_limit - t_;
    point_.x += leg * xi;
    action_ += speed2 * leg;
    t_ = t_limit;
    return Event::None;
  }
  const auto& disk = disks[hit];
  Eigen::Vector2d xh = x + best * xi;
  const Eigen::Vector2d n = (xh - disk.center).normalized();
  xh = disk.center + disk.radius * n;  // project onto the circle
  const double cos_inc = -xi.dot(n) / std::sqrt(speed2);
  if (cos_inc < kGrazingFloor) {
    std::ostringstream msg;
    msg << "grazing collision with disk " << hit << " at t=" << t_ + best;
    throw TangencyError(msg.str(), t_ + best);
  }
  Eigen::Vector2d out = xi - 2.0 * xi.dot(n) * n;
  out *= std::sqrt(speed2) / out.norm();
  point_.x = xh;
  point_.xi = out;
  action_ += speed2 * best;
  t_ += best;
  last_disk_ = hit;
  ++bounces_;
  return Event::Bounce;
}

FlowStepper::State FlowStepper::state_in_last_step(double t) const {
  const double dt = t - t_prev_;
  if (system_->kind() == SystemKind::DiskBilliard || point_prev_.x.norm() >= system_->support_radius())
    return {{point_prev_.x + dt * point_prev_.xi, point_prev_.xi},
            action_prev_ + point_prev_.xi.squaredNorm() * dt};
  if (dt == 0.0) return {point_prev_, action_prev_};
  HamiltonRhs rhs{system_};
  Rk78 rk;
  std::array<double, 5> s{point_prev_.x[0], point_prev_.x[1], point_prev_.xi[0], point_prev_.xi[1],
                          action_prev_};
  // substeps keep the interpolant at the controller's accuracy
  const int n = std::max(1, static_cast<int>(std::ceil(std::abs(dt) / std::max(dt_, 1e-300))));
  const double h = dt / n;
  double tt = t_prev_;
  for (int i = 0; i < n; ++i, tt += h) rk.do_step(rhs, s, tt, h);
  return {{{s[0], s[1]}, {s[2], s[3]}}, s[4]};
}

// ---------------------------------------------------------------------------

namespace {

PhasePoint time_reversed(const PhasePoint& p) { return {p.x, -p.xi}; }

}  // namespace

Trajectory integrate_flow(const ScatteringSystem& system, const PhasePoint& start, double duration,
                          double tol) {
  if (!std::isfinite(duration)) throw ParameterError("duration must be finite");
  const bool backward = duration < 0.0;
  const double span = std::abs(duration);
  FlowStepper stepper(system, backward ? time_reversed(start) : start, tol);
  Trajectory traj;
  traj.energy = stepper.energy();
  auto record = [&](double t, const PhasePoint& p) {
    traj.samples.push_back({backward ? -t : t, backward ? time_reversed(p) : p});
  };
  record(0.0, stepper.point());
  while (stepper.time() < span) {
    stepper.step(span);
    record(stepper.time(), stepper.point());
  }
  traj.bounces = stepper.bounces();
  for (const auto& s : traj.samples)
    traj.max_energy_drift = std::max(traj.max_energy_drift, std::abs(evaluate_hamiltonian(system, s.point) - traj.energy));
  return traj;
}

namespace {

std::optional<double> one_sided_escape(const ScatteringSystem& system, const PhasePoint& start,
                                       double escape_radius, double t_max, double tol) {
  FlowStepper stepper(system, start, tol);
  while (true) {
    if (stepper.free_forever()) {
      auto exit = stepper.free_exit_time(escape_radius);
      if (!exit) return std::nullopt;
      const double t = stepper.time() + *exit;
      if (t > t_max) return std::nullopt;
      return t;
    }
    if (stepper.time() >= t_max) return std::nullopt;
    stepper.step(t_max);
  }
}

}  // namespace

EscapeTimes escape_time(const ScatteringSystem& system, const PhasePoint& point, double escape_radius,
                        double t_max, double tol) {
  require_finite(point);
  if (!(escape_radius > system.support_radius()))
    throw ParameterError("escape radius must exceed the support radius R0");
  if (!(t_max > 0.0)) throw ParameterError("t_max must be positive");
  EscapeTimes out;
  out.forward = one_sided_escape(system, point, escape_radius, t_max, tol);
  out.backward = one_sided_escape(system, time_reversed(point), escape_radius, t_max, tol);
  return out;
}

}  // namespace qmono
