#include "qmono/section.hpp"

#include "qmono/errors.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

namespace qmono {

namespace {

constexpr double kPi = std::numbers::pi;

double wrap_angle(double a) {
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a < 0.0) a += 2.0 * kPi;
  return a - kPi;
}

Eigen::Vector2d unit(double angle) { return {std::cos(angle), std::sin(angle)}; }

double kinetic_momentum(const ScatteringSystem& system, double energy, const Eigen::Vector2d& x) {
  const double v = system.kind() == SystemKind::DiskBilliard ? 0.0 : system.potential(x);
  return std::sqrt(std::max(0.0, 2.0 * (energy - v)));
}

double signed_distance(const SectionChart& c, const Eigen::Vector2d& x) { return (x - c.origin).dot(c.normal); }

}  // namespace

PhasePoint SectionChart::embed(const ScatteringSystem& system, double y, double eta) const {
  Eigen::Vector2d x, t, n;
  if (kind == Kind::DiskBoundary) {
    const double phi = reference_angle + y / radius;
    n = unit(phi);
    t = {-n[1], n[0]};
    x = origin + radius * n;
  } else {
    n = normal;
    t = tangent();
    x = origin + y * t;
  }
  const double p = kinetic_momentum(system, energy, x);
  const double pn2 = p * p - eta * eta;
  if (!(pn2 > 0.0)) {
    std::ostringstream msg;
    msg << "chart " << index << ": no outgoing momentum at (" << y << ", " << eta << ")";
    throw DomainError(msg.str());
  }
  return {x, eta * t + std::sqrt(pn2) * n};
}

Eigen::Vector2d SectionChart::coordinates(const PhasePoint& p) const {
  if (kind == Kind::DiskBoundary) {
    const Eigen::Vector2d d = p.x - origin;
    const double phi = std::atan2(d[1], d[0]);
    const Eigen::Vector2d t(-std::sin(phi), std::cos(phi));
    return {radius * wrap_angle(phi - reference_angle), p.xi.dot(t)};
  }
  const Eigen::Vector2d t = tangent();
  return {(p.x - origin).dot(t), p.xi.dot(t)};
}

double SectionChart::transversality(const ScatteringSystem& system, double y, double eta) const {
  const PhasePoint p = embed(system, y, eta);
  const Eigen::Vector2d n = kind == Kind::DiskBoundary ? Eigen::Vector2d((p.x - origin) / radius) : normal;
  return p.xi.dot(n) / p.xi.norm();
}

// ---------------------------------------------------------------------------
// first return

namespace {

std::optional<Crossing> scan(const std::vector<SectionChart>& charts, const ScatteringSystem& system,
                             const PhasePoint& start, const SectionOptions& options, double min_time) {
  FlowStepper stepper(system, start, options.tol);
  const double tau_max = options.tau_max;

  if (system.kind() == SystemKind::DiskBilliard) {
    std::vector<int> chart_of_disk(system.disks().size(), -1);
    for (const auto& c : charts)
      if (c.kind == SectionChart::Kind::DiskBoundary) chart_of_disk[c.disk] = c.index;
    while (stepper.time() < tau_max) {
      if (stepper.free_forever()) return std::nullopt;
      if (stepper.step(tau_max) != FlowStepper::Event::Bounce) continue;
      const int ci = chart_of_disk[stepper.last_disk()];
      if (ci < 0 || stepper.time() <= min_time) continue;
      const Eigen::Vector2d c = charts[ci].coordinates(stepper.point());
      if (!charts[ci].in_domain(c[0], c[1])) continue;
      return Crossing{ci, c, stepper.time(), stepper.action()};
    }
    return std::nullopt;
  }

  bool last_leg = false;
  while (stepper.time() < tau_max && !last_leg) {
    double limit = tau_max;
    if (stepper.free_forever()) {
      const auto exit = stepper.free_exit_time(options.escape_radius);
      limit = std::min(tau_max, stepper.time() + exit.value_or(0.0) + 1.0);
      last_leg = true;
    }
    stepper.step(limit);
    const PhasePoint& p0 = stepper.previous_point();
    const PhasePoint& p1 = stepper.point();
    std::optional<Crossing> best;
    for (const auto& c : charts) {
      if (c.kind != SectionChart::Kind::Line) continue;
      const double g0 = signed_distance(c, p0.x);
      const double g1 = signed_distance(c, p1.x);
      if (!(g0 < 0.0 && g1 >= 0.0)) continue;
      // bisection on the signed distance to the line
      double lo = stepper.previous_time(), hi = stepper.time();
      for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++it) {
        const double mid = 0.5 * (lo + hi);
        if (signed_distance(c, stepper.state_in_last_step(mid).point.x) < 0.0)
          lo = mid;
        else
          hi = mid;
      }
      const double tc = 0.5 * (lo + hi);
      if (tc <= min_time || (best && tc >= best->tau)) continue;
      auto st = stepper.state_in_last_step(tc);
      // project onto the line; the residual normal offset is below the time resolution
      st.point.x -= signed_distance(c, st.point.x) * c.normal;
      const Eigen::Vector2d coords = c.coordinates(st.point);
      if (!c.in_domain(coords[0], coords[1])) continue;
      best = Crossing{c.index, coords, tc, st.action};
    }
    if (best) return best;
  }
  return std::nullopt;
}

}  // namespace

Crossing first_return(const std::vector<SectionChart>& charts, const ScatteringSystem& system,
                      const SectionPoint& departure, const SectionOptions& options) {
  if (departure.chart < 0 || departure.chart >= static_cast<int>(charts.size()))
    throw ParameterError("departure chart index out of range");
  const auto& chart = charts[departure.chart];
  const PhasePoint start = chart.embed(system, departure.coords[0], departure.coords[1]);
  const auto hit = scan(charts, system, start, options, 1e-9);
  if (!hit) {
    std::ostringstream msg;
    msg << "no return to the section within tau_max from chart " << departure.chart << " at ("
        << departure.coords[0] << ", " << departure.coords[1] << ")";
    throw EscapeError(msg.str());
  }
  return *hit;
}

std::optional<Crossing> first_crossing(const std::vector<SectionChart>& charts, const ScatteringSystem& system,
                                       const PhasePoint& start, const SectionOptions& options) {
  return scan(charts, system, start, options, 0.0);
}

std::optional<ReturnSample> connect(const std::vector<SectionChart>& charts, const ScatteringSystem& system,
                                    int target, int source, double y, double y_prime, double eta_guess,
                                    const SectionOptions& options) {
  const auto& src = charts.at(source);
  auto evaluate = [&](double eta) -> std::optional<Crossing> {
    if (!src.domain.second.contains(eta)) return std::nullopt;
    try {
      auto c = first_return(charts, system, {source, {y_prime, eta}}, options);
      if (c.chart != target) return std::nullopt;
      return c;
    } catch (const DomainError&) {
    } catch (const EscapeError&) {
    } catch (const TangencyError&) {
    }
    return std::nullopt;
  };

  double eta = eta_guess;
  auto cur = evaluate(eta);
  if (!cur) return std::nullopt;
  const double scale = std::max(1.0, src.domain.second.width());
  for (int it = 0; it < 40; ++it) {
    const double f = cur->coords[0] - y;
    if (std::abs(f) < 1e-13) break;
    const double d = 1e-6 * scale;
    const auto plus = evaluate(eta + d);
    const auto minus = evaluate(eta - d);
    double slope;
    if (plus && minus)
      slope = (plus->coords[0] - minus->coords[0]) / (2.0 * d);
    else if (plus)
      slope = (plus->coords[0] - cur->coords[0]) / d;
    else if (minus)
      slope = (cur->coords[0] - minus->coords[0]) / d;
    else
      return std::nullopt;
    if (slope == 0.0 || !std::isfinite(slope)) return std::nullopt;
    double step = -f / slope;
    bool moved = false;
    for (int k = 0; k < 30; ++k, step *= 0.5) {
      auto next = evaluate(eta + step);
      if (next && std::abs(next->coords[0] - y) < std::abs(f)) {
        eta += step;
        cur = next;
        moved = true;
        break;
      }
    }
    if (!moved || std::abs(step) < 1e-15 * scale) break;
  }
  if (std::abs(cur->coords[0] - y) > 1e-9) return std::nullopt;
  return ReturnSample{{y_prime, eta}, cur->coords, cur->tau, cur->action};
}

// ---------------------------------------------------------------------------
// construction

namespace {

struct ChartPoint {
  int sample;
  double y;
  double eta;
};

// Ellipse around the bounding box of the points, chart domain around the ellipse.
// `eta_bound` gives the largest transversal |eta| over a y-interval; the y margin is
// reduced until the ellipse fits inside a transversal rectangle.
template <typename EtaBound>
void shape_chart(SectionChart& chart, const std::vector<ChartPoint>& pts, const SectionOptions& options,
                 Interval y_limit, EtaBound eta_bound) {
  double ylo = std::numeric_limits<double>::infinity(), yhi = -ylo, elo = ylo, ehi = -ylo;
  for (const auto& p : pts) {
    ylo = std::min(ylo, p.y);
    yhi = std::max(yhi, p.y);
    elo = std::min(elo, p.eta);
    ehi = std::max(ehi, p.eta);
  }
  Ellipse e;
  e.y0 = 0.5 * (ylo + yhi);
  e.eta0 = 0.5 * (elo + ehi);
  e.a = std::sqrt(2.0) * 0.5 * (yhi - ylo) + options.ellipse_padding;
  e.b = std::sqrt(2.0) * 0.5 * (ehi - elo) + options.ellipse_padding;
  chart.trapped_neighborhood = e;
  const double m = options.chart_margin;
  auto& d = chart.domain;
  bool fits = false;
  for (double f : {1.0, 0.75, 0.5, 0.25, 0.1}) {
    d.first = {std::max(y_limit.lo, e.y0 - e.a - f * m), std::min(y_limit.hi, e.y0 + e.a + f * m)};
    const double eta_max = eta_bound(d.first);
    d.second = {std::max(-eta_max, e.eta0 - e.b - m), std::min(eta_max, e.eta0 + e.b + m)};
    fits = d.first.lo < e.y0 - e.a && e.y0 + e.a < d.first.hi && d.second.lo < e.eta0 - e.b &&
           e.eta0 + e.b < d.second.hi;
    if (fits) break;
  }
  if (!fits) {
    std::ostringstream msg;
    msg << "chart " << chart.index << ": trapped neighbourhood (center " << e.y0 << ", " << e.eta0 << "; semi-axes "
        << e.a << ", " << e.b << ") does not fit inside the transversal chart [" << d.first.lo << ", " << d.first.hi
        << "] x [" << d.second.lo << ", " << d.second.hi << "]";
    throw ConstructionError(msg.str());
  }
  if (chart.diameter() > options.max_diameter) {
    std::ostringstream msg;
    msg << "chart " << chart.index << " has diameter " << chart.diameter() << " above the maximum "
        << options.max_diameter;
    throw ConstructionError(msg.str());
  }
}

void check_clearance(const SectionChart& chart, const std::vector<ChartPoint>& pts, const SectionOptions& options) {
  const auto& d = chart.domain;
  for (const auto& p : pts) {
    const double dy = std::min(std::abs(p.y - d.first.lo), std::abs(p.y - d.first.hi));
    const double de = std::min(std::abs(p.eta - d.second.lo), std::abs(p.eta - d.second.hi));
    const bool y_in = d.first.contains(p.y), e_in = d.second.contains(p.eta);
    // distance from the point to the rectangle boundary
    double dist;
    if (y_in && e_in)
      dist = std::min(dy, de);
    else if (y_in)
      dist = de;
    else if (e_in)
      dist = dy;
    else
      dist = std::hypot(dy, de);
    if (dist <= options.boundary_clearance) {
      std::ostringstream msg;
      msg << "chart " << chart.index << ": trapped sample " << p.sample << " at (" << p.y << ", " << p.eta
          << ") lies within " << options.boundary_clearance << " of the chart boundary [" << d.first.lo << ", "
          << d.first.hi << "] x [" << d.second.lo << ", " << d.second.hi << "]";
      throw ConstructionError(msg.str());
    }
  }
}

std::vector<SectionChart> billiard_sections(const ScatteringSystem& system, double energy,
                                            const std::vector<PhasePoint>& samples, const SectionOptions& options) {
  const auto& disks = system.disks();
  std::vector<std::vector<PhasePoint>> hits(disks.size());
  std::vector<std::vector<int>> owner(disks.size());
  for (std::size_t k = 0; k < samples.size(); ++k) {
    FlowStepper stepper(system, samples[k], options.tol);
    bool hit = false;
    while (stepper.time() < options.tau_max && !stepper.free_forever()) {
      if (stepper.step(options.tau_max) == FlowStepper::Event::Bounce) {
        hits[stepper.last_disk()].push_back(stepper.point());
        owner[stepper.last_disk()].push_back(static_cast<int>(k));
        hit = true;
      }
    }
    if (!hit) {
      std::ostringstream msg;
      msg << "trapped sample " << k << " does not reach a disk within tau_max";
      throw ConstructionError(msg.str());
    }
  }

  const double speed = std::sqrt(2.0 * energy);
  const double eta_max = speed * std::sqrt(1.0 - options.min_transversality * options.min_transversality);
  std::vector<SectionChart> charts;
  for (std::size_t d = 0; d < disks.size(); ++d) {
    if (hits[d].empty()) continue;
    SectionChart c;
    c.index = static_cast<int>(charts.size());
    c.kind = SectionChart::Kind::DiskBoundary;
    c.energy = energy;
    c.disk = static_cast<int>(d);
    c.origin = disks[d].center;
    c.radius = disks[d].radius;
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    for (const auto& p : hits[d]) mean += (p.x - c.origin).normalized();
    c.reference_angle = std::atan2(mean[1], mean[0]);
    std::vector<ChartPoint> pts;
    for (std::size_t k = 0; k < hits[d].size(); ++k) {
      const Eigen::Vector2d yc = c.coordinates(hits[d][k]);
      pts.push_back({owner[d][k], yc[0], yc[1]});
    }
    const double half = kPi * c.radius;
    shape_chart(c, pts, options, {-half, half}, [&](const Interval&) { return eta_max; });
    check_clearance(c, pts, options);
    charts.push_back(c);
  }
  return charts;
}

struct Segment {
  int sample;
  double t0, t1;
  PhasePoint p0, p1;
};

// Crossings of the oriented line through `origin` with normal `normal`, located by
// cubic Hermite interpolation between recorded steps.
std::vector<std::pair<ChartPoint, double>> line_crossings(const std::vector<std::vector<Segment>>& orbits,
                                                          const Eigen::Vector2d& origin,
                                                          const Eigen::Vector2d& normal) {
  const Eigen::Vector2d t(-normal[1], normal[0]);
  std::vector<std::pair<ChartPoint, double>> out;
  for (const auto& orbit : orbits)
    for (const auto& s : orbit) {
      const double g0 = (s.p0.x - origin).dot(normal), g1 = (s.p1.x - origin).dot(normal);
      if (!(g0 < 0.0 && g1 >= 0.0)) continue;
      const double h = s.t1 - s.t0;
      auto pos = [&](double u) -> Eigen::Vector2d {
        const double u2 = u * u, u3 = u2 * u;
        return (2 * u3 - 3 * u2 + 1) * s.p0.x + (u3 - 2 * u2 + u) * h * s.p0.xi + (-2 * u3 + 3 * u2) * s.p1.x +
               (u3 - u2) * h * s.p1.xi;
      };
      double lo = 0.0, hi = 1.0;
      for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        ((pos(mid) - origin).dot(normal) < 0.0 ? lo : hi) = mid;
      }
      const double u = 0.5 * (lo + hi);
      const Eigen::Vector2d xi = (1.0 - u) * s.p0.xi + u * s.p1.xi;
      out.push_back({{s.sample, (pos(u) - origin).dot(t), xi.dot(t)}, s.t0 + u * h});
    }
  return out;
}

std::vector<SectionChart> line_sections(const ScatteringSystem& system, double energy,
                                        const std::vector<PhasePoint>& samples, const SectionOptions& options) {
  std::vector<std::vector<Segment>> orbits(samples.size());
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const auto traj = integrate_flow(system, samples[k], options.tau_max, options.tol);
    for (std::size_t m = 1; m < traj.samples.size(); ++m)
      orbits[k].push_back({static_cast<int>(k), traj.samples[m - 1].t, traj.samples[m].t,
                           traj.samples[m - 1].point, traj.samples[m].point});
  }

  std::vector<bool> covered(samples.size(), false);
  std::vector<SectionChart> charts;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    if (covered[k]) continue;
    if (charts.size() >= 64) throw ConstructionError("more than 64 section components required");

    // line normal to the flow through the sample when it lies in the nearly free
    // region and its orbit recrosses the line; otherwise through the point of
    // lowest potential along its orbit
    auto own_crossing = [&](const auto& cs) {
      return std::find_if(cs.begin(), cs.end(), [&](const auto& c) { return c.first.sample == static_cast<int>(k); });
    };
    Eigen::Vector2d origin = samples[k].x, normal = samples[k].xi.normalized();
    auto crossings = line_crossings(orbits, origin, normal);
    auto own = own_crossing(crossings);
    if (system.potential(samples[k].x) > 0.1 * energy || own == crossings.end()) {
      const auto& orbit = orbits[k];
      const auto best = std::min_element(orbit.begin(), orbit.end(), [&](const Segment& a, const Segment& b) {
        return system.potential(a.p1.x) < system.potential(b.p1.x);
      });
      origin = best->p1.x;
      normal = best->p1.xi.normalized();
      crossings = line_crossings(orbits, origin, normal);
      own = own_crossing(crossings);
      if (own == crossings.end()) {
        std::ostringstream msg;
        msg << "no transversal line section found for trapped sample " << k;
        throw ConstructionError(msg.str());
      }
    }
    std::vector<ChartPoint> all;
    for (const auto& cr : crossings) all.push_back(cr.first);
    const double y_self = own->first.y;
    const Eigen::Vector2d base = origin;
    const Eigen::Vector2d tangent(-normal[1], normal[0]);
    const double half = 0.5 * options.max_diameter;
    const double cos_floor = std::sqrt(1.0 - options.min_transversality * options.min_transversality);

    // cluster of crossings around the sample: runs along the line with gaps below
    // twice the chart margin plus clearance
    std::vector<int> order(all.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int i, int j) { return all[i].y < all[j].y; });
    const double gap = 2.0 * (options.chart_margin + options.boundary_clearance);
    const auto self_pos = std::find_if(order.begin(), order.end(), [&](int i) { return all[i].y == y_self; });
    auto lo = self_pos, hi = self_pos;
    while (lo != order.begin() && all[*lo].y - all[*(lo - 1)].y <= gap && y_self - all[*(lo - 1)].y <= half) --lo;
    while (hi + 1 != order.end() && all[*(hi + 1)].y - all[*hi].y <= gap && all[*(hi + 1)].y - y_self <= half) ++hi;
    std::set<int> cluster(lo, hi + 1);

    SectionChart c;
    c.index = static_cast<int>(charts.size());
    c.kind = SectionChart::Kind::Line;
    c.energy = energy;
    c.normal = normal;
    std::vector<ChartPoint> shifted;
    for (int round = 0;; ++round) {
      // recentre on the cluster centroid
      double ybar = 0.0;
      for (int i : cluster) ybar += all[i].y;
      ybar /= static_cast<double>(cluster.size());
      c.origin = base + ybar * tangent;
      shifted = all;
      for (auto& p : shifted) p.y -= ybar;
      std::vector<ChartPoint> members;
      for (int i : cluster) members.push_back(shifted[i]);
      // transversality bound from the smallest momentum along the segment
      auto eta_bound = [&](const Interval& ys) {
        double pmin = std::numeric_limits<double>::infinity();
        for (int m = 0; m <= 200; ++m)
          pmin = std::min(pmin, kinetic_momentum(system, energy, c.origin + ys.from_unit(-1.0 + m / 100.0) * tangent));
        return pmin * cos_floor;
      };
      shape_chart(c, members, options, {-half - ybar + y_self, half - ybar + y_self}, eta_bound);
      // absorb crossings inside the chart or too close to its boundary
      const double band = options.boundary_clearance;
      bool grown = false;
      for (std::size_t i = 0; i < shifted.size(); ++i) {
        const auto& p = shifted[i];
        const bool near = p.y > c.domain.first.lo - band && p.y < c.domain.first.hi + band &&
                          p.eta > c.domain.second.lo - band && p.eta < c.domain.second.hi + band;
        if (near && cluster.insert(static_cast<int>(i)).second) grown = true;
      }
      if (!grown) break;
      if (round >= 20) {
        std::ostringstream msg;
        msg << "section component for trapped sample " << k << " does not settle";
        throw ConstructionError(msg.str());
      }
    }
    check_clearance(c, shifted, options);
    for (const auto& p : shifted)
      if (c.in_domain(p.y, p.eta)) covered[p.sample] = true;
    if (!covered[k]) {
      std::ostringstream msg;
      msg << "section component for trapped sample " << k << " does not contain its crossing";
      throw ConstructionError(msg.str());
    }
    charts.push_back(c);

    // images under the rotation symmetry carry the same chart data
    const int symmetry = system.rotation_order();
    for (int r = 1; r < symmetry; ++r) {
      const Eigen::Rotation2Dd rot(2.0 * kPi * r / symmetry);
      SectionChart img = c;
      img.index = static_cast<int>(charts.size());
      img.origin = rot * c.origin;
      img.normal = rot * c.normal;
      const bool duplicate = std::any_of(charts.begin(), charts.end(), [&](const SectionChart& o) {
        return (o.origin - img.origin).norm() < 1e-6 && (o.normal - img.normal).norm() < 1e-6;
      });
      if (duplicate) continue;
      std::vector<ChartPoint> pts;
      for (const auto& cr : line_crossings(orbits, img.origin, img.normal)) pts.push_back(cr.first);
      check_clearance(img, pts, options);
      for (const auto& p : pts)
        if (img.in_domain(p.y, p.eta)) covered[p.sample] = true;
      charts.push_back(img);
    }
  }
  return charts;
}

}  // namespace

std::vector<SectionChart> build_sections(const ScatteringSystem& system, double energy,
                                         const std::vector<PhasePoint>& trapped_samples,
                                         const SectionOptions& options) {
  if (trapped_samples.empty()) throw ParameterError("section construction needs trapped samples");
  if (!(energy > 0.0)) throw ParameterError("energy must be positive");
  if (!(options.tau_max > 0.0) || !(options.max_diameter > 0.0) || !(options.boundary_clearance > 0.0))
    throw ParameterError("tau_max, max_diameter and boundary clearance must be positive");
  return system.kind() == SystemKind::DiskBilliard ? billiard_sections(system, energy, trapped_samples, options)
                                                    : line_sections(system, energy, trapped_samples, options);
}

// ---------------------------------------------------------------------------
// generating functions

GeneratingFunctionFit fit_generating_function(const std::vector<ReturnSample>& samples, const FitOptions& options,
                                              std::optional<Rectangle> domain) {
  if (options.degree < 1) throw ParameterError("generating function degree must be at least 1");
  const int n1 = options.degree + 1;
  const long ncoef = static_cast<long>(n1) * n1;
  if (static_cast<long>(samples.size()) < 3 * ncoef) {
    std::ostringstream msg;
    msg << "generating function fit needs at least " << 3 * ncoef << " samples, got " << samples.size();
    throw ParameterError(msg.str());
  }
  Rectangle r;
  if (domain) {
    r = *domain;
  } else {
    r.first = {samples[0].arrival[0], samples[0].arrival[0]};
    r.second = {samples[0].departure[0], samples[0].departure[0]};
    for (const auto& s : samples) {
      r.first.lo = std::min(r.first.lo, s.arrival[0]);
      r.first.hi = std::max(r.first.hi, s.arrival[0]);
      r.second.lo = std::min(r.second.lo, s.departure[0]);
      r.second.hi = std::max(r.second.hi, s.departure[0]);
    }
  }
  if (!(r.first.width() > 0.0) || !(r.second.width() > 0.0))
    throw ParameterError("generating function samples span a degenerate rectangle");

  const long m = static_cast<long>(samples.size());
  const double hu = 0.5 * r.first.width(), hv = 0.5 * r.second.width();
  Eigen::MatrixXd a(3 * m, ncoef), at(m, ncoef);
  Eigen::VectorXd rhs(3 * m), rhs_t(m);
  Eigen::VectorXd tu(n1), dtu(n1), ddtu(n1), tv(n1), dtv(n1), ddtv(n1);
  for (long k = 0; k < m; ++k) {
    const auto& s = samples[k];
    chebyshev_basis<double>(options.degree, r.first.to_unit(s.arrival[0]), tu, dtu, ddtu);
    chebyshev_basis<double>(options.degree, r.second.to_unit(s.departure[0]), tv, dtv, ddtv);
    for (int p = 0; p < n1; ++p)
      for (int q = 0; q < n1; ++q) {
        const long col = static_cast<long>(p) * n1 + q;
        a(3 * k, col) = tu[p] * tv[q];
        a(3 * k + 1, col) = dtu[p] * tv[q];  // hu * dS/dy
        a(3 * k + 2, col) = tu[p] * dtv[q];  // hv * dS/dy'
        at(k, col) = tu[p] * tv[q];
      }
    rhs[3 * k] = s.action;
    rhs[3 * k + 1] = hu * s.arrival[1];
    rhs[3 * k + 2] = -hv * s.departure[1];
    rhs_t[k] = s.tau;
  }
  const Eigen::VectorXd c = a.colPivHouseholderQr().solve(rhs);
  const Eigen::VectorXd ct = at.colPivHouseholderQr().solve(rhs_t);
  auto reshape = [&](const Eigen::VectorXd& v) {
    Eigen::MatrixXd out(n1, n1);
    for (int p = 0; p < n1; ++p)
      for (int q = 0; q < n1; ++q) out(p, q) = v[static_cast<long>(p) * n1 + q];
    return out;
  };

  GeneratingFunctionFit fit{ChebyshevSeries2D(r, reshape(c)), ChebyshevSeries2D(r, reshape(ct)), 0.0, 0.0};
  for (const auto& s : samples) {
    const auto j = fit.action.jet(s.arrival[0], s.departure[0]);
    if (std::abs(j.d_mixed) < options.twist_floor) {
      std::ostringstream msg;
      msg << "twist condition fails: |d2S/dy dy'| = " << std::abs(j.d_mixed) << " at (" << s.arrival[0] << ", "
          << s.departure[0] << ")";
      throw TwistError(msg.str());
    }
    fit.residual = std::max({fit.residual, std::abs(j.value - s.action), std::abs(j.d_first - s.arrival[1]),
                             std::abs(j.d_second + s.departure[1])});
    fit.tau_residual = std::max(fit.tau_residual, std::abs(fit.return_time(s.arrival[0], s.departure[0]) - s.tau));
  }
  return fit;
}

// ---------------------------------------------------------------------------
// partition

std::set<int> ReturnMapData::outflow(int i) const {
  std::set<int> out;
  for (const auto& [key, b] : blocks)
    if (key.second == i) out.insert(key.first);
  return out;
}

std::set<int> ReturnMapData::inflow(int i) const {
  std::set<int> out;
  for (const auto& [key, b] : blocks)
    if (key.first == i) out.insert(key.second);
  return out;
}

const ReturnBlock& ReturnMapData::block(int target, int source) const {
  const auto it = blocks.find({target, source});
  if (it == blocks.end()) {
    std::ostringstream msg;
    msg << "no return block from chart " << source << " to chart " << target;
    throw ParameterError(msg.str());
  }
  return it->second;
}

namespace {

// Fitting samples on the tensor Chebyshev grid of the block rectangle, each solved
// by continuation from the nearest already connected sample.
std::vector<ReturnSample> sample_block(const std::vector<SectionChart>& charts, const ScatteringSystem& system,
                                       const ReturnBlock& block, const Rectangle& r, int budget,
                                       const SectionOptions& options) {
  const int n = std::max(2, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(budget)))));
  std::vector<Eigen::Vector2d> targets;
  for (int p = 0; p < n; ++p)
    for (int q = 0; q < n; ++q)
      targets.push_back({r.first.from_unit(std::cos(kPi * (p + 0.5) / n)),
                         r.second.from_unit(std::cos(kPi * (q + 0.5) / n))});

  std::vector<ReturnSample> known = block.trapped;
  Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
  for (const auto& s : known) centroid += Eigen::Vector2d(s.arrival[0], s.departure[0]);
  centroid /= static_cast<double>(known.size());
  std::sort(targets.begin(), targets.end(), [&](const auto& a, const auto& b) {
    return (a - centroid).squaredNorm() < (b - centroid).squaredNorm();
  });

  // continuation from a connected sample, halving the path in (y, y') on failure
  std::function<std::optional<ReturnSample>(const ReturnSample&, const Eigen::Vector2d&, int)> reach =
      [&](const ReturnSample& from, const Eigen::Vector2d& tgt, int depth) -> std::optional<ReturnSample> {
    auto found = connect(charts, system, block.target, block.source, tgt[0], tgt[1], from.departure[1], options);
    if (found || depth == 0) return found;
    const Eigen::Vector2d mid = 0.5 * (tgt + Eigen::Vector2d(from.arrival[0], from.departure[0]));
    const auto half = reach(from, mid, depth - 1);
    if (!half) return std::nullopt;
    return reach(*half, tgt, depth - 1);
  };

  std::vector<ReturnSample> out;
  for (const auto& tgt : targets) {
    // candidates ordered by distance in (y, y')
    std::vector<std::pair<double, int>> order;
    for (std::size_t k = 0; k < known.size(); ++k)
      order.push_back({std::hypot(known[k].arrival[0] - tgt[0], known[k].departure[0] - tgt[1]), static_cast<int>(k)});
    std::partial_sort(order.begin(), order.begin() + std::min<std::size_t>(3, order.size()), order.end());
    for (std::size_t c = 0; c < std::min<std::size_t>(3, order.size()); ++c) {
      const auto found = reach(known[order[c].second], tgt, 6);
      if (found) {
        out.push_back(*found);
        known.push_back(*found);
        break;
      }
    }
  }
  return out;
}

}  // namespace

ReturnMapData partition_blocks(const std::vector<SectionChart>& charts, const ScatteringSystem& system,
                               const std::vector<PhasePoint>& trapped_samples, const PartitionOptions& options) {
  if (charts.empty()) throw ParameterError("partition needs at least one section chart");
  const auto& so = options.section;
  ReturnMapData data;
  data.charts = charts;

  // departures: first crossing of each trapped orbit and the following return
  for (std::size_t k = 0; k < trapped_samples.size(); ++k) {
    const auto first = first_crossing(charts, system, trapped_samples[k], so);
    if (!first) {
      std::ostringstream msg;
      msg << "trapped sample " << k << " does not cross the section within tau_max";
      throw ConsistencyError(msg.str());
    }
    SectionPoint dep{first->chart, first->coords};
    for (int hop = 0; hop < 2; ++hop) {
      Crossing arr;
      try {
        arr = first_return(charts, system, dep, so);
      } catch (const EscapeError& e) {
        std::ostringstream msg;
        msg << "trapped sample " << k << " has no return: " << e.what();
        throw ConsistencyError(msg.str());
      }
      if (!(arr.tau > 0.0 && arr.tau <= so.tau_max)) throw ConsistencyError("return time outside (0, tau_max]");
      auto& b = data.blocks[{arr.chart, dep.chart}];
      b.target = arr.chart;
      b.source = dep.chart;
      b.trapped.push_back({dep.coords, arr.coords, arr.tau, arr.action});
      dep = {arr.chart, arr.coords};
    }
  }

  // departure sets of different blocks leaving one chart must be separated
  for (const auto& [k1, b1] : data.blocks)
    for (const auto& [k2, b2] : data.blocks) {
      if (k1.second != k2.second || k1.first >= k2.first) continue;
      double dmin = std::numeric_limits<double>::infinity();
      for (const auto& s1 : b1.trapped)
        for (const auto& s2 : b2.trapped) dmin = std::min(dmin, (s1.departure - s2.departure).norm());
      if (dmin < options.separation_floor) {
        std::ostringstream msg;
        msg << "departure sets to charts " << k1.first << " and " << k2.first << " on chart " << k1.second
            << " are not separated (distance " << dmin << ")";
        throw ConsistencyError(msg.str());
      }
    }

  for (auto& [key, b] : data.blocks) {
    Rectangle r{{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()},
                {std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()}};
    for (const auto& s : b.trapped) {
      r.first.lo = std::min(r.first.lo, s.arrival[0]);
      r.first.hi = std::max(r.first.hi, s.arrival[0]);
      r.second.lo = std::min(r.second.lo, s.departure[0]);
      r.second.hi = std::max(r.second.hi, s.departure[0]);
    }
    const auto& ty = charts[key.first].domain.first;
    const auto& tyy = charts[key.second].domain.first;
    r.first = {std::max(ty.lo, r.first.lo - options.fit_margin), std::min(ty.hi, r.first.hi + options.fit_margin)};
    r.second = {std::max(tyy.lo, r.second.lo - options.fit_margin), std::min(tyy.hi, r.second.hi + options.fit_margin)};
    b.domain = r;
    b.samples = sample_block(charts, system, b, r, options.sample_budget, so);
    b.fit = fit_generating_function(b.samples, options.fit, r);
  }
  return data;
}

}  // namespace qmono
