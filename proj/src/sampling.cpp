// Trapped-set sampling and box counting.
#include "qmono/dynamics.hpp"
#include "qmono/errors.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <set>

namespace qmono {

namespace {

using FamilyPoint = std::function<std::optional<PhasePoint>(double)>;

struct Family {
  FamilyPoint at;
  double lo;
  double hi;
};

// Point at energy E at position x moving along `direction`; empty if x is
// classically forbidden or inside an obstacle.
std::optional<PhasePoint> shell_point(const ScatteringSystem& system, double energy,
                                      const Eigen::Vector2d& x, const Eigen::Vector2d& direction) {
  if (system.kind() == SystemKind::DiskBilliard && system.disk_containing(x)) return std::nullopt;
  const double kinetic = energy - system.potential(x);
  if (!(kinetic > 0.0)) return std::nullopt;
  return PhasePoint(x, std::sqrt(2.0 * kinetic) * direction.normalized());
}

class EscapeOracle {
public:
  EscapeOracle(const ScatteringSystem& system, const TrappedSamplingOptions& opt)
      : system_(system), opt_(opt), cap_(6.0 * opt.t_max + 40.0) {}

  // Forward escape time, capped; 0 for invalid or tangent points.
  double forward(const std::optional<PhasePoint>& p) const { return one(p, false); }
  double backward(const std::optional<PhasePoint>& p) const { return one(p, true); }
  double cap() const { return cap_; }

  bool trapped(const PhasePoint& p) const {
    try {
      const auto e = escape_time(system_, p, opt_.escape_radius, opt_.t_max, opt_.tol);
      return !e.forward && !e.backward;
    } catch (const Error&) {
      return false;
    }
  }

private:
  double one(const std::optional<PhasePoint>& p, bool reversed) const {
    if (!p) return 0.0;
    PhasePoint q = *p;
    if (reversed) q.xi = -q.xi;
    try {
      const auto e = escape_time(system_, q, opt_.escape_radius, cap_, opt_.tol);
      return e.forward ? *e.forward : cap_;
    } catch (const Error&) {
      return 0.0;
    }
  }

  const ScatteringSystem& system_;
  const TrappedSamplingOptions& opt_;
  double cap_;
};

struct Refined {
  double s;
  double value;
};

// Proper-interior-maximum refinement: repeatedly rescan a shrinking bracket around
// the grid maximum of `objective`.
Refined refine_maximum(const std::function<double(double)>& objective, double lo, double hi, int grid,
                       double target) {
  double best_s = 0.5 * (lo + hi);
  double best_v = -1.0;
  for (int iter = 0; iter < 200; ++iter) {
    std::vector<double> s(grid + 1), v(grid + 1);
    for (int k = 0; k <= grid; ++k) {
      s[k] = lo + (hi - lo) * k / grid;
      v[k] = objective(s[k]);
    }
    int arg = 0;
    for (int k = 1; k <= grid; ++k)
      if (v[k] > v[arg]) arg = k;
    best_s = s[arg];
    best_v = v[arg];
    if (best_v >= target) break;
    const double new_lo = s[std::max(0, arg - 1)];
    const double new_hi = s[std::min(grid, arg + 1)];
    const double scale = std::max({1.0, std::abs(new_lo), std::abs(new_hi)});
    if (new_hi - new_lo < 8.0 * std::numeric_limits<double>::epsilon() * scale) break;
    lo = new_lo;
    hi = new_hi;
  }
  return {best_s, best_v};
}

Eigen::Vector2d perp(const Eigen::Vector2d& v) { return {-v[1], v[0]}; }

Family transverse_family(const ScatteringSystem& system, double energy, const Eigen::Vector2d& x0,
                         const Eigen::Vector2d& direction, double half_width) {
  const Eigen::Vector2d d = direction.normalized();
  const Eigen::Vector2d n = perp(d);
  return {[&system, energy, x0, d, n](double s) { return shell_point(system, energy, x0 + s * n, d); },
          -half_width, half_width};
}

Family direction_family(const ScatteringSystem& system, double energy, const Eigen::Vector2d& x0,
                        double angle0, double half_width) {
  return {[&system, energy, x0, angle0](double s) {
            const double a = angle0 + s;
            return shell_point(system, energy, x0, {std::cos(a), std::sin(a)});
          },
          -half_width, half_width};
}

class SampleSet {
public:
  explicit SampleSet(double merge_distance) : merge_(merge_distance) {}
  bool insert(const PhasePoint& p) {
    for (const auto& q : points_)
      if ((p.stacked() - q.stacked()).norm() < merge_) return false;
    points_.push_back(p);
    return true;
  }
  std::size_t size() const { return points_.size(); }
  const std::vector<PhasePoint>& points() const { return points_; }

private:
  double merge_;
  std::vector<PhasePoint> points_;
};

}  // namespace

std::vector<PhasePoint> sample_trapped_set(const ScatteringSystem& system, double energy, int budget,
                                           const TrappedSamplingOptions& opt) {
  if (!(energy > 0.0)) throw ParameterError("energy must be positive");
  if (budget <= 0) throw ParameterError("sampling budget must be positive");
  if (!(opt.escape_radius > system.support_radius()))
    throw ParameterError("escape radius must exceed the support radius R0");
  if (!(opt.t_max > 0.0)) throw ParameterError("t_max must be positive");

  const auto centers = system.scatterer_centers();
  if (centers.empty()) return {};

  const int order = opt.symmetrize ? system.rotation_order() : 1;
  const std::size_t base_budget = static_cast<std::size_t>(std::max(1, budget / order));
  EscapeOracle oracle(system, opt);
  SampleSet base(1e-9);
  std::mt19937_64 rng(opt.seed);

  // Follow one refined point along its trajectory, collecting validated samples
  // and re-refining on small transverse segments to extend the shadowing orbit.
  auto follow = [&](PhasePoint rho) {
    for (int link = 0; link < 64 && base.size() < base_budget; ++link) {
      const double tp = oracle.forward(rho);
      const double tm = oracle.backward(rho);
      if (tp + tm < 2.0 * opt.t_max + opt.sample_spacing) return;
      const double t_begin = std::max(0.0, opt.t_max - tm);
      const double t_end = tp - opt.t_max;
      FlowStepper stepper(system, rho, opt.tol);
      PhasePoint at_end = rho;
      for (double t = t_begin; t <= t_end && base.size() < base_budget; t += opt.sample_spacing) {
        while (stepper.time() < t) stepper.step(t);
        if (oracle.trapped(stepper.point())) base.insert(stepper.point());
      }
      while (stepper.time() < t_end) stepper.step(t_end);
      at_end = stepper.point();
      // new link: transverse segment through the end of the window
      bool extended = false;
      for (double width : {1e-7, 1e-5, 1e-3}) {
        Family fam = transverse_family(system, energy, at_end.x, at_end.xi, width);
        auto obj = [&](double s) { return oracle.forward(fam.at(s)); };
        const Refined r = refine_maximum(obj, fam.lo, fam.hi, 16, 3.0 * opt.t_max);
        auto p = fam.at(r.s);
        if (!p) continue;
        if (r.value > opt.t_max && oracle.backward(p) > 0.5 * opt.t_max) {
          rho = *p;
          extended = true;
          break;
        }
      }
      if (!extended) return;
    }
  };

  // Seeds through symmetric pair configurations (period-two orbits between scatterers).
  for (std::size_t i = 0; i < centers.size() && base.size() < base_budget; ++i)
    for (std::size_t j = 0; j < centers.size() && base.size() < base_budget; ++j) {
      if (i == j) continue;
      const Eigen::Vector2d mid = 0.5 * (centers[i] + centers[j]);
      const Eigen::Vector2d d = centers[j] - centers[i];
      const double angle0 = std::atan2(d[1], d[0]);
      Family fam = direction_family(system, energy, mid, angle0, 0.05);
      auto obj = [&](double s) {
        const auto p = fam.at(s);
        return std::min(oracle.forward(p), oracle.backward(p));
      };
      const Refined r = refine_maximum(obj, fam.lo, fam.hi, 16, oracle.cap());
      const auto p = fam.at(r.s);
      if (p && r.value > opt.t_max && oracle.trapped(*p)) {
        base.insert(*p);
        follow(*p);
      }
    }

  // Random transverse families through the interaction region.
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double r0 = system.support_radius();
  for (int f = 0; f < opt.max_families && base.size() < base_budget; ++f) {
    const double rad = r0 * std::sqrt(unit(rng));
    const double phi = 2.0 * std::numbers::pi * unit(rng);
    const double dir = 2.0 * std::numbers::pi * unit(rng);
    const Eigen::Vector2d x0(rad * std::cos(phi), rad * std::sin(phi));
    const Eigen::Vector2d d(std::cos(dir), std::sin(dir));
    Family fam = transverse_family(system, energy, x0, d, 0.5 * r0);
    auto obj = [&](double s) { return oracle.forward(fam.at(s)); };
    const Refined r = refine_maximum(obj, fam.lo, fam.hi, 64, 3.0 * opt.t_max);
    if (r.value <= 2.0 * opt.t_max) continue;
    if (const auto p = fam.at(r.s)) follow(*p);
  }

  std::vector<PhasePoint> out = base.points();
  if (order > 1) {
    const std::size_t n = out.size();
    for (int m = 1; m < order; ++m) {
      const double a = 2.0 * std::numbers::pi * m / order;
      Eigen::Matrix2d rot;
      rot << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
      for (std::size_t k = 0; k < n; ++k) {
        const PhasePoint img(rot * out[k].x, rot * out[k].xi);
        if (oracle.trapped(img)) out.push_back(img);
      }
    }
  }
  return out;
}

DimensionFit box_counting_dimension(const Eigen::MatrixXd& points, const std::vector<double>& scales) {
  if (points.cols() < 100) throw ParameterError("box counting needs at least 100 points");
  if (scales.size() < 2) throw ParameterError("box counting needs at least two scales");
  const auto [mn, mx] = std::minmax_element(scales.begin(), scales.end());
  if (!(*mn > 0.0) || *mx / *mn < 10.0 - 1e-9)
    throw ParameterError("box-counting scales must be positive and span at least one decade");

  const Eigen::VectorXd origin = points.rowwise().minCoeff();
  Eigen::VectorXd logn(scales.size()), loginv(scales.size());
  for (std::size_t k = 0; k < scales.size(); ++k) {
    std::set<std::vector<long long>> boxes;
    std::vector<long long> key(points.rows());
    for (Eigen::Index c = 0; c < points.cols(); ++c) {
      for (Eigen::Index r = 0; r < points.rows(); ++r)
        key[r] = static_cast<long long>(std::floor((points(r, c) - origin[r]) / scales[k]));
      boxes.insert(key);
    }
    logn[k] = std::log(static_cast<double>(boxes.size()));
    loginv[k] = -std::log(scales[k]);
  }
  Eigen::MatrixXd design(scales.size(), 2);
  design.col(0) = loginv;
  design.col(1).setOnes();
  const Eigen::Vector2d coef = design.colPivHouseholderQr().solve(logn);
  const Eigen::VectorXd res = design * coef - logn;
  return {coef[0], std::sqrt(res.squaredNorm() / static_cast<double>(scales.size()))};
}

}  // namespace qmono
