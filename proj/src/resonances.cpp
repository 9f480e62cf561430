#include "qmono/resonances.hpp"

#include "qmono/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <sstream>

namespace qmono {

namespace {

constexpr double kPi = std::numbers::pi;

// Thrown when zeta vanishes (or the phase cannot be resolved) on a contour.
struct ContourHit {
  Complex z;
};

class Evaluator {
public:
  explicit Evaluator(const OperatorBuilder& builder) : builder_(builder) {}

  const ZetaValue& at(Complex z) {
    const auto key = std::make_pair(z.real(), z.imag());
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    ++evaluations;
    return cache_.emplace(key, zeta(builder_(z))).first->second;
  }

  /// zeta(w) / zeta(z)
  Complex ratio(Complex w, Complex z) {
    const ZetaValue& a = at(w);
    const ZetaValue& b = at(z);
    return a.phase * std::conj(b.phase) * std::exp(a.log_abs - b.log_abs);
  }

  /// zeta'/zeta at z by a forward difference of size `step`
  Complex log_derivative(Complex z) {
    return (ratio(z + step, z) - 1.0) / step;
  }

  int evaluations = 0;
  double step = 1e-10;

private:
  const OperatorBuilder& builder_;
  std::map<std::pair<double, double>, ZetaValue> cache_;
};

// d arg zeta / dt along the path at t
template <typename Path>
double phase_rate(Evaluator& ev, const Path& path, double t) {
  constexpr double dt = 1e-7;
  const Complex dz = t + dt <= 1.0 ? (path(t + dt) - path(t)) / dt : (path(t) - path(t - dt)) / dt;
  return (ev.log_derivative(path(t)) * dz).imag();
}

// Phase increment of zeta along a parametrized path piece [t0, t1], densified until
// consecutive jumps are below pi/2.
template <typename Path>
double phase_increment(Evaluator& ev, const Path& path, double t0, double t1, int depth) {
  const Complex z0 = path(t0), z1 = path(t1);
  const ZetaValue& a = ev.at(z0);
  if (a.is_zero()) throw ContourHit{z0};
  const ZetaValue& b = ev.at(z1);
  if (b.is_zero()) throw ContourHit{z1};
  const double jump = std::arg(b.phase * std::conj(a.phase));
  const double tm = 0.5 * (t0 + t1);
  if (std::abs(jump) < 0.5 * kPi) {
    // accept only if the midpoint confirms the jump and the phase rate at both ends
    // and the midpoint is resolved (both guard against turns aliased to 2 pi k)
    const ZetaValue& c = ev.at(path(tm));
    if (c.is_zero()) throw ContourHit{path(tm)};
    const double j1 = std::arg(c.phase * std::conj(a.phase)), j2 = std::arg(b.phase * std::conj(c.phase));
    if (std::abs(j1) < 0.25 * kPi && std::abs(j2) < 0.25 * kPi && std::abs(j1 + j2 - jump) < 1e-9) {
      const double span = t1 - t0;
      const double r = std::max({std::abs(phase_rate(ev, path, t0)), std::abs(phase_rate(ev, path, tm)),
                                 std::abs(phase_rate(ev, path, t1))});
      if (std::isfinite(r) && r * span < 0.5 * kPi) return jump;
    }
  }
  if (depth > 48) throw ContourHit{0.5 * (z0 + z1)};
  return phase_increment(ev, path, t0, tm, depth + 1) + phase_increment(ev, path, tm, t1, depth + 1);
}

// Phase change along the straight segment a -> b. Points are generated from the
// lexicographically smaller end so that shared edges hit identical cache keys.
double segment_phase(Evaluator& ev, Complex a, Complex b, int samples) {
  const bool flip = std::make_pair(a.real(), a.imag()) > std::make_pair(b.real(), b.imag());
  const Complex lo = flip ? b : a, hi = flip ? a : b;
  auto path = [&](double t) { return t == 1.0 ? hi : lo + (hi - lo) * t; };
  double total = 0.0;
  for (int k = 0; k < samples; ++k) total += phase_increment(ev, path, double(k) / samples, double(k + 1) / samples, 0);
  return flip ? -total : total;
}

int to_winding(double phase, const char* where) {
  const double w = phase / (2.0 * kPi);
  const double r = std::round(w);
  if (std::abs(w - r) > 0.1) {
    std::ostringstream msg;
    msg << "non-integer winding " << w << " on " << where;
    throw ConsistencyError(msg.str());
  }
  return static_cast<int>(r);
}

struct Box {
  double x0, x1, y0, y1;
  double size() const { return std::max(x1 - x0, y1 - y0); }
  Complex center() const { return {0.5 * (x0 + x1), 0.5 * (y0 + y1)}; }
  bool contains(Complex z, double slack) const {
    return z.real() >= x0 - slack && z.real() <= x1 + slack && z.imag() >= y0 - slack && z.imag() <= y1 + slack;
  }
  double inner_distance(Complex z) const {
    return std::min({z.real() - x0, x1 - z.real(), z.imag() - y0, y1 - z.imag()});
  }
};

int box_winding(Evaluator& ev, const Box& b, int samples) {
  const Complex c00{b.x0, b.y0}, c10{b.x1, b.y0}, c11{b.x1, b.y1}, c01{b.x0, b.y1};
  const double phase = segment_phase(ev, c00, c10, samples) + segment_phase(ev, c10, c11, samples) +
                       segment_phase(ev, c11, c01, samples) + segment_phase(ev, c01, c00, samples);
  return to_winding(phase, "cell boundary");
}

int circle_winding(Evaluator& ev, Complex c, double r, int samples) {
  auto path = [&](double t) { return c + r * std::exp(Complex(0.0, 2.0 * kPi * t)); };
  double phase = 0.0;
  for (int k = 0; k < samples; ++k) phase += phase_increment(ev, path, double(k) / samples, double(k + 1) / samples, 0);
  return to_winding(phase, "circle");
}

struct NewtonResult {
  Complex z;
  bool converged;
};

// Newton on zeta with multiplicity m; zeta'/zeta from central differences of the
// ratio zeta(z +- d)/zeta(z), which stays well scaled next to the zero.
NewtonResult newton(Evaluator& ev, Complex z, int m, double scale) {
  Complex best = z;
  double best_log = ev.at(z).log_abs;
  double last = std::numeric_limits<double>::infinity();
  for (int it = 0; it < 80; ++it) {
    if (ev.at(z).is_zero()) return {z, true};
    const double d = 1e-6 * scale;
    const Complex rp = ev.ratio(z + d, z), rm = ev.ratio(z - d, z);
    const Complex dlog = (rp - rm) / (2.0 * d);
    if (!std::isfinite(dlog.real()) || !std::isfinite(dlog.imag()) || std::abs(dlog) == 0.0) return {best, false};
    Complex step = -double(m) / dlog;
    const double len = std::abs(step);
    if (len > 0.5 * scale) step *= 0.5 * scale / len;
    z += step;
    const double lz = ev.at(z).log_abs;
    if (lz < best_log) {
      best_log = lz;
      best = z;
    }
    if (len <= 1e-14 * std::max(scale, std::abs(z))) return {best, true};
    // rounding floor reached: steps stop contracting once they are small
    if (len < 1e-6 * scale && len > 0.5 * last) return {best, true};
    last = len;
  }
  return {best, false};
}

double median_modulus(Evaluator& ev, const std::vector<Complex>& pts) {
  std::vector<double> logs;
  for (const Complex& z : pts) logs.push_back(ev.at(z).log_abs);
  std::nth_element(logs.begin(), logs.begin() + logs.size() / 2, logs.end());
  return std::exp(logs[logs.size() / 2]);
}

class ZeroSearch {
public:
  ZeroSearch(Evaluator& ev, const ZeroFinderOptions& o, double scale, double zero_tol)
      : ev_(ev), opt_(o), scale_(scale), zero_tol_(zero_tol) {}

  void run(const Box& box, int winding, int depth) {
    if (winding == 0) return;
    if (winding < 0) throw ConsistencyError("negative winding: zeta has a pole in the search region");
    const double size = box.size();
    const bool small = size <= opt_.cluster_size * scale_;
    // low windings may be one multiple zero: a cheap Newton attempt before splitting
    if (winding <= std::max(opt_.cell_cap, 3) || small) {
      if (try_refine(box, winding, small)) return;
    }
    if (small || depth >= opt_.max_depth) {
      std::ostringstream msg;
      msg << "zero refinement failed in cell of size " << size << " with winding " << winding;
      throw ConsistencyError(msg.str());
    }
    split(box, winding, depth);
  }

  std::vector<Zero> zeros;
  int checks = 0;

private:
  bool try_refine(const Box& box, int winding, bool small) {
    const NewtonResult nr = newton(ev_, box.center(), winding, std::max(box.size(), 1e-3 * opt_.cluster_size * scale_));
    if (!nr.converged || !box.contains(nr.z, 0.0)) return false;
    const double dist = box.inner_distance(nr.z);
    double radius = winding == 1 ? 0.1 * box.size() : std::max(opt_.cluster_size * scale_, 1e-6 * box.size());
    radius = std::min(radius, 0.9 * dist);
    if (radius <= 1e-14 * std::max(1.0, std::abs(nr.z))) return false;
    int w;
    try {
      w = circle_winding(ev_, nr.z, radius, opt_.coarse_grid);
    } catch (const ContourHit&) {
      return false;
    }
    if (w != winding) return false;
    const ZetaValue& v = ev_.at(nr.z);
    const double residual = v.is_zero() ? 0.0 : std::exp(v.log_abs);
    const double tol = zero_tol_ > 0.0 ? zero_tol_ : opt_.relative_zero_tol * cell_modulus(box);
    if (residual > tol) {
      if (!small) return false;
      std::ostringstream msg;
      msg << "zero at " << nr.z << " refined only to |zeta| = " << residual << " > " << tol << " box " << box.x0 << " " << box.x1 << " " << box.y0 << " " << box.y1 << " w " << winding;
      throw ConsistencyError(msg.str());
    }
    zeros.push_back({nr.z, w, residual});
    return true;
  }

  // median |zeta| over the corners and edge midpoints of a cell
  double cell_modulus(const Box& b) {
    const double xm = 0.5 * (b.x0 + b.x1), ym = 0.5 * (b.y0 + b.y1);
    return median_modulus(ev_, {{b.x0, b.y0}, {xm, b.y0}, {b.x1, b.y0}, {b.x1, ym}, {b.x1, b.y1}, {xm, b.y1}, {b.x0, b.y1}, {b.x0, ym}});
  }

  void split(const Box& box, int winding, int depth) {
    static constexpr double kFractions[] = {0.5, 0.5 + 0.0137, 0.5 - 0.0211, 0.5 + 0.0419, 0.5 - 0.0613};
    for (double f : kFractions) {
      const double xm = box.x0 + f * (box.x1 - box.x0), ym = box.y0 + f * (box.y1 - box.y0);
      const Box kids[4] = {{box.x0, xm, box.y0, ym}, {xm, box.x1, box.y0, ym}, {box.x0, xm, ym, box.y1}, {xm, box.x1, ym, box.y1}};
      int w[4];
      try {
        for (int k = 0; k < 4; ++k) w[k] = box_winding(ev_, kids[k], std::max(8, opt_.coarse_grid / 2));
      } catch (const ContourHit&) {
        continue;
      }
      ++checks;
      if (w[0] + w[1] + w[2] + w[3] != winding) {
        std::ostringstream msg;
        msg << "winding balance failed: children " << w[0] << "+" << w[1] << "+" << w[2] << "+" << w[3]
            << " != parent " << winding;
        throw ConsistencyError(msg.str());
      }
      for (int k = 0; k < 4; ++k) run(kids[k], w[k], depth + 1);
      return;
    }
    throw BoundaryAmbiguityError("zeta vanishes on every tried interior subdivision line");
  }

  Evaluator& ev_;
  const ZeroFinderOptions& opt_;
  double scale_;
  double zero_tol_;
};


ResonanceSet search(Evaluator& ev, const ZeroDomain& domain, const ZeroFinderOptions& opt) {
  const int n = std::max(4, opt.coarse_grid);
  const double scale = domain.scale();
  ev.step = 1e-8 * scale;
  ResonanceSet out;
  out.domain = domain;
  Box root{};
  if (domain.kind == ZeroDomain::Kind::Disk) {
    out.winding = circle_winding(ev, domain.center, domain.radius, 4 * n);
  } else {
    root = {domain.re_lo, domain.re_hi, domain.im_lo, domain.im_hi};
    out.winding = box_winding(ev, root, n);
  }
  ZeroSearch zs(ev, opt, scale, opt.zero_tol);
  if (domain.kind == ZeroDomain::Kind::Disk) {
    // quadtree on a slightly larger square; its boundary is internal bookkeeping,
    // so a hit there only moves the square
    bool done = false;
    for (int k = 1; k <= 8 && !done; ++k) {
      const double half = domain.radius * (1.0 + 0.0123 * k);
      root = {domain.center.real() - half, domain.center.real() + half, domain.center.imag() - half,
              domain.center.imag() + half};
      try {
        const int w = box_winding(ev, root, n);
        zs.run(root, w, 0);
        done = true;
      } catch (const ContourHit&) {
        zs.zeros.clear();
      }
    }
    if (!done) throw BoundaryAmbiguityError("zeta vanishes on every tried enclosing square");
    std::erase_if(zs.zeros, [&](const Zero& z) { return !domain.contains(z.z); });
  } else {
    zs.run(root, out.winding, 0);
  }
  out.zeros = std::move(zs.zeros);
  out.subdivision_checks = zs.checks;
  if (out.total_multiplicity() != out.winding) {
    std::ostringstream msg;
    msg << "sum of multiplicities " << out.total_multiplicity() << " != boundary winding " << out.winding;
    throw ConsistencyError(msg.str());
  }
  std::sort(out.zeros.begin(), out.zeros.end(), [](const Zero& a, const Zero& b) {
    return a.z.real() != b.z.real() ? a.z.real() < b.z.real() : a.z.imag() < b.z.imag();
  });
  return out;
}

DensityFit fit_loglog(std::vector<double> sizes, std::vector<double> counts) {
  if (sizes.size() != counts.size()) throw ParameterError("density fit: sizes and counts differ in length");
  if (sizes.size() < 4) throw ParameterError("density fit needs at least 4 sizes");
  const auto m = static_cast<Eigen::Index>(sizes.size());
  Eigen::MatrixXd a(m, 2);
  Eigen::VectorXd b(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    if (!(sizes[k] > 0.0) || !(counts[k] > 0.0)) throw ParameterError("density fit needs positive sizes and non-empty counts");
    a(k, 0) = 1.0;
    a(k, 1) = std::log(sizes[k]);
    b[k] = std::log(counts[k]);
  }
  const Eigen::Vector2d c = a.colPivHouseholderQr().solve(b);
  const double residual = std::sqrt((a * c - b).squaredNorm() / double(m));
  return {c[1], residual, std::move(sizes), std::move(counts)};
}

}  // namespace

ZetaValue zeta(const Eigen::MatrixXcd& m) {
  if (m.rows() != m.cols()) throw ParameterError("zeta: operator is not square");
  if (!m.allFinite()) throw ParameterError("zeta: operator has non-finite entries");
  ZetaValue out;
  if (m.rows() == 0) return out;
  const Eigen::MatrixXcd a = Eigen::MatrixXcd::Identity(m.rows(), m.cols()) - m;
  const Eigen::PartialPivLU<Eigen::MatrixXcd> lu(a);
  const Eigen::MatrixXcd& u = lu.matrixLU();
  Complex phase(lu.permutationP().determinant(), 0.0);
  double log_abs = 0.0;
  for (Eigen::Index k = 0; k < u.rows(); ++k) {
    const double mag = std::abs(u(k, k));
    if (mag == 0.0) return {Complex(0.0, 0.0), -std::numeric_limits<double>::infinity()};
    phase *= u(k, k) / mag;
    log_abs += std::log(mag);
  }
  out.phase = phase / std::abs(phase);
  out.log_abs = log_abs;
  return out;
}

ZeroDomain ZeroDomain::disk(Complex c, double r) {
  if (!(r > 0.0)) throw ParameterError("disk radius must be positive");
  ZeroDomain d;
  d.kind = Kind::Disk;
  d.center = c;
  d.radius = r;
  return d;
}

ZeroDomain ZeroDomain::rectangle(double re_lo, double re_hi, double im_lo, double im_hi) {
  if (!(re_hi > re_lo) || !(im_hi > im_lo)) throw ParameterError("rectangle must have positive extent");
  ZeroDomain d;
  d.kind = Kind::Rectangle;
  d.re_lo = re_lo;
  d.re_hi = re_hi;
  d.im_lo = im_lo;
  d.im_hi = im_hi;
  d.center = {0.5 * (re_lo + re_hi), 0.5 * (im_lo + im_hi)};
  return d;
}

bool ZeroDomain::contains(Complex z) const {
  if (kind == Kind::Disk) return std::abs(z - center) <= radius;
  return z.real() >= re_lo && z.real() <= re_hi && z.imag() >= im_lo && z.imag() <= im_hi;
}

double ZeroDomain::scale() const {
  return kind == Kind::Disk ? 2.0 * radius : std::max(re_hi - re_lo, im_hi - im_lo);
}

ZeroDomain ZeroDomain::inflated(double factor) const {
  if (kind == Kind::Disk) return disk(center, radius * factor);
  const double cr = 0.5 * (re_lo + re_hi), ci = 0.5 * (im_lo + im_hi);
  const double hr = 0.5 * (re_hi - re_lo) * factor, hi = 0.5 * (im_hi - im_lo) * factor;
  return rectangle(cr - hr, cr + hr, ci - hi, ci + hi);
}

int ResonanceSet::total_multiplicity() const {
  int s = 0;
  for (const Zero& z : zeros) s += z.multiplicity;
  return s;
}

ResonanceSet find_zeros(const OperatorBuilder& builder, const ZeroDomain& domain, const ZeroFinderOptions& options) {
  if (options.coarse_grid < 4) throw ParameterError("coarse_grid must be at least 4");
  if (options.cell_cap < 1) throw ParameterError("cell_cap must be at least 1");
  Evaluator ev(builder);
  ZeroDomain d = domain;
  for (int attempt = 0;; ++attempt) {
    try {
      ResonanceSet out = search(ev, d, options);
      out.evaluations = ev.evaluations;
      return out;
    } catch (const ContourHit& hit) {
      if (attempt >= options.boundary_retries) {
        std::ostringstream msg;
        msg << "zeta vanishes on the domain boundary near " << hit.z << " after " << attempt
            << " inflations; enlarge the domain";
        throw BoundaryAmbiguityError(msg.str());
      }
      d = d.inflated(1.01);
    }
  }
}

DensityFit resonance_density(const std::vector<double>& sizes, const std::vector<double>& counts) {
  return fit_loglog(sizes, counts);
}

DensityFit eigenvalue_density(const std::vector<Eigen::MatrixXcd>& matrices, double threshold) {
  std::vector<double> sizes, counts;
  for (const Eigen::MatrixXcd& m : matrices) {
    const Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(m, false);
    if (es.info() != Eigen::Success) throw ConsistencyError("eigenvalue solver did not converge");
    const auto n = (es.eigenvalues().array().abs() > threshold).count();
    sizes.push_back(double(m.rows()));
    counts.push_back(double(n));
  }
  return fit_loglog(sizes, counts);
}

GapReport spectral_gap_report(const ResonanceSet& set, double half_jacobian_pressure) {
  if (!(set.h > 0.0)) throw ParameterError("gap report needs h > 0");
  double gap = std::numeric_limits<double>::infinity();
  for (const Zero& z : set.zeros) gap = std::min(gap, std::abs(z.z.imag()) / set.h);
  return {gap, -half_jacobian_pressure, gap - (-half_jacobian_pressure)};
}

GapReport spectral_gap_report(const Eigen::VectorXcd& eigenvalues, double half_jacobian_pressure) {
  double gap = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < eigenvalues.size(); ++k) {
    const double m = std::abs(eigenvalues[k]);
    if (m > 0.0) gap = std::min(gap, -std::log(m));
  }
  return {gap, -half_jacobian_pressure, gap - (-half_jacobian_pressure)};
}

}  // namespace qmono
