#include "qmono/classical.hpp"

#include "qmono/errors.hpp"

#include <boost/math/tools/toms748_solve.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace qmono {

namespace {

bool inside(const Interval& c, double v, double slack) { return v >= c.lo - slack && v <= c.hi + slack; }

Interval subcell(const Interval& c, int k, int n) {
  return {c.lo + c.width() * k / n, k + 1 == n ? c.hi : c.lo + c.width() * (k + 1) / n};
}

double log_sum_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

}  // namespace

SymbolicModel::SymbolicModel(std::string name, std::vector<Interval> cells, std::vector<Branch> branches)
    : name_(std::move(name)), cells_(std::move(cells)), branches_(std::move(branches)) {
  if (cells_.empty() || branches_.empty()) throw ModelError(name_ + ": model needs cells and branches");
  for (const Interval& c : cells_)
    if (!(c.hi > c.lo)) throw ModelError(name_ + ": degenerate cell");
  const int nc = static_cast<int>(cells_.size());
  for (std::size_t a = 0; a < branches_.size(); ++a) {
    const Branch& b = branches_[a];
    if (b.from_cell < 0 || b.from_cell >= nc || b.to_cell < 0 || b.to_cell >= nc || !b.inverse || !b.inverse_derivative)
      throw ModelError(name_ + ": malformed branch " + std::to_string(a));
    const Interval& to = cells_[b.to_cell];
    const Interval& from = cells_[b.from_cell];
    for (double x : {to.lo, to.center(), to.hi})
      if (!inside(from, b.inverse(x), 1e-12 * from.width()))
        throw ModelError(name_ + ": branch " + std::to_string(a) + " leaves its source cell");
  }
  // irreducible on the recurrent part
  const Eigen::MatrixXi t = transitions();
  const Eigen::Index n = t.rows();
  Eigen::MatrixXi reach = t;
  for (Eigen::Index k = 0; k < n; ++k)
    for (Eigen::Index i = 0; i < n; ++i)
      if (reach(i, k))
        for (Eigen::Index j = 0; j < n; ++j)
          if (reach(k, j)) reach(i, j) = 1;
  bool any = false;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!reach(i, i)) continue;
    any = true;
    for (Eigen::Index j = 0; j < n; ++j)
      if (reach(j, j) && !(reach(i, j) && reach(j, i))) throw ModelError(name_ + ": recurrent part is not irreducible");
  }
  if (!any) throw ModelError(name_ + ": no periodic orbits");
}

SymbolicModel SymbolicModel::doubling() {
  return {"doubling",
          {{0.0, 1.0}},
          {{0, 0, [](double x) { return 0.5 * x; }, [](double) { return 0.5; }},
           {0, 0, [](double x) { return 0.5 * (x + 1.0); }, [](double) { return 0.5; }}}};
}

SymbolicModel SymbolicModel::ternary_cut() {
  constexpr double third = 1.0 / 3.0;
  return {"ternary-cut",
          {{0.0, 1.0}},
          {{0, 0, [](double x) { return x / 3.0; }, [](double) { return third; }},
           {0, 0, [](double x) { return (x + 2.0) / 3.0; }, [](double) { return third; }}}};
}

SymbolicModel SymbolicModel::golden_mean() {
  const double phi = 0.5 * (1.0 + std::sqrt(5.0));
  const double ip = 1.0 / phi;
  return {"golden-mean",
          {{0.0, ip}, {ip, 1.0}},
          {{0, 0, [=](double x) { return x * ip; }, [=](double) { return ip; }},
           {0, 1, [=](double x) { return x * ip; }, [=](double) { return ip; }},
           {1, 0, [=](double x) { return (x + 1.0) * ip; }, [=](double) { return ip; }}}};
}

SymbolicModel SymbolicModel::single_fixed_point() {
  return {"single-fixed-point", {{0.0, 1.0}}, {{0, 0, [](double x) { return 0.5 * x; }, [](double) { return 0.5; }}}};
}

Eigen::MatrixXi SymbolicModel::transitions() const {
  const auto n = static_cast<Eigen::Index>(branches_.size());
  Eigen::MatrixXi t = Eigen::MatrixXi::Zero(n, n);
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = 0; b < n; ++b) t(a, b) = branches_[a].to_cell == branches_[b].from_cell ? 1 : 0;
  return t;
}

double SymbolicModel::forward(int branch, double y) const {
  const Branch& b = branches_.at(branch);
  double lo = cells_[b.to_cell].lo, hi = cells_[b.to_cell].hi;
  const bool increasing = b.inverse(hi) >= b.inverse(lo);
  for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    if ((b.inverse(mid) < y) == increasing) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

BranchFunction constant_weight(double c) {
  return [c](int, double, double) { return c; };
}

BranchFunction branch_weight(std::vector<double> values) {
  return [v = std::move(values)](int a, double, double) { return v.at(a); };
}

BranchFunction expansion_weight(const SymbolicModel& model, double s) {
  return [branches = model.branches(), s](int a, double, double x) {
    return -s * std::log(std::abs(branches[a].inverse_derivative(x)));
  };
}

Eigen::VectorXcd TransferMatrix::eigenvalues() const {
  // Cells without incoming or outgoing weight only contribute zero eigenvalues;
  // stripping them keeps sparse Ulam matrices away from large nilpotent blocks.
  const Eigen::Index n = entries.rows();
  std::vector<bool> alive(n, true);
  for (bool changed = true; changed;) {
    changed = false;
    for (Eigen::Index k = 0; k < n; ++k) {
      if (!alive[k]) continue;
      bool in = false, out = false;
      for (Eigen::Index j = 0; j < n && !(in && out); ++j) {
        if (!alive[j]) continue;
        in = in || entries(k, j) != 0.0;
        out = out || entries(j, k) != 0.0;
      }
      if (!in || !out) {
        alive[k] = false;
        changed = true;
      }
    }
  }
  std::vector<Eigen::Index> keep;
  for (Eigen::Index k = 0; k < n; ++k)
    if (alive[k]) keep.push_back(k);
  Eigen::VectorXcd out = Eigen::VectorXcd::Zero(n);
  if (keep.empty()) return out;
  const Eigen::MatrixXcd core = entries(keep, keep);
  Eigen::ComplexSchur<Eigen::MatrixXcd> schur(core.rows());
  schur.setMaxIterations(100 * core.rows());
  schur.compute(core, false);
  if (schur.info() != Eigen::Success) throw ConsistencyError("transfer matrix eigensolve did not converge");
  out.head(core.rows()) = schur.matrixT().diagonal();
  return out;
}

double TransferMatrix::spectral_radius() const { return eigenvalues().cwiseAbs().maxCoeff(); }

TransferFamily::TransferFamily(const SymbolicModel& model, const BranchFunction& f, const Discretization& d,
                               const BranchFunction& tau, double min_expansion)
    : disc_(d) {
  if (d.resolution < 8) throw ParameterError("discretization resolution must be at least 8");
  if (!f) throw ParameterError("missing weight function");
  const auto& cells = model.cells();
  const auto& branches = model.branches();
  const int nc = static_cast<int>(cells.size());
  auto tau_at = [&](int a, double y, double x) { return tau ? tau(a, y, x) : 0.0; };

  if (d.kind == Discretization::Kind::Collocation) {
    const Eigen::Index per = d.resolution + 1;
    dim_ = per * nc;
    std::vector<Eigen::VectorXd> nodes;
    for (const Interval& c : cells) nodes.push_back(chebyshev_lobatto(d.resolution, c));
    for (int a = 0; a < static_cast<int>(branches.size()); ++a) {
      const Branch& b = branches[a];
      const Eigen::VectorXd& x = nodes[b.to_cell];
      Eigen::VectorXd y(per), fv(per), tv(per);
      for (Eigen::Index k = 0; k < per; ++k) {
        const double dpsi = std::abs(b.inverse_derivative(x[k]));
        if (!(dpsi * min_expansion < 1.0)) {
          std::ostringstream msg;
          msg << model.name() << ": branch " << a << " is not expanding at x = " << x[k] << " (|kappa'| = " << 1.0 / dpsi
              << ")";
          throw ModelError(msg.str());
        }
        y[k] = std::clamp(b.inverse(x[k]), cells[b.from_cell].lo, cells[b.from_cell].hi);
        fv[k] = f(a, y[k], x[k]);
        tv[k] = tau_at(a, y[k], x[k]);
      }
      blocks_.push_back({b.to_cell * per, b.from_cell * per, lobatto_interpolation_matrix(nodes[b.from_cell], y), fv, tv});
    }
    return;
  }

  const int r = d.resolution;
  dim_ = static_cast<Eigen::Index>(r) * nc;
  for (int a = 0; a < static_cast<int>(branches.size()); ++a) {
    const Branch& b = branches[a];
    for (int i = 0; i < r; ++i) {
      const Interval ci = subcell(cells[b.to_cell], i, r);
      const double y0 = b.inverse(ci.lo), y1 = b.inverse(ci.hi);
      const double ylo = std::min(y0, y1), yhi = std::max(y0, y1);
      for (int j = 0; j < r; ++j) {
        const Interval cj = subcell(cells[b.from_cell], j, r);
        const double lo = std::max(ylo, cj.lo), hi = std::min(yhi, cj.hi);
        if (!(hi > lo)) continue;
        Interval xi = ci;  // x-range with psi(x) in cj
        if (lo > ylo || hi < yhi) {
          const double xa = lo > ylo ? model.forward(a, lo) : (y0 <= y1 ? ci.lo : ci.hi);
          const double xb = hi < yhi ? model.forward(a, hi) : (y0 <= y1 ? ci.hi : ci.lo);
          xi = {std::max(ci.lo, std::min(xa, xb)), std::min(ci.hi, std::max(xa, xb))};
          if (!(xi.hi > xi.lo)) continue;
        }
        const QuadratureRule q = gauss_legendre(6, xi);
        for (Eigen::Index k = 0; k < q.nodes.size(); ++k) {
          const double x = q.nodes[k], y = b.inverse(x);
          terms_.push_back({b.to_cell * r + i, b.from_cell * r + j, q.weights[k] / ci.width(), f(a, y, x), tau_at(a, y, x)});
        }
      }
    }
  }
}

Eigen::MatrixXcd TransferFamily::operator()(Complex z) const {
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(dim_, dim_);
  for (const Block& b : blocks_) {
    const Eigen::VectorXcd w = (b.f.cast<Complex>() - z * b.tau.cast<Complex>()).array().exp();
    m.block(b.row, b.col, b.p.rows(), b.p.cols()) += w.asDiagonal() * b.p.cast<Complex>();
  }
  for (const Term& t : terms_) m(t.row, t.col) += t.coeff * std::exp(Complex(t.f) - z * t.tau);
  return m;
}

TransferMatrix build_transfer_matrix(const SymbolicModel& model, const BranchFunction& f, const Discretization& d,
                                     const std::optional<Roof>& roof) {
  const TransferFamily family(model, f, d, roof ? roof->tau : nullptr);
  TransferMatrix out;
  out.discretization = d;
  out.entries = family(roof ? roof->z : Complex(0.0, 0.0));
  if (roof) out.z = roof->z;
  return out;
}

PressureEstimate topological_pressure(const SymbolicModel& model, const BranchFunction& f, const Discretization& d) {
  const double p = std::log(build_transfer_matrix(model, f, d).spectral_radius());
  const double p2 = std::log(build_transfer_matrix(model, f, d.refined()).spectral_radius());
  return {p, std::abs(p - p2), d};
}

double orbit_pressure(const SymbolicModel& model, const BranchFunction& f, int period, std::int64_t max_words) {
  if (period < 1) throw ParameterError("orbit period must be positive");
  const Eigen::MatrixXd t = model.transitions().cast<double>();
  Eigen::MatrixXd pw = Eigen::MatrixXd::Identity(t.rows(), t.cols());
  for (int k = 0; k < period; ++k) pw = pw * t;
  if (pw.trace() > double(max_words)) {
    std::ostringstream msg;
    msg << "period " << period << " has " << pw.trace() << " closed words, above the budget " << max_words;
    throw BudgetError(msg.str());
  }
  const auto& branches = model.branches();
  const int n = model.alphabet_size();
  std::vector<int> word(period);
  std::vector<double> y(period + 1);
  double total = -std::numeric_limits<double>::infinity();

  auto close_word = [&] {
    const Branch& last = branches[word[period - 1]];
    double x = model.cells()[last.to_cell].center();
    for (int it = 0; it < 200; ++it) {
      double v = x;
      for (int k = period - 1; k >= 0; --k) v = branches[word[k]].inverse(v);
      const bool done = std::abs(v - x) <= 1e-16 * std::max(1.0, std::abs(x));
      x = v;
      if (done) break;
    }
    y[period] = x;
    for (int k = period - 1; k >= 0; --k) y[k] = branches[word[k]].inverse(y[k + 1]);
    double s = 0.0;
    for (int k = 0; k < period; ++k) s += f(word[k], y[k], y[k + 1]);
    total = log_sum_exp(total, s);
  };

  auto extend = [&](auto&& self, int depth) -> void {
    if (depth == period) {
      if (branches[word[period - 1]].to_cell == branches[word[0]].from_cell) close_word();
      return;
    }
    for (int b = 0; b < n; ++b) {
      if (depth > 0 && branches[word[depth - 1]].to_cell != branches[b].from_cell) continue;
      word[depth] = b;
      self(self, depth + 1);
    }
  };
  extend(extend, 0);
  if (total == -std::numeric_limits<double>::infinity()) throw ModelError(model.name() + ": no orbits of this period");
  return total / period;
}

namespace {

// Root of a decreasing g(s) = log r_sp(s): the given bracket, or one grown from s = 0 by doubling.
template <typename G>
double bracketed_root(const G& g, std::optional<Bracket> bracket) {
  double lo, hi, glo, ghi;
  if (bracket) {
    lo = bracket->lo;
    hi = bracket->hi;
    glo = g(lo);
    ghi = g(hi);
    if (glo * ghi > 0.0) {
      std::ostringstream msg;
      msg << "no sign change of P(f - s tau) on [" << lo << ", " << hi << "]: " << glo << ", " << ghi;
      throw BracketError(msg.str());
    }
  } else {
    const double g0 = g(0.0);
    if (g0 == 0.0) return 0.0;
    const double dir = g0 > 0.0 ? 1.0 : -1.0;
    double s_prev = 0.0, g_prev = g0, step = 1.0;
    bool found = false;
    for (int k = 0; k < 40; ++k, step *= 2.0) {
      const double s = dir * step;
      const double gs = g(s);
      if (gs * g0 <= 0.0) {
        lo = std::min(s_prev, s);
        hi = std::max(s_prev, s);
        glo = lo == s ? gs : g_prev;
        ghi = hi == s ? gs : g_prev;
        found = true;
        break;
      }
      s_prev = s;
      g_prev = gs;
    }
    if (!found) throw BracketError("P(f - s tau) keeps its sign; is tau positive?");
  }
  if (glo == 0.0) return lo;
  if (ghi == 0.0) return hi;
  std::uintmax_t iters = 200;
  const auto tol = [](double a, double b) { return std::abs(a - b) <= 1e-13 * std::max(1.0, std::abs(a)); };
  const auto r = boost::math::tools::toms748_solve(g, lo, hi, glo, ghi, tol, iters);
  return 0.5 * (r.first + r.second);
}

}  // namespace

double flow_pressure(const SymbolicModel& model, const BranchFunction& f, const BranchFunction& tau,
                     const Discretization& d, std::optional<Bracket> bracket) {
  if (!tau) throw ParameterError("flow pressure needs a roof function");
  auto g = [&](double s) {
    const BranchFunction shifted = [&, s](int a, double y, double x) { return f(a, y, x) - s * tau(a, y, x); };
    const double r = build_transfer_matrix(model, shifted, d).spectral_radius();
    return r > 0.0 ? std::log(r) : -std::numeric_limits<double>::max();
  };
  return bracketed_root(g, bracket);
}

ResonanceSet ruelle_resonances(const SymbolicModel& model, const BranchFunction& f, const BranchFunction& tau,
                               const ZeroDomain& domain, int degree, const ZeroFinderOptions& options) {
  if (!tau) throw ParameterError("Ruelle resonances need a roof function");
  const TransferFamily family(model, f, Discretization::collocation(degree), tau);
  ResonanceSet set = find_zeros([&](Complex z) { return family(z); }, domain, options);
  set.h = 1.0;
  set.provenance = "ruelle " + model.name() + " collocation " + std::to_string(degree);
  return set;
}

int SampledReturnMap::cell_of(int chart, const Eigen::Vector2d& p) const {
  if (chart < 0 || chart >= static_cast<int>(boxes.size())) return -1;
  const Rectangle& b = boxes[chart];
  if (!b.first.contains(p[0]) || !b.second.contains(p[1])) return -1;
  const int iy = std::min(cells - 1, static_cast<int>((p[0] - b.first.lo) / b.first.width() * cells));
  const int ie = std::min(cells - 1, static_cast<int>((p[1] - b.second.lo) / b.second.width() * cells));
  return (chart * cells + iy) * cells + ie;
}

double return_log_expansion(const std::vector<SectionChart>& charts, const ScatteringSystem& system,
                            const SectionPoint& departure, const SectionOptions& options) {
  constexpr double d = 1e-6;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  Eigen::Matrix2d jac;
  try {
    const int target = first_return(charts, system, departure, options).chart;
    for (int k = 0; k < 2; ++k) {
      const Eigen::Vector2d e = d * Eigen::Vector2d::Unit(k);
      const Crossing a = first_return(charts, system, {departure.chart, departure.coords + e}, options);
      const Crossing b = first_return(charts, system, {departure.chart, departure.coords - e}, options);
      if (a.chart != target || b.chart != target) return nan;
      jac.col(k) = (a.coords - b.coords) / (2.0 * d);
    }
  } catch (const Error&) {
    return nan;
  }
  return std::log(Eigen::EigenSolver<Eigen::Matrix2d>(jac, false).eigenvalues().cwiseAbs().maxCoeff());
}

namespace {

Eigen::MatrixXcd ulam_matrix(const SampledReturnMap& map, const std::function<double(const SampledReturnMap::Transition&)>& w,
                             Complex z) {
  const int n = map.dimension();
  if (n == 0) throw ParameterError("empty Ulam grid");
  const int per_chart = map.cells * map.cells;
  auto area = [&](int cell) {
    const Rectangle& b = map.boxes[cell / per_chart];
    return b.first.width() * b.second.width() / per_chart;
  };
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(n, n);
  for (const auto& t : map.transitions) {
    const double wt = w(t);
    if (std::isnan(wt)) continue;
    m(t.to_cell, t.from_cell) += std::exp(Complex(wt) - z * t.tau) * (area(t.from_cell) / area(t.to_cell) / map.samples_per_cell);
  }
  return m;
}

}  // namespace

SampledReturnMap sample_return_map(const std::vector<SectionChart>& charts, const ScatteringSystem& system, int cells,
                                   int samples_per_cell, const SectionOptions& options, std::uint64_t seed,
                                   bool expansion) {
  if (cells < 1 || samples_per_cell < 1) throw ParameterError("Ulam grid needs cells >= 1 and samples >= 1");
  SampledReturnMap map;
  map.cells = cells;
  map.samples_per_cell = samples_per_cell;
  for (const SectionChart& c : charts) {
    const Ellipse& e = c.trapped_neighborhood;
    map.boxes.push_back({{e.y0 - e.a, e.y0 + e.a}, {e.eta0 - e.b, e.eta0 + e.b}});
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int c = 0; c < static_cast<int>(charts.size()); ++c) {
    const Rectangle& b = map.boxes[c];
    for (int iy = 0; iy < cells; ++iy) {
      for (int ie = 0; ie < cells; ++ie) {
        const int from = (c * cells + iy) * cells + ie;
        for (int s = 0; s < samples_per_cell; ++s) {
          const Eigen::Vector2d p(b.first.lo + b.first.width() * (iy + unit(rng)) / cells,
                                  b.second.lo + b.second.width() * (ie + unit(rng)) / cells);
          try {
            const Crossing x = first_return(charts, system, {c, p}, options);
            const int to = map.cell_of(x.chart, x.coords);
            if (to < 0) continue;
            map.transitions.push_back({from, to, x.tau, p, c});
            if (expansion) map.transitions.back().log_expansion = return_log_expansion(charts, system, {c, p}, options);
          } catch (const EscapeError&) {
          } catch (const DomainError&) {
          }
        }
      }
    }
  }
  return map;
}

TransferMatrix build_transfer_matrix(const SampledReturnMap& map, const ChartFunction& f, const std::optional<Complex>& z) {
  TransferMatrix out;
  out.discretization = Discretization::ulam(map.cells);
  out.z = z;
  out.entries = ulam_matrix(
      map, [&](const SampledReturnMap::Transition& t) { return f ? f(t.chart, t.departure) : 0.0; },
      z.value_or(Complex(0.0, 0.0)));
  return out;
}

double flow_pressure(const SampledReturnMap& map, double beta, std::optional<Bracket> bracket) {
  // the area push-forward already carries exp(-log J_u)
  const auto weight = [beta](const SampledReturnMap::Transition& t) { return (1.0 - beta) * t.log_expansion; };
  const bool any = std::any_of(map.transitions.begin(), map.transitions.end(),
                               [](const auto& t) { return std::isfinite(t.log_expansion); });
  if (!any) throw ParameterError("sampled map carries no expansion estimates");
  auto g = [&](double s) {
    TransferMatrix m;
    m.entries = ulam_matrix(map, weight, Complex(s, 0.0));
    const double r = m.spectral_radius();
    return r > 0.0 ? std::log(r) : -std::numeric_limits<double>::max();
  };
  return bracketed_root(g, bracket);
}

}  // namespace qmono
