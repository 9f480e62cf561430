// One PASS/FAIL line per acceptance criterion. Arguments select criteria by number.
#include "qmono/classical.hpp"
#include "qmono/config.hpp"
#include "qmono/io.hpp"
#include "qmono/quantum.hpp"
#include "qmono/resonances.hpp"
#include "qmono/section.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include <sys/wait.h>

using namespace qmono;
namespace fs = std::filesystem;
using Eigen::MatrixXcd;

namespace {

constexpr double kPi = std::numbers::pi;
const double kLog2 = std::log(2.0);
const Complex I(0.0, 1.0);

struct Outcome {
  bool pass = true;
  std::string detail;

  // records a named check; the detail keeps the measured value
  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    if (!detail.empty()) detail += "; ";
    detail += what + (ok ? "" : " [failed]");
  }
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

double max_abs(const MatrixXcd& m) { return m.cwiseAbs().maxCoeff(); }

// Shared 3-disk data from the bundled configuration.
struct Disk3 {
  RunConfig config;
  ScatteringSystem system;
  std::vector<PhasePoint> trapped;
  ReturnMapData data;
};

const Disk3& disk3() {
  static const Disk3 d = [] {
    Disk3 d{load_config(fs::path(QMONO_SOURCE_DIR) / "configs" / "three_disk.yaml"), ScatteringSystem::free_motion(), {}, {}};
    d.system = d.config.system.scattering();
    auto o = d.config.sampling.options;
    o.seed = d.config.seed;
    d.trapped = sample_trapped_set(d.system, d.config.energy, d.config.sampling.budget, o);
    const auto charts = build_sections(d.system, d.config.energy, d.trapped, d.config.section.section);
    d.data = partition_blocks(charts, d.system, d.trapped, d.config.section);
    return d;
  }();
  return d;
}

QuantumOptions disk3_quantum() {
  auto o = disk3().config.quantum.options;
  o.h = disk3().config.quantum.h.front();
  return o;
}

double disk3_radius() { return disk3().config.resonances.C * disk3().config.quantum.h.front(); }

// D(0, C h) zeros of the 3-disk determinant, cached for criteria 7 and 9
const ResonanceSet& disk3_zeros() {
  static const ResonanceSet set = [] {
    const QuantumMap map(disk3().data, disk3_quantum());
    return find_zeros([&](Complex z) { return map(z); }, ZeroDomain::disk(0.0, disk3_radius()),
                      disk3().config.resonances.finder);
  }();
  return set;
}

// ---------------------------------------------------------------- 1
Outcome pressure_oracle() {
  Outcome o;
  const auto two = topological_pressure(SymbolicModel::doubling(), constant_weight(0.0), Discretization::collocation(32));
  o.check(std::abs(two.value - kLog2) < 1e-10, "|P_2shift - log 2| = " + num(std::abs(two.value - kLog2)));
  const double orbit = orbit_pressure(SymbolicModel::doubling(), constant_weight(0.0), 12);
  o.check(std::abs(two.value - orbit) < 0.01, "|P - P_orbit(12)| = " + num(std::abs(two.value - orbit)));
  const double phi = 0.5 * (1.0 + std::sqrt(5.0));
  const auto gm = topological_pressure(SymbolicModel::golden_mean(), constant_weight(0.0), Discretization::collocation(32));
  o.check(std::abs(gm.value - std::log(phi)) < 1e-10, "|P_golden - log phi| = " + num(std::abs(gm.value - std::log(phi))));
  return o;
}

// ---------------------------------------------------------------- 2
Outcome ruelle() {
  Outcome o;
  const auto model = SymbolicModel::doubling();
  const auto set = ruelle_resonances(model, expansion_weight(model, -1.0), constant_weight(1.0),
                                     ZeroDomain::rectangle(-2.4, 0.35, -1.0, 1.0));
  o.check(set.zeros.size() == 4 && set.total_multiplicity() == 4, std::to_string(set.zeros.size()) + " zeros");
  double worst = 0.0;
  for (int k = 0; k < 4; ++k) {
    double best = INFINITY;
    for (const auto& z : set.zeros) best = std::min(best, std::abs(z.z - Complex(-k * kLog2, 0.0)));
    worst = std::max(worst, best);
  }
  o.check(worst < 1e-8, "max |z_k + k log 2| = " + num(worst));
  return o;
}

// ---------------------------------------------------------------- 3
// Periodic-point oracle for the doubling map: the 2^n - 1 points k/(2^n - 1) of
// period n, roof sums S_n tau along each orbit, bisection on (1/n) log sum exp(-s S_n) = 0.
double orbit_bisection(const std::function<double(int, double)>& tau, int n) {
  const std::uint64_t m = (std::uint64_t(1) << n) - 1;
  std::vector<double> sums(m);
  for (std::uint64_t k = 0; k < m; ++k) {
    double s = 0.0;
    std::uint64_t j = k;
    for (int step = 0; step < n; ++step) {
      const double y = double(j) / double(m);
      const int branch = 2 * j >= m ? 1 : 0;
      s += tau(branch, y);
      j = (2 * j) % m;
    }
    sums[k] = s;
  }
  auto f = [&](double s) {
    double total = 0.0;
    for (double t : sums) total += std::exp(-s * t);
    return std::log(total) / n;
  };
  double lo = 0.0, hi = 3.0;
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) > 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

Outcome suspension() {
  Outcome o;
  const auto model = SymbolicModel::doubling();
  const double s2 = flow_pressure(model, constant_weight(0.0), constant_weight(2.0));
  o.check(std::abs(s2 - 0.5 * kLog2) < 1e-10, "tau = 2: |s - log2/2| = " + num(std::abs(s2 - 0.5 * kLog2)));

  const std::vector<double> steps{1.0, 2.0};
  const double s_branch = flow_pressure(model, constant_weight(0.0), branch_weight(steps));
  const double oracle_branch = orbit_bisection([&](int a, double) { return steps[a]; }, 16);
  o.check(std::abs(s_branch - oracle_branch) < 1e-6, "tau = (1, 2): |s - oracle| = " + num(std::abs(s_branch - oracle_branch)));

  const auto wavy = [](int a, double y) { return 1.0 + 0.5 * a + 0.25 * std::sin(2.0 * kPi * y); };
  const BranchFunction tau = [&](int a, double y, double) { return wavy(a, y); };
  const double s_wavy = flow_pressure(model, constant_weight(0.0), tau);
  const double oracle_wavy = orbit_bisection(wavy, 20);
  o.check(std::abs(s_wavy - oracle_wavy) < 1e-6, "tau(a, y) analytic: |s - oracle| = " + num(std::abs(s_wavy - oracle_wavy)));
  return o;
}

// ---------------------------------------------------------------- 4
// Nearest forward intersection of a ray with the disks other than `skip`, in time units.
std::pair<int, double> ray_hit(const ScatteringSystem& system, const Eigen::Vector2d& x, const Eigen::Vector2d& v, int skip) {
  int best = -1;
  double tbest = INFINITY;
  for (int k = 0; k < static_cast<int>(system.disks().size()); ++k) {
    if (k == skip) continue;
    const auto& d = system.disks()[k];
    const Eigen::Vector2d w = x - d.center;
    const double b = w.dot(v), c = w.squaredNorm() - d.radius * d.radius;
    const double disc = b * b - v.squaredNorm() * c;
    if (disc < 0.0) continue;
    const double t = (-b - std::sqrt(disc)) / v.squaredNorm();
    if (t > 0.0 && t < tbest) {
      tbest = t;
      best = k;
    }
  }
  return {best, tbest};
}

Eigen::Vector2d boundary_point(const SectionChart& c, double y) {
  const double phi = c.reference_angle + y / c.radius;
  return c.origin + c.radius * Eigen::Vector2d(std::cos(phi), std::sin(phi));
}

Outcome symplectic() {
  Outcome o;
  const auto& d = disk3();
  const auto& charts = d.data.charts;
  const SectionOptions so = d.config.section.section;
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  int tested = 0;
  double det_err = 0.0;
  for (int attempt = 0; attempt < 4000 && tested < 50; ++attempt) {
    const int i = static_cast<int>(rng() % charts.size());
    const auto& e = charts[i].trapped_neighborhood;
    const Eigen::Vector2d p(e.y0 + e.a * u(rng), e.eta0 + e.b * u(rng));
    if (!e.contains(p[0], p[1])) continue;
    Eigen::Matrix2d jac;
    bool ok = true;
    int target = -1;
    // Richardson-combined central differences
    auto column = [&](int col, double step) -> Eigen::Vector2d {
      const Eigen::Vector2d dp = step * Eigen::Vector2d::Unit(col);
      const auto a = first_return(charts, d.system, {i, p + dp}, so);
      const auto b = first_return(charts, d.system, {i, p - dp}, so);
      ok = ok && a.chart == b.chart && (target < 0 || a.chart == target);
      target = a.chart;
      return (a.coords - b.coords) / (2.0 * step);
    };
    try {
      for (int col = 0; col < 2; ++col) jac.col(col) = (4.0 * column(col, 0.5e-5) - column(col, 1e-5)) / 3.0;
    } catch (const EscapeError&) {
      ok = false;
    }
    if (!ok) continue;
    det_err = std::max(det_err, std::abs(jac.determinant() - 1.0));
    ++tested;
  }
  o.check(tested == 50 && det_err < 1e-6, std::to_string(tested) + " points, max |det Dk - 1| = " + num(det_err));

  // S(y, y') = |xi| x chord length between the two boundary points
  const double speed = std::sqrt(2.0 * d.config.energy);
  double s_err = 0.0, tau_err = 0.0;
  int returns = 0;
  for (const auto& [key, b] : d.data.blocks) {
    for (int k = 0; k < 400; ++k) {
      const double y = b.domain.first.from_unit(u(rng)), yp = b.domain.second.from_unit(u(rng));
      const double chord = (boundary_point(charts[key.first], y) - boundary_point(charts[key.second], yp)).norm();
      s_err = std::max(s_err, std::abs(b.fit.action(y, yp) - speed * chord));
    }
    for (const auto& s : b.trapped) {
      const auto r = first_return(charts, d.system, {key.second, s.departure}, so);
      const PhasePoint dep = charts[key.second].embed(d.system, s.departure[0], s.departure[1]);
      const auto [disk, t] = ray_hit(d.system, dep.x, dep.xi, charts[key.second].disk);
      tau_err = std::max(tau_err, disk == charts[r.chart].disk ? std::abs(r.tau - t) : INFINITY);
      ++returns;
    }
  }
  o.check(s_err < 1e-8, "max |S - |xi| chord| = " + num(s_err));
  o.check(returns > 0 && tau_err < 1e-10, std::to_string(returns) + " trapped returns, max |tau - ray time| = " + num(tau_err));
  return o;
}

// ---------------------------------------------------------------- 5
// Chebyshev series on [-L, L]^2 of the polynomial sum p(n, m) y^n y'^m (degree <= 3 per variable).
ChebyshevSeries2D polynomial(double L, const Eigen::Matrix4d& p) {
  Eigen::Matrix4d mono = Eigen::Matrix4d::Zero();  // u^n in the Chebyshev basis, column n
  mono(0, 0) = 1.0;
  mono(1, 1) = 1.0;
  mono(0, 2) = 0.5, mono(2, 2) = 0.5;
  mono(1, 3) = 0.75, mono(3, 3) = 0.25;
  Eigen::Matrix4d scaled = p;
  for (int n = 0; n < 4; ++n)
    for (int m = 0; m < 4; ++m) scaled(n, m) *= std::pow(L, n + m);
  return {{{-L, L}, {-L, L}}, mono * scaled * mono.transpose()};
}

// S = (alpha y^2 - 2 beta y y' + gamma y'^2)/2 + c y'^3
ChebyshevSeries2D generating(double L, double alpha, double beta, double gamma, double c = 0.0) {
  Eigen::Matrix4d p = Eigen::Matrix4d::Zero();
  p(2, 0) = 0.5 * alpha;
  p(1, 1) = -beta;
  p(0, 2) = 0.5 * gamma;
  p(0, 3) = c;
  return polynomial(L, p);
}

ChebyshevSeries2D constant(double L, double v) {
  Eigen::Matrix4d p = Eigen::Matrix4d::Zero();
  p(0, 0) = v;
  return polynomial(L, p);
}

Outcome quantum_structure() {
  Outcome o;
  const MatrixXcd b = open_baker(243, false);
  const double unitary = max_abs(b.adjoint() * b - MatrixXcd::Identity(243, 243));
  o.check(unitary < 1e-12, "closed baker ||B*B - I|| = " + num(unitary));
  const double rho = Eigen::ComplexEigenSolver<MatrixXcd>(open_baker(243, true), false).eigenvalues().cwiseAbs().maxCoeff();
  o.check(rho < 1.0, "open baker rho = " + num(rho));

  // quadratic phase: matrix elements between scaled Hermite functions are Gaussian
  // integrals, F(s, t) = sum_kl s^k t^l M_kl / sqrt(k! l!) = C0 exp(p20 s^2 + p02 t^2 + p11 s t)
  const double h = 1.0 / 64.0, alpha = 2.0, beta = 1.0, gamma = 2.0, L = 2.0;
  const Ellipse e{0.0, 0.0, 0.5, 0.5};
  SectionChart chart;
  chart.domain = {{-L, L}, {-L, L}};
  chart.trapped_neighborhood = e;
  const auto proj = build_projector(chart, h);
  const int r = proj.rank;
  const auto s = generating(L, alpha, beta, gamma);
  const BlockGrid g = block_grid(s, h, 4.0, e.b, e.b);
  const QuantumBlock blk = quantize_block(s, constant(L, 0.0), 0.0, h, g, 4.0, 1e-3, e.b, e.b);
  const MatrixXcd m = assemble_M({blk}, {proj}, 0.0).blocks.at({0, 0});
  const double sigma2 = h * e.a / e.b;
  Eigen::Matrix2cd q;
  q << 1.0 - I * sigma2 / h * alpha, I * sigma2 / h * beta, I * sigma2 / h * beta, 1.0 - I * sigma2 / h * gamma;
  const Eigen::Matrix2cd qi = q.inverse();
  const Eigen::Vector2cd ev = Eigen::ComplexEigenSolver<Eigen::Matrix2cd>(q).eigenvalues();
  const Complex c0 = std::sqrt(beta / (2.0 * kPi * h)) * std::sqrt(sigma2) * 2.0 * std::sqrt(kPi) /
                     (std::sqrt(ev[0]) * std::sqrt(ev[1]));
  const Complex p20 = qi(0, 0) - 0.5, p02 = qi(1, 1) - 0.5, p11 = 2.0 * qi(0, 1);
  MatrixXcd coef = MatrixXcd::Zero(r + 1, r + 1);
  coef(0, 0) = 1.0;
  for (int l = 0; l < r; ++l) coef(0, l + 1) = 2.0 * p02 * (l >= 1 ? coef(0, l - 1) : Complex(0.0)) / double(l + 1);
  for (int k = 0; k < r; ++k)
    for (int l = 0; l <= r; ++l)
      coef(k + 1, l) = (2.0 * p20 * (k >= 1 ? coef(k - 1, l) : Complex(0.0)) + p11 * (l >= 1 ? coef(k, l - 1) : Complex(0.0))) /
                       double(k + 1);
  MatrixXcd oracle(r, r);
  for (int k = 0; k < r; ++k)
    for (int l = 0; l < r; ++l) oracle(k, l) = c0 * std::sqrt(std::tgamma(k + 1.0) * std::tgamma(l + 1.0)) * coef(k, l);
  o.check(max_abs(m - oracle) < 1e-6, "metaplectic oracle (rank " + std::to_string(r) + ") max dev = " + num(max_abs(m - oracle)));

  // constant return time: K(z) = exp(i z tau0 / h) K(0); rounding of exp(i x) is eps |x|
  const double tau0 = 2.7;
  const auto cubic = generating(1.0, 2.0, 1.0, 2.0, 0.2);
  const BlockGrid gc = block_grid(cubic, h, 4.0, 0.0, 0.0);
  const QuantumBlock k0 = quantize_block(cubic, constant(1.0, 0.0), 0.0, h, gc);
  double max_s = 0.0;
  for (double y : gc.target.nodes)
    for (double yp : gc.source.nodes) max_s = std::max(max_s, std::abs(cubic(y, yp)));
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> re(-0.2, 0.2), im(-0.03, 0.0);
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    const Complex z(re(rng), im(rng));
    const QuantumBlock kz = quantize_block(cubic, constant(1.0, tau0), z, h, gc);
    const double arg = (max_s + std::abs(z) * tau0) / h;
    worst = std::max(worst, max_abs(kz.kernel - std::exp(I * z * tau0 / h) * k0.kernel) / (arg * max_abs(kz.kernel)));
  }
  const double eps = std::numeric_limits<double>::epsilon();
  o.check(worst <= 8.0 * eps, "tau0 factorization at 20 z: dev / (|arg| max|K|) = " + num(worst / eps) + " eps");
  return o;
}

// ---------------------------------------------------------------- 6
// Levels of q^w at or below zero from a Fourier-grid discretization. After the
// unitary dilation y -> y0 + a y the symbol is y^2 + (h' D_y)^2 - 1 with h' = h/(ab).
int fourier_level_count(const Ellipse& e, double h) {
  const int n = 256;
  const double hp = h / (e.a * e.b);
  const double half = 1.0 + 8.0 * std::sqrt(hp);
  const double dy = 2.0 * half / n;
  MatrixXcd f(n, n);
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < n; ++k) f(j, k) = std::exp(-2.0 * kPi * I * double(j) * double(k) / double(n)) / std::sqrt(double(n));
  Eigen::VectorXd p2(n);
  for (int k = 0; k < n; ++k) {
    const int kk = k <= n / 2 ? k : k - n;
    p2[k] = std::pow(hp * kPi * kk / half, 2);
  }
  MatrixXcd q = f.adjoint() * p2.asDiagonal() * f;
  for (int j = 0; j < n; ++j) q(j, j) += std::pow(-half + j * dy, 2) - 1.0;
  const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<MatrixXcd>(q, Eigen::EigenvaluesOnly).eigenvalues();
  return static_cast<int>((ev.array() <= 0.0).count());
}

Outcome rank_law() {
  Outcome o;
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int agree = 0, trials = 0, built = 0;
  for (int t = 0; t < 24; ++t) {
    const Ellipse e{0.0, 0.3 * (u(rng) - 0.5), 0.3 + 0.7 * u(rng), 0.3 + 0.7 * u(rng)};
    const double x = 2.0 + 38.0 * u(rng);  // ab/(2h)
    if (std::abs(x + 0.5 - std::round(x + 0.5)) < 0.05) continue;  // a level within rounding of zero
    const double h = e.a * e.b / (2.0 * x);
    const int law = static_cast<int>(std::floor(x + 0.5));
    ++trials;
    agree += projector_rank(e, h) == law && fourier_level_count(e, h) == law;
    SectionChart chart;
    chart.domain = {{-3.0, 3.0}, {-3.0, 3.0}};
    chart.trapped_neighborhood = e;
    built += build_projector(chart, e, h).rank == law;
  }
  o.check(agree == trials && built == trials,
          std::to_string(agree) + "/" + std::to_string(trials) + " match the Fourier level count, " + std::to_string(built) +
              " built projectors");
  int worst = 0;
  for (double x = 20.0; x <= 200.0; x += 0.37) {
    const Ellipse e{0.0, 0.0, 0.8, 0.6};
    const double h = e.a * e.b / (2.0 * x);
    worst = std::max(worst, std::abs(projector_rank(e, h / 2.0) - 2 * projector_rank(e, h)));
  }
  o.check(worst <= 1, "max |r(h/2) - 2 r(h)| over ab/(2h) in [20, 200] = " + std::to_string(worst));
  return o;
}

// ---------------------------------------------------------------- 7
// z with an eigenvalue of M(z) equal to 1: Newton on the tracked eigenvalue from a
// seed grid, dlambda/dz = w_k M'(z) v_k with W = V^{-1}.
std::vector<Complex> eigenvalue_one_crossings(const OperatorBuilder& m, double radius, double h) {
  const double spacing = h / 4.0, d = 1e-6 * h;
  std::vector<Complex> roots;
  auto derivative = [&](Complex z) -> MatrixXcd { return (m(z + d) - m(z - d)) / (2.0 * d); };
  for (double x = -radius; x <= radius + 1e-15; x += spacing)
    for (double y = -radius; y <= radius + 1e-15; y += spacing) {
      const Complex z0(x, y);
      if (std::abs(z0) > radius + spacing) continue;
      const Eigen::ComplexEigenSolver<MatrixXcd> es(m(z0));
      const MatrixXcd v = es.eigenvectors(), w = v.inverse(), dm = derivative(z0);
      for (Eigen::Index k = 0; k < es.eigenvalues().size(); ++k) {
        const Complex step = -(es.eigenvalues()[k] - 1.0) / (w.row(k) * dm * v.col(k))(0, 0);
        if (std::abs(step) > spacing) continue;
        Complex z = z0 + step;
        bool converged = false;
        for (int it = 0; it < 30 && !converged; ++it) {
          const Eigen::ComplexEigenSolver<MatrixXcd> e2(m(z));
          Eigen::Index j;
          (e2.eigenvalues().array() - 1.0).abs().minCoeff(&j);
          const MatrixXcd v2 = e2.eigenvectors(), w2 = v2.inverse();
          const Complex s = -(e2.eigenvalues()[j] - 1.0) / (w2.row(j) * derivative(z) * v2.col(j))(0, 0);
          z += s;
          converged = std::abs(s) < 1e-13 * std::max(h, std::abs(z));
        }
        if (!converged) continue;
        bool dup = false;
        for (const auto& r : roots) dup = dup || std::abs(r - z) < 1e-9;
        if (!dup) roots.push_back(z);
      }
    }
  return roots;
}

Outcome duality() {
  Outcome o;
  const double h = disk3_quantum().h, radius = disk3_radius();
  const QuantumMap map(disk3().data, disk3_quantum());
  o.check(map.dimension() <= 300, "dimension " + std::to_string(map.dimension()));
  const auto& set = disk3_zeros();
  const auto roots = eigenvalue_one_crossings([&](Complex z) { return map(z); }, radius, h);
  double worst = 0.0;
  for (const auto& z : set.zeros) {
    double best = INFINITY;
    for (const auto& r : roots) best = std::min(best, std::abs(r - z.z));
    worst = std::max(worst, best);
  }
  int inside = 0;
  for (const auto& r : roots) inside += std::abs(r) < radius;
  bool simple = true;
  for (const auto& z : set.zeros) simple = simple && z.multiplicity == 1;
  o.check(!set.zeros.empty() && worst < 1e-8, std::to_string(set.zeros.size()) + " zeros, max distance to an eigenvalue-1 crossing " + num(worst));
  o.check(inside == set.total_multiplicity() && simple,
          std::to_string(inside) + " crossings inside vs multiplicity " + std::to_string(set.total_multiplicity()));

  // constructed double zeros: Jordan blocks and M (+) M
  for (int n : {2, 3}) {
    const Complex z0(-0.2, 0.45);
    const OperatorBuilder jordan = [&, n](Complex z) -> MatrixXcd {
      MatrixXcd m = (z / z0) * MatrixXcd::Identity(n, n);
      for (int k = 0; k + 1 < n; ++k) m(k, k + 1) = 1.0;
      return m;
    };
    const auto js = find_zeros(jordan, ZeroDomain::rectangle(-1.0, 1.0, -1.0, 1.0));
    o.check(js.zeros.size() == 1 && js.zeros[0].multiplicity == n,
            "Jordan " + std::to_string(n) + "x" + std::to_string(n) + ": multiplicity " +
                (js.zeros.empty() ? std::string("none") : std::to_string(js.zeros[0].multiplicity)));
  }
  const OperatorBuilder doubled = [&](Complex z) -> MatrixXcd {
    const MatrixXcd m = map(z);
    MatrixXcd d = MatrixXcd::Zero(2 * m.rows(), 2 * m.cols());
    d.topLeftCorner(m.rows(), m.cols()) = m;
    d.bottomRightCorner(m.rows(), m.cols()) = m;
    return d;
  };
  const auto single = find_zeros([&](Complex z) { return map(z); }, ZeroDomain::disk(0.0, h));
  const auto dbl = find_zeros(doubled, ZeroDomain::disk(0.0, h));
  bool all_double = dbl.zeros.size() == single.zeros.size();
  double offset = 0.0;
  for (const auto& z : dbl.zeros) {
    all_double = all_double && z.multiplicity == 2;
    double best = INFINITY;
    for (const auto& s : single.zeros) best = std::min(best, std::abs(s.z - z.z));
    offset = std::max(offset, best);
  }
  o.check(all_double && dbl.winding == 2 * single.winding,
          "M (+) M on D(0, h): " + std::to_string(dbl.zeros.size()) + " zeros, all multiplicity 2 vs " +
              std::to_string(single.zeros.size()) + " simple (max offset " + num(offset) + ")");
  return o;
}

// ---------------------------------------------------------------- 8
Outcome weyl_trend() {
  Outcome o;
  std::vector<MatrixXcd> ms;
  for (int n : {81, 243, 729, 2187}) ms.push_back(open_baker(n, true));
  const auto fit = eigenvalue_density(ms, 0.5);
  const double target = std::log(2.0) / std::log(3.0);
  std::string counts;
  for (double c : fit.counts) counts += (counts.empty() ? "" : ",") + std::to_string(static_cast<int>(c));
  o.check(std::abs(fit.exponent - target) < 0.15,
          "exponent " + num(fit.exponent) + " vs log2/log3 = " + num(target) + " (counts " + counts + ")");
  return o;
}

// ---------------------------------------------------------------- 9
Outcome robustness() {
  Outcome o;
  // find_zeros throws ConsistencyError on any parent/children winding imbalance
  const auto& set = disk3_zeros();
  o.check(set.total_multiplicity() == set.winding && set.subdivision_checks > 0,
          "sum of multiplicities " + std::to_string(set.total_multiplicity()) + " = winding " + std::to_string(set.winding) +
              " over " + std::to_string(set.subdivision_checks) + " balanced subdivisions");
  auto fine = disk3_quantum();
  fine.grid_scale = 2.0;
  const QuantumMap map(disk3().data, fine);
  const auto doubled = find_zeros([&](Complex z) { return map(z); }, ZeroDomain::disk(0.0, disk3_radius()),
                                  disk3().config.resonances.finder);
  double drift = 0.0;
  for (const auto& z : set.zeros) {
    double best = INFINITY;
    for (const auto& w : doubled.zeros) best = std::min(best, std::abs(w.z - z.z));
    drift = std::max(drift, best);
  }
  const double bound = 1e-6 * disk3_radius();
  o.check(doubled.zeros.size() == set.zeros.size() && drift < bound,
          std::to_string(doubled.zeros.size()) + " zeros after grid doubling, drift " + num(drift) + " < " + num(bound));
  return o;
}

// ---------------------------------------------------------------- 10
std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism() {
  Outcome o;
  const fs::path root = fs::temp_directory_path() / "qmono_acceptance_determinism";
  fs::remove_all(root);
  const std::string config = (fs::path(QMONO_SOURCE_DIR) / "configs" / "three_disk.yaml").string();
  int status[2];
  for (int k = 0; k < 2; ++k) {
    const std::string cmd = std::string(QMONO_CLI) + " all --config " + config + " --out " + (root / std::to_string(k)).string() +
                            " --seed 1 --threads " + std::to_string(k + 1) + " >/dev/null 2>&1";
    const int s = std::system(cmd.c_str());
    status[k] = WIFEXITED(s) ? WEXITSTATUS(s) : -1;
  }
  o.check(status[0] == 0 && status[1] == 0, "exit " + std::to_string(status[0]) + ", " + std::to_string(status[1]));
  if (!o.pass) return o;

  std::set<std::string> names[2];
  for (int k = 0; k < 2; ++k)
    for (const auto& f : fs::directory_iterator(root / std::to_string(k))) names[k].insert(f.path().filename().string());
  const std::set<std::string> classes{"trapped_set.csv", "dimension.json", "charts.json",   "return_map.json",
                                      "pressure.json",   "quantum_0.qtom", "quantum_0.json", "resonances_0.csv",
                                      "resonances_0.json", "weyl.json",    "manifest.json"};
  bool every_class = true;
  for (const auto& c : classes) every_class = every_class && names[0].count(c);
  o.check(every_class && names[0] == names[1], std::to_string(names[0].size()) + " files, every artifact class present");

  int identical = 0;
  for (const auto& n : names[0]) {
    if (n == "manifest.json") continue;
    identical += slurp(root / "0" / n) == slurp(root / "1" / n);
  }
  auto manifest = [&](int k) {
    auto j = io::json::parse(slurp(root / std::to_string(k) / "manifest.json"));
    j.erase("timestamp");
    return j;
  };
  const auto m0 = manifest(0);
  bool listed = m0["artifacts"].size() + 1 == names[0].size();
  for (const auto& a : m0["artifacts"])
    listed = listed && a["sha256"] == io::sha256_file(root / "0" / a["file"].get<std::string>());
  o.check(identical + 1 == static_cast<int>(names[0].size()) && manifest(1) == m0,
          std::to_string(identical) + " artifacts byte-identical across runs (1 and 2 threads), manifests equal without timestamps");
  o.check(listed, "manifest lists every artifact with its sha256");
  return o;
}

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;  // 0: no runtime requirement
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "pressure oracle", 1.0, pressure_oracle},
      {2, "Ruelle resonances", 10.0, ruelle},
      {3, "suspension identity", 0.0, suspension},
      {4, "symplecticity and generating function", 30.0, symplectic},
      {5, "quantum map structure", 0.0, quantum_structure},
      {6, "projector rank law", 0.0, rank_law},
      {7, "determinant-eigenvalue duality", 300.0, duality},
      {8, "fractal Weyl trend", 600.0, weyl_trend},
      {9, "zero-finder robustness", 0.0, robustness},
      {10, "end-to-end determinism", 0.0, determinism},
  };
  std::set<int> wanted;
  for (int k = 1; k < argc; ++k) wanted.insert(std::atoi(argv[k]));

  // shared 3-disk data is built by its first consumer and timed there: sampling,
  // sections and fits in 4, the D(0, C h) zero search in 7 (reused by 9)

  int failed = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out.check(false, std::string("exception: ") + e.what());
    }
    double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget_seconds > 0.0) out.check(seconds < c.budget_seconds, "runtime " + num(seconds) + " s < " + num(c.budget_seconds) + " s");
    failed += !out.pass;
    std::printf("%s [%d] %s: %s (%.1f s)\n", out.pass ? "PASS" : "FAIL", c.id, c.name, out.detail.c_str(), seconds);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
