#include <doctest.h>

#include "qmono/classical.hpp"
#include "qmono/errors.hpp"
#include "systems.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

using namespace qmono;

namespace {

const double kLog2 = std::log(2.0);
const double kPhi = 0.5 * (1.0 + std::sqrt(5.0));

// smooth non-constant weight on the doubling map
BranchFunction wavy(double base) {
  return [base](int, double y, double) { return base + 0.1 * std::cos(2.0 * std::numbers::pi * y); };
}

// Each eigenvalue of a with |lambda| >= floor has a partner in b within tol.
bool same_spectrum(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b, double tol, double floor = 0.0) {
  if (a.size() != b.size()) return false;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (std::abs(a[i]) < floor) continue;
    double best = INFINITY;
    for (Eigen::Index j = 0; j < b.size(); ++j) best = std::min(best, std::abs(a[i] - b[j]));
    if (best > tol) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("Ulam matrix of the doubling map") {
  const auto model = SymbolicModel::doubling();
  const TransferMatrix m = build_transfer_matrix(model, constant_weight(0.0), Discretization::ulam(64));
  REQUIRE(m.entries.rows() == 64);
  // every cell has exactly two preimage cells with unit weight
  for (Eigen::Index i = 0; i < 64; ++i) {
    CHECK(std::abs(m.entries.row(i).sum() - 2.0) < 1e-14);
    CHECK((m.entries.row(i).array().abs() > 0.0).count() == 2);
  }
  CHECK(std::abs(m.spectral_radius() - 2.0) < 1e-12);
}

TEST_CASE("normalized collocation operator fixes constants") {
  const auto model = SymbolicModel::doubling();
  const TransferMatrix m = build_transfer_matrix(model, expansion_weight(model, -1.0), Discretization::collocation(32));
  CHECK(std::abs(m.spectral_radius() - 1.0) < 1e-10);
  const Eigen::VectorXcd ones = Eigen::VectorXcd::Ones(m.entries.rows());
  CHECK((m.entries * ones - ones).norm() < 1e-12);
}

TEST_CASE("constant weights scale the spectrum") {
  const auto model = SymbolicModel::golden_mean();
  const double c = 0.37;
  const auto f = [](int a, double y, double) { return 0.2 * a - 0.5 * y * y; };
  const BranchFunction fc = [&](int a, double y, double x) { return f(a, y, x) + c; };
  {
    const TransferMatrix m0 = build_transfer_matrix(model, f, Discretization::ulam(16));
    const TransferMatrix m1 = build_transfer_matrix(model, fc, Discretization::ulam(16));
    CHECK(same_spectrum(std::exp(c) * m0.eigenvalues(), m1.eigenvalues(), 1e-10));
  }
  {
    // Deep collocation eigenvalues have condition numbers up to 1e13 (nearly
    // parallel eigenfunctions), so only the leading part is resolved to 1e-10.
    const TransferMatrix m0 = build_transfer_matrix(model, f, Discretization::collocation(16));
    const TransferMatrix m1 = build_transfer_matrix(model, fc, Discretization::collocation(16));
    const Eigen::VectorXcd scaled = std::exp(c) * m0.eigenvalues();
    CHECK(same_spectrum(scaled, m1.eigenvalues(), 1e-10, 0.25 * scaled.cwiseAbs().maxCoeff()));
  }
  const double p0 = topological_pressure(model, f).value;
  CHECK(std::abs(topological_pressure(model, fc).value - (p0 + c)) < 1e-12);
}

TEST_CASE("pressure of the 2-shift and the golden-mean shift") {
  const PressureEstimate two = topological_pressure(SymbolicModel::doubling(), constant_weight(0.0));
  CHECK(std::abs(two.value - kLog2) < 1e-10);
  CHECK(two.error < 1e-10);

  // adjacency oracle: cell transitions 11, 12, 21
  Eigen::Matrix2d a;
  a << 1, 1, 1, 0;
  const double rho = a.eigenvalues().cwiseAbs().maxCoeff();
  CHECK(std::abs(rho - kPhi) < 1e-14);
  const PressureEstimate gm = topological_pressure(SymbolicModel::golden_mean(), constant_weight(0.0));
  CHECK(std::abs(gm.value - std::log(rho)) < 1e-10);

  // escape rate of the open ternary map: log 2 - log 3
  const auto cut = SymbolicModel::ternary_cut();
  CHECK(std::abs(topological_pressure(cut, expansion_weight(cut, -1.0)).value - std::log(2.0 / 3.0)) < 1e-10);
  CHECK(std::abs(topological_pressure(cut, expansion_weight(cut, -0.5)).value - (kLog2 - 0.5 * std::log(3.0))) < 1e-10);
}

TEST_CASE("pressure converges under degree doubling") {
  const auto model = SymbolicModel::doubling();
  const double p32 = topological_pressure(model, wavy(-kLog2), Discretization::collocation(32)).value;
  const double p64 = topological_pressure(model, wavy(-kLog2), Discretization::collocation(64)).value;
  CHECK(std::abs(p32 - p64) < 1e-8);
}

TEST_CASE("periodic orbit sums") {
  // 2^12 points of period 12, each with weight 1
  const double two = orbit_pressure(SymbolicModel::doubling(), constant_weight(0.0), 12);
  CHECK(std::abs(two - std::log(std::pow(2.0, 12)) / 12.0) < 1e-12);
  CHECK(std::abs(two - kLog2) < 0.01);

  // trace of adjacency powers
  Eigen::Matrix2d a, p = Eigen::Matrix2d::Identity();
  a << 1, 1, 1, 0;
  for (int k = 0; k < 14; ++k) p = p * a;
  const double gm = orbit_pressure(SymbolicModel::golden_mean(), constant_weight(0.0), 14);
  CHECK(std::abs(gm - std::log(p.trace()) / 14.0) < 1e-12);
  CHECK(std::abs(gm - std::log(kPhi)) < 0.01);

  const auto fixed = SymbolicModel::single_fixed_point();
  const BranchFunction f = [](int, double y, double) { return 0.3 + y * y; };
  CHECK(std::abs(orbit_pressure(fixed, f, 1) - 0.3) < 1e-14);
  CHECK(std::abs(orbit_pressure(fixed, f, 9) - 0.3) < 1e-14);

  CHECK_THROWS_AS(orbit_pressure(SymbolicModel::doubling(), constant_weight(0.0), 30), BudgetError);
}

TEST_CASE("transfer-matrix pressure agrees with orbit sums") {
  const auto d = SymbolicModel::doubling();
  CHECK(std::abs(topological_pressure(d, constant_weight(0.0)).value - orbit_pressure(d, constant_weight(0.0), 12)) < 0.01);
  const auto g = SymbolicModel::golden_mean();
  CHECK(std::abs(topological_pressure(g, constant_weight(0.0)).value - orbit_pressure(g, constant_weight(0.0), 12)) < 0.01);
  CHECK(std::abs(topological_pressure(d, wavy(-kLog2)).value - orbit_pressure(d, wavy(-kLog2), 12)) < 0.01);
}

TEST_CASE("flow pressure") {
  const auto model = SymbolicModel::doubling();
  CHECK(std::abs(flow_pressure(model, constant_weight(0.0), constant_weight(2.0)) - 0.5 * kLog2) < 1e-10);

  const double p = topological_pressure(model, wavy(-0.3)).value;
  CHECK(std::abs(flow_pressure(model, wavy(-0.3), constant_weight(3.0)) - p / 3.0) < 1e-10);

  // brute force: bisection over s of the period-10 orbit sum of exp(-s tau)
  const std::vector<double> tau = {1.0, 2.0};
  auto orbit_sum = [&](double s) {
    double total = 0.0;
    for (int w = 0; w < (1 << 10); ++w) {
      double t = 0.0;
      for (int k = 0; k < 10; ++k) t += tau[(w >> k) & 1];
      total += std::exp(-s * t);
    }
    return std::log(total) / 10.0;
  };
  double lo = 0.0, hi = 2.0;
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    (orbit_sum(mid) > 0.0 ? lo : hi) = mid;
  }
  const double s_star = flow_pressure(model, constant_weight(0.0), branch_weight(tau));
  CHECK(std::abs(s_star - 0.5 * (lo + hi)) < 1e-6);

  CHECK_THROWS_AS(flow_pressure(model, constant_weight(0.0), constant_weight(2.0), Discretization::collocation(16), Bracket{5.0, 6.0}),
                  BracketError);
  CHECK_THROWS_AS(flow_pressure(model, constant_weight(0.0), constant_weight(0.0)), BracketError);
}

TEST_CASE("Ruelle resonances of the doubling map") {
  const auto model = SymbolicModel::doubling();
  const BranchFunction f = expansion_weight(model, -1.0);
  const ResonanceSet set = ruelle_resonances(model, f, constant_weight(1.0), ZeroDomain::rectangle(-2.4, 0.35, -1.0, 1.0));
  REQUIRE(set.zeros.size() == 4);
  for (int k = 0; k < 4; ++k) {
    const Zero& z = set.zeros[3 - k];
    CHECK(std::abs(z.z - Complex(-k * kLog2, 0.0)) < 1e-8);
    CHECK(z.multiplicity == 1);
    // determinant zero <=> eigenvalue one
    const TransferMatrix m = build_transfer_matrix(model, f, Discretization::collocation(32), Roof{constant_weight(1.0), z.z});
    CHECK((m.eigenvalues().array() - 1.0).abs().minCoeff() < 1e-7);
  }
  // eigensolve oracle: eigenvalues 2^-k of the normalized operator
  const Eigen::VectorXcd ev = build_transfer_matrix(model, f, Discretization::collocation(32)).eigenvalues();
  for (int k = 0; k < 4; ++k) CHECK((ev.array() - std::pow(2.0, -k)).abs().minCoeff() < 1e-10);

  // f + c moves every zero by c / tau
  const double c = 0.1;
  const BranchFunction fc = [&](int a, double y, double x) { return f(a, y, x) + c; };
  const ResonanceSet shifted = ruelle_resonances(model, fc, constant_weight(1.0), ZeroDomain::rectangle(-0.5, 0.35, -1.0, 1.0));
  REQUIRE(shifted.zeros.size() == 1);
  CHECK(std::abs(shifted.zeros[0].z - c) < 1e-10);
}

TEST_CASE("model and discretization errors") {
  const Branch identity{0, 0, [](double x) { return x; }, [](double) { return 1.0; }};
  const SymbolicModel flat("flat", {{0.0, 1.0}}, {identity});
  CHECK_THROWS_AS(build_transfer_matrix(flat, constant_weight(0.0), Discretization::collocation(16)), ModelError);
  CHECK_THROWS_AS(build_transfer_matrix(SymbolicModel::doubling(), constant_weight(0.0), Discretization::collocation(4)),
                  ParameterError);
  const Branch outside{0, 0, [](double x) { return x + 2.0; }, [](double) { return 1.0; }};
  CHECK_THROWS_AS(SymbolicModel("bad", {{0.0, 1.0}}, {outside}), ModelError);
  // two disjoint loops
  const Branch a{0, 0, [](double x) { return 0.5 * x; }, [](double) { return 0.5; }};
  const Branch b{1, 1, [](double x) { return 2.0 + 0.5 * x; }, [](double) { return 0.5; }};
  CHECK_THROWS_AS(SymbolicModel("split", {{0.0, 1.0}, {2.0, 3.0}}, {a, b}), ModelError);
}

TEST_CASE("Ulam matrix of the sampled 3-disk return map") {
  const auto sys = testing::three_disk();
  const auto samples = testing::three_disk_trapped(60);
  const auto charts = build_sections(sys, testing::kDiskEnergy, samples, SectionOptions{});
  const SampledReturnMap map = sample_return_map(charts, sys, 8, 40, SectionOptions{}, 5);
  CHECK(map.dimension() == 3 * 64);
  CHECK(!map.transitions.empty());
  const TransferMatrix m0 = build_transfer_matrix(map, nullptr);
  // columns are survival fractions
  for (Eigen::Index j = 0; j < m0.entries.cols(); ++j) CHECK(m0.entries.col(j).real().sum() <= 1.0 + 1e-12);
  const double rho = m0.spectral_radius();
  CHECK(rho > 0.0);
  CHECK(rho < 1.0);
  const TransferMatrix m1 = build_transfer_matrix(map, [](int, const Eigen::Vector2d&) { return 0.25; });
  CHECK(std::abs(m1.spectral_radius() - std::exp(0.25) * rho) < 1e-10);
  // deterministic for a fixed seed
  const SampledReturnMap again = sample_return_map(charts, sys, 8, 40, SectionOptions{}, 5);
  CHECK(again.transitions.size() == map.transitions.size());
}

TEST_CASE("sampled 3-disk map: expansion and escape-rate pressure") {
  const auto sys = testing::three_disk();
  const auto samples = testing::three_disk_trapped();
  const auto charts = build_sections(sys, testing::kDiskEnergy, samples, SectionOptions{});
  // symmetric 2-cycle between disks 1 and 2: per-bounce multiplier (R/a - 1) + sqrt((R/a - 1)^2 - 1), R/a = 6
  const auto& c1 = charts[1];
  const double y = c1.radius * std::remainder(0.0 - c1.reference_angle, 2 * std::numbers::pi);
  CHECK(return_log_expansion(charts, sys, {1, {y, 0.0}}, SectionOptions{}) ==
        doctest::Approx(std::log(5.0 + std::sqrt(24.0))).epsilon(1e-8));

  const SampledReturnMap map = sample_return_map(charts, sys, 8, 40, SectionOptions{}, 5, true);
  int finite = 0;
  for (const auto& t : map.transitions) finite += std::isfinite(t.log_expansion);
  CHECK(finite >= 0.95 * map.transitions.size());
  // beta = 1: the plain area push-forward, minus the escape rate
  const double s1 = flow_pressure(map, 1.0);
  CHECK(s1 < 0.0);
  CHECK(build_transfer_matrix(map, nullptr, Complex(s1, 0.0)).spectral_radius() == doctest::Approx(1.0).epsilon(1e-10));
  // decreasing in beta, positive entropy at beta = 0
  const double s_half = flow_pressure(map, 0.5), s0 = flow_pressure(map, 0.0);
  CHECK(s_half > s1);
  CHECK(s0 > s_half);
  CHECK(s0 > 0.0);
  CHECK(flow_pressure(map, 0.5) == s_half);
  const SampledReturnMap bare = sample_return_map(charts, sys, 4, 4, SectionOptions{}, 5);
  CHECK_THROWS_AS(flow_pressure(bare, 0.5), ParameterError);
}

