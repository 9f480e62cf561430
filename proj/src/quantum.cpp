#include "qmono/quantum.hpp"

#include "qmono/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace qmono {

namespace {

constexpr double kPi = std::numbers::pi;

// max |dS/dy| and |dS/dy'| over a tensor sample of the rectangle
std::pair<double, double> slope_bounds(const ChebyshevSeries2D& s) {
  const Rectangle& d = s.domain();
  const auto j = s.on_grid(Eigen::VectorXd::LinSpaced(33, d.first.lo, d.first.hi),
                           Eigen::VectorXd::LinSpaced(33, d.second.lo, d.second.hi));
  return {j.d_first.cwiseAbs().maxCoeff(), j.d_second.cwiseAbs().maxCoeff()};
}

int required_nodes(const Interval& axis, double slope, double eta_max, double h, double oversampling) {
  return nyquist_nodes(axis.width() * (slope + eta_max) / h, oversampling);
}

Eigen::MatrixXcd raw_hermite(const Ellipse& e, double h, int rank, const Eigen::VectorXd& y) {
  const double sigma = std::sqrt(h * e.a / e.b);
  const Eigen::VectorXd u = (y.array() - e.y0) / sigma;
  const Eigen::MatrixXd psi = hermite_functions(u, rank) / std::sqrt(sigma);
  Eigen::MatrixXcd out(y.size(), rank);
  for (Eigen::Index m = 0; m < y.size(); ++m) {
    const Complex phase = std::exp(Complex(0.0, e.eta0 * (y[m] - e.y0) / h));
    out.row(m) = psi.row(m).cast<Complex>() * phase;
  }
  return out;
}

}  // namespace

int nyquist_nodes(double phase_variation, double oversampling) {
  if (!(oversampling >= 1.0)) throw ParameterError("oversampling must be at least 1");
  return static_cast<int>(std::ceil(oversampling * phase_variation / (2.0 * kPi))) + 16;
}

BlockGrid block_grid(const ChebyshevSeries2D& action, double h, double oversampling, double target_eta_max,
                     double source_eta_max) {
  if (!(h > 0.0)) throw ParameterError("h must be positive");
  const auto [sy, syp] = slope_bounds(action);
  const Rectangle& d = action.domain();
  return {gauss_legendre(required_nodes(d.first, sy, target_eta_max, h, oversampling), d.first),
          gauss_legendre(required_nodes(d.second, syp, source_eta_max, h, oversampling), d.second)};
}

QuantumBlock quantize_block(const ChebyshevSeries2D& action, const ChebyshevSeries2D& return_time, Complex z, double h,
                            const BlockGrid& grid, double oversampling, double twist_floor, double source_eta_max,
                            double target_eta_max) {
  if (!(h > 0.0)) throw ParameterError("h must be positive");
  const auto [sy, syp] = slope_bounds(action);
  const Rectangle& d = action.domain();
  const int need_y = required_nodes(d.first, sy, target_eta_max, h, oversampling);
  const int need_yp = required_nodes(d.second, syp, source_eta_max, h, oversampling);
  if (grid.target.nodes.size() < need_y || grid.source.nodes.size() < need_yp) {
    std::ostringstream msg;
    msg << "kernel grid " << grid.target.nodes.size() << " x " << grid.source.nodes.size()
        << " undersamples the phase; need at least " << need_y << " x " << need_yp << " nodes";
    throw AliasingError(msg.str(), std::max<long>(need_y, need_yp));
  }
  QuantumBlock out;
  out.h = h;
  out.z = z;
  out.grid = grid;
  const double norm = 1.0 / std::sqrt(2.0 * kPi * h);
  const auto s = action.on_grid(grid.target.nodes, grid.source.nodes);
  const Eigen::MatrixXd tau = return_time.on_grid(grid.target.nodes, grid.source.nodes).value;
  Eigen::Index m, n;
  const double twist = s.d_mixed.cwiseAbs().minCoeff(&m, &n);
  if (twist < twist_floor) {
    std::ostringstream msg;
    msg << "twist |S_yy'| = " << twist << " below " << twist_floor << " at (" << grid.target.nodes[m] << ", "
        << grid.source.nodes[n] << ")";
    throw TwistError(msg.str());
  }
  const Complex iz = Complex(0.0, 1.0) * z;
  out.kernel = ((Complex(0.0, 1.0) * s.value.cast<Complex>() + iz * tau.cast<Complex>()) / h).array().exp() *
               (norm * s.d_mixed.cwiseAbs().cwiseSqrt()).cast<Complex>().array();
  out.kernel *= grid.source.weights.asDiagonal();
  return out;
}

Eigen::MatrixXd hermite_functions(const Eigen::VectorXd& u, int n) {
  Eigen::MatrixXd out(u.size(), std::max(n, 0));
  if (n <= 0) return out;
  const double c0 = std::pow(kPi, -0.25);
  for (Eigen::Index m = 0; m < u.size(); ++m) {
    double prev = 0.0, cur = c0 * std::exp(-0.5 * u[m] * u[m]);
    out(m, 0) = cur;
    for (int k = 0; k + 1 < n; ++k) {
      const double next = std::sqrt(2.0 / (k + 1)) * u[m] * cur - std::sqrt(double(k) / (k + 1)) * prev;
      prev = cur;
      cur = next;
      out(m, k + 1) = cur;
    }
  }
  return out;
}

int projector_rank(const Ellipse& e, double h) {
  if (!(h > 0.0) || !(e.a > 0.0) || !(e.b > 0.0)) throw ParameterError("projector needs h, a, b > 0");
  // level k has q^w eigenvalue (2k + 1) h/(ab) - 1; levels at 0 (up to rounding) count
  const double x = e.a * e.b / (2.0 * h);
  return static_cast<int>(std::floor(x + 0.5 + 1e-12 * x));
}

SectionProjector build_projector(const SectionChart& chart, const Ellipse& e, double h, double oversampling) {
  const int rank = projector_rank(e, h);
  if (rank == 0) {
    std::ostringstream msg;
    msg << "chart " << chart.index << ": ab/(2h) = " << e.a * e.b / (2.0 * h) << " gives rank 0; decrease h";
    throw ResolutionError(msg.str());
  }
  const Rectangle& dom = chart.domain;
  if (e.y0 - e.a < dom.first.lo || e.y0 + e.a > dom.first.hi || e.eta0 - e.b < dom.second.lo || e.eta0 + e.b > dom.second.hi)
    throw ParameterError("chart " + std::to_string(chart.index) + ": projector ellipse leaves the chart domain");
  SectionProjector p;
  p.chart = chart.index;
  p.h = h;
  p.ellipse = e;
  p.rank = rank;
  // momentum bound doubled: the Gaussian tails need resolving as well as the oscillation
  p.grid = gauss_legendre(nyquist_nodes(dom.first.width() * (std::abs(e.eta0) + 2.0 * e.b) / h, oversampling), dom.first);
  Eigen::MatrixXcd raw = raw_hermite(e, h, rank, p.grid.nodes);
  raw = p.grid.weights.cwiseSqrt().asDiagonal() * raw;
  // Loewdin: S^{-1/2} of the grid Gram matrix
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(raw.adjoint() * raw);
  if (es.eigenvalues().minCoeff() < 1e-8) throw ResolutionError("projector basis is degenerate on the chart grid");
  p.lowdin = es.eigenvectors() * es.eigenvalues().cwiseInverse().cwiseSqrt().asDiagonal() * es.eigenvectors().adjoint();
  p.basis = raw * p.lowdin;
  return p;
}

Eigen::MatrixXcd SectionProjector::evaluate(const Eigen::VectorXd& y) const { return raw_hermite(ellipse, h, rank, y) * lowdin; }

int QuantumTransferOperator::dimension() const {
  int d = 0;
  for (int r : ranks) d += r;
  return d;
}

Eigen::MatrixXcd QuantumTransferOperator::dense() const {
  std::vector<int> off(ranks.size() + 1, 0);
  for (std::size_t k = 0; k < ranks.size(); ++k) off[k + 1] = off[k] + ranks[k];
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(off.back(), off.back());
  for (const auto& [key, b] : blocks) m.block(off[key.first], off[key.second], b.rows(), b.cols()) = b;
  return m;
}

QuantumTransferOperator assemble_M(const std::vector<QuantumBlock>& blocks, const std::vector<SectionProjector>& projectors,
                                   Complex z) {
  QuantumTransferOperator out;
  out.z = z;
  out.h = projectors.empty() ? 0.0 : projectors.front().h;
  for (std::size_t k = 0; k < projectors.size(); ++k) {
    if (projectors[k].chart != static_cast<int>(k)) throw ConsistencyError("projectors must be ordered by chart index");
    out.ranks.push_back(projectors[k].rank);
  }
  const int nc = static_cast<int>(projectors.size());
  for (const QuantumBlock& b : blocks) {
    if (b.target < 0 || b.target >= nc || b.source < 0 || b.source >= nc)
      throw ConsistencyError("block (" + std::to_string(b.target) + ", " + std::to_string(b.source) + ") has no projector");
    if (b.kernel.rows() != b.grid.target.nodes.size() || b.kernel.cols() != b.grid.source.nodes.size())
      throw ConsistencyError("kernel does not match its grid");
    if (b.z != z) throw ConsistencyError("block quantized at a different z");
    if (b.h != out.h) throw ConsistencyError("block quantized at a different h");
    const Eigen::MatrixXcd uj = projectors[b.target].evaluate(b.grid.target.nodes);
    const Eigen::MatrixXcd ui = projectors[b.source].evaluate(b.grid.source.nodes);
    out.blocks[{b.target, b.source}] = uj.adjoint() * b.grid.target.weights.asDiagonal() * b.kernel * ui;
  }
  return out;
}

Ellipse projector_ellipse(const SectionChart& chart, const QuantumOptions& options) {
  Ellipse e = chart.trapped_neighborhood;
  const Rectangle& d = chart.domain;
  const double room_y = std::min(e.y0 - d.first.lo, d.first.hi - e.y0);
  const double room_eta = std::min(e.eta0 - d.second.lo, d.second.hi - e.eta0);
  e.a = std::min(std::max(e.a, options.min_semi_axis_y), room_y);
  e.b = std::min(std::max(e.b, options.min_semi_axis_eta), room_eta);
  return e;
}

QuantumMap::QuantumMap(const ReturnMapData& data, const QuantumOptions& options) : options_(options) {
  if (!(options.h > 0.0)) throw ParameterError("h must be positive");
  if (!(options.grid_scale >= 1.0)) throw ParameterError("grid_scale must be at least 1");
  for (const SectionChart& c : data.charts) projectors_.push_back(build_projector(c, projector_ellipse(c, options), options.h, options.oversampling));
  offsets_.push_back(0);
  for (const auto& p : projectors_) offsets_.push_back(offsets_.back() + p.rank);
  dimension_ = offsets_.back();
  for (const auto& [key, block] : data.blocks) {
    Piece piece{key.first, key.second, block.fit.action, block.fit.return_time, {}, {}, {}, {}, {}};
    const Ellipse& ej = projectors_[key.first].ellipse;
    const Ellipse& ei = projectors_[key.second].ellipse;
    const double eta_j = std::abs(ej.eta0) + ej.b, eta_i = std::abs(ei.eta0) + ei.b;
    BlockGrid g = block_grid(piece.action, options.h, options.oversampling, eta_j, eta_i);
    if (options.grid_scale > 1.0) {
      const Rectangle& d = piece.action.domain();
      g.target = gauss_legendre(static_cast<int>(std::ceil(g.target.nodes.size() * options.grid_scale)), d.first);
      g.source = gauss_legendre(static_cast<int>(std::ceil(g.source.nodes.size() * options.grid_scale)), d.second);
    }
    piece.grid = g;
    piece.k0 = quantize_block(piece.action, piece.return_time, 0.0, options.h, g, options.oversampling, options.twist_floor,
                              eta_i, eta_j)
                   .kernel;
    piece.tau = piece.return_time.on_grid(g.target.nodes, g.source.nodes).value;
    piece.left = projectors_[key.first].evaluate(g.target.nodes).adjoint() * g.target.weights.asDiagonal();
    piece.right = projectors_[key.second].evaluate(g.source.nodes);
    pieces_.push_back(std::move(piece));
  }
}

Eigen::MatrixXcd QuantumMap::operator()(Complex z) const {
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(dimension_, dimension_);
  const Complex iz = Complex(0.0, 1.0) * z / options_.h;
  for (const Piece& p : pieces_) {
    const Eigen::MatrixXcd k = p.k0.array() * (iz * p.tau.cast<Complex>().array()).exp();
    m.block(offsets_[p.target], offsets_[p.source], p.left.rows(), p.right.cols()) = p.left * k * p.right;
  }
  return m;
}

std::vector<QuantumBlock> QuantumMap::blocks(Complex z) const {
  std::vector<QuantumBlock> out;
  for (const Piece& p : pieces_) {
    const Ellipse& ej = projectors_[p.target].ellipse;
    const Ellipse& ei = projectors_[p.source].ellipse;
    QuantumBlock b = quantize_block(p.action, p.return_time, z, options_.h, p.grid, options_.oversampling,
                                    options_.twist_floor, std::abs(ei.eta0) + ei.b, std::abs(ej.eta0) + ej.b);
    b.target = p.target;
    b.source = p.source;
    out.push_back(std::move(b));
  }
  return out;
}

QuantumTransferOperator QuantumMap::assemble(Complex z) const { return assemble_M(blocks(z), projectors_, z); }

Eigen::MatrixXcd open_baker(int n, bool open_middle) {
  if (n < 3 || n % 3 != 0) throw ParameterError("baker dimension must be a positive multiple of 3, got " + std::to_string(n));
  auto dft = [](int m) {
    Eigen::MatrixXcd g(m, m);
    for (int k = 0; k < m; ++k)
      for (int l = 0; l < m; ++l) {
        // reduce (k + 1/2)(l + 1/2) mod m before the exponential to keep the phase exact
        const double num = std::fmod((2.0 * k + 1.0) * (2.0 * l + 1.0), 4.0 * m);
        g(k, l) = std::exp(Complex(0.0, -2.0 * kPi * num / (4.0 * m))) / std::sqrt(double(m));
      }
    return g;
  };
  const int m = n / 3;
  const Eigen::MatrixXcd gm = dft(m);
  Eigen::MatrixXcd blocks = Eigen::MatrixXcd::Zero(n, n);
  for (int b = 0; b < 3; ++b)
    if (!(open_middle && b == 1)) blocks.block(b * m, b * m, m, m) = gm;
  return dft(n).adjoint() * blocks;
}

}  // namespace qmono
