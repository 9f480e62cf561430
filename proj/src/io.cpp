#include "qmono/io.hpp"

#include "qmono/errors.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

namespace qmono::io {

static_assert(std::endian::native == std::endian::little, "QTOM files are written in host byte order");

namespace {

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw ParameterError("cannot write " + path.string());
  return out;
}

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json samples_json(const std::vector<ReturnSample>& samples) {
  json a = json::array();
  for (const auto& s : samples)
    a.push_back({s.departure[0], s.departure[1], s.arrival[0], s.arrival[1], s.tau, s.action});
  return a;
}

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_points_csv(const std::filesystem::path& path, const std::vector<PhasePoint>& points) {
  auto out = open_out(path);
  out << "t,x1,x2,xi1,xi2\n";
  for (const auto& p : points)
    out << "0," << format_double(p.x[0]) << ',' << format_double(p.x[1]) << ',' << format_double(p.xi[0]) << ','
        << format_double(p.xi[1]) << '\n';
}

void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& trajectory) {
  auto out = open_out(path);
  out << "t,x1,x2,xi1,xi2\n";
  for (const auto& s : trajectory.samples)
    out << format_double(s.t) << ',' << format_double(s.point.x[0]) << ',' << format_double(s.point.x[1]) << ','
        << format_double(s.point.xi[0]) << ',' << format_double(s.point.xi[1]) << '\n';
}

json to_json(const Interval& i) { return {i.lo, i.hi}; }

json to_json(const Rectangle& r) { return {{"y", to_json(r.first)}, {"eta", to_json(r.second)}}; }

json to_json(const Ellipse& e) { return {{"y0", e.y0}, {"eta0", e.eta0}, {"a", e.a}, {"b", e.b}}; }

json to_json(const SectionChart& c) {
  json j = {{"index", c.index}, {"energy", c.energy}};
  if (c.kind == SectionChart::Kind::DiskBoundary) {
    j["kind"] = "disk_boundary";
    j["disk"] = c.disk;
    j["radius"] = c.radius;
    j["reference_angle"] = c.reference_angle;
  } else {
    j["kind"] = "line";
    j["normal"] = {c.normal[0], c.normal[1]};
  }
  j["origin"] = {c.origin[0], c.origin[1]};
  j["domain"] = to_json(c.domain);
  j["trapped_neighborhood"] = to_json(c.trapped_neighborhood);
  return j;
}

json to_json(const ChebyshevSeries2D& s) {
  return {{"domain", {{"y", to_json(s.domain().first)}, {"y_prime", to_json(s.domain().second)}}},
          {"coefficients", matrix_json(s.coefficients())}};
}

json to_json(const ReturnMapData& data) {
  json charts = json::array();
  for (const auto& c : data.charts) charts.push_back(to_json(c));
  json adjacency = json::array();
  for (const auto& c : data.charts) {
    const auto out = data.outflow(c.index), in = data.inflow(c.index);
    adjacency.push_back({{"chart", c.index},
                         {"outflow", std::vector<int>(out.begin(), out.end())},
                         {"inflow", std::vector<int>(in.begin(), in.end())}});
  }
  json blocks = json::array();
  for (const auto& [key, b] : data.blocks) {
    blocks.push_back({{"target", b.target},
                      {"source", b.source},
                      {"domain", {{"y", to_json(b.domain.first)}, {"y_prime", to_json(b.domain.second)}}},
                      {"fit_residual", b.fit.residual},
                      {"tau_residual", b.fit.tau_residual},
                      {"action", to_json(b.fit.action)},
                      {"return_time", to_json(b.fit.return_time)},
                      {"sample_columns", {"y_prime", "eta_prime", "y", "eta", "tau", "action"}},
                      {"trapped", samples_json(b.trapped)},
                      {"samples", samples_json(b.samples)}});
  }
  return {{"charts", charts}, {"adjacency", adjacency}, {"blocks", blocks}};
}

json to_json(const ZeroDomain& d) {
  if (d.kind == ZeroDomain::Kind::Disk)
    return {{"kind", "disk"}, {"center", {d.center.real(), d.center.imag()}}, {"radius", d.radius}};
  return {{"kind", "rectangle"}, {"re", {d.re_lo, d.re_hi}}, {"im", {d.im_lo, d.im_hi}}};
}

json to_json(const DensityFit& f) {
  return {{"exponent", f.exponent}, {"residual", f.residual}, {"sizes", f.sizes}, {"counts", f.counts}};
}

json to_json(const GapReport& r) {
  return {{"gap", r.gap}, {"pressure_bound", r.pressure_bound}, {"difference", r.difference}};
}

json metadata(const ResonanceSet& set) {
  return {{"domain", to_json(set.domain)},
          {"h", set.h},
          {"provenance", set.provenance},
          {"zeros", set.zeros.size()},
          {"total_multiplicity", set.total_multiplicity()},
          {"winding", set.winding},
          {"subdivision_checks", set.subdivision_checks},
          {"evaluations", set.evaluations}};
}

void write_resonances_csv(const std::filesystem::path& path, const ResonanceSet& set) {
  auto out = open_out(path);
  out << "re,im,multiplicity,residual\n";
  for (const auto& z : set.zeros)
    out << format_double(z.z.real()) << ',' << format_double(z.z.imag()) << ',' << z.multiplicity << ','
        << format_double(z.residual) << '\n';
}

void write_json(const std::filesystem::path& path, const json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

void write_qtom(const std::filesystem::path& path, const Eigen::MatrixXcd& m, double h, Complex z) {
  auto out = open_out(path, std::ios::binary);
  out.write("QTOM", 4);
  put<std::uint32_t>(out, 1);
  put<std::uint64_t>(out, m.rows());
  put<std::uint64_t>(out, m.cols());
  put(out, h);
  put(out, z.real());
  put(out, z.imag());
  const Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
  out.write(reinterpret_cast<const char*>(rm.data()), static_cast<std::streamsize>(rm.size() * sizeof(Complex)));
}

QtomFile read_qtom(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  char magic[4];
  if (!in.read(magic, 4) || std::string(magic, 4) != "QTOM") throw ParameterError(path.string() + ": not a QTOM file");
  if (get<std::uint32_t>(in) != 1) throw ParameterError(path.string() + ": unsupported QTOM version");
  const auto rows = get<std::uint64_t>(in), cols = get<std::uint64_t>(in);
  QtomFile f;
  f.h = get<double>(in);
  const double re = get<double>(in), im = get<double>(in);
  f.z = {re, im};
  Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(rows, cols);
  in.read(reinterpret_cast<char*>(rm.data()), static_cast<std::streamsize>(rm.size() * sizeof(Complex)));
  if (!in) throw ParameterError(path.string() + ": truncated QTOM file");
  f.matrix = rm;
  return f;
}

json quantum_sidecar(const QuantumMap& map, Complex z) {
  json projectors = json::array();
  for (const auto& p : map.projectors())
    projectors.push_back({{"chart", p.chart}, {"ellipse", to_json(p.ellipse)}, {"rank", p.rank}, {"grid_nodes", p.grid.nodes.size()}});
  const auto& o = map.options();
  return {{"format", "QTOM v1: magic, u32 version, u64 rows, u64 cols, f64 h, f64 re z, f64 im z, "
                     "row-major complex128 little-endian"},
          {"h", map.h()},
          {"z", {z.real(), z.imag()}},
          {"dimension", map.dimension()},
          {"oversampling", o.oversampling},
          {"twist_floor", o.twist_floor},
          {"grid_scale", o.grid_scale},
          {"projectors", projectors}};
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw ConsistencyError("sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string s;
  for (unsigned int i = 0; i < len; ++i) {
    s += hex[md[i] >> 4];
    s += hex[md[i] & 15];
  }
  return s;
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParameterError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return sha256_hex(ss.str());
}

}  // namespace qmono::io
