#pragma once

#include "qmono/dynamics.hpp"
#include "qmono/quantum.hpp"
#include "qmono/resonances.hpp"
#include "qmono/section.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace qmono::io {

using json = nlohmann::ordered_json;

/// Shortest decimal that reads back to the same double ("%.17g"), for CSV cells.
std::string format_double(double v);

/// Header t,x1,x2,xi1,xi2; trapped samples carry t = 0.
void write_points_csv(const std::filesystem::path& path, const std::vector<PhasePoint>& points);
void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& trajectory);

json to_json(const Interval& i);
json to_json(const Rectangle& r);
json to_json(const Ellipse& e);
json to_json(const SectionChart& chart);
json to_json(const ChebyshevSeries2D& series);
json to_json(const ReturnMapData& data);
json to_json(const ZeroDomain& domain);
json to_json(const DensityFit& fit);
json to_json(const GapReport& report);
/// Metadata of a resonance set; the zeros themselves go to CSV.
json metadata(const ResonanceSet& set);

/// Header re,im,multiplicity,residual; one row per zero.
void write_resonances_csv(const std::filesystem::path& path, const ResonanceSet& set);
/// Two-space indented, trailing newline.
void write_json(const std::filesystem::path& path, const json& j);

/// Binary matrix file: "QTOM", u32 version, u64 rows, u64 cols, f64 h, f64 Re z,
/// f64 Im z, then rows*cols complex doubles (re, im) in row-major order, all little-endian.
void write_qtom(const std::filesystem::path& path, const Eigen::MatrixXcd& m, double h, Complex z);

struct QtomFile {
  Eigen::MatrixXcd matrix;
  double h = 0.0;
  Complex z;
};
QtomFile read_qtom(const std::filesystem::path& path);

/// Charts, projector ellipses and ranks accompanying a QTOM file.
json quantum_sidecar(const QuantumMap& map, Complex z);

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace qmono::io
