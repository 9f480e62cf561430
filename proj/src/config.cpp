#include "qmono/config.hpp"

#include "qmono/io.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace qmono {

namespace {

std::string join(const std::vector<std::string>& lines) {
  std::string s = "invalid configuration:";
  for (const auto& l : lines) s += "\n  " + l;
  return s;
}

// Scalars may be written as fractions, e.g. h: 1/64.
double parse_double(const YAML::Node& n) {
  const std::string s = n.as<std::string>();
  const auto slash = s.find('/');
  std::size_t used = 0;
  if (slash == std::string::npos) {
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  }
  const double num = std::stod(s.substr(0, slash), &used);
  if (used != slash) throw std::invalid_argument(s);
  const std::string rest = s.substr(slash + 1);
  const double den = std::stod(rest, &used);
  if (used != rest.size()) throw std::invalid_argument(s);
  return num / den;
}

template <typename T>
T convert(const YAML::Node& n);

template <>
double convert<double>(const YAML::Node& n) {
  if (!n.IsScalar()) throw std::invalid_argument("not a scalar");
  return parse_double(n);
}
template <>
int convert<int>(const YAML::Node& n) {
  return n.as<int>();
}
template <>
std::uint64_t convert<std::uint64_t>(const YAML::Node& n) {
  return n.as<std::uint64_t>();
}
template <>
bool convert<bool>(const YAML::Node& n) {
  return n.as<bool>();
}
template <>
std::string convert<std::string>(const YAML::Node& n) {
  if (!n.IsScalar()) throw std::invalid_argument("not a scalar");
  return n.as<std::string>();
}
template <>
std::vector<double> convert<std::vector<double>>(const YAML::Node& n) {
  if (!n.IsSequence()) throw std::invalid_argument("not a list");
  std::vector<double> v;
  for (const auto& e : n) v.push_back(convert<double>(e));
  return v;
}
template <>
std::vector<int> convert<std::vector<int>>(const YAML::Node& n) {
  if (!n.IsSequence()) throw std::invalid_argument("not a list");
  std::vector<int> v;
  for (const auto& e : n) v.push_back(e.as<int>());
  return v;
}
template <>
Eigen::Vector2d convert<Eigen::Vector2d>(const YAML::Node& n) {
  const auto v = convert<std::vector<double>>(n);
  if (v.size() != 2) throw std::invalid_argument("need two numbers");
  return {v[0], v[1]};
}
template <>
Interval convert<Interval>(const YAML::Node& n) {
  const auto v = convert<Eigen::Vector2d>(n);
  return {v[0], v[1]};
}

template <typename T>
const char* type_name() {
  if constexpr (std::is_same_v<T, double>) return "a number";
  else if constexpr (std::is_same_v<T, int>) return "an integer";
  else if constexpr (std::is_same_v<T, std::uint64_t>) return "a non-negative integer";
  else if constexpr (std::is_same_v<T, bool>) return "true or false";
  else if constexpr (std::is_same_v<T, std::string>) return "a string";
  else if constexpr (std::is_same_v<T, std::vector<double>>) return "a list of numbers";
  else if constexpr (std::is_same_v<T, std::vector<int>>) return "a list of integers";
  else return "a pair [a, b]";
}

// Reads one mapping, recording type errors and unknown keys as field-level issues.
class Reader {
public:
  Reader(YAML::Node node, std::string path, std::vector<std::string>& issues)
      : node_(std::move(node)), path_(std::move(path)), issues_(issues) {
    if (node_ && !node_.IsNull() && !node_.IsMap()) {
      issues_.push_back(path_ + ": expected a mapping");
      node_ = YAML::Node();
    }
  }

  bool has(const std::string& key) const { return node_ && node_.IsMap() && node_[key]; }
  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  template <typename T>
  bool get(const std::string& key, T& value) {
    seen_.insert(key);
    if (!has(key)) return false;
    try {
      value = convert<T>(node_[key]);
      return true;
    } catch (const std::exception&) {
      issues_.push_back(field(key) + ": expected " + type_name<T>());
      return false;
    }
  }

  Reader child(const std::string& key) {
    seen_.insert(key);
    return {has(key) ? node_[key] : YAML::Node(), field(key), issues_};
  }

  YAML::Node raw(const std::string& key) {
    seen_.insert(key);
    return has(key) ? node_[key] : YAML::Node();
  }

  void finish() {
    if (!node_ || !node_.IsMap()) return;
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!seen_.count(key)) issues_.push_back(field(key) + ": unknown key");
    }
  }

private:
  YAML::Node node_;
  std::string path_;
  std::vector<std::string>& issues_;
  std::set<std::string> seen_;
};

void read_system(Reader r, SystemConfig& s, std::vector<std::string>& issues) {
  std::string kind = "billiard";
  r.get("kind", kind);
  if (kind == "billiard") s.kind = SystemConfig::Kind::Billiard;
  else if (kind == "smooth") s.kind = SystemConfig::Kind::Smooth;
  else if (kind == "free") s.kind = SystemConfig::Kind::Free;
  else if (kind == "model") s.kind = SystemConfig::Kind::Model;
  else issues.push_back(r.field("kind") + ": expected billiard, smooth, free or model, got '" + kind + "'");

  const auto disks = r.raw("disks");
  if (r.has("disks") && !disks.IsSequence()) issues.push_back(r.field("disks") + ": expected a list");
  if (r.has("disks") && disks.IsSequence()) {
    for (std::size_t k = 0; k < disks.size(); ++k) {
      Reader d(disks[k], r.field("disks") + "[" + std::to_string(k) + "]", issues);
      Disk disk{Eigen::Vector2d::Zero(), 1.0};
      if (!d.get("center", disk.center)) issues.push_back(d.field("center") + ": required");
      if (!d.get("radius", disk.radius)) issues.push_back(d.field("radius") + ": required");
      d.finish();
      s.disks.push_back(disk);
    }
  }
  const auto bumps = r.raw("bumps");
  if (r.has("bumps") && !bumps.IsSequence()) issues.push_back(r.field("bumps") + ": expected a list");
  if (r.has("bumps") && bumps.IsSequence()) {
    for (std::size_t k = 0; k < bumps.size(); ++k) {
      Reader b(bumps[k], r.field("bumps") + "[" + std::to_string(k) + "]", issues);
      GaussianBump bump{Eigen::Vector2d::Zero(), 1.0, 1.0};
      if (!b.get("center", bump.center)) issues.push_back(b.field("center") + ": required");
      if (!b.get("amplitude", bump.amplitude)) issues.push_back(b.field("amplitude") + ": required");
      if (!b.get("width", bump.width)) issues.push_back(b.field("width") + ": required");
      b.finish();
      s.bumps.push_back(bump);
    }
  }
  r.get("support_radius", s.support_radius);
  r.get("cutoff_width", s.cutoff_width);
  r.get("model", s.model);
  r.finish();
}

void read_sampling(Reader r, SamplingConfig& s) {
  auto& o = s.options;
  r.get("budget", s.budget);
  r.get("t_max", o.t_max);
  r.get("escape_radius", o.escape_radius);
  r.get("tol", o.tol);
  r.get("sample_spacing", o.sample_spacing);
  r.get("symmetrize", o.symmetrize);
  r.get("max_families", o.max_families);
  r.get("dimension_scales", s.dimension_scales);
  r.finish();
}

void read_section(Reader r, PartitionOptions& p) {
  auto& o = p.section;
  r.get("max_diameter", o.max_diameter);
  r.get("boundary_clearance", o.boundary_clearance);
  r.get("tau_max", o.tau_max);
  r.get("min_transversality", o.min_transversality);
  r.get("ellipse_padding", o.ellipse_padding);
  r.get("chart_margin", o.chart_margin);
  r.get("tol", o.tol);
  r.get("escape_radius", o.escape_radius);
  r.get("fit_degree", p.fit.degree);
  r.get("fit_twist_floor", p.fit.twist_floor);
  r.get("sample_budget", p.sample_budget);
  r.get("separation_floor", p.separation_floor);
  r.get("fit_margin", p.fit_margin);
  r.finish();
}

void read_classical(Reader r, ClassicalConfig& c, std::vector<std::string>& issues) {
  std::string kind = "collocation";
  r.get("discretization", kind);
  if (kind == "collocation") c.discretization.kind = Discretization::Kind::Collocation;
  else if (kind == "ulam") c.discretization.kind = Discretization::Kind::Ulam;
  else issues.push_back(r.field("discretization") + ": expected collocation or ulam, got '" + kind + "'");
  r.get("resolution", c.discretization.resolution);
  r.get("weight_constant", c.weight_constant);
  r.get("weight_expansion", c.weight_expansion);
  r.get("roof", c.roof);
  r.get("orbit_period", c.orbit_period);
  r.get("ulam_cells", c.ulam_cells);
  r.get("ulam_samples", c.ulam_samples);
  if (r.has("ruelle")) {
    Reader q = r.child("ruelle");
    Interval re{-1.0, 1.0}, im{-1.0, 1.0};
    if (!q.get("re", re)) issues.push_back(q.field("re") + ": required");
    if (!q.get("im", im)) issues.push_back(q.field("im") + ": required");
    q.finish();
    c.ruelle = ZeroDomain::rectangle(re.lo, re.hi, im.lo, im.hi);
  } else {
    r.child("ruelle");
  }
  r.finish();
}

void read_quantum(Reader r, QuantumConfig& q) {
  auto& o = q.options;
  r.get("h", q.h);
  r.get("oversampling", o.oversampling);
  r.get("twist_floor", o.twist_floor);
  r.get("min_semi_axis_y", o.min_semi_axis_y);
  r.get("min_semi_axis_eta", o.min_semi_axis_eta);
  r.get("grid_scale", o.grid_scale);
  r.finish();
}

void read_resonances(Reader r, ResonanceConfig& c) {
  auto& o = c.finder;
  r.get("C", c.C);
  Eigen::Vector2d center(c.center.real(), c.center.imag());
  if (r.get("center", center)) c.center = {center[0], center[1]};
  r.get("coarse_grid", o.coarse_grid);
  r.get("max_depth", o.max_depth);
  if (r.has("zero_tol")) {
    std::string s;
    r.get("zero_tol", s);
    if (s != "auto") r.get("zero_tol", o.zero_tol);
  }
  r.get("relative_zero_tol", o.relative_zero_tol);
  r.get("cluster_size", o.cluster_size);
  r.get("boundary_retries", o.boundary_retries);
  r.finish();
}

void read_weyl(Reader r, WeylConfig& w) {
  r.get("baker_sizes", w.baker_sizes);
  r.get("threshold", w.threshold);
  r.finish();
}

void positive(std::vector<std::string>& issues, const std::string& field, double v) {
  if (!(v > 0.0) || !std::isfinite(v)) issues.push_back(field + ": must be > 0 (got " + io::format_double(v) + ")");
}

void at_least(std::vector<std::string>& issues, const std::string& field, double v, double lo) {
  if (!(v >= lo)) issues.push_back(field + ": must be >= " + io::format_double(lo) + " (got " + io::format_double(v) + ")");
}

nlohmann::ordered_json vec(const Eigen::Vector2d& v) { return {v[0], v[1]}; }

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems) : ParameterError(join(problems)), issues(std::move(problems)) {}

ScatteringSystem SystemConfig::scattering() const {
  switch (kind) {
    case Kind::Billiard: return ScatteringSystem::billiard(disks);
    case Kind::Smooth: return ScatteringSystem::smooth(bumps, support_radius, cutoff_width);
    case Kind::Free: return ScatteringSystem::free_motion(support_radius);
    case Kind::Model: break;
  }
  throw ParameterError("system.kind: model systems have no flow");
}

SymbolicModel SystemConfig::symbolic() const {
  if (model == "doubling") return SymbolicModel::doubling();
  if (model == "golden_mean") return SymbolicModel::golden_mean();
  if (model == "ternary_cut") return SymbolicModel::ternary_cut();
  if (model == "single_fixed_point") return SymbolicModel::single_fixed_point();
  throw ConfigError({"system.model: unknown model '" + model + "'"});
}

RunConfig parse_config(const std::string& yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ConfigError({std::string("yaml: ") + e.what()});
  }
  std::vector<std::string> issues;
  RunConfig c;
  Reader r(root, "", issues);
  if (!r.has("system")) issues.push_back("system: required");
  read_system(r.child("system"), c.system, issues);
  r.get("energy", c.energy);
  r.get("seed", c.seed);
  r.get("output", c.output);
  read_sampling(r.child("sampling"), c.sampling);
  read_section(r.child("section"), c.section);
  read_classical(r.child("classical"), c.classical, issues);
  read_quantum(r.child("quantum"), c.quantum);
  read_resonances(r.child("resonances"), c.resonances);
  read_weyl(r.child("weyl"), c.weyl);
  r.finish();
  c.sampling.options.seed = c.seed;
  for (auto& p : problems(c)) issues.push_back(std::move(p));
  if (!issues.empty()) throw ConfigError(issues);
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"config: cannot read " + path.string()});
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::vector<std::string> problems(const RunConfig& c) {
  std::vector<std::string> v;
  const auto& s = c.system;
  if (s.kind == SystemConfig::Kind::Billiard) {
    if (s.disks.empty()) v.push_back("system.disks: a billiard needs at least one disk");
    for (std::size_t k = 0; k < s.disks.size(); ++k)
      positive(v, "system.disks[" + std::to_string(k) + "].radius", s.disks[k].radius);
  }
  if (s.kind == SystemConfig::Kind::Smooth) {
    if (s.bumps.empty()) v.push_back("system.bumps: a smooth system needs at least one bump");
    for (std::size_t k = 0; k < s.bumps.size(); ++k)
      positive(v, "system.bumps[" + std::to_string(k) + "].width", s.bumps[k].width);
  }
  if (s.kind == SystemConfig::Kind::Smooth || s.kind == SystemConfig::Kind::Free) {
    positive(v, "system.support_radius", s.support_radius);
    positive(v, "system.cutoff_width", s.cutoff_width);
  }
  if (s.kind == SystemConfig::Kind::Model) {
    static const std::set<std::string> models{"doubling", "golden_mean", "ternary_cut", "single_fixed_point"};
    if (!models.count(s.model)) v.push_back("system.model: unknown model '" + s.model + "'");
  }
  if (s.has_flow()) positive(v, "energy", c.energy);

  const auto& so = c.sampling.options;
  at_least(v, "sampling.budget", c.sampling.budget, 1);
  positive(v, "sampling.t_max", so.t_max);
  positive(v, "sampling.tol", so.tol);
  positive(v, "sampling.sample_spacing", so.sample_spacing);
  at_least(v, "sampling.max_families", so.max_families, 1);
  if (s.kind != SystemConfig::Kind::Billiard && s.has_flow() && !(so.escape_radius > s.support_radius))
    v.push_back("sampling.escape_radius: must exceed system.support_radius");
  positive(v, "sampling.escape_radius", so.escape_radius);
  for (double e : c.sampling.dimension_scales) positive(v, "sampling.dimension_scales", e);

  const auto& se = c.section.section;
  positive(v, "section.max_diameter", se.max_diameter);
  positive(v, "section.boundary_clearance", se.boundary_clearance);
  positive(v, "section.tau_max", se.tau_max);
  positive(v, "section.min_transversality", se.min_transversality);
  at_least(v, "section.ellipse_padding", se.ellipse_padding, 0.0);
  at_least(v, "section.chart_margin", se.chart_margin, 0.0);
  positive(v, "section.tol", se.tol);
  positive(v, "section.escape_radius", se.escape_radius);
  at_least(v, "section.fit_degree", c.section.fit.degree, 1);
  positive(v, "section.fit_twist_floor", c.section.fit.twist_floor);
  at_least(v, "section.sample_budget", c.section.sample_budget, 1);
  positive(v, "section.separation_floor", c.section.separation_floor);
  at_least(v, "section.fit_margin", c.section.fit_margin, 0.0);

  const auto& cl = c.classical;
  at_least(v, "classical.resolution", cl.discretization.resolution, 8);
  at_least(v, "classical.orbit_period", cl.orbit_period, 1);
  at_least(v, "classical.ulam_cells", cl.ulam_cells, 1);
  at_least(v, "classical.ulam_samples", cl.ulam_samples, 1);
  for (double t : cl.roof) positive(v, "classical.roof", t);
  if (cl.ruelle && !(cl.ruelle->re_lo < cl.ruelle->re_hi && cl.ruelle->im_lo < cl.ruelle->im_hi))
    v.push_back("classical.ruelle: need re[0] < re[1] and im[0] < im[1]");

  const auto& q = c.quantum;
  if (q.h.empty()) v.push_back("quantum.h: needs at least one value");
  for (std::size_t k = 0; k < q.h.size(); ++k) {
    positive(v, "quantum.h[" + std::to_string(k) + "]", q.h[k]);
    if (k > 0 && !(q.h[k] < q.h[k - 1])) v.push_back("quantum.h: must be strictly decreasing");
  }
  positive(v, "quantum.oversampling", q.options.oversampling);
  positive(v, "quantum.twist_floor", q.options.twist_floor);
  at_least(v, "quantum.min_semi_axis_y", q.options.min_semi_axis_y, 0.0);
  at_least(v, "quantum.min_semi_axis_eta", q.options.min_semi_axis_eta, 0.0);
  positive(v, "quantum.grid_scale", q.options.grid_scale);

  const auto& r = c.resonances;
  positive(v, "resonances.C", r.C);
  at_least(v, "resonances.coarse_grid", r.finder.coarse_grid, 4);
  at_least(v, "resonances.max_depth", r.finder.max_depth, 1);
  if (r.finder.zero_tol != 0.0) positive(v, "resonances.zero_tol", r.finder.zero_tol);
  positive(v, "resonances.relative_zero_tol", r.finder.relative_zero_tol);
  positive(v, "resonances.cluster_size", r.finder.cluster_size);
  at_least(v, "resonances.boundary_retries", r.finder.boundary_retries, 0);

  for (std::size_t k = 0; k < c.weyl.baker_sizes.size(); ++k) {
    const int n = c.weyl.baker_sizes[k];
    if (n < 3 || n % 3 != 0) v.push_back("weyl.baker_sizes[" + std::to_string(k) + "]: must be a positive multiple of 3");
    if (k > 0 && !(n > c.weyl.baker_sizes[k - 1])) v.push_back("weyl.baker_sizes: must be strictly increasing");
  }
  if (!c.weyl.baker_sizes.empty() && c.weyl.baker_sizes.size() < 4)
    v.push_back("weyl.baker_sizes: a density fit needs at least four sizes");
  positive(v, "weyl.threshold", c.weyl.threshold);
  return v;
}

void validate(const RunConfig& c) {
  if (auto v = problems(c); !v.empty()) throw ConfigError(std::move(v));
}

nlohmann::ordered_json RunConfig::resolved() const {
  using json = nlohmann::ordered_json;
  static const char* kinds[] = {"billiard", "smooth", "free", "model"};
  json sys = {{"kind", kinds[static_cast<int>(system.kind)]}};
  json disks = json::array(), bumps = json::array();
  for (const auto& d : system.disks) disks.push_back({{"center", vec(d.center)}, {"radius", d.radius}});
  for (const auto& b : system.bumps)
    bumps.push_back({{"center", vec(b.center)}, {"amplitude", b.amplitude}, {"width", b.width}});
  sys["disks"] = disks;
  sys["bumps"] = bumps;
  sys["support_radius"] = system.support_radius;
  sys["cutoff_width"] = system.cutoff_width;
  sys["model"] = system.model;

  const auto& so = sampling.options;
  const auto& se = section.section;
  const auto& cl = classical;
  const auto& qo = quantum.options;
  const auto& rf = resonances.finder;
  json ruelle = nullptr;
  if (cl.ruelle) ruelle = {{"re", {cl.ruelle->re_lo, cl.ruelle->re_hi}}, {"im", {cl.ruelle->im_lo, cl.ruelle->im_hi}}};
  json zero_tol = "auto";
  if (rf.zero_tol > 0.0) zero_tol = rf.zero_tol;
  return {{"system", sys},
          {"energy", energy},
          {"seed", seed},
          {"output", output},
          {"sampling",
           {{"budget", sampling.budget},
            {"t_max", so.t_max},
            {"escape_radius", so.escape_radius},
            {"tol", so.tol},
            {"sample_spacing", so.sample_spacing},
            {"symmetrize", so.symmetrize},
            {"max_families", so.max_families},
            {"dimension_scales", sampling.dimension_scales}}},
          {"section",
           {{"max_diameter", se.max_diameter},
            {"boundary_clearance", se.boundary_clearance},
            {"tau_max", se.tau_max},
            {"min_transversality", se.min_transversality},
            {"ellipse_padding", se.ellipse_padding},
            {"chart_margin", se.chart_margin},
            {"tol", se.tol},
            {"escape_radius", se.escape_radius},
            {"fit_degree", section.fit.degree},
            {"fit_twist_floor", section.fit.twist_floor},
            {"sample_budget", section.sample_budget},
            {"separation_floor", section.separation_floor},
            {"fit_margin", section.fit_margin}}},
          {"classical",
           {{"discretization", cl.discretization.kind == Discretization::Kind::Ulam ? "ulam" : "collocation"},
            {"resolution", cl.discretization.resolution},
            {"weight_constant", cl.weight_constant},
            {"weight_expansion", cl.weight_expansion},
            {"roof", cl.roof},
            {"orbit_period", cl.orbit_period},
            {"ulam_cells", cl.ulam_cells},
            {"ulam_samples", cl.ulam_samples},
            {"ruelle", ruelle}}},
          {"quantum",
           {{"h", quantum.h},
            {"oversampling", qo.oversampling},
            {"twist_floor", qo.twist_floor},
            {"min_semi_axis_y", qo.min_semi_axis_y},
            {"min_semi_axis_eta", qo.min_semi_axis_eta},
            {"grid_scale", qo.grid_scale}}},
          {"resonances",
           {{"C", resonances.C},
            {"center", {resonances.center.real(), resonances.center.imag()}},
            {"coarse_grid", rf.coarse_grid},
            {"max_depth", rf.max_depth},
            {"zero_tol", zero_tol},
            {"relative_zero_tol", rf.relative_zero_tol},
            {"cluster_size", rf.cluster_size},
            {"boundary_retries", rf.boundary_retries}}},
          {"weyl", {{"baker_sizes", weyl.baker_sizes}, {"threshold", weyl.threshold}}}};
}

std::string RunConfig::hash() const { return io::sha256_hex(resolved().dump()); }

}  // namespace qmono
