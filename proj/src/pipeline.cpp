#include "qmono/pipeline.hpp"

#include "qmono/classical.hpp"
#include "qmono/io.hpp"
#include "qmono/quantum.hpp"
#include "qmono/resonances.hpp"
#include "qmono/section.hpp"

#include <openssl/opensslv.h>

#include <chrono>
#include <cmath>
#include <ctime>
#include <map>
#include <memory>

#ifndef QMONO_VERSION
#define QMONO_VERSION "unknown"
#endif

namespace qmono {

namespace {

using json = io::json;

const std::map<std::string, Stage> kStages{{"simulate", Stage::Simulate}, {"section", Stage::Section},
                                           {"pressure", Stage::Pressure}, {"quantize", Stage::Quantize},
                                           {"resonances", Stage::Resonances}, {"weyl", Stage::Weyl},
                                           {"all", Stage::All}};

bool applies(Stage s, SystemConfig::Kind kind) {
  using K = SystemConfig::Kind;
  switch (s) {
    case Stage::Simulate: return kind != K::Model;
    case Stage::Section:
    case Stage::Quantize:
    case Stage::Resonances: return kind == K::Billiard || kind == K::Smooth;
    case Stage::Pressure: return kind != K::Free;
    case Stage::Weyl:
    case Stage::All: return true;
  }
  return false;
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Lazily computed intermediate results shared by the stages of one run.
class Pipeline {
public:
  Pipeline(const RunConfig& c, const RunOptions& o) : c_(c), o_(o) {
    if (c_.system.has_flow()) system_ = std::make_unique<ScatteringSystem>(c_.system.scattering());
    std::filesystem::create_directories(o_.out);
  }

  void simulate() {
    const auto& pts = trapped();
    write_csv("trapped_set.csv", [&](const auto& p) { io::write_points_csv(p, pts); });
    json dim = {{"samples", pts.size()}, {"scales", c_.sampling.dimension_scales}};
    if (pts.size() >= 100 && c_.sampling.dimension_scales.size() >= 2) {
      Eigen::MatrixXd cols(4, static_cast<Eigen::Index>(pts.size()));
      for (std::size_t k = 0; k < pts.size(); ++k) cols.col(static_cast<Eigen::Index>(k)) = pts[k].stacked();
      const auto fit = box_counting_dimension(cols, c_.sampling.dimension_scales);
      dim["dimension"] = fit.dimension;
      dim["residual"] = fit.residual;
    } else {
      dim["dimension"] = nullptr;
      dim["reason"] = "box counting needs at least 100 samples and two scales";
    }
    write("dimension.json", dim);
  }

  void section() {
    json charts = json::array();
    for (const auto& ch : returns().charts) charts.push_back(io::to_json(ch));
    write("charts.json", charts);
    write("return_map.json", io::to_json(returns()));
  }

  void pressure() {
    if (c_.system.has_flow()) flow_pressures();
    else model_pressures();
  }

  void quantize() {
    for (std::size_t k = 0; k < c_.quantum.h.size(); ++k) {
      const auto& map = quantum_map(k);
      const Complex z = c_.resonances.center;
      log("quantize: h = " + io::format_double(map.h()) + ", dimension " + std::to_string(map.dimension()));
      const std::string stem = "quantum_" + std::to_string(k);
      io::write_qtom(o_.out / (stem + ".qtom"), map(z), map.h(), z);
      artifacts_.push_back(stem + ".qtom");
      write(stem + ".json", io::quantum_sidecar(map, z));
    }
  }

  void resonances() {
    const double s_half = half_jacobian_pressure();
    for (std::size_t k = 0; k < c_.quantum.h.size(); ++k) {
      const auto& set = resonance_set(k);
      const std::string stem = "resonances_" + std::to_string(k);
      write_csv(stem + ".csv", [&](const auto& p) { io::write_resonances_csv(p, set); });
      json meta = io::metadata(set);
      meta["C"] = c_.resonances.C;
      meta["dimension"] = quantum_map(k).dimension();
      if (!set.zeros.empty()) meta["gap"] = io::to_json(spectral_gap_report(set, s_half));
      else meta["gap"] = nullptr;
      write(stem + ".json", meta);
    }
  }

  void weyl() {
    const auto& sizes = c_.weyl.baker_sizes;
    json j = {{"threshold", c_.weyl.threshold}};
    if (!sizes.empty()) {
      std::vector<Eigen::MatrixXcd> open, closed;
      for (int n : sizes) {
        log("weyl: baker N = " + std::to_string(n));
        open.push_back(open_baker(n, true));
        closed.push_back(open_baker(n, false));
      }
      j["open_baker"] = io::to_json(eigenvalue_density(open, c_.weyl.threshold));
      j["closed_baker"] = io::to_json(eigenvalue_density(closed, c_.weyl.threshold));
      // two surviving branches of slope 3, weight -(1/2) log 3
      const double p = std::log(2.0) - 0.5 * std::log(3.0);
      j["open_baker_gap"] = io::to_json(spectral_gap_report(Eigen::ComplexEigenSolver<Eigen::MatrixXcd>(
                                                                open.back(), false).eigenvalues(), p));
      j["open_baker_gap"]["half_jacobian_pressure"] = p;
      j["open_baker_gap"]["N"] = sizes.back();
    }
    // resonance counts over the h list, when the system is quantized and the list is long enough
    if (applies(Stage::Resonances, c_.system.kind) && c_.quantum.h.size() >= 4) {
      std::vector<double> inv_h, counts;
      for (std::size_t k = 0; k < c_.quantum.h.size(); ++k) {
        inv_h.push_back(1.0 / c_.quantum.h[k]);
        counts.push_back(resonance_set(k).total_multiplicity());
      }
      j["resonances"] = io::to_json(resonance_density(inv_h, counts));
    } else {
      j["resonances"] = nullptr;
    }
    write("weyl.json", j);
  }

  RunResult finish(Stage stage) {
    json files = json::array();
    for (const auto& name : artifacts_) {
      const auto path = o_.out / name;
      files.push_back({{"file", name}, {"sha256", io::sha256_file(path)}, {"bytes", std::filesystem::file_size(path)}});
    }
    json versions = {{"qmono", QMONO_VERSION},
                     {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                   std::to_string(EIGEN_MINOR_VERSION)},
                     {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                     {"openssl", OPENSSL_VERSION_TEXT},
                     {"compiler", __VERSION__}};
    const json manifest = {{"subcommand", stage_name(stage)},
                           {"config", o_.config_label},
                           {"config_hash", c_.hash()},
                           {"seed", c_.seed},
                           {"versions", versions},
                           {"artifacts", files},
                           {"timestamp", utc_now()}};
    const auto path = o_.out / "manifest.json";
    io::write_json(path, manifest);
    return {artifacts_, path};
  }

private:
  void log(const std::string& s) const {
    if (o_.log) o_.log(s);
  }

  void write(const std::string& name, const json& j) {
    io::write_json(o_.out / name, j);
    artifacts_.push_back(name);
  }

  template <typename F>
  void write_csv(const std::string& name, F&& f) {
    f(o_.out / name);
    artifacts_.push_back(name);
  }

  const std::vector<PhasePoint>& trapped() {
    if (!trapped_) {
      auto opt = c_.sampling.options;
      opt.seed = c_.seed;
      log("simulate: sampling the trapped set, budget " + std::to_string(c_.sampling.budget));
      trapped_ = sample_trapped_set(*system_, c_.energy, c_.sampling.budget, opt);
      log("simulate: " + std::to_string(trapped_->size()) + " samples");
    }
    return *trapped_;
  }

  const ReturnMapData& returns() {
    if (!returns_) {
      const auto& pts = trapped();
      if (pts.empty()) throw ConstructionError("section: the trapped-set sample is empty");
      log("section: building charts");
      const auto charts = build_sections(*system_, c_.energy, pts, c_.section.section);
      log("section: " + std::to_string(charts.size()) + " charts, fitting generating functions");
      returns_ = partition_blocks(charts, *system_, pts, c_.section);
    }
    return *returns_;
  }

  const SampledReturnMap& sampled() {
    if (!sampled_) {
      log("pressure: sampling the return map on " + std::to_string(c_.classical.ulam_cells) + "^2 cells per chart");
      sampled_ = sample_return_map(returns().charts, *system_, c_.classical.ulam_cells, c_.classical.ulam_samples,
                                   c_.section.section, c_.seed, true);
    }
    return *sampled_;
  }

  double half_jacobian_pressure() {
    if (!half_) half_ = flow_pressure(sampled(), 0.5);
    return *half_;
  }

  const QuantumMap& quantum_map(std::size_t k) {
    auto& slot = maps_[k];
    if (!slot) {
      auto opt = c_.quantum.options;
      opt.h = c_.quantum.h[k];
      slot = std::make_unique<QuantumMap>(returns(), opt);
    }
    return *slot;
  }

  const ResonanceSet& resonance_set(std::size_t k) {
    auto it = sets_.find(k);
    if (it == sets_.end()) {
      const auto& map = quantum_map(k);
      const auto domain = ZeroDomain::disk(c_.resonances.center, c_.resonances.C * map.h());
      log("resonances: h = " + io::format_double(map.h()) + ", radius " + io::format_double(domain.radius));
      auto set = find_zeros([&](Complex z) { return map(z); }, domain, c_.resonances.finder);
      set.h = map.h();
      set.provenance = "det(I - M(z, h)), section-built quantum transfer operator";
      log("resonances: " + std::to_string(set.zeros.size()) + " zeros, winding " + std::to_string(set.winding));
      it = sets_.emplace(k, std::move(set)).first;
    }
    return it->second;
  }

  void flow_pressures() {
    const auto& map = sampled();
    int estimated = 0;
    for (const auto& t : map.transitions) estimated += std::isfinite(t.log_expansion);
    const double s1 = flow_pressure(map, 1.0), s0 = flow_pressure(map, 0.0);
    json j = {{"kind", "sampled_return_map"},
              {"ulam_cells", map.cells},
              {"samples_per_cell", map.samples_per_cell},
              {"dimension", map.dimension()},
              {"transitions", map.transitions.size()},
              {"expansion_estimates", estimated},
              {"escape_rate", -s1},
              {"half_jacobian_pressure", half_jacobian_pressure()},
              {"topological_entropy", s0}};
    if (c_.classical.ruelle) {
      auto set = find_zeros([&](Complex z) { return build_transfer_matrix(map, nullptr, z).entries; }, *c_.classical.ruelle,
                            c_.resonances.finder);
      set.provenance = "det(1 - L_{-z tau}), Ulam matrix of the sampled return map";
      ruelle(j, set);
    }
    write("pressure.json", j);
  }

  void model_pressures() {
    const auto model = c_.system.symbolic();
    const auto& cl = c_.classical;
    BranchFunction f = constant_weight(cl.weight_constant);
    if (cl.weight_expansion != 0.0) {
      const auto e = expansion_weight(model, cl.weight_expansion);
      const double c = cl.weight_constant;
      f = [e, c](int a, double y, double x) { return c + e(a, y, x); };
    }
    BranchFunction tau = constant_weight(1.0);
    if (!cl.roof.empty()) {
      if (static_cast<int>(cl.roof.size()) != model.alphabet_size())
        throw ConfigError({"classical.roof: needs one value per branch (" + std::to_string(model.alphabet_size()) + ")"});
      tau = branch_weight(cl.roof);
    }
    const auto p = topological_pressure(model, f, cl.discretization);
    json j = {{"kind", "symbolic_model"},
              {"model", model.name()},
              {"discretization", cl.discretization.kind == Discretization::Kind::Ulam ? "ulam" : "collocation"},
              {"resolution", cl.discretization.resolution},
              {"pressure", p.value},
              {"pressure_error", p.error},
              {"orbit_period", cl.orbit_period},
              {"orbit_pressure", orbit_pressure(model, f, cl.orbit_period)},
              {"flow_pressure", flow_pressure(model, f, tau, cl.discretization)}};
    if (cl.ruelle) {
      auto set = ruelle_resonances(model, f, tau, *cl.ruelle, cl.discretization.resolution, c_.resonances.finder);
      ruelle(j, set);
    }
    write("pressure.json", j);
  }

  void ruelle(json& j, const ResonanceSet& set) {
    write_csv("ruelle_resonances.csv", [&](const auto& p) { io::write_resonances_csv(p, set); });
    j["ruelle_resonances"] = io::metadata(set);
  }

  const RunConfig& c_;
  const RunOptions& o_;
  std::unique_ptr<ScatteringSystem> system_;
  std::optional<std::vector<PhasePoint>> trapped_;
  std::optional<ReturnMapData> returns_;
  std::optional<SampledReturnMap> sampled_;
  std::optional<double> half_;
  std::map<std::size_t, std::unique_ptr<QuantumMap>> maps_;
  std::map<std::size_t, ResonanceSet> sets_;
  std::vector<std::string> artifacts_;
};

}  // namespace

std::optional<Stage> parse_stage(const std::string& name) {
  const auto it = kStages.find(name);
  if (it == kStages.end()) return std::nullopt;
  return it->second;
}

std::string stage_name(Stage stage) {
  for (const auto& [name, s] : kStages)
    if (s == stage) return name;
  return "?";
}

RunResult run(Stage stage, const RunConfig& config, const RunOptions& options) {
  validate(config);
  if (!applies(stage, config.system.kind))
    throw ConfigError({"system.kind: subcommand '" + stage_name(stage) + "' does not apply to this system"});
  Pipeline p(config, options);
  const auto kind = config.system.kind;
  auto want = [&](Stage s) { return (stage == s || stage == Stage::All) && applies(s, kind); };
  if (want(Stage::Simulate)) p.simulate();
  if (want(Stage::Section)) p.section();
  if (want(Stage::Pressure)) p.pressure();
  if (want(Stage::Quantize)) p.quantize();
  if (want(Stage::Resonances)) p.resonances();
  if (want(Stage::Weyl)) p.weyl();
  return p.finish(stage);
}

int exit_status(const std::exception& e) {
  if (const auto* q = dynamic_cast<const Error*>(&e)) return static_cast<int>(q->kind());
  if (dynamic_cast<const std::filesystem::filesystem_error*>(&e)) return 1;
  return 2;
}

}  // namespace qmono
