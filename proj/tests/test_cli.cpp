#include <doctest.h>

#include "qmono/config.hpp"
#include "qmono/io.hpp"
#include "qmono/pipeline.hpp"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include <sys/wait.h>

using namespace qmono;
namespace fs = std::filesystem;

namespace {

const char* kTwoShift = R"(
system: {kind: model, model: doubling}
classical: {resolution: 32}
weyl: {baker_sizes: []}
)";

const char* kFree = R"(
system: {kind: free, support_radius: 1.0}
sampling: {budget: 20, escape_radius: 5}
weyl: {baker_sizes: []}
)";

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("qmono_test_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> issues_of(const std::string& yaml) {
  try {
    parse_config(yaml);
  } catch (const ConfigError& e) {
    return e.issues;
  }
  return {};
}

bool mentions(const std::vector<std::string>& issues, const std::string& field) {
  for (const auto& s : issues)
    if (s.rfind(field + ":", 0) == 0) return true;
  return false;
}

int cli(const std::string& args) {
  const int status = std::system((std::string(QMONO_CLI) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config: defaults and fractions") {
  const auto c = parse_config("system: {kind: billiard, disks: [{center: [0, 0], radius: 1}]}\nquantum: {h: [1/32, 1/64]}\n");
  CHECK(c.quantum.h == std::vector<double>{1.0 / 32.0, 1.0 / 64.0});
  CHECK(c.resonances.C == 5.0);
  CHECK(c.resonances.finder.zero_tol == 0.0);
  CHECK(c.resonances.finder.relative_zero_tol == 1e-9);
  CHECK(c.section.section.boundary_clearance == 0.05);
  CHECK(c.quantum.options.twist_floor == 1e-3);
  CHECK(c.quantum.options.oversampling == 4.0);
  CHECK(c.system.disks.size() == 1);
  // every field appears in the resolved form
  const auto r = c.resolved();
  CHECK(r["resonances"]["zero_tol"] == "auto");
  CHECK(r["quantum"]["h"].size() == 2);
  CHECK(r["section"]["boundary_clearance"] == 0.05);
}

TEST_CASE("config: field-level diagnostics, all at once") {
  const auto issues = issues_of(R"(
system: {kind: billiard, disks: [{center: [0, 0], radius: -1}]}
energy: abc
quantum: {h: [1/32, 1/16], oversampling: 0}
resonances: {C: 0, relative_zero_tol: 0, extra: 1}
sampling: {tol: -1e-10}
weyl: {baker_sizes: [81, 100, 243, 729]}
)");
  CHECK(mentions(issues, "energy"));
  CHECK(mentions(issues, "system.disks[0].radius"));
  CHECK(mentions(issues, "quantum.h"));
  CHECK(mentions(issues, "quantum.oversampling"));
  CHECK(mentions(issues, "resonances.C"));
  CHECK(mentions(issues, "resonances.relative_zero_tol"));
  CHECK(mentions(issues, "resonances.extra"));
  CHECK(mentions(issues, "sampling.tol"));
  CHECK(mentions(issues, "weyl.baker_sizes[1]"));

  CHECK(mentions(issues_of("energy: 1\n"), "system"));
  CHECK(mentions(issues_of("system: {kind: torus}\n"), "system.kind"));
  CHECK(mentions(issues_of("system: {kind: model, model: tent}\n"), "system.model"));
  CHECK(mentions(issues_of("system: {kind: smooth, bumps: [{center: [0, 0], width: 1}]}\n"), "system.bumps[0].amplitude"));
  CHECK(mentions(issues_of("system: {kind: model}\nresonances: {zero_tol: nope}\n"), "resonances.zero_tol"));
  CHECK(mentions(issues_of("system: [1, 2]\n"), "system"));
  CHECK(mentions(issues_of("system: {kind: model\n"), "yaml"));
  CHECK(issues_of(kTwoShift).empty());
  CHECK_THROWS_AS(load_config("/nonexistent/qmono.yaml"), ConfigError);
}

TEST_CASE("config: hash follows the effective values") {
  const auto a = parse_config(kTwoShift);
  const auto b = parse_config(std::string(kTwoShift) + "seed: 1\n");  // the default, spelled out
  CHECK(a.hash() == b.hash());
  CHECK(a.hash().size() == 64);
  auto c = a;
  c.seed = 2;
  CHECK(c.hash() != a.hash());
}

TEST_CASE("io: sha256, number formatting and QTOM round trip") {
  CHECK(io::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(io::sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  for (int k = 0; k < 200; ++k) {
    const double v = u(rng) * std::pow(10.0, k % 40 - 20);
    CHECK(std::stod(io::format_double(v)) == v);
  }

  const auto dir = scratch("io");
  fs::create_directories(dir);
  Eigen::MatrixXcd m(3, 5);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = Complex(u(rng), u(rng));
  io::write_qtom(dir / "m.qtom", m, 1.0 / 64.0, Complex(0.25, -0.5));
  const auto f = io::read_qtom(dir / "m.qtom");
  CHECK(f.matrix == m);
  CHECK(f.h == 1.0 / 64.0);
  CHECK(f.z == Complex(0.25, -0.5));
  CHECK(fs::file_size(dir / "m.qtom") == 4 + 4 + 8 + 8 + 3 * 8 + 15 * 16);
  // row-major: the second stored number is Im m(0, 0), the third Re m(0, 1)
  const std::string bytes = slurp(dir / "m.qtom");
  double second, third;
  std::memcpy(&second, bytes.data() + 48 + 8, 8);
  std::memcpy(&third, bytes.data() + 48 + 16, 8);
  CHECK(second == m(0, 0).imag());
  CHECK(third == m(0, 1).real());

  std::ofstream(dir / "bad.qtom") << "QTOX";
  CHECK_THROWS_AS(io::read_qtom(dir / "bad.qtom"), ParameterError);

  ResonanceSet set;
  set.zeros = {{Complex(0.5, -0.25), 2, 1e-12}};
  io::write_resonances_csv(dir / "r.csv", set);
  CHECK(slurp(dir / "r.csv") == "re,im,multiplicity,residual\n0.5,-0.25,2,9.9999999999999998e-13\n");
}

TEST_CASE("pipeline: 2-shift pressure and manifest") {
  const auto dir = scratch("two_shift");
  const auto c = parse_config(kTwoShift);
  const auto r = run(Stage::Pressure, c, {dir, "inline", nullptr});
  REQUIRE(r.artifacts == std::vector<std::string>{"pressure.json"});
  const auto j = io::json::parse(slurp(dir / "pressure.json"));
  CHECK(std::abs(j["pressure"].get<double>() - std::log(2.0)) < 1e-10);
  CHECK(std::abs(j["flow_pressure"].get<double>() - std::log(2.0)) < 1e-10);

  const auto m = io::json::parse(slurp(r.manifest));
  CHECK(m["config_hash"] == c.hash());
  CHECK(m["seed"] == 1);
  CHECK(m["subcommand"] == "pressure");
  CHECK(m["versions"].contains("qmono"));
  CHECK(m.contains("timestamp"));
  REQUIRE(m["artifacts"].size() == 1);
  CHECK(m["artifacts"][0]["sha256"] == io::sha256_file(dir / "pressure.json"));
}

TEST_CASE("pipeline: V = 0 has an empty trapped set") {
  const auto dir = scratch("free");
  const auto r = run(Stage::Simulate, parse_config(kFree), {dir, "inline", nullptr});
  CHECK(r.artifacts == std::vector<std::string>{"trapped_set.csv", "dimension.json"});
  CHECK(slurp(dir / "trapped_set.csv") == "t,x1,x2,xi1,xi2\n");
  CHECK(io::json::parse(slurp(dir / "dimension.json"))["dimension"].is_null());
}

TEST_CASE("pipeline: stages that do not apply and exit statuses") {
  const auto dir = scratch("inapplicable");
  CHECK_THROWS_AS(run(Stage::Section, parse_config(kTwoShift), {dir, "", nullptr}), ConfigError);
  CHECK_THROWS_AS(run(Stage::Quantize, parse_config(kFree), {dir, "", nullptr}), ConfigError);
  CHECK(exit_status(ConfigError({"x: y"})) == 1);
  CHECK(exit_status(TwistError("t")) == 2);
  CHECK(exit_status(ConsistencyError("c")) == 3);
  CHECK(exit_status(std::runtime_error("other")) == 2);
  CHECK(parse_stage("all") == Stage::All);
  CHECK(!parse_stage("plot"));
  CHECK(stage_name(Stage::Weyl) == "weyl");
}

TEST_CASE("cli: exit codes") {
  const auto dir = scratch("cli");
  fs::create_directories(dir);
  std::ofstream(dir / "two.yaml") << kTwoShift;
  std::ofstream(dir / "free.yaml") << kFree;
  std::ofstream(dir / "bad.yaml") << "system: {kind: model}\nresonances: {C: -1}\n";
  const std::string d = dir.string();
  CHECK(cli("pressure --config " + d + "/two.yaml --out " + d + "/o1") == 0);
  CHECK(fs::exists(dir / "o1" / "manifest.json"));
  CHECK(cli("simulate --config " + d + "/free.yaml --out " + d + "/o2 --seed 7 --threads 1 --verbose") == 0);
  CHECK(io::json::parse(slurp(dir / "o2" / "manifest.json"))["seed"] == 7);
  CHECK(cli("pressure --config " + d + "/bad.yaml --out " + d + "/o3") == 1);
  CHECK(cli("section --config " + d + "/two.yaml --out " + d + "/o4") == 1);
  CHECK(cli("pressure --config " + d + "/missing.yaml") == 1);
  CHECK(cli("pressure") == 1);
  CHECK(cli("--config " + d + "/two.yaml") == 1);
}
