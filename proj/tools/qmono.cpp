#include "qmono/config.hpp"
#include "qmono/pipeline.hpp"

#include <CLI11.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <cstdint>
#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"qmono: trapped sets, Poincare sections, transfer operators and resonances"};
  app.require_subcommand(1, 1);
  std::string config_path, out;
  std::optional<std::uint64_t> seed;
  int threads = 0;
  bool verbose = false;
  app.add_option("--config", config_path, "YAML run configuration")->required();
  app.add_option("--out", out, "artifact directory (default: the config's output)");
  app.add_option("--seed", seed, "overrides the config seed");
  app.add_option("--threads", threads, "worker cap (0: library default)")->check(CLI::NonNegativeNumber);
  app.add_flag("--verbose", verbose, "progress on stderr");
  app.fallthrough();

  const std::pair<const char*, const char*> commands[] = {
      {"simulate", "trapped-set samples and box-counting dimension"},
      {"section", "Poincare charts and return-map data"},
      {"pressure", "classical pressures and Ruelle resonances"},
      {"quantize", "quantum transfer operator M(z, h) for each h"},
      {"resonances", "zeros of det(I - M(z, h)) in D(center, C h)"},
      {"weyl", "eigenvalue and resonance density fits"},
      {"all", "every stage that applies to the system"}};
  for (const auto& [name, help] : commands) app.add_subcommand(name, help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  const auto stage = *qmono::parse_stage(app.get_subcommands().front()->get_name());

  try {
    auto config = qmono::load_config(config_path);
    if (seed) config.seed = *seed;
#ifdef _OPENMP
    if (threads > 0) omp_set_num_threads(threads);
#endif
    qmono::RunOptions options;
    options.out = out.empty() ? config.output : out;
    options.config_label = config_path;
    if (verbose) options.log = [](const std::string& s) { std::cerr << s << '\n'; };
    const auto result = qmono::run(stage, config, options);
    if (verbose) std::cerr << "wrote " << result.artifacts.size() << " artifacts and " << result.manifest.string() << '\n';
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return qmono::exit_status(e);
  }
}
