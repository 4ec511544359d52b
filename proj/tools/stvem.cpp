// stvem run <config> | rates <csv> | mesh-dump <config>
// exit codes: 0 ok, 1 I/O or other failure, 2 invalid config/input, 3 solver failure

#include <iostream>

#include <CLI11.hpp>

#include "stvem/study.hpp"

namespace {

int guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const stvem::ConfigError& e) {
    std::cerr << "stvem: invalid config: " << e.what() << '\n';
    return 2;
  } catch (const stvem::SolverError& e) {
    std::cerr << "stvem: solver failure: " << e.what() << '\n';
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "stvem: invalid input: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "stvem: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"space-time virtual element studies for the 1D heat equation"};
  app.require_subcommand(1);
  std::string config, csv, out_override;
  bool quiet = false;

  auto* run = app.add_subcommand("run", "run a study; writes study.csv, meshes/, summary.json");
  run->add_option("config", config, "JSON run config")->required();
  run->add_option("-o,--output", out_override, "override the output directory");
  run->add_flag("-q,--quiet", quiet, "no per-step progress");

  auto* rates = app.add_subcommand("rates", "fit convergence rates from a study.csv");
  rates->add_option("csv", csv, "study.csv")->required();

  auto* dump = app.add_subcommand("mesh-dump", "write the study meshes without solving");
  dump->add_option("config", config, "JSON run config")->required();
  dump->add_option("-o,--output", out_override, "override the output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (*run)
    return guarded([&] {
      auto c = stvem::load_config(config);
      if (!out_override.empty()) c.output = out_override;
      std::ostringstream sink;
      stvem::run_study(c, quiet ? static_cast<std::ostream&>(sink) : std::cerr);
      std::cout << c.output << "/study.csv\n";
      return 0;
    });
  if (*rates)
    return guarded([&] {
      std::cout << stvem::fit_rates_file(csv).dump(2) << '\n';
      return 0;
    });
  return guarded([&] {
    auto c = stvem::load_config(config);
    if (!out_override.empty()) c.output = out_override;
    for (const auto& p : stvem::dump_study_meshes(c)) std::cout << p << '\n';
    return 0;
  });
}
