// chenflow: run fixtures, sweep table rows, or self-test the oracles.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "chenflow/experiment.hpp"

namespace ex = chenflow::experiment;

namespace {

struct Options {
  std::string config_path;
  std::string fixture;
  std::string row;
  std::string out;
  std::vector<std::string> overrides;
  std::size_t jobs = 1;
  std::uint64_t seed = 1;
  bool print_config = false;
};

std::optional<std::string> opt(const std::string& s) { return s.empty() ? std::nullopt : std::optional(s); }

std::string config_text(const Options& o) { return o.config_path.empty() ? std::string() : ex::read_file(o.config_path); }

ex::ExperimentConfig load(const Options& o) {
  const std::string text = config_text(o);
  ex::ExperimentConfig cfg = ex::load_config(opt(text), o.overrides, opt(o.fixture), opt(o.row));
  if (!o.out.empty()) cfg.out = o.out;
  return cfg;
}

int cmd_run(const Options& o) {
  const ex::ExperimentConfig cfg = load(o);
  if (o.print_config) {
    std::cout << ex::serialize(cfg);
    return ex::exit_ok;
  }
  const ex::Outcome outcome = ex::run_fixture(cfg, ex::output_dir(cfg));
  std::cout << ex::format_summary(outcome.summary);
  if (!outcome.message.empty()) std::cerr << outcome.message;
  std::cerr << "artifacts: " << outcome.dir.string() << "\n";
  return outcome.exit_code;
}

int cmd_sweep(const Options& o) {
  Options base = o;
  if (base.fixture.empty()) base.fixture = "table2";
  base.row.clear();
  const ex::ExperimentConfig cfg = load(base);
  ex::ExperimentConfig root_cfg = cfg;
  root_cfg.row.clear();
  const auto root = o.out.empty() ? ex::output_dir(root_cfg) : std::filesystem::path(o.out);
  const ex::SweepOutcome result = ex::sweep(cfg, o.overrides, config_text(o), root, o.jobs);
  for (const ex::Outcome& row : result.rows) {
    std::cout << ex::format_summary(row.summary);
    if (!row.message.empty()) std::cerr << row.message;
  }
  std::cerr << "artifacts: " << root.string() << "\n";
  return result.exit_code;
}

int cmd_selftest(const Options& o) {
  const auto checks = ex::selftest(o.seed);
  std::size_t passed = 0;
  for (const ex::CheckResult& c : checks) {
    std::printf("%s  %-45s worst=%.3e tol=%.0e\n", c.passed() ? "PASS" : "FAIL", c.name.c_str(), c.worst, c.tolerance);
    passed += c.passed();
  }
  std::printf("%zu passed, %zu failed\n", passed, checks.size() - passed);
  return passed == checks.size() ? ex::exit_ok : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chen-Fliess learning control simulator"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", o.config_path, "INI configuration file")->check(CLI::ExistingFile);
    sub->add_option("-f,--fixture", o.fixture, "fixture name");
    sub->add_option("-o,--out", o.out, "output directory");
    sub->add_option("--override", o.overrides, "section.key=value, applied after the config file");
  };

  CLI::App* run = app.add_subcommand("run", "run one fixture and write CSV artifacts");
  add_common(run);
  run->add_option("-r,--row", o.row, "fixture row, e.g. a21_plus20");
  run->add_flag("--print-config", o.print_config, "print the resolved configuration and exit");

  CLI::App* sweep = app.add_subcommand("sweep", "run every row of a table fixture (default table2)");
  add_common(sweep);
  sweep->add_option("-j,--jobs", o.jobs, "parallel simulations")->check(CLI::PositiveNumber);

  CLI::App* self = app.add_subcommand("selftest", "check the library against its oracles");
  self->add_option("--seed", o.seed, "seed for the random test inputs");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(o);
    if (sweep->parsed()) return cmd_sweep(o);
    return cmd_selftest(o);
  } catch (const ex::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return ex::exit_validation;
  } catch (const chenflow::SimulationError& e) {
    std::cerr << "simulation blew up: " << e.what() << "\n";
    return ex::exit_blow_up;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return ex::exit_validation;
  }
}
