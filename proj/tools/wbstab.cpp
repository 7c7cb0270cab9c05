// Scenario runner: wbstab run | sweep | validate | defaults
//
// Exit codes: 0 ran and balanced, 2 ran and fell or diverged, 1 error.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "wbstab/errors.hpp"
#include "wbstab/runner.hpp"
#include "wbstab/text.hpp"

namespace fs = std::filesystem;
using namespace wbstab;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::string out;
  std::uint64_t seed = 0;
  bool seed_given = false;
};

runner::ScenarioConfig load(const Common& c) {
  runner::ScenarioConfig cfg = c.config.empty() ? runner::ScenarioConfig{} : runner::load_config(c.config);
  for (const std::string& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ValidationError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (c.seed_given) cfg.seed = c.seed;
  cfg.check();
  return cfg;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p);
  if (!f) throw Error("cannot write " + p.string());
  return f;
}

int exit_code(runner::Outcome o) { return o == runner::Outcome::balanced ? 0 : 2; }

void add_common(CLI::App* app, Common& c, bool config_required) {
  auto* opt = app->add_option("config", c.config, "scenario config file (key=value lines)");
  if (config_required) opt->required();
  opt->check(CLI::ExistingFile);
  app->add_option("--set", c.sets, "override a config key, key=value (repeatable)");
  app->add_option("--out", c.out, "output directory");
  app->add_option("--seed", c.seed, "seed for the initial perturbation")->each([&c](const std::string&) {
    c.seed_given = true;
  });
}

int do_run(const Common& c, bool plot, bool quiet) {
  const runner::ScenarioConfig cfg = load(c);
  runner::RunOptions opt;
  std::ofstream csv;
  if (!c.out.empty()) {
    fs::create_directories(c.out);
    csv = open_out(fs::path(c.out) / (cfg.name + ".csv"));
    opt.csv = &csv;
    if (plot) opt.svg_path = (fs::path(c.out) / (cfg.name + ".svg")).string();
    std::ofstream used = open_out(fs::path(c.out) / (cfg.name + ".cfg"));
    used << cfg.serialize();
  } else if (plot) {
    throw ValidationError("--plot needs --out");
  }
  const runner::RunSummary s = runner::run(cfg, opt);
  if (!c.out.empty()) {
    std::ofstream sum = open_out(fs::path(c.out) / (cfg.name + ".summary"));
    runner::write_summary(sum, s);
  }
  if (!quiet) runner::write_summary(std::cout, s);
  return exit_code(s.outcome);
}

int do_sweep(const Common& c, const std::string& param, const std::vector<std::string>& values, unsigned jobs) {
  const runner::ScenarioConfig cfg = load(c);
  const auto table = runner::sweep(cfg, param, values, jobs);
  std::ostringstream os;
  os << runner::summary_csv_header() << "\n";
  for (const auto& s : table) os << runner::summary_csv_row(s) << "\n";
  std::cout << os.str();
  if (!c.out.empty()) {
    fs::create_directories(c.out);
    open_out(fs::path(c.out) / (cfg.name + "_sweep_" + param + ".csv")) << os.str();
  }
  return 0;
}

// model files, scenario configs and trajectory CSVs, told apart by extension
int do_validate(const std::string& path) {
  const std::string ext = fs::path(path).extension().string();
  if (ext == ".csv") {
    const std::string problem = runner::validate_csv(text::read_file(path));
    if (!problem.empty()) throw ValidationError(path + ": " + problem);
    std::cout << path << ": valid trajectory\n";
    return 0;
  }
  if (ext == ".model") {
    const model::RobotModel m = model::load_model_file(path);
    std::cout << path << ": valid model, " << m.num_actuated() << " joints, " << m.num_contacts() << " contacts, mass "
              << m.total_mass() << " kg\n";
    return 0;
  }
  const runner::ScenarioConfig cfg = runner::load_config(path);
  model::resolve_model(cfg.model);
  std::cout << path << ": valid config\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Force-feedback whole-body stabilizer: closed-loop balance scenarios"};
  app.require_subcommand(1);

  Common run_opts;
  bool plot = false, quiet = false;
  auto* run = app.add_subcommand("run", "run one scenario and print its summary");
  add_common(run, run_opts, false);
  run->add_flag("--plot", plot, "write an SVG of CoM error, tilt and vertical forces (needs --out)");
  run->add_flag("--quiet", quiet, "no summary on stdout");

  Common sweep_opts;
  std::string param;
  std::vector<std::string> values;
  unsigned jobs = 0;
  auto* sweep = app.add_subcommand("sweep", "one run per value of a config key; prints a summary table");
  add_common(sweep, sweep_opts, false);
  sweep->add_option("--param", param, "config key to vary")->required();
  sweep->add_option("--values", values, "comma separated values")->delimiter(',')->required();
  sweep->add_option("--jobs", jobs, "worker threads, 0 for one per core");

  std::string validate_path;
  auto* validate = app.add_subcommand("validate", "check a model (.model), config (.cfg) or trajectory (.csv)");
  validate->add_option("file", validate_path)->required()->check(CLI::ExistingFile);

  app.add_subcommand("defaults", "print the default scenario config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*run) return do_run(run_opts, plot, quiet);
    if (*sweep) return do_sweep(sweep_opts, param, values, jobs);
    if (*validate) return do_validate(validate_path);
    std::cout << runner::ScenarioConfig{}.serialize();
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "wbstab: " << e.what() << "\n";
    return 1;
  }
}
