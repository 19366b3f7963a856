// Scenario-file driver: run trajectories, verify dynamic properties,
// enumerate equilibria, and sweep basins of attraction.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "popgame/popgame.hpp"

namespace {

struct CliArgs {
  std::string file;
  popgame::RunOptions opts;
};

void add_common_flags(CLI::App* cmd, CliArgs& args,
                      std::optional<std::uint64_t>& seed,
                      std::string& integrator,
                      std::optional<double>& t_end,
                      std::optional<double>& tol, std::string& out_dir) {
  cmd->add_option("--seed", seed, "override the scenario seed");
  cmd->add_option("--out-dir", out_dir, "output root directory")
      ->default_str("out");
  cmd->add_option("--integrator", integrator,
                  "integration scheme: fixed | adaptive")
      ->check(CLI::IsMember({"fixed", "adaptive"}));
  cmd->add_option("--t-end", t_end, "override the time horizon");
  cmd->add_option("--tol", tol,
                  "override the adaptive relative tolerance (absolute "
                  "tolerance follows at tol/100)");
  (void)args;
}

popgame::RunOptions make_options(const std::optional<std::uint64_t>& seed,
                                 const std::string& integrator,
                                 const std::optional<double>& t_end,
                                 const std::optional<double>& tol,
                                 const std::string& out_dir,
                                 const std::optional<int>& grid) {
  popgame::RunOptions o;
  o.out_root = out_dir;
  o.seed = seed;
  if (integrator == "fixed") o.method = popgame::Method::rk4_fixed;
  if (integrator == "adaptive") o.method = popgame::Method::rk45_adaptive;
  o.t_end = t_end;
  o.tol = tol;
  o.grid = grid;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "popgame — imitation dynamics on population games: trajectories, "
      "equilibria, and dynamic-property verification"};
  app.require_subcommand(1);

  std::string file, verify_target, out_dir = "out", integrator;
  std::optional<std::uint64_t> seed;
  std::optional<double> t_end, tol;
  std::optional<int> grid;
  CliArgs args;

  CLI::App* run = app.add_subcommand("run", "integrate one scenario");
  run->add_option("file", file, "scenario JSON file")->required();
  add_common_flags(run, args, seed, integrator, t_end, tol, out_dir);

  CLI::App* verify = app.add_subcommand(
      "verify", "run the property suite on a scenario, or 'all' for a directory");
  verify->add_option("target", verify_target,
                     "scenario JSON file, or 'all' [--dir]")
      ->required();
  std::string verify_dir = "scenarios";
  verify->add_option("--dir", verify_dir,
                     "scenario directory used by 'verify all'");
  add_common_flags(verify, args, seed, integrator, t_end, tol, out_dir);

  CLI::App* equil =
      app.add_subcommand("equilibria", "enumerate and label rest points");
  equil->add_option("file", file, "scenario JSON file")->required();
  add_common_flags(equil, args, seed, integrator, t_end, tol, out_dir);

  CLI::App* sweep = app.add_subcommand(
      "sweep", "map basins of attraction over an initial-condition grid");
  sweep->add_option("file", file, "scenario JSON file")->required();
  sweep->add_option("--grid", grid, "barycentric grid resolution");
  add_common_flags(sweep, args, seed, integrator, t_end, tol, out_dir);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);  // 0 for --help, nonzero for bad usage
  }

  using namespace popgame;
  try {
    const RunOptions opts =
        make_options(seed, integrator, t_end, tol, out_dir, grid);

    if (run->parsed()) {
      Scenario sc = load_scenario(file);
      RunResult res = run_scenario(sc, opts);
      std::cout << res.summary.dump(2) << "\n";
      if (!res.dir.empty())
        std::cerr << "wrote " << res.dir.string() << "\n";
      return 0;
    }
    if (verify->parsed()) {
      bool ok = true;
      if (verify_target == "all") {
        for (const auto& rep : verify_all(verify_dir, opts)) {
          std::cout << rep.render();
          ok = ok && rep.all_as_expected;
        }
      } else {
        VerifyReport rep = verify_scenario(load_scenario(verify_target), opts);
        std::cout << rep.render();
        ok = rep.all_as_expected;
      }
      return ok ? 0 : 2;
    }
    if (equil->parsed()) {
      Scenario sc = load_scenario(file);
      EquilibriaResult res = equilibria_scenario(sc, opts);
      std::cout << res.table;
      if (!res.csv_path.empty())
        std::cerr << "wrote " << res.csv_path.string() << "\n";
      return 0;
    }
    if (sweep->parsed()) {
      Scenario sc = load_scenario(file);
      SweepResult res = sweep_scenario(sc, opts);
      std::cout << "grid " << res.map.grid_n << ": " << res.map.cells.size()
                << " cells\n";
      for (const auto& [idx, n] : res.counts) {
        if (idx < 0) {
          std::cout << "  undetermined: " << n << "\n";
        } else {
          const auto& item = res.set.items[idx];
          std::cout << "  -> (" << detail::join_components(item.point.vec(), ", ")
                    << ") [" << item.label << "]: " << n << "\n";
        }
      }
      if (!res.csv_path.empty())
        std::cerr << "wrote " << res.csv_path.string() << "\n";
      return 0;
    }
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 2;
  } catch (const IntegrationError& e) {
    std::cerr << "integration error: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
