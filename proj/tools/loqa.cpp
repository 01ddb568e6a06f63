// Copyright 2026 The LOQA Lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// loqa: command-line front end.
//
//   loqa train  --preset ipd-desk --seed 42 --out runs/ipd42
//   loqa league --env coin --grid-size 3 runs/c42/agent1.ckpt runs/c43/agent1.ckpt
//   loqa bench  --preset coin-desk --grid-size 3 --grid-size 4 --eval-every 25
//   loqa export runs/*/metrics.csv --out plot.csv
//
// Exit codes: 0 ok, 2 configuration error, 3 runtime error, 4 I/O error.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "loqa/commands.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;
constexpr int kExitIo = 4;

struct Common {
  std::string config_path;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<double> budget;
  std::vector<std::string> ablate;
  std::vector<int> grid_sizes;
  std::optional<int> eval_every;
  std::optional<int> iterations;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_path, "key = value configuration file");
  app->add_option("--preset", c.preset, "ipd, ipd-desk, coin, coin-large or coin-desk");
  app->add_option("--seed", c.seed, "master seed (default 42)");
  app->add_option("--out", c.out, "output directory");
  app->add_option("--budget-seconds", c.budget, "wall-clock budget; 0 = unlimited");
  app->add_option("--ablate", c.ablate, "replay_buffer, self_play or shaping")
      ->check(CLI::IsMember({"replay_buffer", "self_play", "shaping"}));
  app->add_option("--grid-size", c.grid_sizes, "Coin Game grid size (repeat for a bench sweep)");
  app->add_option("--eval-every", c.eval_every, "iterations between threshold evaluations");
  app->add_option("--iterations", c.iterations, "override the iteration count");
}

loqa::config::RunConfig resolve(const Common& c) {
  std::string text;
  if (!c.config_path.empty()) text = loqa::commands::read_file(c.config_path);
  loqa::config::RunConfig rc = loqa::config::parse_config(text, c.preset);
  if (c.seed) rc.train.seed = *c.seed;
  if (!c.out.empty()) rc.out_dir = c.out;
  if (c.budget) rc.budget_seconds = *c.budget;
  if (c.eval_every) rc.eval_every = *c.eval_every;
  if (c.iterations) rc.train.iterations = *c.iterations;
  if (!c.grid_sizes.empty()) rc.train.env.grid_size = c.grid_sizes.front();
  for (const std::string& a : c.ablate) {
    if (a == "replay_buffer") rc.train.replay_buffer = false;
    if (a == "self_play") rc.train.self_play = false;
    if (a == "shaping") rc.train.shaping = false;
  }
  loqa::config::validate(rc);
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LOQA opponent-shaping trainer"};
  app.require_subcommand(1);

  Common train_opts, bench_opts;
  CLI::App* train = app.add_subcommand("train", "train agents and write metrics.csv + checkpoints");
  add_common(train, train_opts);

  CLI::App* bench = app.add_subcommand("bench", "train with periodic threshold evaluation");
  add_common(bench, bench_opts);

  loqa::commands::LeagueOptions lo;
  std::string league_env = "ipd";
  int league_grid = 3;
  CLI::App* league = app.add_subcommand("league", "round-robin evaluation of checkpoints and fixed policies");
  league->add_option("checkpoints", lo.checkpoints, "checkpoint files, or fixed:AC / fixed:AD / fixed:Random / fixed:TFT")->required();
  league->add_option("--env", league_env, "ipd or coin")->check(CLI::IsMember({"ipd", "coin"}));
  league->add_option("--grid-size", league_grid, "Coin Game grid size");
  league->add_option("--opponents", lo.opponents, "fixed opponents (default AC AD Random)");
  league->add_option("--episodes", lo.episodes, "episodes per pairing");
  league->add_option("--length", lo.length, "episode length T");
  league->add_option("--seed", lo.seed, "evaluation seed");
  league->add_option("--out", lo.out_csv, "league CSV path")->default_val("league.csv");

  std::vector<std::string> export_inputs;
  std::string export_out = "plotdata.csv";
  CLI::App* exp = app.add_subcommand("export", "merge CSVs into long format (run, metric, x, y)");
  exp->add_option("inputs", export_inputs, "input CSV files");
  exp->add_option("--out", export_out, "output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*train) {
      const loqa::config::RunConfig rc = resolve(train_opts);
      const auto res = loqa::commands::cmd_train(rc);
      std::cout << "trained " << res.iterations << " iterations" << (res.partial ? " (partial: budget reached)" : "") << "\n"
                << "metrics: " << res.metrics_csv.string() << "\n";
      for (const auto& p : res.checkpoints) std::cout << "checkpoint: " << p.string() << "\n";
    } else if (*bench) {
      const loqa::config::RunConfig rc = resolve(bench_opts);
      loqa::commands::BenchOptions bo;
      if (!bench_opts.grid_sizes.empty()) bo.grid_sizes = bench_opts.grid_sizes;
      else bo.grid_sizes = {rc.train.env.grid_size};
      for (const auto& r : loqa::commands::cmd_bench(rc, bo)) {
        std::cout << "grid " << r.grid_size << ":";
        for (std::size_t i = 0; i < r.first.size(); ++i) {
          std::cout << ' ' << loqa::league::to_string(static_cast<loqa::league::Level>(i)) << '=';
          if (r.first[i]) std::cout << r.first[i]->wall_clock_s << "s";
          else std::cout << "not reached";
        }
        std::cout << "  (" << r.threshold_csv.string() << ")\n";
      }
    } else if (*league) {
      lo.env.kind = loqa::envs::env_kind_from_string(league_env);
      lo.env.grid_size = league_grid;
      const auto rep = loqa::commands::cmd_league(lo);
      loqa::league::write_league_csv(std::cout, rep);
    } else if (*exp) {
      const std::size_t n = loqa::commands::export_plotdata(export_inputs, export_out);
      std::cout << "wrote " << n << " rows to " << export_out << "\n";
    }
  } catch (const loqa::config::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const loqa::IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
