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

#pragma once

// train / league / bench / export, shared by the CLI and the tests.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "loqa/checkpoint.hpp"
#include "loqa/config.hpp"
#include "loqa/league.hpp"
#include "loqa/trainer.hpp"

namespace loqa::commands {

namespace fs = std::filesystem;

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

inline std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p, std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + p.string());
  return os;
}

inline std::string read_file(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw IoError("cannot open: " + p.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// train

/// Called after every iteration; returning true stops training early.
using IterationHook = std::function<bool(const trainer::TrainerState&, const trainer::IterationMetrics&)>;

struct TrainOptions {
  bool record_wall_clock = false;  // wall_clock_s stays 0 otherwise, keeping the CSV reproducible
  IterationHook hook;
};

struct TrainResult {
  fs::path metrics_csv;
  std::vector<fs::path> checkpoints;  // final checkpoint per live agent
  long iterations = 0;
  bool partial = false;
  trainer::TrainerState state;
};

inline nlohmann::json manifest_extra(const config::RunConfig& rc, long iteration, bool partial, int agent) {
  return {{"env", envs::to_string(rc.train.env.kind)},
          {"grid_size", rc.train.env.grid_size},
          {"seed", rc.train.seed},
          {"agent", agent},
          {"iteration", iteration},
          {"config_hash", config::hex(config::config_hash(rc))},
          {"partial", partial}};
}

inline std::vector<fs::path> save_agents(const config::RunConfig& rc, const trainer::TrainerState& s, const std::string& tag,
                                         bool partial) {
  std::vector<fs::path> out;
  for (std::size_t a = 0; a < s.agents.size(); ++a) {
    fs::path p = fs::path(rc.out_dir) / ("agent" + std::to_string(a + 1) + tag + ".ckpt");
    save_agent(p.string(), s.agents[a], manifest_extra(rc, s.iteration, partial, static_cast<int>(a + 1)));
    out.push_back(p);
  }
  return out;
}

inline TrainResult cmd_train(const config::RunConfig& rc, const TrainOptions& opt = {}) {
  config::validate(rc);
  ensure_dir(rc.out_dir);
  {
    std::ofstream cfg = open_out(fs::path(rc.out_dir) / "config.txt");
    cfg << config::serialize(rc);
  }
  TrainResult res;
  res.metrics_csv = fs::path(rc.out_dir) / "metrics.csv";
  std::ofstream csv = open_out(res.metrics_csv);
  csv << trainer::kMetricsHeader << '\n';
  res.state = trainer::init_trainer(rc.train);
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&start] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };
  while (res.state.iteration < rc.train.iterations) {
    if (rc.budget_seconds > 0 && elapsed() >= rc.budget_seconds) {
      res.partial = true;
      break;
    }
    trainer::IterationMetrics m = trainer::train_iteration(res.state);
    if (opt.record_wall_clock) m.wall_clock_s = elapsed();
    trainer::write_metrics_row(csv, m);
    if (rc.checkpoint_every > 0 && res.state.iteration % rc.checkpoint_every == 0 && res.state.iteration < rc.train.iterations) {
      save_agents(rc, res.state, "_it" + std::to_string(res.state.iteration), false);
    }
    if (opt.hook && opt.hook(res.state, m)) break;
  }
  csv.flush();
  if (!csv) throw IoError("failed writing " + res.metrics_csv.string());
  res.iterations = res.state.iteration;
  res.checkpoints = save_agents(rc, res.state, "", res.partial);
  return res;
}

// ---------------------------------------------------------------------------
// league

struct LeagueOptions {
  envs::EnvConfig env{};
  std::vector<std::string> checkpoints;  // paths, or "fixed:AC" etc. for scripted agents
  std::vector<std::string> opponents = {"AC", "AD", "Random"};
  int episodes = 50;
  int length = 50;
  std::uint64_t seed = 42;
  std::string out_csv;  // empty = do not write
};

inline league::LeagueReport cmd_league(const LeagueOptions& o) {
  std::vector<league::Entrant> agents_;
  for (const std::string& path : o.checkpoints) {
    if (path.rfind("fixed:", 0) == 0) {
      league::Entrant e = league::Entrant::fixed(league::fixed_kind_from_string(path.substr(6)));
      e.name = path;
      agents_.push_back(std::move(e));
      continue;
    }
    if (!fs::exists(path)) throw IoError("checkpoint not found: " + path);
    LoadedAgent la = load_agent(path);
    const std::string env = la.manifest.value("env", "");
    const int grid = la.manifest.value("grid_size", 0);
    if (env != envs::to_string(o.env.kind) || (o.env.kind == envs::EnvKind::kCoin && grid != o.env.grid_size)) {
      throw std::invalid_argument("checkpoint " + path + " was trained on " + env + (env == "coin" ? " grid " + std::to_string(grid) : "") +
                                  ", league runs " + envs::to_string(o.env.kind));
    }
    std::string name = la.manifest.contains("seed") ? std::to_string(la.manifest["seed"].get<std::uint64_t>()) : fs::path(path).stem().string();
    agents_.push_back(league::Entrant::trained(name, std::move(la.actor)));
  }
  std::vector<league::Entrant> opps;
  for (const std::string& n : o.opponents) {
    opps.push_back(league::Entrant::fixed(league::fixed_kind_from_string(n)));
  }
  league::LeagueReport rep = league::run_league(o.env, agents_, opps, o.episodes, o.length, o.seed);
  if (!o.out_csv.empty()) {
    if (fs::path(o.out_csv).has_parent_path()) ensure_dir(fs::path(o.out_csv).parent_path());
    std::ofstream os = open_out(o.out_csv);
    league::write_league_csv(os, rep);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// bench

struct BenchResult {
  int grid_size = 0;
  std::vector<league::EvalPoint> evaluations;
  std::array<std::optional<league::EvalPoint>, league::kNumLevels> first;
  fs::path threshold_csv;
  TrainResult train;
};

struct BenchOptions {
  std::vector<int> grid_sizes = {3};
  std::optional<league::Level> stop_at;  // end a run once this level is passed
};

inline constexpr const char* kEvalHeader = "iteration,wall_clock_s,vs_self,vs_ad";

/// Trains once per grid size, evaluating every `eval_every` iterations, and
/// writes thresholds_g<g>.csv with the first crossing of each level.
inline std::vector<BenchResult> cmd_bench(const config::RunConfig& base, const BenchOptions& bo = {}) {
  std::vector<BenchResult> out;
  for (int g : bo.grid_sizes) {
    config::RunConfig rc = base;
    rc.train.env.grid_size = g;
    if (bo.grid_sizes.size() > 1) rc.out_dir = (fs::path(base.out_dir) / ("grid" + std::to_string(g))).string();
    BenchResult br;
    br.grid_size = g;
    ensure_dir(rc.out_dir);
    std::ofstream evals = open_out(fs::path(rc.out_dir) / ("evals_g" + std::to_string(g) + ".csv"));
    evals << kEvalHeader << '\n';
    const auto start = std::chrono::steady_clock::now();
    TrainOptions opt;
    opt.record_wall_clock = true;
    opt.hook = [&](const trainer::TrainerState& s, const trainer::IterationMetrics&) {
      if (s.iteration % rc.eval_every != 0) return false;
      league::EvalPoint p =
          league::evaluate_for_thresholds(rc.train.env, s.agents[0].actor, rc.eval_episodes, rc.train.game_length, rc.train.seed, s.iteration);
      p.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      br.evaluations.push_back(p);
      evals << p.iteration << ',' << league::format_number(p.wall_clock_s) << ',' << league::format_number(p.vs_self) << ','
            << league::format_number(p.vs_ad) << '\n';
      evals.flush();
      return bo.stop_at && league::threshold_check(p.vs_self, p.vs_ad)[static_cast<std::size_t>(*bo.stop_at)];
    };
    br.train = cmd_train(rc, opt);
    br.first = league::time_to_threshold(br.evaluations);
    br.threshold_csv = fs::path(rc.out_dir) / ("thresholds_g" + std::to_string(g) + ".csv");
    std::ofstream th = open_out(br.threshold_csv);
    th << league::kThresholdHeader << '\n';
    league::write_threshold_rows(th, rc.train.seed, br.first);
    out.push_back(std::move(br));
  }
  return out;
}

// ---------------------------------------------------------------------------
// export

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace detail

inline constexpr const char* kPlotHeader = "run,metric,x,y";

/// Merges CSVs sharing one header whose first column is the x axis into long
/// format. The run label is the file's parent directory name, or its stem
/// when the parent is empty.
inline std::size_t export_plotdata(const std::vector<std::string>& inputs, const std::string& output) {
  if (inputs.empty()) throw std::invalid_argument("export: no input files");
  std::vector<std::string> header;
  std::ostringstream out;
  out << kPlotHeader << '\n';
  std::size_t rows = 0;
  for (const std::string& in : inputs) {
    std::istringstream is(read_file(in));
    std::string line;
    if (!std::getline(is, line)) throw std::invalid_argument("export: " + in + " is empty");
    const std::vector<std::string> h = detail::split_csv_line(line);
    if (h.size() < 2) throw std::invalid_argument("export: " + in + " has fewer than two columns");
    if (header.empty()) {
      header = h;
    } else if (h != header) {
      throw std::invalid_argument("export: schema of " + in + " does not match " + inputs.front());
    }
    const fs::path p(in);
    const std::string run = p.parent_path().filename().empty() ? p.stem().string() : p.parent_path().filename().string();
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      const std::vector<std::string> cells = detail::split_csv_line(line);
      if (cells.size() != header.size()) throw std::invalid_argument("export: ragged row in " + in);
      for (std::size_t c = 1; c < cells.size(); ++c) {
        out << run << ',' << header[c] << ',' << cells[0] << ',' << cells[c] << '\n';
        ++rows;
      }
    }
  }
  if (fs::path(output).has_parent_path()) ensure_dir(fs::path(output).parent_path());
  std::ofstream os = open_out(output);
  os << out.str();
  return rows;
}

}  // namespace loqa::commands
