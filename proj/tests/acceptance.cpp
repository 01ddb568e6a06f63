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

// End-to-end acceptance checks. One PASS/FAIL line per criterion; exit code
// is the number of failures. Slow criteria (C4-C6) train real agents.
//
//   acceptance            run everything
//   acceptance 1 3 8      run a subset

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "loqa/agents.hpp"
#include "loqa/checkpoint.hpp"
#include "loqa/commands.hpp"
#include "loqa/config.hpp"
#include "loqa/envs.hpp"
#include "loqa/league.hpp"
#include "loqa/loqa.hpp"
#include "loqa/oracle.hpp"
#include "test_games.hpp"

namespace fs = std::filesystem;
using namespace loqa;
using namespace loqa::testing;
using Clock = std::chrono::steady_clock;

namespace {

// Tolerances.
constexpr double kFdTol = 1e-4;
constexpr double kFdEps = 1e-4;
constexpr double kOracleTol = 1e-6;
constexpr double kDefectTol = 0.2;
constexpr double kTftRuntimeS = 20 * 60;
constexpr double kCoinBudgetS = 2 * 3600;
constexpr double kCoinAcLo = 0.25, kCoinAcHi = 0.45;
const std::vector<std::uint64_t> kSeeds = {42, 43, 44};

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("loqa_acceptance_" + name);
  fs::remove_all(p);
  return p;
}

// ---------------------------------------------------------------------------
// C1

Matrix randomized(const Matrix& m, Rng& rng, double scale) { return m + random_logits(static_cast<int>(m.rows()), static_cast<int>(m.cols()), rng, scale); }

std::vector<Matrix> random_obs(Rng& rng, int T, int B, int dim) {
  std::vector<Matrix> obs;
  for (int t = 0; t < T; ++t) obs.push_back(random_logits(B, dim, rng));
  return obs;
}

Outcome c1_gradients() {
  Rng rng(101);
  std::vector<std::pair<std::string, double>> errs;

  // IPD logit actor on one-hot states.
  {
    agents::Net net = agents::make_logit_actor(5);
    net.params.values[0] = random_logits(5, 1, rng);
    std::vector<Matrix> obs;
    for (int t = 0; t < 4; ++t) {
      Matrix o = Matrix::Zero(6, 5);
      for (int b = 0; b < 6; ++b) o(b, uniform_int(rng, 5)) = 1.0;
      obs.push_back(o);
    }
    const Matrix w = random_logits(6, 2, rng);
    auto f = [&](Tape& t, std::span<const Var> p) {
      agents::BoundNet b{&net, std::vector<Var>(p.begin(), p.end())};
      Var acc = t.constant(Matrix::Zero(1, 1));
      for (const Var& h : agents::run_sequence(t, b, obs)) acc = acc + gd::sum(gd::mul(gd::log_softmax(h), w));
      return acc;
    };
    errs.push_back({"ipd-logits", gd::finite_diff_check(f, net.params.values, kFdEps)});
  }

  // GRU actor and critic, hidden 8. Biases randomised so no unit sits on a relu kink.
  for (bool actor : {true, false}) {
    agents::Net net = agents::make_gru_net(6, 8, 4, rng);
    for (Matrix& m : net.params.values) m = randomized(m, rng, 0.3);
    const std::vector<Matrix> obs = random_obs(rng, 4, 5, 6);
    const Matrix w = random_logits(5, 4, rng);
    auto f = [&](Tape& t, std::span<const Var> p) {
      agents::BoundNet b{&net, std::vector<Var>(p.begin(), p.end())};
      Var acc = t.constant(Matrix::Zero(1, 1));
      for (const Var& h : agents::run_sequence(t, b, obs)) {
        Var out = actor ? gd::log_softmax(h) : gd::huber(h);
        acc = acc + gd::sum(gd::mul(out, w));
      }
      return acc;
    };
    errs.push_back({actor ? "gru-actor" : "gru-critic", gd::finite_diff_check(f, net.params.values, kFdEps)});
  }

  // Full actor loss on a T=4 synthetic batch through a GRU actor.
  {
    const int B = 3, T = 4, A = 4;
    agents::Net net = agents::make_gru_net(6, 8, A, rng);
    for (Matrix& m : net.params.values) m = randomized(m, rng, 0.3);
    const std::vector<Matrix> obs = random_obs(rng, T, B, 6);
    const Synthetic syn = make_synthetic(rng, B, T, A);
    std::vector<std::vector<int>> acts(T, std::vector<int>(B));
    for (int b = 0; b < B; ++b)
      for (int t = 0; t < T; ++t) acts[t][b] = syn.taken[static_cast<std::size_t>(b * T + t)];
    for (double lambda : {0.0, 0.9, 1.0}) {
      core::ReturnSpec spec;
      spec.gamma = 0.96;
      spec.lambda = lambda;
      auto f = [&](Tape& t, std::span<const Var> p) {
        agents::BoundNet b{&net, std::vector<Var>(p.begin(), p.end())};
        core::ActorLossInputs in;
        for (const Var& h : agents::run_sequence(t, b, obs)) in.policy_logp.push_back(gd::log_softmax(h));
        in.behaviour_logp_taken = agents::gather_taken(in.policy_logp, acts);
        in.advantages = syn.advantages;
        in.opp_rewards = syn.opp_rewards;
        in.opp_advantages = syn.opp_advantages;
        in.opp_critic_q = syn.opp_critic_q;
        in.opp_actions = syn.opp_actions;
        return core::loqa_actor_loss(in, spec, 0.1).total;
      };
      errs.push_back({"loqa-loss(l=" + fmt("%.1f", lambda) + ")", gd::finite_diff_check(f, net.params.values, kFdEps)});
    }
  }

  Outcome o{true, ""};
  for (const auto& [name, e] : errs) {
    o.pass = o.pass && e <= kFdTol;
    o.detail += name + "=" + fmt("%.1e", e) + " ";
  }
  return o;
}

// ---------------------------------------------------------------------------
// C2

Outcome c2_oracle() {
  Rng rng(202);
  const auto game = two_state_game(3, 0.9);
  const Matrix th1 = random_logits(2, 2, rng), th2 = random_logits(2, 2, rng);
  core::ReturnSpec s;
  s.gamma = game.gamma;
  s.lambda = 1.0;
  const auto est = expected_qhat_gradient(game, th1, th2, s);
  const auto ora = oracle::reinforce_oracle(game, th1, th2);
  double q_err = 0.0;
  for (int st = 0; st < 2; ++st)
    for (int b = 0; b < 2; ++b) q_err = std::max(q_err, rel_error(est[st][b], ora.grad_theta1_Q2[st][b]));

  const TabularCase tc{random_logits(2, 2, rng, 2.0), random_logits(2, 1, rng), random_logits(2, 1, rng)};
  const double a_err = rel_error(expected_actor_gradient_tape(game, th1, th2, tc, true),
                                 expected_actor_gradient_closed_form(game, th1, th2, tc, true));
  return {q_err <= kOracleTol && a_err <= kOracleTol, "qhat=" + fmt("%.1e", q_err) + " actor=" + fmt("%.1e", a_err)};
}

// ---------------------------------------------------------------------------
// C3

Outcome c3_forward_invariance() {
  Rng rng(303);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int B = 1 + uniform_int(rng, 4), T = 2 + uniform_int(rng, 6), A = 2 + uniform_int(rng, 3);
    const Synthetic syn = make_synthetic(rng, B, T, A);
    const Matrix logits = random_logits(B * T, A, rng);
    core::ReturnSpec active, ones;
    active.lambda = ones.lambda = uniform01(rng);
    ones.dice = core::DiceMode::kConstantOne;
    auto value = [&](const core::ReturnSpec& spec) {
      Tape tape;
      Var th = tape.parameter(logits);
      return core::loqa_actor_loss(build_inputs(tape, th, syn), spec, 0.1).total.scalar();
    };
    worst = std::max(worst, std::abs(value(active) - value(ones)));
  }
  return {worst == 0.0, "max |diff| = " + fmt("%.3g", worst) + " over 100 trajectories"};
}

// ---------------------------------------------------------------------------
// C4 / C5

struct IpdRun {
  std::array<double, 5> p_coop{};
  std::vector<trainer::IterationMetrics> metrics;
  double seconds = 0.0;
};

IpdRun run_ipd_desk(std::uint64_t seed, bool shaping) {
  config::RunConfig rc = config::preset("ipd-desk");
  rc.train.seed = seed;
  rc.train.shaping = shaping;
  rc.out_dir = scratch("ipd" + std::to_string(seed) + (shaping ? "" : "_naive")).string();
  IpdRun r;
  commands::TrainOptions opt;
  opt.hook = [&r](const trainer::TrainerState&, const trainer::IterationMetrics& m) {
    r.metrics.push_back(m);
    return false;
  };
  const auto t0 = Clock::now();
  const commands::TrainResult res = commands::cmd_train(rc, opt);
  r.seconds = seconds_since(t0);
  const Matrix& logits = res.state.agents[0].actor.params.values[0];
  for (int s = 0; s < 5; ++s) r.p_coop[static_cast<std::size_t>(s)] = 1.0 / (1.0 + std::exp(-logits(s, 0)));
  fs::remove_all(rc.out_dir);
  return r;
}

bool tft_like(const std::array<double, 5>& p) {
  using envs::IpdTag;
  auto P = [&p](IpdTag t) { return p[static_cast<std::size_t>(t)]; };
  return P(IpdTag::kStart) >= 0.6 && P(IpdTag::kCC) >= 0.75 && P(IpdTag::kDC) >= 0.75 && P(IpdTag::kCD) <= 0.25 &&
         P(IpdTag::kDD) <= 0.25;
}

Outcome c4_tit_for_tat() {
  int passed = 0, decided = 0;
  std::string d;
  for (std::uint64_t seed : kSeeds) {
    const IpdRun r = run_ipd_desk(seed, true);
    const bool ok = tft_like(r.p_coop) && r.seconds <= kTftRuntimeS;
    passed += ok;
    ++decided;
    d += "seed " + std::to_string(seed) + (ok ? " ok" : " no") + " [";
    for (double p : r.p_coop) d += fmt(" %.2f", p);
    d += " ] " + fmt("%.0fs; ", r.seconds);
    if (passed >= 2 || decided - passed >= 2) break;
  }
  return {passed >= 2, d + "(P(C|START,CC,CD,DC,DD))"};
}

Outcome c5_naive_defection() {
  const IpdRun r = run_ipd_desk(42, false);
  const std::size_t n = std::min<std::size_t>(50, r.metrics.size());
  std::array<double, 2> mean{};
  for (std::size_t i = r.metrics.size() - n; i < r.metrics.size(); ++i)
    for (int s = 0; s < 2; ++s) mean[static_cast<std::size_t>(s)] += r.metrics[i].ret[static_cast<std::size_t>(s)] / static_cast<double>(n);
  const bool ok = std::abs(mean[0] + 2.0) <= kDefectTol && std::abs(mean[1] + 2.0) <= kDefectTol;
  std::string d = "last-" + std::to_string(n) + " mean reward " + fmt("%.3f", mean[0]) + fmt(" / %.3f", mean[1]) + " [";
  for (double p : r.p_coop) d += fmt(" %.2f", p);
  return {ok, d + " ]"};
}

// ---------------------------------------------------------------------------
// C6

Outcome c6_coin_weak() {
  int passed = 0, decided = 0;
  std::string d;
  for (std::uint64_t seed : kSeeds) {
    config::RunConfig rc = config::preset("coin-desk");
    rc.train.seed = seed;
    rc.budget_seconds = kCoinBudgetS;
    rc.out_dir = scratch("coin" + std::to_string(seed)).string();
    commands::BenchOptions bo;
    bo.grid_sizes = {3};
    bo.stop_at = league::Level::kWeak;
    const auto t0 = Clock::now();
    const auto res = commands::cmd_bench(rc, bo);
    const double secs = seconds_since(t0);
    const auto& first = res.front().first[static_cast<std::size_t>(league::Level::kWeak)];
    const bool ok = first.has_value() && first->wall_clock_s <= kCoinBudgetS;
    passed += ok;
    ++decided;
    d += "seed " + std::to_string(seed) + ": ";
    if (first) {
      d += "weak at it " + std::to_string(first->iteration) + fmt(" (%.0fs", first->wall_clock_s) + fmt(", self %.3f", first->vs_self) +
           fmt(", AD %.3f); ", first->vs_ad);
    } else {
      const auto& ev = res.front().evaluations;
      d += "not reached in " + fmt("%.0fs", secs);
      if (!ev.empty()) d += fmt(" (last self %.3f", ev.back().vs_self) + fmt(", AD %.3f)", ev.back().vs_ad);
      d += "; ";
    }
    fs::remove_all(rc.out_dir);
    if (passed >= 2 || decided - passed >= 2) break;
  }
  return {passed >= 2, d};
}

// ---------------------------------------------------------------------------
// C7

Outcome c7_league() {
  using league::Entrant;
  using league::FixedKind;
  const envs::EnvConfig ipd{};
  auto m = [&](FixedKind a, FixedKind b) { return league::play_match(ipd, Entrant::fixed(a), Entrant::fixed(b), 10, 20, 7, 0); };
  const auto dd = m(FixedKind::kAlwaysDefect, FixedKind::kAlwaysDefect);
  const auto cc = m(FixedKind::kAlwaysCooperate, FixedKind::kAlwaysCooperate);
  const auto cd = m(FixedKind::kAlwaysCooperate, FixedKind::kAlwaysDefect);
  const bool ipd_ok = dd.mean == -2.0 && dd.opponent_mean == -2.0 && cc.mean == -1.0 && cc.opponent_mean == -1.0 && cd.mean == -3.0 &&
                      cd.opponent_mean == 0.0;
  envs::EnvConfig coin;
  coin.kind = envs::EnvKind::kCoin;
  coin.grid_size = 3;
  const auto ac = league::play_match(coin, Entrant::fixed(FixedKind::kAlwaysCooperate), Entrant::fixed(FixedKind::kAlwaysCooperate), 50,
                                     50, 42, 0);
  const bool coin_ok = ac.mean >= kCoinAcLo && ac.mean <= kCoinAcHi;
  return {ipd_ok && coin_ok, fmt("AD/AD %.1f", dd.mean) + fmt(" AC/AC %.1f", cc.mean) + fmt(" AC/AD (%.1f,", cd.mean) +
                                 fmt(" %.1f)", cd.opponent_mean) + fmt(" coin AC/AC %.3f", ac.mean)};
}

// ---------------------------------------------------------------------------
// C8

int brute_force_center_to_corner(int g) {
  // Largest wrapped distance from the centre cell to any cell.
  int best = 0;
  for (int r = 0; r < g; ++r)
    for (int c = 0; c < g; ++c) {
      const int dr = std::min(std::abs(r - g / 2), g - std::abs(r - g / 2));
      const int dc = std::min(std::abs(c - g / 2), g - std::abs(c - g / 2));
      best = std::max(best, dr + dc);
    }
  return best;
}

Outcome c8_normalization() {
  const std::vector<int> listed = {2, 2, 4, 4, 6, 6};
  bool listed_ok = true, brute_ok = true;
  std::string d = "g:listed/impl/brute";
  for (int g = 3; g <= 8; ++g) {
    const int want = listed[static_cast<std::size_t>(g - 3)], got = envs::normalization_constant(g), brute = brute_force_center_to_corner(g);
    listed_ok = listed_ok && got == want;
    brute_ok = brute_ok && got == brute;
    d += " " + std::to_string(g) + ":" + std::to_string(want) + "/" + std::to_string(got) + "/" + std::to_string(brute);
  }
  d += brute_ok ? " (impl == brute force)" : " (impl != brute force)";
  return {listed_ok && brute_ok, d};
}

// ---------------------------------------------------------------------------
// C9

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Matrix probe(const agents::Net& net, const Matrix& obs) {
  Tape t;
  agents::BoundNet b = agents::bind(t, net, false);
  return agents::actor_log_probs(b, t.constant(obs), t.constant(agents::initial_hidden(net, obs.rows()))).head.value();
}

Outcome c9_determinism() {
  config::RunConfig rc = config::preset("coin");
  rc.train.iterations = 4;
  rc.train.batch_size = 16;
  rc.train.game_length = 10;
  rc.train.actor_hidden = 16;
  rc.train.critic_hidden = 16;
  rc.train.seed = 9;
  std::vector<commands::TrainResult> runs;
  for (const char* tag : {"a", "b"}) {
    rc.out_dir = scratch(std::string("det_") + tag).string();
    runs.push_back(commands::cmd_train(rc));
  }
  const std::string csv_a = slurp(runs[0].metrics_csv), csv_b = slurp(runs[1].metrics_csv);
  const bool csv_ok = !csv_a.empty() && csv_a == csv_b;

  Rng rng(99);
  const Matrix obs = random_logits(5, envs::observation_dim(rc.train.env), rng);
  const LoadedAgent loaded = load_agent(runs[0].checkpoints.front().string());
  const Matrix live = probe(runs[0].state.agents[0].actor, obs), back = probe(loaded.actor, obs);
  const bool probe_ok = live == back;
  for (const auto& r : runs) fs::remove_all(r.metrics_csv.parent_path());
  return {csv_ok && probe_ok, std::string("metrics csv ") + (csv_ok ? "identical" : "DIFFER") + ", checkpoint probe " +
                                  (probe_ok ? "identical" : "DIFFERS")};
}

// ---------------------------------------------------------------------------
// C10

// V2 at state s with h steps left under (theta1, theta2); 0 when h == 0.
double exact_V2(const oracle::EnumerableGame& g, const Matrix& th1, const Matrix& th2, int s, int h) {
  if (h == 0) return 0.0;
  oracle::EnumerableGame gh = g;
  gh.horizon = h;
  gh.initial.assign(static_cast<std::size_t>(g.num_states), 0.0);
  gh.initial[static_cast<std::size_t>(s)] = 1.0;
  const Matrix pi2 = oracle::softmax_rows(th2);
  double v = 0.0;
  for (int b = 0; b < g.num_actions2; ++b) v += pi2(s, b) * oracle::exact_Q2(gh, th1, th2, s, b);
  return v;
}

Outcome c10_variance() {
  Rng rng(1010);
  const auto game = two_state_game(2, 0.9);
  const Matrix th1 = random_logits(2, 2, rng), th2 = random_logits(2, 2, rng);
  const std::vector<oracle::Trajectory> trajs = oracle::enumerate(game, th1, th2);

  core::ReturnSpec dice, reinforce;
  dice.gamma = reinforce.gamma = game.gamma;
  dice.lambda = 0.9;
  reinforce.estimator = core::ReturnEstimator::kReinforce;

  // Per-trajectory gradient of Qhat_0 w.r.t. theta1, flattened.
  auto per_traj = [&](const core::ReturnSpec& spec) {
    std::vector<Eigen::VectorXd> out;
    for (const oracle::Trajectory& tr : trajs) {
      const int H = static_cast<int>(tr.states.size());
      Matrix values(1, H + 1);
      for (int t = 0; t < H; ++t) values(0, t) = exact_V2(game, th1, th2, tr.states[static_cast<std::size_t>(t)], H - t);
      values(0, H) = 0.0;
      const Matrix r2 = row_vector(tr.rewards2);
      const Matrix adv = agents::td0_advantage(r2, values, game.gamma);
      Tape tape;
      Var th = tape.parameter(th1);
      Var lp = tabular_logp(th, tr.states, tr.actions1);
      tape.backward(gd::sum(core::differentiable_return(lp, r2, adv, 0, spec)));
      out.push_back(Eigen::Map<const Eigen::VectorXd>(tape.grad(th).data(), tape.grad(th).size()));
    }
    return out;
  };
  const auto g_dice = per_traj(dice), g_rf = per_traj(reinforce);

  std::vector<double> cdf;
  double acc = 0.0;
  for (const auto& tr : trajs) cdf.push_back(acc += tr.probability);

  const int kBatches = 1000, kBatch = 64;
  const Eigen::Index n = g_dice.front().size();
  Eigen::VectorXd sum_d = Eigen::VectorXd::Zero(n), sq_d = sum_d, sum_r = sum_d, sq_r = sum_d;
  for (int k = 0; k < kBatches; ++k) {
    Eigen::VectorXd md = Eigen::VectorXd::Zero(n), mr = md;
    for (int i = 0; i < kBatch; ++i) {
      const double u = uniform01(rng) * acc;
      const auto j = static_cast<std::size_t>(std::min<std::ptrdiff_t>(std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin(),
                                                                      static_cast<std::ptrdiff_t>(cdf.size()) - 1));
      md += g_dice[j] / kBatch;
      mr += g_rf[j] / kBatch;
    }
    sum_d += md;
    sq_d += md.cwiseProduct(md);
    sum_r += mr;
    sq_r += mr.cwiseProduct(mr);
  }
  auto trace_var = [&](const Eigen::VectorXd& s, const Eigen::VectorXd& q) {
    return ((q - s.cwiseProduct(s) / kBatches) / (kBatches - 1)).sum();
  };
  const double vd = trace_var(sum_d, sq_d), vr = trace_var(sum_r, sq_r);
  return {vd <= vr, "trace var loaded-dice " + fmt("%.4g", vd) + " vs reinforce " + fmt("%.4g", vr)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"C1 gradient correctness", c1_gradients},     {"C2 estimator oracle", c2_oracle},
      {"C3 forward invariance", c3_forward_invariance}, {"C4 tit-for-tat emergence", c4_tit_for_tat},
      {"C5 naive defection", c5_naive_defection},    {"C6 coin game weak threshold", c6_coin_weak},
      {"C7 league sanity", c7_league},              {"C8 normalization constants", c8_normalization},
      {"C9 determinism", c9_determinism},           {"C10 variance reduction", c10_variance},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!only.empty() && !only.count(static_cast<int>(i + 1))) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s %-30s %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", criteria[i].first, o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  return failures;
}
