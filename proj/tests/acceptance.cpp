// Acceptance suite: one pass/fail line per criterion. `--only N` runs a
// single criterion; the exit status is nonzero when any selected one fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mars/cli.hpp"
#include "mars/credit_assignment.hpp"
#include "mars/metrics.hpp"
#include "mars/trainer.hpp"
#include "oracles.hpp"

using namespace mars;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and budgets.
constexpr double kCreditTol = 1e-9;
constexpr double kTransparencyTol = 1e-12;
constexpr int kMinTrees = 500;
constexpr int kMaxTreeNodes = 12;
constexpr double kGradTol = 1e-5;
constexpr int kMinGradInstances = 100;
constexpr double kBetterArmFloor = 0.8;
constexpr int kBanditSeeds = 20;
// Calibrated margin by which MARS_TREE(2) must exceed GRPO_PARALLEL on final
// mean Pass@1. Only the direction is asked for, so the margin is zero.
constexpr double kMarsOverGrpoMargin = 0.0;
constexpr double kRewardThreshold = 0.9;
constexpr int kLatestWinsTrees = 1000;

struct Result {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  double seconds_limit;
  std::function<Result()> run;
};

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

double max_abs(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

// Appendix-style three-case penalty written out independently.
double penalty_oracle(int len, int l_max, int l_cache) {
  if (len <= l_max - l_cache) return 0.0;
  if (len <= l_max) return static_cast<double>((l_max - l_cache) - len) / l_cache;
  return -1.0;
}

// 1. Credit calculus against brute-force evaluation.
Result credit_calculus() {
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = 0.0;
  int trees = 0, single_child = 0, transparent = 0;
  bool lambda_free = true;
  double worst_transparency = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    oracle::FlatTree f = oracle::random_flat_tree(gen, kMaxTreeNodes);
    const std::size_t n = f.parent.size();
    const bool penalized = trial % 3 == 0;
    const int l_max = 6, l_cache = 1 + static_cast<int>(gen() % 5);
    std::vector<int> lengths(n, 0);
    oracle::FlatTree credit = f;  // reward the shaping sees
    SearchTree t(0);
    for (std::size_t v = 1; v < n; ++v) {
      lengths[v] = static_cast<int>(gen() % 10);
      const double pen = penalized ? overlong_penalty(lengths[v], {l_max, l_cache}) : 0.0;
      if (penalized) worst = std::max(worst, std::abs(pen - penalty_oracle(lengths[v], l_max, l_cache)));
      credit.reward[v] = f.reward[v] + (penalized ? penalty_oracle(lengths[v], l_max, l_cache) : 0.0);
      t.append_node(f.parent[v], static_cast<int>(v % 2), {}, f.reward[v], FeedbackRecord::from_flags({true}), pen);
    }
    const double lambda = trial % 5 == 0 ? 0.0 : unit(gen);
    const double gamma = trial % 7 == 0 ? 0.0 : 2.0 * unit(gen);

    for (std::size_t v = 1; v < n; ++v)
      worst = std::max(worst, std::abs(mixed_baseline(t, static_cast<NodeId>(v), lambda) -
                                       oracle::baseline(credit, static_cast<int>(v), lambda)));
    shape_tree(t, {lambda, gamma});
    std::vector<double> want = oracle::shaped(credit, lambda, gamma), got;
    want.erase(want.begin());
    for (std::size_t v = 1; v < n; ++v) got.push_back(*t.node(static_cast<NodeId>(v)).shaped_reward);
    worst = std::max(worst, max_abs(got, want));

    auto adv = shaped_tree_advantages(t);
    std::vector<double> adv_vec;
    for (std::size_t v = 1; v < n; ++v) adv_vec.push_back(adv.at(static_cast<NodeId>(v)));
    worst = std::max(worst, max_abs(adv_vec, oracle::zscore(want)));
    // Same nodes treated as one flat group.
    std::vector<double> credit_rewards(credit.reward.begin() + 1, credit.reward.end());
    worst = std::max(worst, max_abs(group_advantages(credit_rewards), oracle::zscore(credit_rewards)));

    for (const TreeNode& node : t.nodes()) {
      if (node.is_root() || t.node(*node.parent_id).children.size() != 1) continue;
      ++single_child;
      const double b0 = mixed_baseline(t, node.id, 0.0);
      for (double l : {0.25, 0.5, 1.0}) lambda_free = lambda_free && mixed_baseline(t, node.id, l) == b0;
    }
    SearchTree plain = t;
    shape_tree(plain, {lambda, 0.0});
    auto adv0 = shaped_tree_advantages(plain);
    auto flat = group_advantages(credit_rewards);
    for (std::size_t v = 1; v < n; ++v)
      worst_transparency = std::max(worst_transparency, std::abs(adv0.at(static_cast<NodeId>(v)) - flat[v - 1]));
    ++transparent;
    ++trees;
  }
  Result r;
  r.pass = trees >= kMinTrees && worst <= kCreditTol && lambda_free && single_child > 0 &&
           worst_transparency <= kTransparencyTol;
  r.detail = std::to_string(trees) + " trees (<= " + std::to_string(kMaxTreeNodes) + " nodes), max error " +
             fmt("%.2e", worst) + ", " + std::to_string(single_child) + " single-child nodes lambda-free " +
             (lambda_free ? "yes" : "no") + ", gamma=0 max deviation " + fmt("%.2e", worst_transparency);
  return r;
}

PolicyParams random_params(std::mt19937_64& gen, int V, int L, const std::vector<ContextKey>& ctxs, double scale) {
  std::normal_distribution<double> n(0.0, scale);
  PolicyParams p(V, L);
  for (const ContextKey& c : ctxs)
    for (int pos = 0; pos < L; ++pos)
      for (double& z : p.row({c, pos})) z = n(gen);
  return p;
}

std::vector<double> flatten(const PolicyParams& p, const std::vector<LogitKey>& keys) {
  std::vector<double> x;
  for (const LogitKey& k : keys)
    for (double z : p.rows().at(k)) x.push_back(z);
  return x;
}

PolicyParams rebuild(const PolicyParams& shape, const std::vector<LogitKey>& keys, const std::vector<double>& x) {
  PolicyParams q = shape;
  std::size_t i = 0;
  for (const LogitKey& k : keys)
    for (double& z : q.row(k)) z = x[i++];
  return q;
}

std::vector<double> dense(const LogitMap& g, const std::vector<LogitKey>& keys, int V) {
  std::vector<double> out;
  for (const LogitKey& k : keys) {
    auto it = g.find(k);
    for (int v = 0; v < V; ++v) out.push_back(it == g.end() ? 0.0 : it->second[static_cast<std::size_t>(v)]);
  }
  return out;
}

// 2. Analytic gradients against central differences.
Result gradients() {
  std::mt19937_64 gen(2);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const ContextKey root = root_context(0);
  const ContextKey child{0, digest_tokens({1}), "1"};

  int seq_instances = 0;
  double seq_worst = 0.0;
  for (int trial = 0; trial < 150; ++trial) {
    const int V = 2 + static_cast<int>(gen() % 4), L = 1 + static_cast<int>(gen() % 4);
    PolicyParams p = random_params(gen, V, L, {root, child}, 1.5);
    const ContextKey& ctx = trial % 2 ? child : root;
    Tokens y;
    for (int t = 0; t < L; ++t) y.push_back(static_cast<Token>(gen() % V));
    std::vector<LogitKey> keys;
    for (const auto& [k, row] : p.rows()) keys.push_back(k);
    auto fd = oracle::central_diff([&](const std::vector<double>& x) { return sequence_logprob(rebuild(p, keys, x), ctx, y); },
                                   flatten(p, keys));
    seq_worst = std::max(seq_worst, oracle::relative_error(dense(grad_sequence_logprob(p, ctx, y), keys, V), fd));
    ++seq_instances;
  }

  int sur_instances = 0, clipped_instances = 0, skipped = 0;
  double sur_worst = 0.0;
  for (int trial = 0; sur_instances < 150 && trial < 2000; ++trial) {
    const int V = 2 + static_cast<int>(gen() % 3), L = 1 + static_cast<int>(gen() % 3);
    PolicyParams old = random_params(gen, V, L, {root, child}, 1.0);
    PolicyParams theta = old;
    std::normal_distribution<double> step(0.0, 0.4);
    for (auto& [k, row] : old.rows())
      for (double& z : theta.row(k)) z += step(gen);
    PolicyParams ref = random_params(gen, V, L, {root, child}, 0.5);
    TrainConfig cfg;
    cfg.eps_low = 0.1 + 0.2 * unit(gen);
    cfg.eps_high = 0.1 + 0.2 * unit(gen);
    cfg.kl_beta = trial % 2 ? 0.3 * unit(gen) : 0.0;

    std::vector<RolloutSample> batch;
    const int group = 2 + static_cast<int>(gen() % 4);
    for (int i = 0; i < group; ++i) {
      RolloutSample s;
      s.context = i % 2 ? child : root;
      for (int t = 0; t < L; ++t) s.tokens.push_back(static_cast<Token>(gen() % V));
      s.old_logprobs = token_sequence_logprobs(old, s.context, s.tokens);
      s.advantage = 2.0 * unit(gen) - 1.0;
      s.group_size = s.agent_group_size = group;
      batch.push_back(std::move(s));
    }
    bool near_kink = false, clipped = false;
    for (const RolloutSample& s : batch) {
      auto lp = token_sequence_logprobs(theta, s.context, s.tokens);
      for (std::size_t t = 0; t < s.tokens.size(); ++t) {
        const double w = std::exp(lp[t] - s.old_logprobs[t]);
        if (std::abs(w - (1 - cfg.eps_low)) < 1e-3 || std::abs(w - (1 + cfg.eps_high)) < 1e-3) near_kink = true;
        if ((s.advantage > 0 && w > 1 + cfg.eps_high) || (s.advantage < 0 && w < 1 - cfg.eps_low)) clipped = true;
      }
    }
    if (near_kink) {
      ++skipped;
      continue;
    }
    AgentPolicy agent(ref);
    agent.set_params(theta);
    std::vector<LogitKey> keys;
    for (const auto& [k, row] : theta.rows()) keys.push_back(k);
    auto fd = oracle::central_diff(
        [&](const std::vector<double>& x) {
          AgentPolicy a = agent;
          a.set_params(rebuild(theta, keys, x));
          return surrogate_objective(batch, a, cfg).objective;
        },
        flatten(theta, keys));
    sur_worst = std::max(sur_worst, oracle::relative_error(dense(surrogate_objective(batch, agent, cfg).gradient, keys, V), fd));
    ++sur_instances;
    clipped_instances += clipped;
  }
  Result r;
  r.pass = seq_instances >= kMinGradInstances && sur_instances >= kMinGradInstances && clipped_instances > 0 &&
           seq_worst < kGradTol && sur_worst < kGradTol;
  r.detail = "log-prob " + std::to_string(seq_instances) + " instances max rel " + fmt("%.2e", seq_worst) +
             "; surrogate " + std::to_string(sur_instances) + " instances (" + std::to_string(clipped_instances) +
             " with clipped tokens, " + std::to_string(skipped) + " kinks skipped) max rel " + fmt("%.2e", sur_worst);
  return r;
}

void partitions(int n, int max_part, std::vector<int>& cur, const std::function<void(const std::vector<int>&)>& f) {
  if (n == 0) {
    f(cur);
    return;
  }
  for (int p = std::min(n, max_part); p >= 1; --p) {
    cur.push_back(p);
    partitions(n - p, p, cur, f);
    cur.pop_back();
  }
}

// 3. Diversity metrics.
Result diversity_exactness() {
  int profiles = 0, evaluations = 0;
  double worst = 0.0;
  bool endpoints = true, ea_ends = true;
  std::vector<int> cur;
  for (int n = 1; n <= 8; ++n)
    partitions(n, n, cur, [&](const std::vector<int>& sizes) {
      ClusterProfile p{sizes};
      for (int k = 1; k <= n; ++k) {
        worst = std::max(worst, std::abs(da_at_k(p, k) - oracle::brute_da_at_k(sizes, k)));
        ++evaluations;
      }
      endpoints = endpoints && da_at_k(p, 1) == 1.0 && da_at_k(p, n) == static_cast<double>(p.clusters());
      const bool uniform = std::all_of(sizes.begin(), sizes.end(), [&](int s) { return s == sizes[0]; });
      if (p.clusters() == 1) ea_ends = ea_ends && effective_algorithms(p) == 1.0;
      if (uniform) ea_ends = ea_ends && effective_algorithms(p) == static_cast<double>(p.clusters());
      ++profiles;
    });
  // Worked NAUADC values, evaluated by hand.
  bool worked = nauadc({{1, 1}}, 2) == 3.0 && nauadc({{1, 1}}, 2, true) == 2.0;
  for (int k = 2; k <= 4; ++k) worked = worked && std::abs(nauadc({{4}}, k) - static_cast<double>(k) / (k - 1)) < 1e-12;
  // {3,2,1} at K_max = 3: DA@2 = 3 - (C(3,2)+C(4,2)+C(5,2))/C(6,2) = 26/15, DA@3 = 3 - (1+4+10)/20 = 9/4.
  worked = worked && std::abs(nauadc({{3, 2, 1}}, 3) - (1.0 + 26.0 / 15.0 + 9.0 / 4.0) / 2.0) < 1e-12;
  Result r;
  r.pass = worst <= 1e-12 && endpoints && ea_ends && worked && profiles == 66;
  r.detail = std::to_string(profiles) + " profiles, " + std::to_string(evaluations) + " (profile,K) pairs, max error " +
             fmt("%.2e", worst) + ", DA endpoints " + (endpoints ? "exact" : "off") + ", EA endpoints " +
             (ea_ends ? "exact" : "off") + ", NAUADC worked examples " + (worked ? "match" : "differ");
  return r;
}

// 4. Two agents with fixed rewards 0.9 and 0.1 sharing one tree.
Result bandit() {
  const double reward[2] = {0.9, 0.1};
  double freq_sum = 0.0, worst = 1.0;
  for (int seed = 1; seed <= kBanditSeeds; ++seed) {
    SelectorState state(2);
    SearchTree tree(0);
    Rng rng(derive_seed(static_cast<std::uint64_t>(seed), "bandit"));
    int better = 0;
    for (int expansion = 1; expansion <= 1000; ++expansion) {
      ExpansionChoice c = choose_expansion(state, tree, rng);
      const double r = reward[c.agent_id];
      NodeId id = tree.append_node(c.anchor_node_id, c.agent_id, {}, r, FeedbackRecord::from_flags({true}));
      state.on_node_appended(c.agent_id, id);
      update_posteriors(state, c, r);
      if (expansion > 500) better += c.agent_id == 0;
    }
    const double f = better / 500.0;
    freq_sum += f;
    worst = std::min(worst, f);
  }
  const double mean = freq_sum / kBanditSeeds;
  return {mean > kBetterArmFloor, "better-arm frequency over expansions 501-1000: mean " + fmt("%.4f", mean) +
                                      " over " + std::to_string(kBanditSeeds) + " seeds (worst seed " +
                                      fmt("%.4f", worst) + "), floor " + fmt("%.2f", kBetterArmFloor)};
}

// Fixed 32 STRING_MATCH + 16 EXPR_SYNTH suite.
std::vector<Task> comparison_suite() {
  TasksetSpec spec;
  spec.string_match = {32, 4, 6, 3, 3};
  spec.expr_synth = {16, 2, 4, 8, 3, 3};
  Rng rng(20251016);
  return generate_taskset(spec, rng);
}

TrainConfig comparison_config(Mode mode, std::uint64_t seed) {
  TrainConfig c;
  c.mode = mode;
  c.num_agents = mode == Mode::kMarsTree ? 2 : 1;
  c.n_budget = 8;
  c.steps = 300;
  c.eval_every = 300;
  c.tasks_per_step = 32;
  c.learning_rate = 10.0;
  c.shaping = {0.4, 0.5};
  c.seed = seed;
  return c;
}

// 5. MARS_TREE(2) >= RS2_TREE >= GRPO_PARALLEL on final Pass@1.
Result comparison() {
  auto tasks = comparison_suite();
  struct Score {
    double p1 = 0.0, mcts = 0.0;
  };
  auto at_least = [](const Score& a, const Score& b) {
    if (a.p1 != b.p1) return a.p1 > b.p1;
    return a.mcts >= b.mcts;
  };
  std::map<Mode, Score> s;
  const int seeds = 5;
  for (Mode m : {Mode::kGrpoParallel, Mode::kRs2Tree, Mode::kMarsTree}) {
    for (int seed = 1; seed <= seeds; ++seed) {
      ExperimentResult res = run_experiment(comparison_config(m, static_cast<std::uint64_t>(seed)), tasks);
      s[m].p1 += res.records.back().pass_at_1 / seeds;
      s[m].mcts += res.records.back().pass_at_1_mcts / seeds;
    }
  }
  const Score mars = s[Mode::kMarsTree], rs2 = s[Mode::kRs2Tree], grpo = s[Mode::kGrpoParallel];
  const bool order = at_least(mars, rs2) && at_least(rs2, grpo);
  const bool margin = mars.p1 - grpo.p1 > kMarsOverGrpoMargin ||
                      (mars.p1 == grpo.p1 && kMarsOverGrpoMargin == 0.0 && mars.mcts > grpo.mcts);
  auto show = [](const char* name, const Score& x) {
    return std::string(name) + " " + fmt("%.4f", x.p1) + " (mcts " + fmt("%.4f", x.mcts) + ")";
  };
  return {order && margin, "mean Pass@1 over 5 seeds: " + show("MARS_TREE(2)", mars) + ", " + show("RS2_TREE", rs2) +
                               ", " + show("GRPO_PARALLEL", grpo) + "; MARS-GRPO " + fmt("%+.4f", mars.p1 - grpo.p1) +
                               " vs margin " + fmt("%.2f", kMarsOverGrpoMargin)};
}

// 6. Shaping on sparse EXPR_SYNTH rewards.
Result shaping_stability() {
  TasksetSpec spec;
  spec.expr_synth = {16, 2, 4, 8, 3, 3};
  Rng trng(7);
  auto tasks = generate_taskset(spec, trng);
  struct Run {
    int median_hit = 0;
    double jitter = 0.0;
    std::vector<int> hits;
  };
  auto measure = [&](double gamma) {
    Run out;
    const int seeds = 5;
    for (int seed = 1; seed <= seeds; ++seed) {
      TrainConfig c;
      c.mode = Mode::kRs2Tree;
      c.reward = RewardGranularity::kBinary;
      c.steps = 300;
      c.eval_every = 5;
      c.eval_tree_search = false;
      c.tasks_per_step = 32;
      c.learning_rate = 10.0;
      c.shaping = {0.4, gamma};
      c.seed = static_cast<std::uint64_t>(seed);
      ExperimentResult res = run_experiment(c, tasks);
      int hit = c.steps + 1;  // never reached
      for (const MetricsRecord& rec : res.records)
        if (rec.mean_reward() >= kRewardThreshold) {
          hit = rec.step;
          break;
        }
      out.hits.push_back(hit);
      std::vector<double> diffs;
      for (std::size_t i = 1; i < res.records.size(); ++i)
        diffs.push_back(res.records[i].pass_at_1 - res.records[i - 1].pass_at_1);
      const double sd = population_std(diffs);
      out.jitter += sd * sd / seeds;
    }
    std::vector<int> sorted = out.hits;
    std::sort(sorted.begin(), sorted.end());
    out.median_hit = sorted[sorted.size() / 2];
    return out;
  };
  Run shaped = measure(0.5), plain = measure(0.0);
  auto hits = [](const Run& r) {
    std::string s;
    for (int h : r.hits) s += (s.empty() ? "" : ",") + std::to_string(h);
    return s;
  };
  const bool reached = shaped.median_hit <= 300;
  return {reached && shaped.median_hit <= plain.median_hit && shaped.jitter <= plain.jitter,
          "steps to reward 0.9 (median): gamma=0.5 " + std::to_string(shaped.median_hit) + " [" + hits(shaped) +
              "] vs gamma=0 " + std::to_string(plain.median_hit) + " [" + hits(plain) +
              "]; step-to-step Pass@1 variance " + fmt("%.3e", shaped.jitter) + " vs " + fmt("%.3e", plain.jitter)};
}

// 7. Latest-wins selection and the RS2/MARS(1) degeneracy.
Result invariants() {
  std::mt19937_64 gen(7);
  int trees = 0, wrong = 0;
  for (int trial = 0; trial < kLatestWinsTrees; ++trial) {
    oracle::FlatTree f = oracle::random_flat_tree(gen, 40);
    std::vector<SolutionOutcome> outs;
    for (std::size_t v = 1; v < f.parent.size(); ++v)
      outs.push_back({static_cast<int>(v), gen() % 3 == 0, gen() % 2 == 0});
    std::shuffle(outs.begin(), outs.end(), gen);
    MctsSelection s = select_latest_wins(outs);
    int best = -1, latest = -1;
    for (const auto& o : outs) {
      latest = std::max(latest, o.index);
      if (o.passed_all_public) best = std::max(best, o.index);
    }
    wrong += s.index != (best >= 0 ? best : latest);
    ++trees;
  }

  TasksetSpec spec;
  spec.string_match = {8, 4, 6, 3, 3};
  spec.expr_synth = {4, 2, 4, 8, 3, 3};
  Rng trng(3);
  auto tasks = generate_taskset(spec, trng);
  TrainConfig a = comparison_config(Mode::kRs2Tree, 9);
  a.steps = 40;
  a.eval_every = 10;
  a.tasks_per_step = 8;
  TrainConfig b = a;
  b.mode = Mode::kMarsTree;
  std::string trees_a, trees_b;
  RunHooks ha, hb;
  ha.on_tree = [&](int, const SearchTree& t) { trees_a += t.to_jsonl(); };
  hb.on_tree = [&](int, const SearchTree& t) { trees_b += t.to_jsonl(); };
  ExperimentResult ra = run_experiment(a, tasks, ha), rb = run_experiment(b, tasks, hb);
  bool identical = ra.records.size() == rb.records.size() && trees_a == trees_b &&
                   ra.agents[0].params() == rb.agents[0].params() && ra.shape_calls == rb.shape_calls;
  for (std::size_t i = 0; identical && i < ra.records.size(); ++i) {
    MetricsRecord x = ra.records[i];
    x.mode = Mode::kMarsTree;
    identical = x.to_json("", 0) == rb.records[i].to_json("", 0);
  }
  return {wrong == 0 && trees == kLatestWinsTrees && identical,
          std::to_string(trees) + " random trees, " + std::to_string(wrong) + " latest-wins mismatches; RS2_TREE vs " +
              "MARS_TREE(1): records, trees and parameters " + (identical ? "bit-identical" : "DIFFER")};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 8. Two identical train commands, byte for byte; trained beats base under eval.
Result determinism() {
  const fs::path dir = fs::temp_directory_path() / "mars_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::ofstream(dir / "config.yaml") << "mode: MARS_TREE\n"
                                        "seed: 3\n"
                                        "steps: 300\n"
                                        "n_budget: 8\n"
                                        "tasks_per_step: 32\n"
                                        "agents: {count: 2}\n"
                                        "optim: {learning_rate: 10}\n"
                                        "shaping: {lambda: 0.4, gamma: 0.5}\n"
                                        "taskset:\n"
                                        "  seed: 20251016\n"
                                        "  string_match: {count: 32, vocab: 4, length: 6, public_tests: 3, private_tests: 3}\n"
                                        "  expr_synth: {count: 16, max_const: 2, length: 4, input_count: 8, public_tests: 3, private_tests: 3}\n"
                                        "eval: {every: 50, budget: 8}\n"
                                        "output: {checkpoint_every: 100, dump_trees: false}\n";
  std::ostringstream out, err;
  int codes = 0;
  for (const char* run : {"a", "b"}) {
    TrainOptions o;
    o.config_path = (dir / "config.yaml").string();
    o.overrides = {"seed=7"};
    o.out_dir = (dir / run).string();
    codes += cmd_train(o, out, err);
  }
  bool same = codes == 0;
  int files = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir / "a")) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), dir / "a");
    same = same && slurp(e.path()) == slurp(dir / "b" / rel);
    ++files;
  }
  bool stamped = codes == 0;
  std::istringstream lines(slurp(dir / "a/metrics.jsonl"));
  for (std::string line; stamped && std::getline(lines, line);) {
    auto j = nlohmann::json::parse(line);
    stamped = j.contains("config_hash") && j["seed"] == 7;
  }
  const bool streams = fs::exists(dir / "a/streams.json");

  // Base (initial) against trained checkpoints on the same taskset and seed.
  auto eval_pass = [&](const char* stage) {
    EvalOptions e;
    for (int j = 0; j < 2; ++j) e.checkpoints.push_back((dir / "a/checkpoints" / ("agent" + std::to_string(j) + stage)).string());
    e.taskset_path = (dir / "a/taskset.jsonl").string();
    e.budget = 8;
    e.seed = 5;
    std::ostringstream o, er;
    if (cmd_eval(e, o, er) != kExitOk) return -1.0;
    return nlohmann::json::parse(o.str())["pass_at_1"].get<double>();
  };
  const double base = eval_pass("_init.json"), trained = eval_pass("_final.json");
  fs::remove_all(dir);
  return {same && stamped && streams && files > 0 && base >= 0.0 && trained >= base,
          std::to_string(files) + " output files " + (same ? "byte-identical" : "DIFFER") + " across two runs" +
              ", records stamped " + (stamped ? "yes" : "no") + ", stream log " + (streams ? "written" : "missing") +
              "; eval Pass@1 base " + fmt("%.4f", base) + " -> trained " + fmt("%.4f", trained)};
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) {
      only = std::atoi(argv[++i]);
    } else {
      std::fprintf(stderr, "usage: %s [--only N]\n", argv[0]);
      return 1;
    }
  }
  const std::vector<Criterion> criteria = {
      {1, "credit-calculus oracle suite", 10, credit_calculus},
      {2, "gradient correctness", 60, gradients},
      {3, "diversity-metric exactness", 10, diversity_exactness},
      {4, "bandit behavior", 30, bandit},
      {5, "MARS_TREE(2) >= RS2_TREE >= GRPO_PARALLEL", 900, comparison},
      {6, "reward-shaping stability", 600, shaping_stability},
      {7, "latest-wins and mode degeneracy", 30, invariants},
      {8, "end-to-end determinism", 600, determinism},
  };
  if (only < 0 || only > static_cast<int>(criteria.size())) {
    std::fprintf(stderr, "no criterion %d\n", only);
    return 1;
  }
  int failed = 0;
  for (const Criterion& c : criteria) {
    if (only && c.id != only) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Result r;
    try {
      r = c.run();
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.seconds_limit;
    const bool pass = r.pass && in_time;
    failed += !pass;
    std::printf("[%s] %d %s: %s; %.1f s (limit %.0f s)%s\n", pass ? "PASS" : "FAIL", c.id, c.name, r.detail.c_str(), secs,
                c.seconds_limit, in_time ? "" : " over time");
    std::fflush(stdout);
  }
  return failed ? 1 : 0;
}
