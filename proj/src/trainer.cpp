#include "mars/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <map>
#include <numeric>

#include "mars/errors.hpp"

namespace mars {

const char* to_string(Mode m) {
  switch (m) {
    case Mode::kGrpoParallel: return "GRPO_PARALLEL";
    case Mode::kMarsTree: return "MARS_TREE";
    case Mode::kRs2Tree: return "RS2_TREE";
  }
  return "?";
}

Mode parse_mode(const std::string& s) {
  if (s == "GRPO_PARALLEL") return Mode::kGrpoParallel;
  if (s == "MARS_TREE") return Mode::kMarsTree;
  if (s == "RS2_TREE") return Mode::kRs2Tree;
  throw ConfigError("unknown mode '" + s + "' (expected GRPO_PARALLEL, MARS_TREE or RS2_TREE)");
}

const char* to_string(RewardGranularity g) {
  return g == RewardGranularity::kFraction ? "fraction" : "binary";
}

RewardGranularity parse_reward_granularity(const std::string& s) {
  if (s == "fraction") return RewardGranularity::kFraction;
  if (s == "binary") return RewardGranularity::kBinary;
  throw ConfigError("unknown reward granularity '" + s + "' (expected fraction or binary)");
}

std::uint64_t TrainConfig::agent_seed(int agent) const {
  if (!agent_seeds.empty()) return agent_seeds.at(static_cast<std::size_t>(agent));
  return derive_seed(seed, "agent_init", {static_cast<std::uint64_t>(agent)});
}

void TrainConfig::validate() const {
  if (num_agents < 1) throw ConfigError("agents.count must be at least 1");
  if (mode == Mode::kRs2Tree && num_agents != 1)
    throw ConfigError("agents.count must be 1 in RS2_TREE mode");
  if (mode == Mode::kGrpoParallel && num_agents != 1)
    throw ConfigError("agents.count must be 1 in GRPO_PARALLEL mode");
  if (!agent_seeds.empty() && static_cast<int>(agent_seeds.size()) != num_agents)
    throw ConfigError("agents.seeds must list one seed per agent");
  if (!(init_scale >= 0.0)) throw ConfigError("agents.init_scale must be non-negative");
  if (n_budget < 2) throw ConfigError("n_budget must be at least 2");
  if (!(eps_low > 0.0) || !(eps_low < 1.0)) throw ConfigError("optim.eps_low must lie in (0,1)");
  if (!(eps_high > 0.0)) throw ConfigError("optim.eps_high must be positive");
  if (!(kl_beta >= 0.0)) throw ConfigError("optim.kl_beta must be non-negative");
  if (!(learning_rate > 0.0)) throw ConfigError("optim.learning_rate must be positive");
  if (buffer_threshold < 1) throw ConfigError("optim.buffer_threshold must be at least 1");
  shaping.validate();
  if (length_penalty) length_penalty->validate();
  if (steps < 0) throw ConfigError("steps must be non-negative");
  if (tasks_per_step < 1) throw ConfigError("tasks_per_step must be at least 1");
  if (eval_every < 1) throw ConfigError("eval.every must be at least 1");
  if (eval_budget < 1) throw ConfigError("eval.budget must be at least 1");
}

double train_reward(const EvalResult& train_eval, RewardGranularity g) {
  if (g == RewardGranularity::kBinary) return train_eval.fully_correct() ? 1.0 : 0.0;
  return train_eval.reward;
}

namespace {

double length_penalty_for(const TrainConfig& config, std::size_t length) {
  return config.length_penalty ? overlong_penalty(static_cast<int>(length), *config.length_penalty)
                               : 0.0;
}

}  // namespace

namespace {

// Tree growth shared by training rollouts (sampling θ_old) and evaluation
// (sampling θ). samplers[j] is agent j's sampling policy.
TreeRollout grow_tree(const Task& task, const std::vector<const PolicyParams*>& samplers,
                      SelectorState& selector, const TrainConfig& config, Rng& rng, bool trace) {
  if (samplers.empty()) throw ConfigError("tree rollout needs at least one agent");
  if (selector.num_agents() != static_cast<int>(samplers.size()))
    throw ConfigError("selector and agent list disagree on the agent count");
  if (config.n_budget < 1) throw ConfigError("n_budget must be positive");
  TreeRollout out{SearchTree(task.task_id), {root_context(task.task_id)}, {{}}, {}};
  for (int i = 0; i < config.n_budget; ++i) {
    ExpansionChoice choice = choose_expansion(selector, out.tree, rng);
    const PolicyParams& policy = *samplers[static_cast<std::size_t>(choice.agent_id)];
    ContextKey ctx = context_for_anchor(task.task_id, out.tree.node(choice.anchor_node_id));
    Tokens y = sample_sequence(policy, ctx, rng, task.gen_length);
    const double reward = train_reward(evaluate(task, y, Split::kTrainAll), config.reward);
    FeedbackRecord fb = feedback_for(task, evaluate(task, y, Split::kPublic));
    std::vector<double> old_lp = token_sequence_logprobs(policy, ctx, y);
    const double penalty = length_penalty_for(config, y.size());
    NodeId id = out.tree.append_node(choice.anchor_node_id, choice.agent_id, std::move(y), reward,
                                     std::move(fb), penalty);
    selector.on_node_appended(choice.agent_id, id);
    update_posteriors(selector, choice, reward);
    if (trace) out.trace.push_back(trace_record(selector, choice, task.task_id, id));
    out.contexts.push_back(std::move(ctx));
    out.old_logprobs.push_back(std::move(old_lp));
  }
  return out;
}

}  // namespace

TreeRollout rollout_tree(const Task& task, std::span<const AgentPolicy> agents,
                         SelectorState& selector, const TrainConfig& config, Rng& rng,
                         bool trace) {
  std::vector<const PolicyParams*> samplers;
  for (const AgentPolicy& a : agents) samplers.push_back(&a.old_params());
  return grow_tree(task, samplers, selector, config, rng, trace);
}

std::vector<ParallelSample> rollout_parallel(const Task& task, const AgentPolicy& agent,
                                             const TrainConfig& config, Rng& rng) {
  const ContextKey ctx = root_context(task.task_id);
  std::vector<ParallelSample> out;
  out.reserve(static_cast<std::size_t>(config.n_budget));
  for (int i = 0; i < config.n_budget; ++i) {
    ParallelSample s;
    s.solution = sample_sequence(agent.old_params(), ctx, rng, task.gen_length);
    s.eval = evaluate(task, s.solution, Split::kTrainAll);
    s.raw_reward = train_reward(s.eval, config.reward);
    s.reward = s.raw_reward + length_penalty_for(config, s.solution.size());
    s.old_logprobs = token_sequence_logprobs(agent.old_params(), ctx, s.solution);
    out.push_back(std::move(s));
  }
  return out;
}

FilterDecision filter_task(std::span<const double> rewards) {
  if (rewards.empty()) throw DomainError("filter over an empty reward group");
  bool all_one = std::all_of(rewards.begin(), rewards.end(), [](double r) { return r == 1.0; });
  bool all_zero = std::all_of(rewards.begin(), rewards.end(), [](double r) { return r == 0.0; });
  return (all_one || all_zero) ? FilterDecision::kDrop : FilterDecision::kKeep;
}

SurrogateResult surrogate_objective(std::span<const RolloutSample> samples,
                                    const AgentPolicy& agent, const TrainConfig& config) {
  SurrogateResult res;
  if (samples.empty()) return res;
  const PolicyParams& theta = agent.params();
  const PolicyParams& ref = agent.ref_params();
  const int agent_id = samples.front().agent_id;
  int clipped_tokens = 0;
  double kl_total = 0.0;

  for (const RolloutSample& s : samples) {
    if (s.agent_id != agent_id) throw ValidationError("surrogate batch mixes agents");
    if (s.old_logprobs.size() != s.tokens.size())
      throw ValidationError("sample is missing old log-probabilities");
    if (!std::isfinite(s.advantage)) throw ValidationError("non-finite advantage");
    if (s.tokens.empty()) continue;
    const int denom = config.per_agent_renorm ? s.agent_group_size : s.group_size;
    if (denom <= 0) throw ValidationError("sample carries no group size");
    const double c = 1.0 / (static_cast<double>(denom) * static_cast<double>(s.tokens.size()));
    const double adv = s.advantage;

    for (std::size_t t = 0; t < s.tokens.size(); ++t) {
      const int pos = static_cast<int>(t);
      const auto tok = static_cast<std::size_t>(s.tokens[t]);
      if (s.tokens[t] < 0 || s.tokens[t] >= theta.vocab())
        throw ValidationError("token id outside vocabulary");
      const std::vector<double> lp = log_softmax(theta.logits(s.context, pos));
      const std::vector<double> lq = log_softmax(ref.logits(s.context, pos));
      std::vector<double> p(lp.size());
      for (std::size_t v = 0; v < lp.size(); ++v) p[v] = std::exp(lp[v]);

      const double w = std::exp(lp[tok] - s.old_logprobs[t]);
      const double unclipped = w * adv;
      const double clipped = std::clamp(w, 1.0 - config.eps_low, 1.0 + config.eps_high) * adv;
      std::vector<double> g(lp.size(), 0.0);
      if (unclipped <= clipped) {
        res.objective += c * unclipped;
        // d(w A)/dz = A w (onehot - p)
        const double coef = c * adv * w;
        for (std::size_t v = 0; v < g.size(); ++v) g[v] = -coef * p[v];
        g[tok] += coef;
      } else {
        res.objective += c * clipped;
        ++clipped_tokens;
      }

      double kl = 0.0;
      for (std::size_t v = 0; v < lp.size(); ++v) kl += p[v] * (lp[v] - lq[v]);
      kl_total += kl;
      if (config.kl_beta > 0.0) {
        res.objective -= c * config.kl_beta * kl;
        for (std::size_t v = 0; v < g.size(); ++v)
          g[v] -= c * config.kl_beta * p[v] * (lp[v] - lq[v] - kl);
      }

      for (const LogitKey& key : touched_rows(s.context, pos)) {
        auto [it, inserted] = res.gradient.try_emplace(key, g.size(), 0.0);
        for (std::size_t v = 0; v < g.size(); ++v) it->second[v] += g[v];
      }
      ++res.tokens;
    }
  }
  if (res.tokens > 0) {
    res.clip_fraction = static_cast<double>(clipped_tokens) / res.tokens;
    res.mean_kl = kl_total / res.tokens;
  }
  return res;
}

UpdateStats train_step_async(std::vector<AgentBuffer>& buffers, std::vector<AgentPolicy>& agents,
                             const TrainConfig& config) {
  UpdateStats stats;
  const auto threshold = static_cast<std::size_t>(config.buffer_threshold);
  for (AgentBuffer& buf : buffers) {
    if (buf.samples.size() < threshold) continue;
    std::vector<RolloutSample> batch(std::make_move_iterator(buf.samples.begin()),
                                     std::make_move_iterator(buf.samples.begin() +
                                                             static_cast<std::ptrdiff_t>(threshold)));
    buf.samples.erase(buf.samples.begin(),
                      buf.samples.begin() + static_cast<std::ptrdiff_t>(threshold));
    AgentPolicy& agent = agents.at(static_cast<std::size_t>(buf.agent_id));
    SurrogateResult r = surrogate_objective(batch, agent, config);
    agent.apply_update(r.gradient, config.learning_rate);
    ++buf.update_count;
    stats.updated_agents.push_back(buf.agent_id);
    stats.clip_fraction_sum += r.clip_fraction * r.tokens;
    stats.kl_sum += r.mean_kl * r.tokens;
    stats.tokens += r.tokens;
  }
  return stats;
}

TaskEval evaluate_task(const Task& task, std::span<const AgentPolicy> agents, int budget,
                       std::uint64_t seed, std::vector<std::string>* trace) {
  TaskEval ev;
  std::vector<const PolicyParams*> samplers;
  for (const AgentPolicy& a : agents) {
    samplers.push_back(&a.params());
    ev.per_agent.push_back(expected_root_outcome(a.params(), task));
  }
  TrainConfig cfg;
  cfg.n_budget = budget;
  SelectorState selector(static_cast<int>(samplers.size()));
  Rng rng(seed);
  TreeRollout tr = grow_tree(task, samplers, selector, cfg, rng, trace != nullptr);
  for (const TreeNode& n : tr.tree.nodes()) {
    if (n.is_root()) continue;
    EvalResult r = evaluate(task, n.solution, Split::kTrainAll);
    ev.outcomes.push_back({n.id, r.passed_all_public, r.passed_all_private});
    ev.solutions.push_back(n.solution);
    ev.agents.push_back(*n.agent_id);
  }
  MctsSelection sel = select_latest_wins(ev.outcomes);
  ev.pass_at_1_mcts = sel.passed;
  ev.mcts_fallback = sel.fallback;
  ev.pass_at_n = pass_at_n(ev.outcomes);
  if (trace) *trace = std::move(tr.trace);
  return ev;
}

double MetricsRecord::mean_reward() const {
  if (agent_mean_reward.empty()) return 0.0;
  return std::accumulate(agent_mean_reward.begin(), agent_mean_reward.end(), 0.0) /
         static_cast<double>(agent_mean_reward.size());
}

std::string MetricsRecord::to_json(const std::string& config_hash, std::uint64_t seed) const {
  nlohmann::ordered_json j;
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  j["step"] = step;
  j["mode"] = to_string(mode);
  j["reward_granularity"] = to_string(reward);
  j["mean_reward"] = mean_reward();
  j["agent_mean_reward"] = agent_mean_reward;
  j["pass_at_1"] = pass_at_1;
  j["agent_pass_at_1"] = agent_pass_at_1;
  if (tree_search) {
    j["pass_at_1_mcts"] = pass_at_1_mcts;
    j["mcts_fallbacks"] = mcts_fallbacks;
    j["pass_at_n"] = pass_at_n;
  }
  j["raw_reward_mean"] = raw_reward_mean;
  j["raw_reward_std"] = raw_reward_std;
  if (is_tree_mode(mode)) {
    j["shaped_reward_mean"] = shaped_reward_mean;
    j["shaped_reward_std"] = shaped_reward_std;
  }
  j["clip_fraction"] = clip_fraction;
  j["mean_kl"] = mean_kl;
  j["rollouts"] = rollouts;
  j["filtered"] = filtered;
  j["updates"] = updates;
  j["agent_samples"] = agent_samples;
  return j.dump();
}

namespace {

// Accumulates training statistics between two metrics records.
struct WindowStats {
  std::vector<double> raw;
  std::vector<double> shaped;
  double clip_sum = 0.0;
  double kl_sum = 0.0;
  int tokens = 0;
  int rollouts = 0;
  int filtered = 0;
  int updates = 0;

  void absorb(const UpdateStats& u) {
    clip_sum += u.clip_fraction_sum;
    kl_sum += u.kl_sum;
    tokens += u.tokens;
    updates += static_cast<int>(u.updated_agents.size());
  }
};

MetricsRecord evaluate_point(int step, const TrainConfig& config, const std::vector<Task>& tasks,
                             const std::vector<AgentPolicy>& agents, const WindowStats& w,
                             const std::vector<int>& agent_samples) {
  MetricsRecord rec;
  rec.step = step;
  rec.mode = config.mode;
  rec.reward = config.reward;
  rec.tree_search = config.eval_tree_search;
  const std::size_t m = agents.size();
  rec.agent_mean_reward.assign(m, 0.0);
  rec.agent_pass_at_1.assign(m, 0.0);
  for (const Task& task : tasks) {
    for (std::size_t j = 0; j < m; ++j) {
      ExpectedOutcome e = expected_root_outcome(agents[j].params(), task);
      // Binary training rewards are measured as the expected pass-all indicator.
      rec.agent_mean_reward[j] += config.reward == RewardGranularity::kBinary ? e.pass_at_1 : e.train_reward;
      rec.agent_pass_at_1[j] += e.pass_at_1;
    }
    if (!config.eval_tree_search) continue;
    TaskEval ev = evaluate_task(task, agents, config.eval_budget,
                                derive_seed(config.seed, "eval",
                                            {static_cast<std::uint64_t>(step),
                                             static_cast<std::uint64_t>(task.task_id)}));
    rec.pass_at_1_mcts += ev.pass_at_1_mcts;
    rec.mcts_fallbacks += ev.mcts_fallback ? 1 : 0;
    rec.pass_at_n += ev.pass_at_n;
  }
  const double n = static_cast<double>(tasks.size());
  for (std::size_t j = 0; j < m; ++j) {
    rec.agent_mean_reward[j] /= n;
    rec.agent_pass_at_1[j] /= n;
  }
  rec.pass_at_1 = std::accumulate(rec.agent_pass_at_1.begin(), rec.agent_pass_at_1.end(), 0.0) /
                  static_cast<double>(m);
  rec.pass_at_1_mcts /= n;
  rec.pass_at_n /= n;
  if (!w.raw.empty()) {
    rec.raw_reward_mean = mean_of(w.raw);
    rec.raw_reward_std = population_std(w.raw);
  }
  if (!w.shaped.empty()) {
    rec.shaped_reward_mean = mean_of(w.shaped);
    rec.shaped_reward_std = population_std(w.shaped);
  }
  if (w.tokens > 0) {
    rec.clip_fraction = w.clip_sum / w.tokens;
    rec.mean_kl = w.kl_sum / w.tokens;
  }
  rec.rollouts = w.rollouts;
  rec.filtered = w.filtered;
  rec.updates = w.updates;
  rec.agent_samples = agent_samples;
  return rec;
}

}  // namespace

ExperimentResult run_experiment(const TrainConfig& config, const std::vector<Task>& tasks,
                                const RunHooks& hooks) {
  config.validate();
  if (tasks.empty()) throw ConfigError("taskset is empty");
  const int vocab = taskset_vocab(tasks);
  const int max_len = taskset_max_length(tasks);
  std::vector<int> task_ids;
  for (const Task& t : tasks) task_ids.push_back(t.task_id);

  ExperimentResult res;
  const int m = config.effective_agents();
  for (int j = 0; j < m; ++j) {
    res.agents.emplace_back(init_params(vocab, max_len, task_ids, config.init_scale,
                                        config.agent_seed(j)));
    res.buffers.push_back(AgentBuffer{j, {}, 0});
  }
  std::vector<int> agent_samples(static_cast<std::size_t>(m), 0);
  std::map<int, std::vector<double>> last_group;  // task id -> rewards of its latest rollout

  auto emit = [&](int step, WindowStats& w) {
    MetricsRecord rec = evaluate_point(step, config, tasks, res.agents, w, agent_samples);
    if (hooks.on_metrics) hooks.on_metrics(rec);
    res.records.push_back(std::move(rec));
    w = WindowStats{};
  };

  WindowStats window;
  emit(0, window);

  std::vector<std::size_t> order;
  std::size_t cursor = 0;
  std::uint64_t epoch = 0;
  auto next_task = [&]() -> const Task& {
    if (cursor == order.size()) {
      order.resize(tasks.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      Rng shuffle(derive_seed(config.seed, "batch", {epoch++}));
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);
      cursor = 0;
    }
    return tasks[order[cursor++]];
  };

  for (int step = 1; step <= config.steps; ++step) {
    for (int b = 0; b < config.tasks_per_step; ++b) {
      const Task& task = next_task();
      if (auto it = last_group.find(task.task_id); it != last_group.end()) {
        if (filter_task(it->second) == FilterDecision::kDrop) {
          // Skipped for this visit; the next visit samples it afresh.
          last_group.erase(it);
          ++window.filtered;
          continue;
        }
      }
      for (AgentPolicy& a : res.agents) a.snapshot();
      Rng rng(derive_seed(config.seed, "rollout",
                          {static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(task.task_id)}));
      std::vector<RolloutSample> fresh;
      std::vector<double> group_rewards;

      if (is_tree_mode(config.mode)) {
        SelectorState selector(m);
        TreeRollout tr = rollout_tree(task, res.agents, selector, config, rng, hooks.trace_selector);
        shape_tree(tr.tree, config.shaping);
        ++res.shape_calls;
        auto adv = shaped_tree_advantages(tr.tree, config.shaping.std_epsilon);
        std::vector<int> per_agent(static_cast<std::size_t>(m), 0);
        for (const TreeNode& n : tr.tree.nodes())
          if (!n.is_root()) ++per_agent[static_cast<std::size_t>(*n.agent_id)];
        for (const TreeNode& n : tr.tree.nodes()) {
          if (n.is_root()) continue;
          const auto idx = static_cast<std::size_t>(n.id);
          RolloutSample s;
          s.agent_id = *n.agent_id;
          s.task_id = task.task_id;
          s.context = tr.contexts[idx];
          s.tokens = n.solution;
          s.advantage = adv.at(n.id);
          s.old_logprobs = tr.old_logprobs[idx];
          s.group_size = static_cast<int>(tr.tree.expansion_count());
          s.agent_group_size = per_agent[static_cast<std::size_t>(s.agent_id)];
          fresh.push_back(std::move(s));
          group_rewards.push_back(*n.raw_reward);
          window.raw.push_back(*n.raw_reward);
          window.shaped.push_back(*n.shaped_reward);
        }
        if (hooks.on_tree) hooks.on_tree(step, tr.tree);
        if (hooks.on_trace)
          for (const std::string& line : tr.trace) hooks.on_trace(line);
      } else {
        auto group = rollout_parallel(task, res.agents.front(), config, rng);
        std::vector<double> credit;
        for (const auto& s : group) credit.push_back(s.reward);
        auto adv = group_advantages(credit, config.shaping.std_epsilon);
        for (std::size_t i = 0; i < group.size(); ++i) {
          RolloutSample s;
          s.agent_id = 0;
          s.task_id = task.task_id;
          s.context = root_context(task.task_id);
          s.tokens = group[i].solution;
          s.advantage = adv[i];
          s.old_logprobs = group[i].old_logprobs;
          s.group_size = static_cast<int>(group.size());
          s.agent_group_size = s.group_size;
          fresh.push_back(std::move(s));
          group_rewards.push_back(group[i].raw_reward);
          window.raw.push_back(group[i].raw_reward);
        }
      }
      last_group[task.task_id] = std::move(group_rewards);
      ++window.rollouts;
      for (RolloutSample& s : fresh) {
        ++agent_samples[static_cast<std::size_t>(s.agent_id)];
        res.buffers[static_cast<std::size_t>(s.agent_id)].samples.push_back(std::move(s));
      }
      while (true) {
        UpdateStats u = train_step_async(res.buffers, res.agents, config);
        if (u.updated_agents.empty()) break;
        window.absorb(u);
      }
    }
    if (hooks.on_checkpoint && hooks.checkpoint_every > 0 &&
        (step % hooks.checkpoint_every == 0 || step == config.steps))
      for (int j = 0; j < m; ++j) hooks.on_checkpoint(step, j, res.agents[static_cast<std::size_t>(j)].params());
    if (step % config.eval_every == 0 || step == config.steps) emit(step, window);
  }
  return res;
}

}  // namespace mars
