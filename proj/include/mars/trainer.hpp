#ifndef MARS_TRAINER_HPP_
#define MARS_TRAINER_HPP_

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mars/agent_selector.hpp"
#include "mars/credit_assignment.hpp"
#include "mars/metrics.hpp"
#include "mars/search_tree.hpp"
#include "mars/task_envs.hpp"
#include "mars/toy_policy.hpp"

namespace mars {

enum class Mode { kGrpoParallel, kMarsTree, kRs2Tree };
enum class RewardGranularity { kFraction, kBinary };

const char* to_string(Mode m);
Mode parse_mode(const std::string& s);
const char* to_string(RewardGranularity g);
RewardGranularity parse_reward_granularity(const std::string& s);

inline bool is_tree_mode(Mode m) { return m != Mode::kGrpoParallel; }

struct TrainConfig {
  Mode mode = Mode::kMarsTree;
  int num_agents = 1;
  std::vector<std::uint64_t> agent_seeds;  // one per agent; empty derives from seed
  double init_scale = 0.0;

  int n_budget = 8;            // expansions (or parallel samples) per task per rollout
  double eps_low = 0.2;
  double eps_high = 0.2;
  double kl_beta = 0.0;
  double learning_rate = 1.0;
  int buffer_threshold = 8;
  bool per_agent_renorm = false;  // extension: divide by |T_j(q)| instead of N
  ShapingConfig shaping;
  std::optional<LengthPenaltyConfig> length_penalty;
  RewardGranularity reward = RewardGranularity::kFraction;

  int steps = 100;
  int tasks_per_step = 8;
  int eval_every = 10;
  int eval_budget = 8;
  bool eval_tree_search = true;  // off: records carry only the exact per-agent metrics
  std::uint64_t seed = 0;

  bool operator==(const TrainConfig&) const = default;

  // Agents the mode actually trains (GRPO_PARALLEL and RS2_TREE use one).
  int effective_agents() const { return mode == Mode::kMarsTree ? num_agents : 1; }
  std::uint64_t agent_seed(int agent) const;
  void validate() const;  // ConfigError naming the offending field
};

struct RolloutSample {
  int agent_id = 0;
  int task_id = 0;
  ContextKey context;
  Tokens tokens;
  double advantage = 0.0;
  std::vector<double> old_logprobs;
  int group_size = 0;        // N of the tree / parallel group the sample came from
  int agent_group_size = 0;  // |T_j(q)|: this agent's nodes in that group
};

struct AgentBuffer {
  int agent_id = 0;
  std::deque<RolloutSample> samples;
  int update_count = 0;
};

// A rollout tree plus, per node id, the context it was generated under and
// the θ_old token log-probabilities of its solution.
struct TreeRollout {
  SearchTree tree;
  std::vector<ContextKey> contexts;
  std::vector<std::vector<double>> old_logprobs;
  std::vector<std::string> trace;  // selector trace lines when requested
};

struct ParallelSample {
  Tokens solution;
  double reward = 0.0;        // reward used for credit (granularity + length penalty)
  double raw_reward = 0.0;    // TRAIN_ALL reward before the penalty
  EvalResult eval;
  std::vector<double> old_logprobs;
};

// Task reward under the configured granularity, in [0,1].
double train_reward(const EvalResult& train_eval, RewardGranularity g);

// N expansions of a shared tree. Every expansion: Thompson-select (agent,
// anchor), sample under the anchor's context, score on TRAIN_ALL, attach
// PUBLIC feedback, append, update posteriors.
TreeRollout rollout_tree(const Task& task, std::span<const AgentPolicy> agents,
                         SelectorState& selector, const TrainConfig& config, Rng& rng,
                         bool trace = false);

// N i.i.d. root-context samples from one agent.
std::vector<ParallelSample> rollout_parallel(const Task& task, const AgentPolicy& agent,
                                             const TrainConfig& config, Rng& rng);

enum class FilterDecision { kKeep, kDrop };
// DROP when every reward is 1 or every reward is 0. DomainError on empty input.
FilterDecision filter_task(std::span<const double> rewards);

struct SurrogateResult {
  double objective = 0.0;
  LogitMap gradient;          // ascent direction w.r.t. stored rows
  double clip_fraction = 0.0; // fraction of tokens on the clipped branch
  double mean_kl = 0.0;       // mean per-token KL(θ || ref)
  int tokens = 0;
};

// Clipped token-level surrogate with exact per-token KL penalty:
//   sum_s c_s sum_t [min(w A, clip(w, 1-eps_low, 1+eps_high) A) - beta KL_t]
// with c_s = 1/(N |o_s|) and w = exp(log π_θ - log π_old). Gradient flows
// through w only where the unclipped branch attains the min.
SurrogateResult surrogate_objective(std::span<const RolloutSample> samples,
                                    const AgentPolicy& agent, const TrainConfig& config);

struct UpdateStats {
  std::vector<int> updated_agents;
  double clip_fraction_sum = 0.0;
  double kl_sum = 0.0;
  int tokens = 0;
};

// One gradient-ascent step for every agent whose buffer holds at least
// buffer_threshold samples, each on exactly the first buffer_threshold
// samples it drains.
UpdateStats train_step_async(std::vector<AgentBuffer>& buffers, std::vector<AgentPolicy>& agents,
                             const TrainConfig& config);

// Evaluation-time results for one task.
struct TaskEval {
  std::vector<ExpectedOutcome> per_agent;  // exact root-context expectations
  int pass_at_1_mcts = 0;
  bool mcts_fallback = false;
  int pass_at_n = 0;
  std::vector<Tokens> solutions;           // tree-search solutions
  std::vector<SolutionOutcome> outcomes;
  std::vector<int> agents;                 // producing agent per solution
};

// Exact per-agent Pass@1 plus a tree-search inference run with all agents.
TaskEval evaluate_task(const Task& task, std::span<const AgentPolicy> agents, int budget,
                       std::uint64_t seed, std::vector<std::string>* trace = nullptr);

struct MetricsRecord {
  int step = 0;
  Mode mode = Mode::kMarsTree;
  RewardGranularity reward = RewardGranularity::kFraction;
  std::vector<double> agent_mean_reward;  // exact expected TRAIN_ALL reward per agent
  std::vector<double> agent_pass_at_1;    // exact expected Pass@1 per agent
  double pass_at_1 = 0.0;                 // mean over agents
  bool tree_search = true;                // whether the three fields below were measured
  double pass_at_1_mcts = 0.0;
  int mcts_fallbacks = 0;                 // tasks decided by the no-public-pass fallback
  double pass_at_n = 0.0;
  // Statistics of training rollouts since the previous record.
  double raw_reward_mean = 0.0;
  double raw_reward_std = 0.0;
  double shaped_reward_mean = 0.0;
  double shaped_reward_std = 0.0;
  double clip_fraction = 0.0;
  double mean_kl = 0.0;
  int rollouts = 0;
  int filtered = 0;
  int updates = 0;
  std::vector<int> agent_samples;         // samples each agent collected so far

  double mean_reward() const;
  // Single-line JSON. Shaping statistics are omitted in GRPO_PARALLEL, tree
  // search results when they were not measured.
  std::string to_json(const std::string& config_hash, std::uint64_t seed) const;
};

struct RunHooks {
  std::function<void(const MetricsRecord&)> on_metrics;
  std::function<void(int step, const SearchTree&)> on_tree;
  std::function<void(int step, int agent, const PolicyParams&)> on_checkpoint;
  int checkpoint_every = 0;
  bool trace_selector = false;
  std::function<void(const std::string&)> on_trace;
};

struct ExperimentResult {
  std::vector<MetricsRecord> records;
  std::vector<AgentPolicy> agents;
  std::vector<AgentBuffer> buffers;
  int shape_calls = 0;  // instrumentation: tree shaping invocations
};

// Sample tasks, filter, roll out, assign credit, buffer, update; emits a
// record at step 0, every eval_every steps and after the last step.
ExperimentResult run_experiment(const TrainConfig& config, const std::vector<Task>& tasks,
                                const RunHooks& hooks = {});

}  // namespace mars

#endif  // MARS_TRAINER_HPP_
