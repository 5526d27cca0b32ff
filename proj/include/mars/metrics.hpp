#ifndef MARS_METRICS_HPP_
#define MARS_METRICS_HPP_

#include <cstdint>
#include <map>
#include <vector>

#include "mars/rng.hpp"
#include "mars/task_envs.hpp"
#include "mars/toy_policy.hpp"

namespace mars {

// Outcome of one evaluated solution. `index` is the expansion index in a
// tree, or the sample index for parallel sampling.
struct SolutionOutcome {
  int index = 0;
  bool passed_all_public = false;
  bool passed_all_private = false;

  bool fully_correct() const { return passed_all_public && passed_all_private; }
};

// One draw from the root context; 1 iff it passes every public and private test.
int pass_at_1(const PolicyParams& policy, const Task& task, Rng& rng);

// 1 iff any outcome is fully correct. DomainError on empty input.
int pass_at_n(const std::vector<SolutionOutcome>& outcomes);

struct MctsSelection {
  int index = 0;               // selected outcome's index
  bool fallback = false;       // no outcome passed the public tests
  int passed = 0;              // selected outcome's private verdict
};

// Latest-wins: the public-passing outcome with the largest index; the
// globally latest outcome when none passes. DomainError on empty input.
MctsSelection select_latest_wins(const std::vector<SolutionOutcome>& outcomes);
int pass_at_1_mcts(const std::vector<SolutionOutcome>& outcomes);

// Exact expectations of a single root-context draw. Root positions are
// sampled independently, so STRING_MATCH factorizes; other tasks enumerate
// the V^L sequences (ValidationError above 2^22 sequences).
struct ExpectedOutcome {
  double pass_at_1 = 0.0;      // P(fully correct)
  double train_reward = 0.0;   // E[TRAIN_ALL pass fraction]
};
ExpectedOutcome expected_root_outcome(const PolicyParams& policy, const Task& task);

struct ClusterProfile {
  std::vector<int> sizes;
  int total() const;
  int clusters() const { return static_cast<int>(sizes.size()); }
  void validate() const;  // ValidationError on a non-positive size or empty profile
};

// Expected number of distinct clusters among K solutions drawn without
// replacement. Binomial ratios are evaluated in exact rational arithmetic.
double da_at_k(const ClusterProfile& profile, int k);
// exp of the Shannon entropy of the cluster-size distribution.
double effective_algorithms(const ClusterProfile& profile);
// (1/(K_max-1)) * sum_{k=1..K_max} DA@k. With `skip_first` the sum starts at
// k=2 (a variant, not the standard definition). DomainError for K_max = 1.
double nauadc(const ClusterProfile& profile, int k_max, bool skip_first = false);

// Semantic fingerprint used for clustering: STRING_MATCH solutions by exact
// tokens; EXPR_SYNTH programs by their outputs on a fixed canonical grid plus
// the multiset of operators they execute.
std::vector<std::int64_t> solution_fingerprint(const Task& task, const Tokens& solution);

// Clusters fully correct solutions; ValidationError if any is incorrect.
// Cluster order is first appearance.
ClusterProfile canonical_cluster(const std::vector<Tokens>& solutions, const Task& task,
                                 std::vector<int>* assignment = nullptr);

}  // namespace mars

#endif  // MARS_METRICS_HPP_
