#ifndef MARS_CREDIT_ASSIGNMENT_HPP_
#define MARS_CREDIT_ASSIGNMENT_HPP_

#include <map>
#include <span>
#include <vector>

#include "mars/search_tree.hpp"

namespace mars {

struct ShapingConfig {
  double lambda = 0.0;   // weight of the sibling mean against the parent reward
  double gamma = 0.0;    // shaping strength
  double std_epsilon = 1e-8;

  bool operator==(const ShapingConfig&) const = default;
  void validate() const;  // ConfigError on out-of-range knobs
};

struct LengthPenaltyConfig {
  int l_max = 0;
  int l_cache = 0;

  bool operator==(const LengthPenaltyConfig&) const = default;
  void validate() const;  // ConfigError unless 0 < l_cache < l_max
};

// Population mean and standard deviation.
double mean_of(std::span<const double> xs);
double population_std(std::span<const double> xs);

// z-scores (r - mean) / std with population std. All zeros when
// std < std_epsilon. DomainError on empty input.
std::vector<double> group_advantages(std::span<const double> rewards, double std_epsilon = 1e-8);

// (1 - lambda) * r_parent + lambda * mean(sibling rewards); the parent reward
// alone when the node has no siblings. Root children have no rewarded parent:
// their baseline is the sibling mean, or the node's own reward without
// siblings. DomainError on the root.
double mixed_baseline(const SearchTree& tree, NodeId node, double lambda);

inline double consistency_gain(double reward, double baseline) { return reward - baseline; }
inline double shaped_reward(double reward, double gain, double gamma) { return reward + gamma * gain; }

// Writes shaped_reward on every non-root node. Baselines read unshaped
// rewards, so the result does not depend on traversal order.
void shape_tree(SearchTree& tree, const ShapingConfig& config);

// z-scores of the shaped rewards pooled over all non-root nodes of the tree.
// ValidationError if any node lacks a shaped reward.
std::map<NodeId, double> shaped_tree_advantages(const SearchTree& tree, double std_epsilon = 1e-8);

// 0 up to l_max - l_cache, then a linear ramp reaching -1 at l_max, -1 beyond.
double overlong_penalty(int length, const LengthPenaltyConfig& config);

}  // namespace mars

#endif  // MARS_CREDIT_ASSIGNMENT_HPP_
