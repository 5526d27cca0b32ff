#include "mars/credit_assignment.hpp"

#include <cmath>

#include "mars/errors.hpp"

namespace mars {

void ShapingConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("shaping.lambda must lie in [0,1]");
  if (!(gamma >= 0.0)) throw ConfigError("shaping.gamma must be non-negative");
  if (!(std_epsilon > 0.0)) throw ConfigError("shaping.std_epsilon must be positive");
}

void LengthPenaltyConfig::validate() const {
  if (l_max <= 0 || l_cache <= 0) throw ConfigError("length_penalty.l_max and l_cache must be positive");
  if (l_cache >= l_max) throw ConfigError("length_penalty.l_cache must be smaller than l_max");
}

double mean_of(std::span<const double> xs) {
  if (xs.empty()) throw DomainError("mean of an empty set");
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double population_std(std::span<const double> xs) {
  double m = mean_of(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size()));
}

std::vector<double> group_advantages(std::span<const double> rewards, double std_epsilon) {
  if (rewards.empty()) throw DomainError("group advantages of an empty group");
  double m = mean_of(rewards);
  double sd = population_std(rewards);
  std::vector<double> out(rewards.size(), 0.0);
  if (sd < std_epsilon) return out;
  for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - m) / sd;
  return out;
}

double mixed_baseline(const SearchTree& tree, NodeId node, double lambda) {
  const TreeNode& v = tree.node(node);
  if (v.is_root()) throw DomainError("mixed baseline is undefined for the root");
  const std::vector<NodeId> sibs = tree.siblings_excluding(node);
  const TreeNode& parent = tree.node(*v.parent_id);
  double sib_mean = 0.0;
  for (NodeId s : sibs) sib_mean += tree.node(s).credit_reward();
  if (!sibs.empty()) sib_mean /= static_cast<double>(sibs.size());

  if (parent.is_root()) return sibs.empty() ? v.credit_reward() : sib_mean;
  if (sibs.empty()) return parent.credit_reward();
  return (1.0 - lambda) * parent.credit_reward() + lambda * sib_mean;
}

void shape_tree(SearchTree& tree, const ShapingConfig& config) {
  config.validate();
  std::vector<double> shaped(tree.size(), 0.0);
  for (const TreeNode& n : tree.nodes()) {
    if (n.is_root()) continue;
    double r = n.credit_reward();
    double gain = consistency_gain(r, mixed_baseline(tree, n.id, config.lambda));
    shaped[static_cast<std::size_t>(n.id)] = shaped_reward(r, gain, config.gamma);
  }
  for (std::size_t i = 1; i < tree.size(); ++i)
    tree.mutable_node(static_cast<NodeId>(i)).shaped_reward = shaped[i];
}

std::map<NodeId, double> shaped_tree_advantages(const SearchTree& tree, double std_epsilon) {
  std::vector<NodeId> ids;
  std::vector<double> values;
  for (const TreeNode& n : tree.nodes()) {
    if (n.is_root()) continue;
    if (!n.shaped_reward)
      throw ValidationError("node " + std::to_string(n.id) + " has not been shaped");
    ids.push_back(n.id);
    values.push_back(*n.shaped_reward);
  }
  if (ids.empty()) throw DomainError("tree has no expansions");
  std::vector<double> adv = group_advantages(values, std_epsilon);
  std::map<NodeId, double> out;
  for (std::size_t i = 0; i < ids.size(); ++i) out[ids[i]] = adv[i];
  return out;
}

double overlong_penalty(int length, const LengthPenaltyConfig& config) {
  config.validate();
  if (length < 0) throw DomainError("negative length");
  const int knee = config.l_max - config.l_cache;
  if (length <= knee) return 0.0;
  if (length <= config.l_max) return static_cast<double>(knee - length) / config.l_cache;
  return -1.0;
}

}  // namespace mars
