#ifndef MARS_SEARCH_TREE_HPP_
#define MARS_SEARCH_TREE_HPP_

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace mars {

using Token = int;
using Tokens = std::vector<Token>;
using NodeId = int;

// Public-split execution feedback attached to a node.
struct FeedbackRecord {
  std::vector<bool> flags;                             // one per public test
  double pass_fraction = 0.0;                          // mean of flags
  std::vector<std::optional<std::string>> diagnostics;  // tag per failed test

  // Builds a record whose pass_fraction is consistent with flags.
  static FeedbackRecord from_flags(std::vector<bool> flags,
                                   std::vector<std::optional<std::string>> diagnostics = {});
  // "1011"-style rendering of the flags.
  std::string flag_string() const;
  bool all_pass() const;
};

struct TreeNode {
  NodeId id = 0;
  std::optional<NodeId> parent_id;
  std::optional<int> agent_id;
  Tokens solution;
  std::optional<double> raw_reward;  // absent only on the root
  double length_penalty = 0.0;       // added to raw_reward for credit assignment
  std::optional<double> shaped_reward;
  FeedbackRecord feedback;
  std::vector<NodeId> children;      // creation order

  bool is_root() const { return !parent_id.has_value(); }
  // Reward seen by credit assignment: raw task reward plus length penalty.
  double credit_reward() const;
};

// Append-only shared search tree. Node 0 is a synthetic root carrying the
// bare task; expansions get ids 1..N in creation order.
class SearchTree {
 public:
  explicit SearchTree(int task_id);

  int task_id() const { return task_id_; }
  NodeId root_id() const { return 0; }
  std::size_t size() const { return nodes_.size(); }
  std::size_t expansion_count() const { return nodes_.size() - 1; }

  const TreeNode& node(NodeId id) const;
  TreeNode& mutable_node(NodeId id);
  const std::vector<TreeNode>& nodes() const { return nodes_; }
  bool contains(NodeId id) const;

  // Throws StructuralError for an unknown parent, ValidationError for a
  // reward outside [0,1].
  NodeId append_node(NodeId parent_id, int agent_id, Tokens solution, double raw_reward,
                     FeedbackRecord feedback, double length_penalty = 0.0);

  // Children of parent(id) other than id, in creation order. DomainError on the root.
  std::vector<NodeId> siblings_excluding(NodeId id) const;
  // [id, parent(id), ..., root]. StructuralError for an unknown id.
  std::vector<NodeId> path_to_root(NodeId id) const;
  int depth(NodeId id) const;

  // One JSON record per line: id, parent_id, agent_id, raw_reward,
  // length_penalty, shaped_reward, solution, public_pass_fraction.
  std::string to_jsonl() const;

 private:
  int task_id_;
  std::vector<TreeNode> nodes_;
};

inline SearchTree new_tree(int task_id) { return SearchTree(task_id); }

}  // namespace mars

#endif  // MARS_SEARCH_TREE_HPP_
