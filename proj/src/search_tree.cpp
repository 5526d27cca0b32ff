#include "mars/search_tree.hpp"

#include <cmath>
#include <json.hpp>

#include "mars/errors.hpp"

namespace mars {

FeedbackRecord FeedbackRecord::from_flags(std::vector<bool> flags,
                                          std::vector<std::optional<std::string>> diagnostics) {
  FeedbackRecord rec;
  std::size_t passed = 0;
  for (bool f : flags) passed += f ? 1 : 0;
  rec.pass_fraction = flags.empty() ? 0.0 : static_cast<double>(passed) / flags.size();
  if (diagnostics.empty()) diagnostics.resize(flags.size());
  if (diagnostics.size() != flags.size())
    throw ValidationError("feedback diagnostics length does not match flags");
  rec.flags = std::move(flags);
  rec.diagnostics = std::move(diagnostics);
  return rec;
}

std::string FeedbackRecord::flag_string() const {
  std::string s;
  s.reserve(flags.size());
  for (bool f : flags) s.push_back(f ? '1' : '0');
  return s;
}

bool FeedbackRecord::all_pass() const {
  for (bool f : flags)
    if (!f) return false;
  return true;
}

double TreeNode::credit_reward() const {
  if (!raw_reward) throw ValidationError("node " + std::to_string(id) + " has no raw reward");
  return *raw_reward + length_penalty;
}

SearchTree::SearchTree(int task_id) : task_id_(task_id) {
  TreeNode root;
  root.id = 0;
  nodes_.push_back(std::move(root));
}

bool SearchTree::contains(NodeId id) const {
  return id >= 0 && static_cast<std::size_t>(id) < nodes_.size();
}

const TreeNode& SearchTree::node(NodeId id) const {
  if (!contains(id)) throw StructuralError("unknown node id " + std::to_string(id));
  return nodes_[static_cast<std::size_t>(id)];
}

TreeNode& SearchTree::mutable_node(NodeId id) {
  if (!contains(id)) throw StructuralError("unknown node id " + std::to_string(id));
  return nodes_[static_cast<std::size_t>(id)];
}

NodeId SearchTree::append_node(NodeId parent_id, int agent_id, Tokens solution,
                               double raw_reward, FeedbackRecord feedback,
                               double length_penalty) {
  if (!contains(parent_id))
    throw StructuralError("append under unknown parent " + std::to_string(parent_id));
  if (!(raw_reward >= 0.0 && raw_reward <= 1.0))
    throw ValidationError("raw reward " + std::to_string(raw_reward) + " outside [0,1]");
  if (agent_id < 0) throw ValidationError("negative agent id");
  TreeNode n;
  n.id = static_cast<NodeId>(nodes_.size());
  n.parent_id = parent_id;
  n.agent_id = agent_id;
  n.solution = std::move(solution);
  n.raw_reward = raw_reward;
  n.length_penalty = length_penalty;
  n.feedback = std::move(feedback);
  nodes_[static_cast<std::size_t>(parent_id)].children.push_back(n.id);
  nodes_.push_back(std::move(n));
  return nodes_.back().id;
}

std::vector<NodeId> SearchTree::siblings_excluding(NodeId id) const {
  const TreeNode& n = node(id);
  if (n.is_root()) throw DomainError("root has no siblings");
  std::vector<NodeId> out;
  for (NodeId c : node(*n.parent_id).children)
    if (c != id) out.push_back(c);
  return out;
}

std::vector<NodeId> SearchTree::path_to_root(NodeId id) const {
  std::vector<NodeId> path{node(id).id};
  while (const auto& p = node(path.back()).parent_id) path.push_back(*p);
  return path;
}

int SearchTree::depth(NodeId id) const {
  return static_cast<int>(path_to_root(id).size()) - 1;
}

std::string SearchTree::to_jsonl() const {
  std::string out;
  for (const TreeNode& n : nodes_) {
    nlohmann::ordered_json rec;
    rec["task_id"] = task_id_;
    rec["id"] = n.id;
    rec["parent_id"] = n.parent_id ? nlohmann::ordered_json(*n.parent_id) : nullptr;
    rec["agent_id"] = n.agent_id ? nlohmann::ordered_json(*n.agent_id) : nullptr;
    rec["raw_reward"] = n.raw_reward ? nlohmann::ordered_json(*n.raw_reward) : nullptr;
    rec["length_penalty"] = n.length_penalty;
    rec["shaped_reward"] = n.shaped_reward ? nlohmann::ordered_json(*n.shaped_reward) : nullptr;
    rec["solution"] = n.solution;
    rec["public_pass_fraction"] = n.feedback.pass_fraction;
    out += rec.dump();
    out += '\n';
  }
  return out;
}

}  // namespace mars
