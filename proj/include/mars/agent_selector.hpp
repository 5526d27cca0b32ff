#ifndef MARS_AGENT_SELECTOR_HPP_
#define MARS_AGENT_SELECTOR_HPP_

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mars/rng.hpp"
#include "mars/search_tree.hpp"

namespace mars {

struct BetaPosterior {
  double alpha = 1.0;
  double beta = 1.0;

  double mean() const { return alpha / (alpha + beta); }
  // Fractional update: alpha += r, beta += 1 - r. ValidationError unless r in [0,1].
  void update(double reward);
};

enum class Action { kGenerate, kRefine };

const char* to_string(Action a);

// One Thompson comparison during the descent. A kRefine step moved from
// `anchor` into `refine_target`; a kGenerate step ends the descent.
struct DescentStep {
  NodeId anchor = 0;
  Action action = Action::kGenerate;
  std::optional<NodeId> refine_target;
  std::vector<NodeId> candidates;  // refinement candidates, creation order
  std::vector<double> samples;     // [generation arm, candidates...]; empty if uncontested
};

struct ExpansionChoice {
  int agent_id = 0;
  NodeId anchor_node_id = 0;
  Action action = Action::kGenerate;
  std::optional<NodeId> refine_target;
  std::vector<DescentStep> path;
  std::vector<double> agent_samples;

  // True when the descent left the root, i.e. the new node refines an
  // earlier node of the same agent.
  bool is_refinement() const { return anchor_node_id != 0; }
};

// Beta posteriors for one tree: one arm per agent, one refinement arm per
// (agent, node it produced), one virtual generation arm per (agent, anchor).
class SelectorState {
 public:
  explicit SelectorState(int num_agents);

  int num_agents() const { return static_cast<int>(agent_arms_.size()); }
  BetaPosterior& agent_arm(int agent);
  const BetaPosterior& agent_arm(int agent) const;
  BetaPosterior& refine_arm(int agent, NodeId node);
  BetaPosterior& generation_arm(int agent, NodeId anchor);

  // Registers the refinement arm of a freshly appended node.
  void on_node_appended(int agent, NodeId node) { refine_arm(agent, node); }

  const std::map<std::pair<int, NodeId>, BetaPosterior>& refine_arms() const { return refine_arms_; }
  const std::map<std::pair<int, NodeId>, BetaPosterior>& generation_arms() const {
    return generation_arms_;
  }

 private:
  std::vector<BetaPosterior> agent_arms_;
  std::map<std::pair<int, NodeId>, BetaPosterior> refine_arms_;
  std::map<std::pair<int, NodeId>, BetaPosterior> generation_arms_;
};

// Thompson sampling over agent arms: one Beta draw per agent, argmax,
// lowest index on ties. ConfigError when no agents are registered.
int select_agent(const SelectorState& state, Rng& rng, std::vector<double>* samples = nullptr);

// Descends from the root. At each anchor the agent's generation arm competes
// with the refinement arms of the agent's own children of that anchor; a
// winning child becomes the new anchor, a winning generation arm (or a
// leaf with no eligible children) ends the descent.
ExpansionChoice descend_and_choose(SelectorState& state, const SearchTree& tree, int agent_id,
                                   Rng& rng);

// select_agent followed by descend_and_choose.
ExpansionChoice choose_expansion(SelectorState& state, const SearchTree& tree, Rng& rng);

// Credits the agent arm and every arm that won a comparison along the path.
void update_posteriors(SelectorState& state, const ExpansionChoice& choice, double raw_reward);

// Single-line JSON trace of a choice and the posteriors it touched.
std::string trace_record(const SelectorState& state, const ExpansionChoice& choice,
                         int task_id, int expansion);

}  // namespace mars

#endif  // MARS_AGENT_SELECTOR_HPP_
