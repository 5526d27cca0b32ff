#include "mars/agent_selector.hpp"

#include <json.hpp>

#include "mars/errors.hpp"

namespace mars {

void BetaPosterior::update(double reward) {
  if (!(reward >= 0.0 && reward <= 1.0))
    throw ValidationError("posterior update with reward " + std::to_string(reward) +
                          " outside [0,1]");
  alpha += reward;
  beta += 1.0 - reward;
}

const char* to_string(Action a) { return a == Action::kGenerate ? "GENERATE" : "REFINE"; }

SelectorState::SelectorState(int num_agents) {
  if (num_agents < 0) throw ConfigError("negative agent count");
  agent_arms_.resize(static_cast<std::size_t>(num_agents));
}

BetaPosterior& SelectorState::agent_arm(int agent) {
  return agent_arms_.at(static_cast<std::size_t>(agent));
}

const BetaPosterior& SelectorState::agent_arm(int agent) const {
  return agent_arms_.at(static_cast<std::size_t>(agent));
}

BetaPosterior& SelectorState::refine_arm(int agent, NodeId node) {
  return refine_arms_[{agent, node}];
}

BetaPosterior& SelectorState::generation_arm(int agent, NodeId anchor) {
  return generation_arms_[{agent, anchor}];
}

namespace {

std::size_t argmax_first(const std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace

int select_agent(const SelectorState& state, Rng& rng, std::vector<double>* samples) {
  if (state.num_agents() == 0) throw ConfigError("no agents registered with the selector");
  std::vector<double> draws;
  draws.reserve(static_cast<std::size_t>(state.num_agents()));
  for (int j = 0; j < state.num_agents(); ++j) {
    const BetaPosterior& arm = state.agent_arm(j);
    draws.push_back(rng.beta(arm.alpha, arm.beta));
  }
  int chosen = static_cast<int>(argmax_first(draws));
  if (samples) *samples = std::move(draws);
  return chosen;
}

ExpansionChoice descend_and_choose(SelectorState& state, const SearchTree& tree, int agent_id,
                                   Rng& rng) {
  if (agent_id < 0 || agent_id >= state.num_agents())
    throw ConfigError("agent " + std::to_string(agent_id) + " is not registered");
  ExpansionChoice choice;
  choice.agent_id = agent_id;
  NodeId anchor = tree.root_id();
  while (true) {
    DescentStep step;
    step.anchor = anchor;
    for (NodeId c : tree.node(anchor).children)
      if (tree.node(c).agent_id == agent_id) step.candidates.push_back(c);

    if (step.candidates.empty()) {
      state.generation_arm(agent_id, anchor);
      step.action = Action::kGenerate;
      choice.path.push_back(std::move(step));
      break;
    }

    const BetaPosterior& gen = state.generation_arm(agent_id, anchor);
    step.samples.push_back(rng.beta(gen.alpha, gen.beta));
    for (NodeId c : step.candidates) {
      const BetaPosterior& arm = state.refine_arm(agent_id, c);
      step.samples.push_back(rng.beta(arm.alpha, arm.beta));
    }
    std::size_t win = argmax_first(step.samples);
    if (win == 0) {
      step.action = Action::kGenerate;
      choice.path.push_back(std::move(step));
      break;
    }
    step.action = Action::kRefine;
    step.refine_target = step.candidates[win - 1];
    anchor = *step.refine_target;
    choice.path.push_back(std::move(step));
  }
  choice.anchor_node_id = anchor;
  choice.action = Action::kGenerate;
  return choice;
}

ExpansionChoice choose_expansion(SelectorState& state, const SearchTree& tree, Rng& rng) {
  std::vector<double> agent_samples;
  int agent = select_agent(state, rng, &agent_samples);
  ExpansionChoice choice = descend_and_choose(state, tree, agent, rng);
  choice.agent_samples = std::move(agent_samples);
  return choice;
}

void update_posteriors(SelectorState& state, const ExpansionChoice& choice, double raw_reward) {
  if (!(raw_reward >= 0.0 && raw_reward <= 1.0))
    throw ValidationError("posterior update with reward " + std::to_string(raw_reward) +
                          " outside [0,1]");
  state.agent_arm(choice.agent_id).update(raw_reward);
  for (const DescentStep& step : choice.path) {
    if (step.action == Action::kRefine)
      state.refine_arm(choice.agent_id, *step.refine_target).update(raw_reward);
    else
      state.generation_arm(choice.agent_id, step.anchor).update(raw_reward);
  }
}

std::string trace_record(const SelectorState& state, const ExpansionChoice& choice, int task_id,
                         int expansion) {
  nlohmann::ordered_json rec;
  rec["task_id"] = task_id;
  rec["expansion"] = expansion;
  rec["agent_samples"] = choice.agent_samples;
  rec["agent_id"] = choice.agent_id;
  nlohmann::ordered_json steps = nlohmann::ordered_json::array();
  for (const DescentStep& s : choice.path) {
    nlohmann::ordered_json js;
    js["anchor"] = s.anchor;
    js["action"] = to_string(s.action);
    js["target"] = s.refine_target ? nlohmann::ordered_json(*s.refine_target) : nullptr;
    js["candidates"] = s.candidates;
    js["samples"] = s.samples;
    steps.push_back(std::move(js));
  }
  rec["path"] = std::move(steps);
  rec["anchor"] = choice.anchor_node_id;
  const BetaPosterior& a = state.agent_arm(choice.agent_id);
  rec["agent_posterior"] = {a.alpha, a.beta};
  return rec.dump();
}

}  // namespace mars
