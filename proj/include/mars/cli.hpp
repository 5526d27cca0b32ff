#ifndef MARS_CLI_HPP_
#define MARS_CLI_HPP_

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mars/config.hpp"

namespace mars {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;    // bad flags, config or input files
inline constexpr int kExitRuntime = 2;  // failures while running

struct TrainOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;  // same as --override seed=S, applied last
  std::string out_dir;
  bool trace_selector = false;
};

// Runs one experiment into a fresh directory:
//   config.yaml, taskset.jsonl, streams.json, metrics.jsonl,
//   checkpoints/agent<j>_init.json, checkpoints/agent<j>_final.json
// plus, when configured, checkpoints/agent<j>_step<k>.json, trees/step_<k>.jsonl,
// solutions.jsonl and selector_trace.jsonl.
int cmd_train(const TrainOptions& opts, std::ostream& out, std::ostream& err);

struct EvalOptions {
  std::vector<std::string> checkpoints;  // one agent each
  std::string taskset_path;
  int budget = 8;
  std::uint64_t seed = 0;
  std::string out_dir;                   // empty: summary on stdout only
  std::string method = "eval";           // label in solutions.jsonl
  bool trace_selector = false;
};

// Tree-search inference with the checkpoints as a multi-agent system. Writes
// eval.json, solutions.jsonl, taskset.jsonl (and selector_trace.jsonl) into out_dir.
int cmd_eval(const EvalOptions& opts, std::ostream& out, std::ostream& err);

// Scans run_dir for solutions.jsonl files (each next to its taskset.jsonl),
// keeps the tasks every method solved at least once and writes diversity.csv
// (to out_path, default run_dir/diversity.csv).
int cmd_diversity(const std::string& run_dir, const std::string& out_path, std::ostream& out,
                  std::ostream& err);

struct SweepOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string param;                // dotted numeric config key
  std::vector<std::string> values;
  std::vector<std::uint64_t> seeds;
  std::string out_dir;
};

// One training run per (value, seed) under out_dir/<param>=<value>/seed=<s>,
// then summary.csv with one row per value.
int cmd_sweep(const SweepOptions& opts, std::ostream& out, std::ostream& err);

struct DumpTreeOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::vector<std::string> checkpoints;  // empty: freshly initialized agents
  int task_id = 0;
  std::optional<std::uint64_t> seed;
  std::optional<int> budget;
  std::string out_path;                  // empty: stdout
  bool trace_selector = false;
};

// One search tree on one task, in the tree JSONL format.
int cmd_dump_tree(const DumpTreeOptions& opts, std::ostream& out, std::ostream& err);

}  // namespace mars

#endif  // MARS_CLI_HPP_
