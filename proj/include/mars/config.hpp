#ifndef MARS_CONFIG_HPP_
#define MARS_CONFIG_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mars/task_envs.hpp"
#include "mars/trainer.hpp"

namespace mars {

// Where the tasks come from: a JSONL file, or generated from a seed.
struct TasksetSource {
  std::optional<std::string> path;
  std::uint64_t seed = 0;
  TasksetSpec spec;

  bool operator==(const TasksetSource&) const = default;
};

struct OutputConfig {
  int checkpoint_every = 0;  // 0: only the final checkpoint
  bool dump_trees = false;
  bool dump_solutions = true;

  bool operator==(const OutputConfig&) const = default;
};

struct ExperimentConfig {
  TrainConfig train;
  TasksetSource taskset;
  OutputConfig output;

  bool operator==(const ExperimentConfig&) const = default;

  // Canonical YAML listing every field; parse_config(to_yaml()) == *this.
  std::string to_yaml() const;
  // 16 hex digits identifying the canonical serialization.
  std::string hash() const;
  void validate() const;
};

// Parses YAML text. Unknown keys, wrong types and invalid values raise
// ConfigError; messages carry "<source>:<line>:" when the offending node
// came from the text. Overrides ("dotted.key=value") are applied to the
// parsed document before conversion and validation.
ExperimentConfig parse_config(const std::string& text, const std::vector<std::string>& overrides = {},
                              const std::string& source = "<config>");
ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});

// Dotted names of the numeric fields (the ones a sweep may vary).
const std::vector<std::string>& numeric_config_keys();

// Tasks named by the config: read from the file or generated.
std::vector<Task> load_tasks(const ExperimentConfig& config);

}  // namespace mars

#endif  // MARS_CONFIG_HPP_
