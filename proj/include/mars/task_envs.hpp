#ifndef MARS_TASK_ENVS_HPP_
#define MARS_TASK_ENVS_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mars/rng.hpp"
#include "mars/search_tree.hpp"

namespace mars {

enum class TaskKind { kStringMatch, kExprSynth };
enum class Split { kPublic, kPrivate, kTrainAll };

const char* to_string(TaskKind k);
TaskKind parse_task_kind(const std::string& s);

// STRING_MATCH: `input` is a position, `expected` the target token there.
// EXPR_SYNTH: `input` is the value bound to x, `expected` the target output.
struct TestCase {
  std::int64_t input = 0;
  std::int64_t expected = 0;
  bool operator==(const TestCase&) const = default;
};

// Postfix alphabet: x, constants 0..max_const, +, -, *, noop.
struct ExprAlphabet {
  int max_const = 2;

  int vocab() const { return max_const + 6; }
  Token var() const { return 0; }
  Token constant(int c) const { return 1 + c; }
  Token add() const { return max_const + 2; }
  Token sub() const { return max_const + 3; }
  Token mul() const { return max_const + 4; }
  Token noop() const { return max_const + 5; }
  bool is_operator(Token t) const { return t >= add() && t <= mul(); }
  std::string token_name(Token t) const;
};

struct Task {
  int task_id = 0;
  TaskKind kind = TaskKind::kStringMatch;
  Tokens hidden_target;  // target string, or a program computing the target function
  std::vector<TestCase> public_tests;
  std::vector<TestCase> private_tests;
  int gen_length = 0;
  int vocab = 0;       // tokens meaningful for this task
  int max_const = 0;   // EXPR_SYNTH only

  ExprAlphabet alphabet() const { return ExprAlphabet{max_const}; }
  bool operator==(const Task&) const = default;
};

struct EvalResult {
  Split split = Split::kTrainAll;
  double reward = 0.0;              // pass fraction on `split`
  FeedbackRecord feedback;          // public split only
  bool passed_all_public = false;
  bool passed_all_private = false;

  bool fully_correct() const { return passed_all_public && passed_all_private; }
};

struct StringMatchSpec {
  int count = 0;
  int vocab = 4;
  int length = 6;
  int public_tests = 3;
  int private_tests = 3;

  bool operator==(const StringMatchSpec&) const = default;
};

struct ExprSynthSpec {
  int count = 0;
  int max_const = 2;
  int length = 4;
  int input_count = 8;  // inputs 0..input_count-1
  int public_tests = 3;
  int private_tests = 3;

  bool operator==(const ExprSynthSpec&) const = default;
};

struct TasksetSpec {
  StringMatchSpec string_match;
  ExprSynthSpec expr_synth;

  bool operator==(const TasksetSpec&) const = default;
};

// Seeded task list: string-match tasks first, then expression tasks.
// ConfigError when a split does not fit the available tests.
std::vector<Task> generate_taskset(const TasksetSpec& spec, Rng& rng);

// Stack-machine result of a postfix program on input x; nullopt when the
// program underflows, overflows or does not leave exactly one value.
std::optional<std::int64_t> run_program(const ExprAlphabet& alphabet, const Tokens& program,
                                        std::int64_t x);

EvalResult evaluate_string_match(const Task& task, const Tokens& solution, Split split);
EvalResult evaluate_expr_synth(const Task& task, const Tokens& program, Split split);
EvalResult evaluate(const Task& task, const Tokens& solution, Split split);

// Public feedback of a PUBLIC-split evaluation. DomainError otherwise.
FeedbackRecord feedback_for(const Task& task, const EvalResult& result);

// Checks the Task invariants; ValidationError describing the first violation.
void validate_task(const Task& task);

// One JSON record per task.
std::string taskset_to_jsonl(const std::vector<Task>& tasks);
std::vector<Task> taskset_from_jsonl(const std::string& text);

int taskset_vocab(const std::vector<Task>& tasks);
int taskset_max_length(const std::vector<Task>& tasks);

}  // namespace mars

#endif  // MARS_TASK_ENVS_HPP_
