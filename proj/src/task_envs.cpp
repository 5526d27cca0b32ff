#include "mars/task_envs.hpp"

#include <algorithm>
#include <json.hpp>
#include <numeric>
#include <set>
#include <sstream>

#include "mars/errors.hpp"

namespace mars {

const char* to_string(TaskKind k) {
  return k == TaskKind::kStringMatch ? "STRING_MATCH" : "EXPR_SYNTH";
}

TaskKind parse_task_kind(const std::string& s) {
  if (s == "STRING_MATCH") return TaskKind::kStringMatch;
  if (s == "EXPR_SYNTH") return TaskKind::kExprSynth;
  throw ValidationError("unknown task kind '" + s + "'");
}

std::string ExprAlphabet::token_name(Token t) const {
  if (t == var()) return "x";
  if (t >= constant(0) && t <= constant(max_const)) return std::to_string(t - 1);
  if (t == add()) return "+";
  if (t == sub()) return "-";
  if (t == mul()) return "*";
  if (t == noop()) return "noop";
  return "?";
}

std::optional<std::int64_t> run_program(const ExprAlphabet& alphabet, const Tokens& program,
                                        std::int64_t x) {
  std::vector<std::int64_t> stack;
  for (Token t : program) {
    if (t == alphabet.var()) {
      stack.push_back(x);
    } else if (t >= alphabet.constant(0) && t <= alphabet.constant(alphabet.max_const)) {
      stack.push_back(t - alphabet.constant(0));
    } else if (alphabet.is_operator(t)) {
      if (stack.size() < 2) return std::nullopt;
      std::int64_t b = stack.back();
      stack.pop_back();
      std::int64_t a = stack.back();
      std::int64_t r = 0;
      bool overflow = false;
      if (t == alphabet.add()) overflow = __builtin_add_overflow(a, b, &r);
      else if (t == alphabet.sub()) overflow = __builtin_sub_overflow(a, b, &r);
      else overflow = __builtin_mul_overflow(a, b, &r);
      if (overflow) return std::nullopt;
      stack.back() = r;
    } else if (t == alphabet.noop()) {
      continue;
    } else {
      return std::nullopt;
    }
  }
  if (stack.size() != 1) return std::nullopt;
  return stack.front();
}

namespace {

struct SplitFlags {
  std::vector<bool> pub;
  std::vector<std::optional<std::string>> pub_diag;
  std::vector<bool> priv;
};

EvalResult assemble(SplitFlags f, Split split) {
  auto count = [](const std::vector<bool>& v) {
    return static_cast<std::size_t>(std::count(v.begin(), v.end(), true));
  };
  EvalResult r;
  r.split = split;
  std::size_t pub_pass = count(f.pub), priv_pass = count(f.priv);
  r.passed_all_public = pub_pass == f.pub.size();
  r.passed_all_private = priv_pass == f.priv.size();
  switch (split) {
    case Split::kPublic:
      r.reward = f.pub.empty() ? 0.0 : static_cast<double>(pub_pass) / f.pub.size();
      break;
    case Split::kPrivate:
      r.reward = f.priv.empty() ? 0.0 : static_cast<double>(priv_pass) / f.priv.size();
      break;
    case Split::kTrainAll: {
      std::size_t total = f.pub.size() + f.priv.size();
      r.reward = total == 0 ? 0.0 : static_cast<double>(pub_pass + priv_pass) / total;
      break;
    }
  }
  r.feedback = FeedbackRecord::from_flags(std::move(f.pub), std::move(f.pub_diag));
  return r;
}

SplitFlags all_fail(const Task& task, const std::string& tag) {
  SplitFlags f;
  f.pub.assign(task.public_tests.size(), false);
  f.pub_diag.assign(task.public_tests.size(), tag);
  f.priv.assign(task.private_tests.size(), false);
  return f;
}

}  // namespace

EvalResult evaluate_string_match(const Task& task, const Tokens& solution, Split split) {
  if (task.kind != TaskKind::kStringMatch) throw DomainError("not a STRING_MATCH task");
  if (solution.size() != static_cast<std::size_t>(task.gen_length))
    return assemble(all_fail(task, "wrong_length"), split);
  SplitFlags f;
  auto check = [&](const TestCase& tc) {
    return solution[static_cast<std::size_t>(tc.input)] == tc.expected;
  };
  for (const TestCase& tc : task.public_tests) {
    bool ok = check(tc);
    f.pub.push_back(ok);
    f.pub_diag.push_back(ok ? std::nullopt : std::optional<std::string>("mismatch"));
  }
  for (const TestCase& tc : task.private_tests) f.priv.push_back(check(tc));
  return assemble(std::move(f), split);
}

EvalResult evaluate_expr_synth(const Task& task, const Tokens& program, Split split) {
  if (task.kind != TaskKind::kExprSynth) throw DomainError("not an EXPR_SYNTH task");
  if (program.size() != static_cast<std::size_t>(task.gen_length))
    return assemble(all_fail(task, "wrong_length"), split);
  const ExprAlphabet alpha = task.alphabet();
  // Well-formedness does not depend on x; probe once.
  if (!run_program(alpha, program, 0)) return assemble(all_fail(task, "malformed"), split);
  SplitFlags f;
  for (const TestCase& tc : task.public_tests) {
    auto out = run_program(alpha, program, tc.input);
    bool ok = out && *out == tc.expected;
    f.pub.push_back(ok);
    f.pub_diag.push_back(ok ? std::nullopt
                            : std::optional<std::string>(out ? "wrong_output" : "malformed"));
  }
  for (const TestCase& tc : task.private_tests) {
    auto out = run_program(alpha, program, tc.input);
    f.priv.push_back(out && *out == tc.expected);
  }
  return assemble(std::move(f), split);
}

EvalResult evaluate(const Task& task, const Tokens& solution, Split split) {
  return task.kind == TaskKind::kStringMatch ? evaluate_string_match(task, solution, split)
                                             : evaluate_expr_synth(task, solution, split);
}

FeedbackRecord feedback_for(const Task& task, const EvalResult& result) {
  if (result.split != Split::kPublic)
    throw DomainError("feedback must come from a PUBLIC-split evaluation");
  if (result.feedback.flags.size() != task.public_tests.size())
    throw ValidationError("feedback length differs from the public test count");
  return result.feedback;
}

void validate_task(const Task& task) {
  const std::string where = "task " + std::to_string(task.task_id) + ": ";
  if (task.public_tests.empty() || task.private_tests.empty())
    throw ValidationError(where + "public and private test sets must be non-empty");
  std::set<std::int64_t> pub_inputs;
  for (const TestCase& tc : task.public_tests) pub_inputs.insert(tc.input);
  for (const TestCase& tc : task.private_tests)
    if (pub_inputs.count(tc.input))
      throw ValidationError(where + "public and private tests overlap");
  if (static_cast<int>(task.hidden_target.size()) != task.gen_length)
    throw ValidationError(where + "hidden target length differs from gen_length");
  if (task.kind == TaskKind::kStringMatch) {
    for (const auto* split : {&task.public_tests, &task.private_tests})
      for (const TestCase& tc : *split)
        if (tc.input < 0 || tc.input >= task.gen_length)
          throw ValidationError(where + "position test outside the solution");
  }
  for (Token t : task.hidden_target)
    if (t < 0 || t >= task.vocab) throw ValidationError(where + "target token outside vocabulary");
  if (!evaluate(task, task.hidden_target, Split::kTrainAll).fully_correct())
    throw ValidationError(where + "hidden target does not pass its own tests");
}

namespace {

Task make_string_task(int id, const StringMatchSpec& s, Rng& rng) {
  Task t;
  t.task_id = id;
  t.kind = TaskKind::kStringMatch;
  t.gen_length = s.length;
  t.vocab = s.vocab;
  for (int i = 0; i < s.length; ++i)
    t.hidden_target.push_back(static_cast<Token>(rng.below(static_cast<std::uint64_t>(s.vocab))));
  std::vector<int> positions(static_cast<std::size_t>(s.length));
  std::iota(positions.begin(), positions.end(), 0);
  for (std::size_t i = positions.size(); i > 1; --i)
    std::swap(positions[i - 1], positions[rng.below(i)]);
  std::sort(positions.begin(), positions.begin() + s.public_tests);
  std::sort(positions.begin() + s.public_tests,
            positions.begin() + s.public_tests + s.private_tests);
  for (int i = 0; i < s.public_tests + s.private_tests; ++i) {
    int p = positions[static_cast<std::size_t>(i)];
    TestCase tc{p, t.hidden_target[static_cast<std::size_t>(p)]};
    (i < s.public_tests ? t.public_tests : t.private_tests).push_back(tc);
  }
  return t;
}

Task make_expr_task(int id, const ExprSynthSpec& s, Rng& rng) {
  Task t;
  t.task_id = id;
  t.kind = TaskKind::kExprSynth;
  t.gen_length = s.length;
  t.max_const = s.max_const;
  const ExprAlphabet alpha{s.max_const};
  t.vocab = alpha.vocab();
  // Rejection-sample a well-formed program whose output depends on x.
  for (int attempt = 0;; ++attempt) {
    if (attempt > 100000) throw ConfigError("could not sample a non-constant target program");
    Tokens prog;
    for (int i = 0; i < s.length; ++i)
      prog.push_back(static_cast<Token>(rng.below(static_cast<std::uint64_t>(alpha.vocab()))));
    auto first = run_program(alpha, prog, 0);
    if (!first) continue;
    bool varies = false;
    for (int x = 1; x < s.input_count && !varies; ++x) varies = run_program(alpha, prog, x) != first;
    if (!varies) continue;
    t.hidden_target = std::move(prog);
    break;
  }
  std::vector<std::int64_t> inputs(static_cast<std::size_t>(s.input_count));
  std::iota(inputs.begin(), inputs.end(), 0);
  for (std::size_t i = inputs.size(); i > 1; --i) std::swap(inputs[i - 1], inputs[rng.below(i)]);
  std::sort(inputs.begin(), inputs.begin() + s.public_tests);
  std::sort(inputs.begin() + s.public_tests, inputs.begin() + s.public_tests + s.private_tests);
  for (int i = 0; i < s.public_tests + s.private_tests; ++i) {
    std::int64_t x = inputs[static_cast<std::size_t>(i)];
    TestCase tc{x, *run_program(alpha, t.hidden_target, x)};
    (i < s.public_tests ? t.public_tests : t.private_tests).push_back(tc);
  }
  return t;
}

}  // namespace

std::vector<Task> generate_taskset(const TasksetSpec& spec, Rng& rng) {
  const auto& sm = spec.string_match;
  const auto& ex = spec.expr_synth;
  if (sm.count < 0 || ex.count < 0) throw ConfigError("task counts must be non-negative");
  if (sm.count > 0) {
    if (sm.vocab < 2 || sm.length < 1) throw ConfigError("string_match needs vocab >= 2, length >= 1");
    if (sm.public_tests < 1 || sm.private_tests < 1 ||
        sm.public_tests + sm.private_tests > sm.length)
      throw ConfigError("string_match split sizes exceed the " + std::to_string(sm.length) +
                        " available positions");
  }
  if (ex.count > 0) {
    if (ex.max_const < 0 || ex.length < 1) throw ConfigError("expr_synth needs max_const >= 0, length >= 1");
    if (ex.input_count < 2) throw ConfigError("expr_synth needs at least 2 inputs");
    if (ex.public_tests < 1 || ex.private_tests < 1 ||
        ex.public_tests + ex.private_tests > ex.input_count)
      throw ConfigError("expr_synth split sizes exceed the " + std::to_string(ex.input_count) +
                        " available inputs");
  }
  std::vector<Task> tasks;
  int id = 0;
  for (int i = 0; i < sm.count; ++i) tasks.push_back(make_string_task(id++, sm, rng));
  for (int i = 0; i < ex.count; ++i) tasks.push_back(make_expr_task(id++, ex, rng));
  for (const Task& t : tasks) validate_task(t);
  return tasks;
}

std::string taskset_to_jsonl(const std::vector<Task>& tasks) {
  auto tests_json = [](const std::vector<TestCase>& v) {
    nlohmann::ordered_json a = nlohmann::ordered_json::array();
    for (const TestCase& tc : v) a.push_back({tc.input, tc.expected});
    return a;
  };
  std::string out;
  for (const Task& t : tasks) {
    nlohmann::ordered_json rec;
    rec["task_id"] = t.task_id;
    rec["kind"] = to_string(t.kind);
    rec["target"] = t.hidden_target;
    rec["public"] = tests_json(t.public_tests);
    rec["private"] = tests_json(t.private_tests);
    rec["gen_length"] = t.gen_length;
    rec["vocab"] = t.vocab;
    rec["max_const"] = t.max_const;
    out += rec.dump() + "\n";
  }
  return out;
}

std::vector<Task> taskset_from_jsonl(const std::string& text) {
  std::vector<Task> tasks;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      auto rec = nlohmann::json::parse(line);
      Task t;
      t.task_id = rec.at("task_id").get<int>();
      t.kind = parse_task_kind(rec.at("kind").get<std::string>());
      t.hidden_target = rec.at("target").get<Tokens>();
      for (const auto& tc : rec.at("public")) t.public_tests.push_back({tc.at(0), tc.at(1)});
      for (const auto& tc : rec.at("private")) t.private_tests.push_back({tc.at(0), tc.at(1)});
      t.gen_length = rec.at("gen_length").get<int>();
      t.vocab = rec.at("vocab").get<int>();
      t.max_const = rec.at("max_const").get<int>();
      validate_task(t);
      tasks.push_back(std::move(t));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("taskset line " + std::to_string(lineno) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError("taskset line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return tasks;
}

int taskset_vocab(const std::vector<Task>& tasks) {
  int v = 0;
  for (const Task& t : tasks) v = std::max(v, t.vocab);
  return v;
}

int taskset_max_length(const std::vector<Task>& tasks) {
  int l = 0;
  for (const Task& t : tasks) l = std::max(l, t.gen_length);
  return l;
}

}  // namespace mars
