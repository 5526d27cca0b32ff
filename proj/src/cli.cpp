#include "mars/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <json.hpp>
#include <numeric>
#include <sstream>

#include "mars/errors.hpp"
#include "mars/metrics.hpp"
#include "mars/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace mars {

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError(p.string() + ": cannot read file");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Writer {
 public:
  explicit Writer(const fs::path& p) : path_(p), out_(p, std::ios::binary | std::ios::trunc) {
    if (!out_) throw std::runtime_error(p.string() + ": cannot open for writing");
  }
  void line(const std::string& s) {
    out_ << s << '\n';
    if (!out_) throw std::runtime_error(path_.string() + ": write failed");
  }
  void raw(const std::string& s) {
    out_ << s;
    if (!out_) throw std::runtime_error(path_.string() + ": write failed");
  }

 private:
  fs::path path_;
  std::ofstream out_;
};

int guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string fixed6(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  return buf;
}

// A fresh experiment directory; refuses to reuse one that already holds a run.
void prepare_run_dir(const fs::path& dir) {
  if (fs::exists(dir / "metrics.jsonl") || fs::exists(dir / "eval.json"))
    throw ConfigError(dir.string() + " already holds results; choose a new --out directory");
  fs::create_directories(dir);
}

std::string method_label(const TrainConfig& c) {
  std::string m = to_string(c.mode);
  if (c.effective_agents() > 1) m += "(" + std::to_string(c.effective_agents()) + ")";
  return m;
}

std::string solution_line(const std::string& method, const std::string& hash, std::uint64_t seed,
                          int task_id, const TaskEval& ev, std::size_t i) {
  ordered_json j;
  j["config_hash"] = hash;
  j["seed"] = seed;
  j["method"] = method;
  j["task_id"] = task_id;
  j["index"] = ev.outcomes[i].index;
  j["agent_id"] = ev.agents[i];
  j["solution"] = ev.solutions[i];
  j["passed_all_public"] = ev.outcomes[i].passed_all_public;
  j["passed_all_private"] = ev.outcomes[i].passed_all_private;
  return j.dump();
}

struct TrainOutcome {
  MetricsRecord last;
};

TrainOutcome train_into(const ExperimentConfig& cfg, const fs::path& dir, bool trace_selector) {
  prepare_run_dir(dir);
  const std::vector<Task> tasks = load_tasks(cfg);
  const std::string hash = cfg.hash();
  const std::uint64_t seed = cfg.train.seed;

  Writer(dir / "config.yaml").raw(cfg.to_yaml());
  Writer(dir / "taskset.jsonl").raw(taskset_to_jsonl(tasks));
  fs::create_directories(dir / "checkpoints");
  Writer metrics(dir / "metrics.jsonl");
  std::optional<Writer> trace;
  if (trace_selector) trace.emplace(dir / "selector_trace.jsonl");
  if (cfg.output.dump_trees) fs::create_directories(dir / "trees");

  RunHooks hooks;
  hooks.on_metrics = [&](const MetricsRecord& r) { metrics.line(r.to_json(hash, seed)); };
  std::optional<Writer> trees;
  int tree_step = -1;
  if (cfg.output.dump_trees)
    hooks.on_tree = [&](int step, const SearchTree& t) {
      if (step != tree_step) {
        char name[32];
        std::snprintf(name, sizeof name, "step_%06d.jsonl", step);
        trees.emplace(dir / "trees" / name);
        tree_step = step;
      }
      trees->raw(t.to_jsonl());
    };
  hooks.checkpoint_every = cfg.output.checkpoint_every;
  hooks.on_checkpoint = [&](int step, int agent, const PolicyParams& p) {
    Writer(dir / "checkpoints" / ("agent" + std::to_string(agent) + "_step" + std::to_string(step) + ".json"))
        .raw(p.to_checkpoint());
  };
  hooks.trace_selector = trace_selector;
  hooks.on_trace = [&](const std::string& line) { trace->line(line); };

  // Every random draw of the run comes from one of these named streams.
  {
    ordered_json streams;
    streams["seed"] = seed;
    streams["taskset"] = cfg.taskset.path ? ordered_json(nullptr) : ordered_json(cfg.taskset.seed);
    std::vector<std::uint64_t> init;
    for (int j = 0; j < cfg.train.effective_agents(); ++j) init.push_back(cfg.train.agent_seed(j));
    streams["agent_init"] = init;
    streams["derived"] = {"agent_init/<agent>", "batch/<epoch>", "rollout/<step>/<task>", "eval/<step>/<task>"};
    Writer(dir / "streams.json").line(streams.dump());
  }
  {
    std::vector<int> ids;
    for (const Task& t : tasks) ids.push_back(t.task_id);
    for (int j = 0; j < cfg.train.effective_agents(); ++j)
      Writer(dir / "checkpoints" / ("agent" + std::to_string(j) + "_init.json"))
          .raw(init_params(taskset_vocab(tasks), taskset_max_length(tasks), ids, cfg.train.init_scale,
                           cfg.train.agent_seed(j))
                   .to_checkpoint());
  }

  ExperimentResult res = run_experiment(cfg.train, tasks, hooks);
  for (std::size_t j = 0; j < res.agents.size(); ++j)
    Writer(dir / "checkpoints" / ("agent" + std::to_string(j) + "_final.json")).raw(res.agents[j].params().to_checkpoint());

  if (cfg.output.dump_solutions) {
    Writer sol(dir / "solutions.jsonl");
    const std::string method = method_label(cfg.train);
    for (const Task& task : tasks) {
      TaskEval ev = evaluate_task(task, res.agents, cfg.train.eval_budget,
                                  derive_seed(seed, "eval",
                                              {static_cast<std::uint64_t>(cfg.train.steps),
                                               static_cast<std::uint64_t>(task.task_id)}));
      for (std::size_t i = 0; i < ev.outcomes.size(); ++i)
        sol.line(solution_line(method, hash, seed, task.task_id, ev, i));
    }
  }
  return {res.records.back()};
}

ExperimentConfig resolve(const std::string& path, std::vector<std::string> overrides,
                         std::optional<std::uint64_t> seed) {
  if (path.empty()) throw ConfigError("--config is required");
  if (seed) overrides.push_back("seed=" + std::to_string(*seed));
  return load_config(path, overrides);
}

std::vector<AgentPolicy> load_agents(const std::vector<std::string>& paths, const std::vector<Task>& tasks) {
  const int vocab = taskset_vocab(tasks);
  const int len = taskset_max_length(tasks);
  std::vector<AgentPolicy> agents;
  for (const std::string& p : paths) {
    PolicyParams params = PolicyParams::from_checkpoint(read_file(p));
    if (params.vocab() != vocab)
      throw ValidationError(p + ": checkpoint vocabulary " + std::to_string(params.vocab()) +
                            " does not match the taskset vocabulary " + std::to_string(vocab));
    if (params.max_length() < len)
      throw ValidationError(p + ": checkpoint length " + std::to_string(params.max_length()) +
                            " is shorter than the taskset's " + std::to_string(len));
    agents.emplace_back(std::move(params));
  }
  return agents;
}

double sample_std(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

}  // namespace

int cmd_train(const TrainOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    ExperimentConfig cfg = resolve(opts.config_path, opts.overrides, opts.seed);
    if (opts.out_dir.empty()) throw ConfigError("--out is required");
    TrainOutcome t = train_into(cfg, opts.out_dir, opts.trace_selector);
    out << "config " << cfg.hash() << " seed " << cfg.train.seed << " step " << t.last.step
        << " pass@1 " << fixed6(t.last.pass_at_1);
    if (t.last.tree_search) out << " pass@1(mcts) " << fixed6(t.last.pass_at_1_mcts) << " pass@n " << fixed6(t.last.pass_at_n);
    out << '\n';
    return kExitOk;
  });
}

int cmd_eval(const EvalOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (opts.checkpoints.empty()) throw ConfigError("at least one --checkpoint is required");
    if (opts.taskset_path.empty()) throw ConfigError("--taskset is required");
    if (opts.budget < 1) throw ConfigError("--budget must be at least 1");
    const std::string taskset_text = read_file(opts.taskset_path);
    const std::vector<Task> tasks = taskset_from_jsonl(taskset_text);
    if (tasks.empty()) throw ValidationError(opts.taskset_path + ": taskset is empty");
    std::vector<AgentPolicy> agents = load_agents(opts.checkpoints, tasks);

    std::uint64_t h = fnv1a(taskset_text);
    for (const std::string& p : opts.checkpoints) h = fnv1a(read_file(p), h);
    h = fnv1a(std::to_string(opts.budget) + "/" + std::to_string(opts.seed), h);
    const std::string hash = hex64(h);

    std::optional<Writer> sol, trace;
    if (!opts.out_dir.empty()) {
      prepare_run_dir(opts.out_dir);
      Writer(fs::path(opts.out_dir) / "taskset.jsonl").raw(taskset_text);
      sol.emplace(fs::path(opts.out_dir) / "solutions.jsonl");
      if (opts.trace_selector) trace.emplace(fs::path(opts.out_dir) / "selector_trace.jsonl");
    }

    const std::size_t m = agents.size();
    std::vector<double> agent_pass(m, 0.0);
    double mcts = 0.0, pass_n = 0.0;
    int fallbacks = 0;
    for (const Task& task : tasks) {
      std::vector<std::string> lines;
      TaskEval ev = evaluate_task(task, agents, opts.budget,
                                  derive_seed(opts.seed, "eval", {0, static_cast<std::uint64_t>(task.task_id)}),
                                  opts.trace_selector ? &lines : nullptr);
      for (std::size_t j = 0; j < m; ++j) agent_pass[j] += ev.per_agent[j].pass_at_1;
      mcts += ev.pass_at_1_mcts;
      pass_n += ev.pass_at_n;
      fallbacks += ev.mcts_fallback ? 1 : 0;
      if (sol)
        for (std::size_t i = 0; i < ev.outcomes.size(); ++i)
          sol->line(solution_line(opts.method, hash, opts.seed, task.task_id, ev, i));
      for (const std::string& l : lines) {
        if (trace) trace->line(l);
        else out << l << '\n';
      }
    }
    const double n = static_cast<double>(tasks.size());
    for (double& p : agent_pass) p /= n;
    ordered_json j;
    j["input_hash"] = hash;
    j["seed"] = opts.seed;
    j["method"] = opts.method;
    j["agents"] = m;
    j["budget"] = opts.budget;
    j["tasks"] = tasks.size();
    j["pass_at_1"] = std::accumulate(agent_pass.begin(), agent_pass.end(), 0.0) / static_cast<double>(m);
    j["agent_pass_at_1"] = agent_pass;
    j["pass_at_1_mcts"] = mcts / n;
    j["mcts_fallbacks"] = fallbacks;
    j["pass_at_n"] = pass_n / n;
    const std::string summary = j.dump();
    if (!opts.out_dir.empty()) Writer(fs::path(opts.out_dir) / "eval.json").line(summary);
    out << summary << '\n';
    return kExitOk;
  });
}

int cmd_diversity(const std::string& run_dir, const std::string& out_path, std::ostream& out,
                  std::ostream& err) {
  return guarded(err, [&] {
    if (!fs::is_directory(run_dir)) throw ConfigError(run_dir + ": not a directory");
    std::vector<fs::path> dumps;
    for (const auto& e : fs::recursive_directory_iterator(run_dir))
      if (e.is_regular_file() && e.path().filename() == "solutions.jsonl") dumps.push_back(e.path());
    std::sort(dumps.begin(), dumps.end());
    if (dumps.empty()) throw ConfigError(run_dir + ": no solutions.jsonl found");

    struct Entry {
      Tokens solution;
      bool correct;
    };
    std::map<int, Task> tasks;
    std::map<std::string, std::map<int, std::vector<Entry>>> by_method;
    std::map<std::string, fs::path> origin;
    for (const fs::path& d : dumps) {
      for (const Task& t : taskset_from_jsonl(read_file(d.parent_path() / "taskset.jsonl"))) {
        auto [it, fresh] = tasks.emplace(t.task_id, t);
        if (!fresh && !(it->second == t))
          throw ValidationError(d.string() + ": task " + std::to_string(t.task_id) + " differs between runs");
      }
      std::istringstream lines(read_file(d));
      std::map<std::string, std::map<int, std::vector<Entry>>> local;
      int lineno = 0;
      for (std::string line; std::getline(lines, line);) {
        ++lineno;
        if (line.empty()) continue;
        try {
          auto j = nlohmann::json::parse(line);
          const std::string method = j.at("method").get<std::string>();
          local[method][j.at("task_id").get<int>()].push_back(
              {j.at("solution").get<Tokens>(),
               j.at("passed_all_public").get<bool>() && j.at("passed_all_private").get<bool>()});
        } catch (const nlohmann::json::exception& e) {
          throw ValidationError(d.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
      }
      for (auto& [method, per_task] : local) {
        if (origin.count(method))
          throw ValidationError("method '" + method + "' appears in both " + origin[method].string() + " and " +
                                d.string());
        origin[method] = d;
        by_method[method] = std::move(per_task);
      }
    }

    std::vector<int> common;
    for (const auto& [id, task] : tasks) {
      bool all = true;
      for (const auto& [method, per_task] : by_method) {
        auto it = per_task.find(id);
        all = all && it != per_task.end() &&
              std::any_of(it->second.begin(), it->second.end(), [](const Entry& e) { return e.correct; });
      }
      if (all) common.push_back(id);
    }

    const fs::path dest = out_path.empty() ? fs::path(run_dir) / "diversity.csv" : fs::path(out_path);
    Writer csv(dest);
    csv.line("method,solutions_per_task,tasks,pass_at_n,da_at_1,da_at_half,da_at_n,ea,nauadc,nauadc_tasks");
    if (common.empty()) {
      err << "warning: no task is solved by every method; the diversity table is empty\n";
      out << dest.string() << '\n';
      return kExitOk;
    }
    for (const auto& [method, per_task] : by_method) {
      std::size_t n = 0;
      int solved = 0;
      for (const auto& [id, entries] : per_task) {
        n = std::max(n, entries.size());
        solved += std::any_of(entries.begin(), entries.end(), [](const Entry& e) { return e.correct; });
      }
      const int budget = static_cast<int>(n);
      double da1 = 0.0, da_half = 0.0, da_n = 0.0, ea = 0.0, area = 0.0;
      int area_tasks = 0;
      for (int id : common) {
        std::vector<Tokens> correct;
        for (const Entry& e : per_task.at(id))
          if (e.correct) correct.push_back(e.solution);
        ClusterProfile p = canonical_cluster(correct, tasks.at(id));
        const int c = p.total();
        // More draws than correct solutions saturate at the full profile.
        da1 += da_at_k(p, std::min(1, c));
        da_half += da_at_k(p, std::min(std::max(1, budget / 2), c));
        da_n += da_at_k(p, std::min(budget, c));
        ea += effective_algorithms(p);
        if (c >= 2) {
          area += nauadc(p, c);
          ++area_tasks;
        }
      }
      const double k = static_cast<double>(common.size());
      csv.line(method + "," + std::to_string(budget) + "," + std::to_string(common.size()) + "," +
               fixed6(static_cast<double>(solved) / static_cast<double>(per_task.size())) + "," + fixed6(da1 / k) +
               "," + fixed6(da_half / k) + "," + fixed6(da_n / k) + "," + fixed6(ea / k) + "," +
               (area_tasks ? fixed6(area / area_tasks) : std::string()) + "," + std::to_string(area_tasks));
    }
    out << dest.string() << '\n';
    return kExitOk;
  });
}

int cmd_sweep(const SweepOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto& keys = numeric_config_keys();
    if (std::find(keys.begin(), keys.end(), opts.param) == keys.end())
      throw ValidationError("sweep parameter '" + opts.param + "' is not a numeric config field");
    if (opts.values.empty()) throw ConfigError("--values must list at least one value");
    if (opts.seeds.empty()) throw ConfigError("--seeds must list at least one seed");
    if (opts.out_dir.empty()) throw ConfigError("--out is required");
    for (const std::string& v : opts.values) {
      char* end = nullptr;
      std::strtod(v.c_str(), &end);
      if (v.empty() || *end != '\0') throw ValidationError("sweep value '" + v + "' is not a number");
    }
    // Resolve every cell before running any, so config errors surface first.
    std::vector<std::vector<ExperimentConfig>> cells;
    for (const std::string& v : opts.values) {
      cells.emplace_back();
      for (std::uint64_t s : opts.seeds) {
        std::vector<std::string> ov = opts.overrides;
        ov.push_back(opts.param + "=" + v);
        cells.back().push_back(resolve(opts.config_path, ov, s));
      }
    }
    fs::create_directories(opts.out_dir);
    Writer csv(fs::path(opts.out_dir) / "summary.csv");
    csv.line("param,value,seeds,config_hash,pass_at_1_mean,pass_at_1_std,pass_at_1_mcts_mean,pass_at_1_mcts_std,"
             "mean_reward_mean,mean_reward_std");
    for (std::size_t i = 0; i < opts.values.size(); ++i) {
      std::vector<double> p1, mcts, reward;
      bool tree = true;
      for (std::size_t k = 0; k < opts.seeds.size(); ++k) {
        const fs::path dir = fs::path(opts.out_dir) / (opts.param + "=" + opts.values[i]) /
                             ("seed=" + std::to_string(opts.seeds[k]));
        TrainOutcome t = train_into(cells[i][k], dir, false);
        p1.push_back(t.last.pass_at_1);
        mcts.push_back(t.last.pass_at_1_mcts);
        reward.push_back(t.last.mean_reward());
        tree = t.last.tree_search;
        out << opts.param << "=" << opts.values[i] << " seed=" << opts.seeds[k] << " pass@1 " << fixed6(t.last.pass_at_1)
            << '\n';
      }
      // Cells differ only in seed; the hash names the seed-free part.
      ExperimentConfig base = cells[i][0];
      base.train.seed = 0;
      csv.line(opts.param + "," + opts.values[i] + "," + std::to_string(opts.seeds.size()) + "," + base.hash() + "," +
               fixed6(mean_of(p1)) + "," + fixed6(sample_std(p1)) + "," +
               (tree ? fixed6(mean_of(mcts)) + "," + fixed6(sample_std(mcts)) : std::string(",")) + "," +
               fixed6(mean_of(reward)) + "," + fixed6(sample_std(reward)));
    }
    return kExitOk;
  });
}

int cmd_dump_tree(const DumpTreeOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    ExperimentConfig cfg = resolve(opts.config_path, opts.overrides, opts.seed);
    const std::vector<Task> tasks = load_tasks(cfg);
    auto task = std::find_if(tasks.begin(), tasks.end(), [&](const Task& t) { return t.task_id == opts.task_id; });
    if (task == tasks.end()) throw ConfigError("--task " + std::to_string(opts.task_id) + " is not in the taskset");
    TrainConfig tc = cfg.train;
    if (opts.budget) tc.n_budget = *opts.budget;
    if (tc.n_budget < 2) throw ConfigError("--budget must be at least 2");

    std::vector<AgentPolicy> agents;
    if (!opts.checkpoints.empty()) {
      agents = load_agents(opts.checkpoints, tasks);
    } else {
      std::vector<int> ids;
      for (const Task& t : tasks) ids.push_back(t.task_id);
      for (int j = 0; j < tc.effective_agents(); ++j)
        agents.emplace_back(init_params(taskset_vocab(tasks), taskset_max_length(tasks), ids, tc.init_scale,
                                        tc.agent_seed(j)));
    }
    SelectorState selector(static_cast<int>(agents.size()));
    Rng rng(derive_seed(tc.seed, "dump", {static_cast<std::uint64_t>(task->task_id)}));
    TreeRollout tr = rollout_tree(*task, agents, selector, tc, rng, opts.trace_selector);
    if (is_tree_mode(tc.mode)) shape_tree(tr.tree, tc.shaping);
    if (opts.out_path.empty()) {
      out << tr.tree.to_jsonl();
    } else {
      Writer(opts.out_path).raw(tr.tree.to_jsonl());
    }
    for (const std::string& l : tr.trace) err << l << '\n';
    return kExitOk;
  });
}

}  // namespace mars
