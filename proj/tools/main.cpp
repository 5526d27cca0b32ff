#include <CLI11.hpp>

#include <iostream>

#include "mars/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Multi-agent tree-search RL on toy program-synthesis tasks"};
  app.require_subcommand(1);

  mars::TrainOptions train;
  auto* t = app.add_subcommand("train", "run one training experiment");
  t->add_option("--config", train.config_path, "YAML config file")->required();
  t->add_option("--override", train.overrides, "dotted key=value, repeatable");
  t->add_option("--seed", train.seed, "experiment seed (wins over the config)");
  t->add_option("--out", train.out_dir, "fresh output directory")->required();
  t->add_flag("--trace-selector", train.trace_selector, "log every selector decision");

  mars::EvalOptions eval;
  auto* e = app.add_subcommand("eval", "tree-search inference with one or more checkpoints");
  e->add_option("--checkpoint", eval.checkpoints, "agent checkpoint, repeatable")->required();
  e->add_option("--taskset", eval.taskset_path, "taskset JSONL")->required();
  e->add_option("--budget", eval.budget, "nodes per task")->default_val(8);
  e->add_option("--seed", eval.seed, "inference seed")->default_val(0);
  e->add_option("--out", eval.out_dir, "output directory for solutions and summary");
  e->add_option("--method", eval.method, "method label in the solution dump")->default_val("eval");
  e->add_flag("--trace-selector", eval.trace_selector, "log every selector decision");

  std::string div_dir, div_out;
  auto* d = app.add_subcommand("diversity", "diversity table over solution dumps");
  d->add_option("run_dir", div_dir, "directory holding solution dumps")->required();
  d->add_option("--out", div_out, "CSV path (default run_dir/diversity.csv)");

  mars::SweepOptions sweep;
  auto* s = app.add_subcommand("sweep", "values x seeds grid over one numeric field");
  s->add_option("--config", sweep.config_path, "YAML config file")->required();
  s->add_option("--override", sweep.overrides, "dotted key=value, repeatable");
  s->add_option("--param", sweep.param, "dotted numeric field")->required();
  s->add_option("--values", sweep.values, "comma-separated values")->required()->delimiter(',');
  s->add_option("--seeds", sweep.seeds, "comma-separated seeds")->required()->delimiter(',');
  s->add_option("--out", sweep.out_dir, "output directory")->required();

  mars::DumpTreeOptions dump;
  auto* dt = app.add_subcommand("dump-tree", "grow and print one search tree");
  dt->add_option("--config", dump.config_path, "YAML config file")->required();
  dt->add_option("--override", dump.overrides, "dotted key=value, repeatable");
  dt->add_option("--checkpoint", dump.checkpoints, "agent checkpoint, repeatable");
  dt->add_option("--task", dump.task_id, "task id")->default_val(0);
  dt->add_option("--seed", dump.seed, "seed (wins over the config)");
  dt->add_option("--budget", dump.budget, "nodes to expand");
  dt->add_option("--out", dump.out_path, "output file (default stdout)");
  dt->add_flag("--trace-selector", dump.trace_selector, "print selector decisions to stderr");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? mars::kExitOk : mars::kExitUsage;
  }

  if (t->parsed()) return mars::cmd_train(train, std::cout, std::cerr);
  if (e->parsed()) return mars::cmd_eval(eval, std::cout, std::cerr);
  if (d->parsed()) return mars::cmd_diversity(div_dir, div_out, std::cout, std::cerr);
  if (s->parsed()) return mars::cmd_sweep(sweep, std::cout, std::cerr);
  return mars::cmd_dump_tree(dump, std::cout, std::cerr);
}
