/*
Copyright 2026 The skillctx Authors. All rights reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/
// Command-line driver. Every subcommand reads and writes artifacts under
// --out-dir so a pipeline can be run step by step:
//   generate-world -> label -> train-planner -> calibrate -> evaluate ...
#include <skillctx/skillctx.hpp>

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace skillctx;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitAssertion = 2;

// Thrown when a check a subcommand asserts does not hold.
struct AssertionFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  int workers = 1;
};

ExperimentConfig load_config(const Globals& g) {
  ExperimentConfig cfg;
  if (!g.config.empty()) {
    if (!fs::exists(g.config)) throw Error("config file '" + g.config + "' not found");
    cfg = load_experiment_config(g.config);
  }
  if (g.seed) cfg.world.seed = *g.seed;
  cfg.validate();
  return cfg;
}

struct Layout {
  fs::path root;
  fs::path world() const { return root / "world"; }
  fs::path labels() const { return root / "labels.jsonl"; }
  fs::path model() const { return root / "planner.json"; }
  fs::path admission() const { return root / "admission.json"; }
};

void require(const fs::path& p, const std::string& producer) {
  if (!fs::exists(p)) throw Error("missing artifact '" + p.string() + "' (run `" + producer + "` first)");
}

void write_jsonl(const fs::path& p, const std::vector<json>& rows) {
  std::string out;
  for (const auto& r : rows) out += r.dump() + "\n";
  io::write_file(p, out);
}

template <class T>
std::vector<T> read_jsonl(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error("cannot open '" + p.string() + "'");
  std::vector<T> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!text::trim(line).empty()) out.push_back(json::parse(line).get<T>());
  }
  return out;
}

std::vector<UtilityLabel> load_labels(const Layout& l) {
  require(l.labels(), "label");
  return read_jsonl<UtilityLabel>(l.labels());
}

AdmissionConfig load_admission(const Layout& l, const ExperimentConfig& cfg) {
  if (!fs::exists(l.admission())) return cfg.admission;
  return io::read_json(l.admission()).get<AdmissionConfig>();
}

// Rebuilds the pipeline state from the artifacts on disk.
Artifacts load_artifacts(const Layout& l, const ExperimentConfig& cfg) {
  Artifacts a;
  a.world = load_world(l.world());
  a.split = split_tasks(a.world.tasks(), cfg.split);
  require_split(a.split);
  a.model = load_model(l.model());
  a.admission = load_admission(l, cfg);
  return a;
}

void report(const fs::path& p) { std::cout << "wrote " << p.string() << '\n'; }

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

void cmd_generate_world(const Globals& g) {
  const auto cfg = load_config(g);
  const Layout l{g.out_dir};
  const World w = generate_world(cfg.world);
  save_world(w, l.world());
  const TaskSplit s = split_tasks(w.tasks(), cfg.split);
  auto ids = [](const std::vector<Task>& ts) {
    std::vector<std::string> out;
    for (const auto& t : ts) out.push_back(t.id);
    return out;
  };
  io::write_json(l.root / "split.json", json{{"train", ids(s.train)}, {"dev", ids(s.dev)}, {"test", ids(s.test)}});
  report(l.world());
  report(l.root / "split.json");
}

struct LibraryArgs {
  std::string in;
  std::string out;
  std::vector<double> thresholds{0.90, 0.85, 0.80};
  long budget = 24000;
  int min_per_family = 2;
};

void cmd_build_library(const Globals& g, const LibraryArgs& args) {
  const auto cfg = load_config(g);
  const Layout l{g.out_dir};
  fs::path in = args.in.empty() ? l.world() / "library.json" : fs::path(args.in);
  require(in, args.in.empty() ? "generate-world" : "build-library --in <raw.json>");
  const SkillLibrary raw = io::read_json(in).get<SkillLibrary>();
  ClusterLadderConfig lc;
  lc.thresholds = args.thresholds;
  lc.token_budget = args.budget;
  lc.min_per_group = args.min_per_family;
  lc.mmr_lambda = cfg.mmr_lambda;
  lc.coverage_weight = cfg.coverage_weight;
  lc.validate();
  const SkillLibrary deduped = dedup_exact(raw);
  const SkillLibrary clustered = cluster_ladder(deduped, lc, cfg.embedder);
  const SkillLibrary gated = budget_gate(clustered, lc, whitespace_token_count, cfg.embedder);
  const fs::path out = args.out.empty() ? l.root / "library.json" : fs::path(args.out);
  io::write_json(out, json(gated));
  std::cout << "skills: raw " << raw.size() << ", dedup " << deduped.size() << ", clustered " << clustered.size()
            << ", gated " << gated.size() << '\n';
  report(out);
}

void cmd_label(const Globals& g, std::optional<int> rollouts) {
  const auto cfg = load_config(g);
  const Layout l{g.out_dir};
  const World w = load_world(l.world());
  const TaskSplit s = split_tasks(w.tasks(), cfg.split);
  require_split(s);
  const auto labels = label_library(w, s.train, rollouts.value_or(cfg.rollouts_per_task), cfg.label_seed,
                                    {true, g.workers});
  std::vector<json> rows(labels.begin(), labels.end());
  write_jsonl(l.labels(), rows);
  report(l.labels());
}

void cmd_train(const Globals& g, const std::string& out_arg) {
  const auto cfg = load_config(g);
  const Layout l{g.out_dir};
  const World w = load_world(l.world());
  const auto labels = load_labels(l);
  const TaskSplit s = split_tasks(w.tasks(), cfg.split);
  require_split(s);
  const auto res = train(labels, w.library(), s.train, cfg.train, cfg.embedder);
  const fs::path out = out_arg.empty() ? l.model() : fs::path(out_arg);
  save_model(res.model, out);
  std::ostringstream loss;
  loss << "epoch,loss\n";
  for (std::size_t i = 0; i < res.loss.size(); ++i) loss << (i + 1) << ',' << text::format_double(res.loss[i]) << '\n';
  fs::path loss_path = out;
  loss_path.replace_extension(".loss.csv");
  io::write_file(loss_path, loss.str());
  report(out);
  report(loss_path);
}

void cmd_calibrate(const Globals& g, const std::string& grid, bool sentinel) {
  const auto cfg = load_config(g);
  const Layout l{g.out_dir};
  const World w = load_world(l.world());
  const PlannerModel m = load_model(l.model());
  const TaskSplit s = split_tasks(w.tasks(), cfg.split);
  require_split(s);
  const auto taus = grid.empty() ? cfg.tau_grid : text::parse_double_list(grid);
  auto opts = calibration_options(cfg, g.workers);
  opts.include_sentinel = sentinel;
  const Calibration cal = calibrate_tau(w, m, s.dev, taus, cfg.seeds, opts);
  io::write_file(l.root / "sweep.csv", sweep_csv(cal));
  io::write_json(l.admission(), json(cal.best));
  std::cout << "tau* = " << tau_label(cal.best) << '\n';
  report(l.root / "sweep.csv");
  report(l.admission());
}

void cmd_render_data(const Globals& g) {
  const auto cfg = load_config(g);
  const Layout l{g.out_dir};
  const World w = load_world(l.world());
  const auto labels = load_labels(l);
  RenderDataOptions opts;
  opts.seed = cfg.label_seed;
  const auto pairs = build_render_pairs(w, labels, opts);
  std::vector<json> rows(pairs.begin(), pairs.end());
  write_jsonl(l.root / "render_pairs.jsonl", rows);
  CurriculumConfig cc;
  cc.rho = opts.rho;
  cc.seed = opts.seed;
  io::write_file(l.root / "curriculum.jsonl", curriculum_jsonl(build_curriculum(pairs, cc)));
  report(l.root / "render_pairs.jsonl");
  report(l.root / "curriculum.jsonl");
}

struct EvaluateArgs {
  std::string method;
  std::optional<int> k;
  bool render = false;
};

void cmd_evaluate(const Globals& g, const EvaluateArgs& args) {
  auto cfg = load_config(g);
  const Layout l{g.out_dir};
  const Artifacts a = load_artifacts(l, cfg);
  if (!args.method.empty()) {
    SelectorSpec spec;
    spec.kind = selector_kind_from_string(args.method);
    spec.k = args.k;
    spec.render = args.render;
    cfg.methods = {spec};
  }
  const EvaluationResult res = run_evaluation(cfg, a, g.workers);
  std::vector<json> rows(res.rows.begin(), res.rows.end());
  write_jsonl(l.root / "results.jsonl", rows);
  io::write_file(l.root / "results.csv", rows_csv(res.rows));
  io::write_file(l.root / "summary.csv", summary_csv(res.table));
  io::write_json(l.root / "summary.json", summary_json(res));
  std::cout << summary_csv(res.table);
  for (const char* f : {"results.jsonl", "results.csv", "summary.csv", "summary.json"}) report(l.root / f);
}

void cmd_scaling(const Globals& g) {
  const auto cfg = load_config(g);
  const Layout l{g.out_dir};
  const Artifacts a = load_artifacts(l, cfg);
  const auto rows = run_scaling(cfg, a, cfg.pool_sizes, g.workers);
  io::write_file(l.root / "scaling.csv", scaling_csv(rows));
  report(l.root / "scaling.csv");
}

void cmd_per_skill(const Globals& g) {
  const auto cfg = load_config(g);
  const Layout l{g.out_dir};
  const World w = load_world(l.world());
  io::write_file(l.root / "per_skill.csv", skill_deltas_csv(per_skill_deltas(w, cfg.seeds, g.workers)));
  report(l.root / "per_skill.csv");
}

void cmd_per_task(const Globals& g) {
  const auto cfg = load_config(g);
  const Layout l{g.out_dir};
  const World w = load_world(l.world());
  const auto rows = per_task_grouping(w, cfg.budgets, cfg.seeds, cfg.embedder, g.workers);
  io::write_file(l.root / "per_task.csv", grouping_csv(rows));
  report(l.root / "per_task.csv");
}

void cmd_budget_hist(const Globals& g) {
  const auto cfg = load_config(g);
  const Layout l{g.out_dir};
  const Artifacts a = load_artifacts(l, cfg);
  const auto hist = budget_histogram(a.world, a.model, a.split.test, a.admission);
  io::write_file(l.root / "budget_hist.csv", histogram_csv(hist));
  report(l.root / "budget_hist.csv");
}

void cmd_fixture(const Globals& g, const std::string& dir) {
  const fs::path fx = dir.empty() ? fs::path(SKILLCTX_DATA_DIR) / "fixtures" / "t47" : fs::path(dir);
  const CaseStudyReport rep = case_study_fixture(fx);
  const Layout l{g.out_dir};
  fs::create_directories(l.root);
  io::write_file(l.root / "fixture_report.txt", rep.text());
  std::cout << rep.text();
  if (!rep.ok()) throw AssertionFailure("case study checks failed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"skillctx: adaptive skill-context construction on a simulated agent world"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "ExperimentConfig JSON file (defaults apply to omitted fields)");
  app.add_option("--seed", g.seed, "Override the world seed");
  app.add_option("--out-dir", g.out_dir, "Artifact directory")->capture_default_str();
  app.add_option("--workers", g.workers, "Worker threads; outputs do not depend on it")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  std::function<void()> action;

  auto* gen = app.add_subcommand("generate-world", "Generate the simulated world and its task split");
  gen->callback([&] { action = [&] { cmd_generate_world(g); }; });

  LibraryArgs lib_args;
  auto* lib = app.add_subcommand("build-library", "Dedup, cluster and budget-gate a raw skill library");
  lib->add_option("--in", lib_args.in, "Raw library JSON (default: the world library)");
  lib->add_option("--out", lib_args.out, "Output library JSON (default: <out-dir>/library.json)");
  lib->add_option("--thresholds", lib_args.thresholds, "Descending cosine ladder")->delimiter(',');
  lib->add_option("--budget", lib_args.budget, "Token budget")->capture_default_str();
  lib->add_option("--min-per-family", lib_args.min_per_family, "Skills kept per family")->capture_default_str();
  lib->callback([&] { action = [&] { cmd_build_library(g, lib_args); }; });

  std::optional<int> rollouts;
  auto* label = app.add_subcommand("label", "Label training tasks with paired-rollout benefits");
  label->add_option("--rollouts", rollouts, "Rollouts per (task, context); default from config");
  label->callback([&] { action = [&] { cmd_label(g, rollouts); }; });

  std::string model_out;
  auto* tr = app.add_subcommand("train-planner", "Train the planner; also writes <out>.loss.csv");
  tr->add_option("--out", model_out, "Model path (default: <out-dir>/planner.json)");
  tr->callback([&] { action = [&] { cmd_train(g, model_out); }; });

  std::string grid;
  bool sentinel = true;
  auto* cal = app.add_subcommand("calibrate", "Sweep tau on the dev split and store the best admission");
  cal->add_option("--grid", grid, "Comma-separated tau values (default from config)");
  cal->add_flag("--sentinel,!--no-sentinel", sentinel, "Include the accept-none point");
  cal->callback([&] { action = [&] { cmd_calibrate(g, grid, sentinel); }; });

  auto* rd = app.add_subcommand("build-render-data", "Write renderer supervision pairs and the curriculum");
  rd->callback([&] { action = [&] { cmd_render_data(g); }; });

  EvaluateArgs ev_args;
  auto* ev = app.add_subcommand("evaluate", "Evaluate methods on the test split");
  ev->add_option("--method", ev_args.method, "Single method kind (default: every configured method)");
  ev->add_option("--k", ev_args.k, "Top-k for retrieval methods")->check(CLI::PositiveNumber);
  ev->add_flag("--render", ev_args.render, "Render multi-skill contexts");
  ev->callback([&] { action = [&] { cmd_evaluate(g, ev_args); }; });

  auto* sc = app.add_subcommand("scaling", "Pass rate against library pool size");
  sc->callback([&] { action = [&] { cmd_scaling(g); }; });

  auto* ps = app.add_subcommand("per-skill", "Singleton benefit per skill, exact and sampled");
  ps->callback([&] { action = [&] { cmd_per_skill(g); }; });

  auto* pt = app.add_subcommand("per-task", "Per-task reward trajectories over top-N budgets");
  pt->callback([&] { action = [&] { cmd_per_task(g); }; });

  auto* bh = app.add_subcommand("budget-hist", "Histogram of admitted set sizes on the test split");
  bh->callback([&] { action = [&] { cmd_budget_hist(g); }; });

  std::string fixture_dir;
  auto* fx = app.add_subcommand("fixture", "Replay the bundled case study and assert each step");
  fx->add_option("--dir", fixture_dir, "Fixture directory (default: bundled t47)");
  fx->callback([&] { action = [&] { cmd_fixture(g, fixture_dir); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    fs::create_directories(g.out_dir);
    action();
  } catch (const AssertionFailure& e) {
    std::cerr << "assertion failed: " << e.what() << '\n';
    return kExitAssertion;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitOk;
}
