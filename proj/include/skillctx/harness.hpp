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
#pragma once

#include <skillctx/baselines.hpp>
#include <skillctx/budget.hpp>
#include <skillctx/librarian.hpp>
#include <skillctx/planner.hpp>
#include <skillctx/renderer.hpp>
#include <skillctx/simworld.hpp>
#include <skillctx/stats.hpp>

#include <algorithm>
#include <filesystem>
#include <map>
#include <sstream>

namespace skillctx {

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

struct SplitFractions {
  double train = 0.5;
  double dev = 0.2;
  double test = 0.3;

  void validate() const {
    if (train < 0.0 || dev < 0.0 || test < 0.0) throw Error("split fractions must be >= 0");
    if (std::abs(train + dev + test - 1.0) > 1e-9) throw Error("split fractions must sum to 1");
  }
};

inline void to_json(json& j, const SplitFractions& s) { j = json::array({s.train, s.dev, s.test}); }

inline void from_json(const json& j, SplitFractions& s) {
  if (j.is_array()) {
    if (j.size() != 3) throw Error("split must hold three fractions (train, dev, test)");
    s.train = j[0].get<double>();
    s.dev = j[1].get<double>();
    s.test = j[2].get<double>();
  } else {
    SplitFractions d;
    s.train = j.value("train", d.train);
    s.dev = j.value("dev", d.dev);
    s.test = j.value("test", d.test);
  }
  s.validate();
}

/// Methods evaluated when a config lists none. Retrieval baselines without a
/// k are swept over `k_grid`.
inline std::vector<SelectorSpec> default_methods() {
  std::vector<SelectorSpec> out;
  for (auto kind : {SelectorKind::none, SelectorKind::random, SelectorKind::full, SelectorKind::bm25,
                    SelectorKind::dense, SelectorKind::fixed_topk, SelectorKind::global_topk}) {
    SelectorSpec s;
    s.kind = kind;
    out.push_back(s);
  }
  SelectorSpec adaptive;
  adaptive.kind = SelectorKind::planner_adaptive;
  adaptive.render = true;
  out.push_back(adaptive);
  SelectorSpec plain = adaptive;
  plain.render = false;
  plain.name = "planner_adaptive_no_render";
  out.push_back(plain);
  return out;
}

struct ExperimentConfig {
  WorldConfig world;
  EmbedderConfig embedder;
  PlannerTrainConfig train;
  AdmissionConfig admission;
  std::vector<SelectorSpec> methods = default_methods();
  std::vector<std::uint64_t> seeds{300, 301, 302, 303, 304};
  int rollouts_per_task = 5;        // labeling rollouts per (task, context)
  std::uint64_t label_seed = 300;
  SplitFractions split;
  bool calibrate = true;            // replace admission.tau by the dev-set optimum
  std::vector<double> tau_grid = default_tau_grid();
  std::vector<int> k_grid{1, 2, 4, 8};
  std::vector<int> pool_sizes{8, 16, 32, 64, 82};
  std::vector<int> budgets{1, 2, 3, 4, 6, 8};
  double mmr_lambda = 0.7;
  double coverage_weight = 0.1;

  void validate() const {
    world.validate();
    embedder.validate();
    train.validate();
    split.validate();
    if (seeds.empty()) throw Error("ExperimentConfig: seeds must be nonempty");
    if (rollouts_per_task < 1) throw Error("ExperimentConfig: rollouts_per_task must be >= 1");
    if (tau_grid.empty()) throw Error("ExperimentConfig: tau_grid must be nonempty");
    if (k_grid.empty()) throw Error("ExperimentConfig: k_grid must be nonempty");
    for (int k : k_grid) {
      if (k < 1) throw Error("ExperimentConfig: k_grid values must be >= 1");
    }
    if (!std::is_sorted(pool_sizes.begin(), pool_sizes.end())) throw Error("ExperimentConfig: pool_sizes must ascend");
    if (!std::is_sorted(budgets.begin(), budgets.end())) throw Error("ExperimentConfig: budgets must ascend");
    for (const auto& m : methods) {
      if (needs_k(m.kind) && !m.k) continue;  // swept
      m.validate();
    }
  }
};

inline void to_json(json& j, const ExperimentConfig& c) {
  json methods = json::array();
  for (const auto& m : c.methods) {
    json mj;
    to_json(mj, m);
    methods.push_back(mj);
  }
  j = json{{"world", c.world},
           {"embedder", c.embedder},
           {"train", c.train},
           {"admission", c.admission},
           {"methods", methods},
           {"seeds", c.seeds},
           {"rollouts_per_task", c.rollouts_per_task},
           {"label_seed", c.label_seed},
           {"split", c.split},
           {"calibrate", c.calibrate},
           {"tau_grid", c.tau_grid},
           {"k_grid", c.k_grid},
           {"pool_sizes", c.pool_sizes},
           {"budgets", c.budgets},
           {"mmr_lambda", c.mmr_lambda},
           {"coverage_weight", c.coverage_weight}};
}

inline void from_json(const json& j, ExperimentConfig& c) {
  ExperimentConfig d;
  if (j.contains("world")) c.world = j.at("world").get<WorldConfig>();
  if (j.contains("embedder")) c.embedder = j.at("embedder").get<EmbedderConfig>();
  if (j.contains("train")) c.train = j.at("train").get<PlannerTrainConfig>();
  if (j.contains("admission")) c.admission = j.at("admission").get<AdmissionConfig>();
  if (j.contains("methods")) {
    c.methods.clear();
    for (const auto& mj : j.at("methods")) {
      // k may be absent for retrieval kinds; it is swept later.
      SelectorSpec s;
      s.kind = selector_kind_from_string(mj.at("kind").get<std::string>());
      s.name = mj.value("name", std::string{});
      if (mj.contains("k")) s.k = mj.at("k").get<int>();
      if (mj.contains("seed")) s.seed = mj.at("seed").get<std::uint64_t>();
      s.render = mj.value("render", false);
      c.methods.push_back(s);
    }
  }
  c.seeds = j.value("seeds", d.seeds);
  c.rollouts_per_task = j.value("rollouts_per_task", d.rollouts_per_task);
  c.label_seed = j.value("label_seed", d.label_seed);
  if (j.contains("split")) c.split = j.at("split").get<SplitFractions>();
  c.calibrate = j.value("calibrate", d.calibrate);
  c.tau_grid = j.value("tau_grid", d.tau_grid);
  c.k_grid = j.value("k_grid", d.k_grid);
  c.pool_sizes = j.value("pool_sizes", d.pool_sizes);
  c.budgets = j.value("budgets", d.budgets);
  c.mmr_lambda = j.value("mmr_lambda", d.mmr_lambda);
  c.coverage_weight = j.value("coverage_weight", d.coverage_weight);
  c.validate();
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& p) {
  try {
    return io::read_json(p).get<ExperimentConfig>();
  } catch (const json::exception& e) {
    throw Error(p.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Task split
// ---------------------------------------------------------------------------

struct TaskSplit {
  std::vector<Task> train;
  std::vector<Task> dev;
  std::vector<Task> test;
};

/// Position of a task id in [0, 1), stable under library and task-list edits.
inline double split_coordinate(const std::string& task_id) {
  return static_cast<double>(mix64(text::fnv1a64(task_id)) >> 11) * 0x1.0p-53;
}

inline TaskSplit split_tasks(const std::vector<Task>& tasks, const SplitFractions& f) {
  f.validate();
  TaskSplit out;
  for (const auto& t : tasks) {
    const double u = split_coordinate(t.id);
    if (u < f.train) {
      out.train.push_back(t);
    } else if (u < f.train + f.dev) {
      out.dev.push_back(t);
    } else {
      out.test.push_back(t);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pipeline artifacts
// ---------------------------------------------------------------------------

struct Artifacts {
  World world;
  TaskSplit split;
  std::vector<UtilityLabel> labels;
  PlannerModel model;
  std::vector<double> loss;
  std::optional<Calibration> calibration;
  AdmissionConfig admission;
};

inline void require_split(const TaskSplit& s) {
  if (s.train.empty()) throw Error("task split left no training tasks; adjust split or n_tasks");
  if (s.dev.empty()) throw Error("task split left no dev tasks; adjust split or n_tasks");
  if (s.test.empty()) throw Error("task split left no test tasks; adjust split or n_tasks");
}

inline CalibrationOptions calibration_options(const ExperimentConfig& cfg, int workers) {
  CalibrationOptions o;
  o.b_max = cfg.admission.b_max;
  o.include_sentinel = true;
  o.render = true;
  o.workers = workers;
  return o;
}

/// Pipeline mode: generate, label the training tasks, train, calibrate on dev.
inline Artifacts build_artifacts(const ExperimentConfig& cfg, int workers = 1) {
  cfg.validate();
  Artifacts a;
  a.world = generate_world(cfg.world);
  a.split = split_tasks(a.world.tasks(), cfg.split);
  require_split(a.split);
  a.labels = label_library(a.world, a.split.train, cfg.rollouts_per_task, cfg.label_seed, {true, workers});
  auto trained = train(a.labels, a.world.library(), a.split.train, cfg.train, cfg.embedder);
  a.model = std::move(trained.model);
  a.loss = std::move(trained.loss);
  a.admission = cfg.admission;
  if (cfg.calibrate) {
    a.calibration = calibrate_tau(a.world, a.model, a.split.dev, cfg.tau_grid, cfg.seeds, calibration_options(cfg, workers));
    a.admission = a.calibration->best;
  }
  return a;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct ResultRow {
  std::string method;
  std::string task_id;
  std::uint64_t seed = 0;
  int pass = 0;
  int messages = 0;
  int b_t = 0;
  bool rendered = false;

  bool operator==(const ResultRow&) const = default;
};

inline void to_json(json& j, const ResultRow& r) {
  j = json{{"method", r.method}, {"task_id", r.task_id}, {"seed", r.seed},        {"pass", r.pass},
           {"messages", r.messages}, {"b_t", r.b_t},       {"rendered", r.rendered}};
}

inline void from_json(const json& j, ResultRow& r) {
  r.method = j.at("method").get<std::string>();
  r.task_id = j.at("task_id").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.pass = j.at("pass").get<int>();
  r.messages = j.at("messages").get<int>();
  r.b_t = j.at("b_t").get<int>();
  r.rendered = j.at("rendered").get<bool>();
}

inline std::string rows_csv(const std::vector<ResultRow>& rows) {
  std::ostringstream os;
  os << "method,task_id,seed,pass,messages,b_t,rendered\n";
  for (const auto& r : rows) {
    os << r.method << ',' << r.task_id << ',' << r.seed << ',' << r.pass << ',' << r.messages << ',' << r.b_t << ','
       << (r.rendered ? 1 : 0) << '\n';
  }
  return os.str();
}

struct MethodSummary {
  std::string method;
  double pass_rate_pct = 0.0;  // mean over seeds of the per-seed pass rate
  double pass_std_pct = 0.0;   // sample std of per-seed pass rates
  double mean_messages = 0.0;
  double mean_b_t = 0.0;
  std::size_t rows = 0;
};

inline void to_json(json& j, const MethodSummary& s) {
  j = json{{"method", s.method},
           {"pass_rate_pct", s.pass_rate_pct},
           {"pass_std_pct", s.pass_std_pct},
           {"mean_messages", s.mean_messages},
           {"mean_b_t", s.mean_b_t},
           {"rows", s.rows}};
}

/// Pure fold over rows; methods keep their first-appearance order.
inline std::vector<MethodSummary> summarize_rows(const std::vector<ResultRow>& rows) {
  std::vector<std::string> order;
  std::map<std::string, std::map<std::uint64_t, std::pair<double, double>>> per_seed;  // pass sum, count
  std::map<std::string, double> messages, budget;
  std::map<std::string, std::size_t> counts;
  for (const auto& r : rows) {
    if (!counts.count(r.method)) order.push_back(r.method);
    auto& cell = per_seed[r.method][r.seed];
    cell.first += r.pass;
    cell.second += 1.0;
    messages[r.method] += r.messages;
    budget[r.method] += r.b_t;
    ++counts[r.method];
  }
  std::vector<MethodSummary> out;
  for (const auto& m : order) {
    MethodSummary s;
    s.method = m;
    s.rows = counts[m];
    std::vector<double> rates;
    for (const auto& [seed, cell] : per_seed[m]) rates.push_back(cell.first / cell.second);
    s.pass_rate_pct = 100.0 * stats::mean(rates);
    s.pass_std_pct = 100.0 * stats::sample_std(rates);
    s.mean_messages = messages[m] / static_cast<double>(s.rows);
    s.mean_b_t = budget[m] / static_cast<double>(s.rows);
    out.push_back(s);
  }
  return out;
}

inline std::string summary_csv(const std::vector<MethodSummary>& summary) {
  std::ostringstream os;
  os << "method,pass_rate_pct,pass_std_pct,mean_messages,mean_b_t\n";
  for (const auto& s : summary) {
    os << s.method << ',' << text::format_fixed(s.pass_rate_pct, 4) << ',' << text::format_fixed(s.pass_std_pct, 4) << ','
       << text::format_fixed(s.mean_messages, 4) << ',' << text::format_fixed(s.mean_b_t, 4) << '\n';
  }
  return os.str();
}

/// Selector specs actually run: retrieval kinds without k become one spec
/// per entry of k_grid.
inline std::vector<SelectorSpec> expand_methods(const std::vector<SelectorSpec>& methods, const std::vector<int>& k_grid) {
  std::vector<SelectorSpec> out;
  for (const auto& m : methods) {
    if (needs_k(m.kind) && !m.k) {
      for (int k : k_grid) {
        SelectorSpec s = m;
        s.k = k;
        if (!m.name.empty()) s.name = m.name + "@" + std::to_string(k);
        out.push_back(s);
      }
    } else {
      out.push_back(m);
    }
  }
  std::set<std::string> labels;
  for (const auto& s : out) {
    if (!labels.insert(s.label()).second) throw Error("duplicate method label '" + s.label() + "'");
  }
  return out;
}

/// Rows of one method over the given tasks and seeds. Rollout randomness is
/// keyed by (seed, task) only, so no method's rows depend on another's.
inline std::vector<ResultRow> evaluate_method(const SelectorSpec& spec, const World& world, const std::vector<Task>& tasks,
                                              const SelectionContext& ctx, const std::vector<std::uint64_t>& seeds,
                                              int workers = 1) {
  ctx.warm(spec);
  const RendererImpl student = make_rule_student();
  std::vector<std::vector<ResultRow>> cells(tasks.size());
  parallel_for(tasks.size(), workers, [&](std::size_t i) {
    const Task& t = tasks[i];
    const auto ids = select(spec, t, ctx);
    const RenderedContext context = build_context(t, ctx.library(), ids, spec.render ? &student : nullptr);
    for (std::uint64_t s : seeds) {
      const RolloutRecord r = rollout(world, t, context, s);
      cells[i].push_back({spec.label(), t.id, s, r.reward, r.messages, static_cast<int>(ids.size()), context.rendered});
    }
  });
  std::vector<ResultRow> out;
  for (auto& c : cells) {
    for (auto& r : c) out.push_back(std::move(r));
  }
  return out;
}

inline SelectionContext selection_context(const ExperimentConfig& cfg, const Artifacts& a) {
  SelectionContext ctx(a.world.library(), cfg.embedder);
  ctx.model = &a.model;
  ctx.admission = a.admission;
  ctx.global_order = global_ranking(a.model, a.split.dev, a.world.library());
  ctx.seed = cfg.seeds.front();
  return ctx;
}

struct EvaluationResult {
  std::vector<ResultRow> rows;
  std::vector<MethodSummary> methods;  // one entry per evaluated spec
  std::vector<MethodSummary> table;    // one entry per configured method, best k for swept ones
  json metadata;
};

inline EvaluationResult run_evaluation(const ExperimentConfig& cfg, const Artifacts& a, int workers = 1) {
  cfg.validate();
  const SelectionContext ctx = selection_context(cfg, a);
  const auto specs = expand_methods(cfg.methods, cfg.k_grid);
  EvaluationResult res;
  for (const auto& spec : specs) {
    auto rows = evaluate_method(spec, a.world, a.split.test, ctx, cfg.seeds, workers);
    res.rows.insert(res.rows.end(), rows.begin(), rows.end());
  }
  res.methods = summarize_rows(res.rows);
  std::map<std::string, MethodSummary> by_label;
  for (const auto& s : res.methods) by_label[s.method] = s;

  json sweep = json::object();
  for (const auto& m : cfg.methods) {
    if (needs_k(m.kind) && !m.k) {
      const std::string base = m.name.empty() ? to_string(m.kind) : m.name;
      json per_k = json::object();
      const MethodSummary* best = nullptr;
      int best_k = 0;
      for (int k : cfg.k_grid) {
        const MethodSummary& s = by_label.at(base + "@" + std::to_string(k));
        per_k[std::to_string(k)] = s.pass_rate_pct;
        if (!best || s.pass_rate_pct > best->pass_rate_pct) {
          best = &s;
          best_k = k;
        }
      }
      sweep[base] = json{{"per_k_pass_rate_pct", per_k}, {"best_k", best_k}};
      MethodSummary row = *best;
      row.method = base;
      res.table.push_back(row);
    } else {
      SelectorSpec s = m;
      res.table.push_back(by_label.at(s.label()));
    }
  }
  res.metadata = json{{"tau", a.admission.accept_none_sentinel ? json("accept_none") : json(a.admission.tau)},
                      {"b_max", a.admission.b_max},
                      {"calibrated", a.calibration.has_value()},
                      {"seeds", cfg.seeds},
                      {"n_train", a.split.train.size()},
                      {"n_dev", a.split.dev.size()},
                      {"n_test", a.split.test.size()},
                      {"k_sweep", sweep},
                      {"k_sweep_note",
                       "retrieval baselines without a configured k are run at every k in k_grid; the table reports "
                       "the best k per method"}};
  return res;
}

inline json summary_json(const EvaluationResult& r) {
  json methods = json::array(), table = json::array();
  for (const auto& s : r.methods) methods.push_back(s);
  for (const auto& s : r.table) table.push_back(s);
  return json{{"methods", methods}, {"table", table}, {"metadata", r.metadata}};
}

// ---------------------------------------------------------------------------
// Pool-size scaling
// ---------------------------------------------------------------------------

struct ScalingRow {
  int pool_size = 0;
  std::string method;
  PassSummary summary;
};

/// Pool order used for scaling: MMR over the library with an empty query,
/// so relevance is provenance coverage alone.
inline std::vector<std::string> pool_order(const SkillLibrary& lib, const ExperimentConfig& cfg) {
  if (lib.empty()) return {};
  return mmr_rank(lib, "", lib.size(), cfg.mmr_lambda, cfg.embedder, cfg.coverage_weight);
}

inline std::vector<ScalingRow> run_scaling(const ExperimentConfig& cfg, const Artifacts& a,
                                           const std::vector<int>& pool_sizes, int workers = 1) {
  if (!std::is_sorted(pool_sizes.begin(), pool_sizes.end())) throw Error("run_scaling: pool sizes must ascend");
  const auto order = pool_order(a.world.library(), cfg);
  for (int n : pool_sizes) {
    if (n < 0 || static_cast<std::size_t>(n) > order.size()) {
      throw Error("run_scaling: pool size " + std::to_string(n) + " outside [0, " + std::to_string(order.size()) + "]");
    }
  }
  const RendererImpl student = make_rule_student();
  const auto& tasks = a.split.test;
  std::vector<ScalingRow> out;
  for (int n : pool_sizes) {
    const std::vector<std::string> pool_ids(order.begin(), order.begin() + n);
    const World pool_world = a.world.with_library(a.world.library().subset(pool_ids));
    const SkillLibrary& pool = pool_world.library();

    std::vector<RenderedContext> full(tasks.size(), plain_context(pool, pool.ids()));
    out.push_back({n, "full", evaluate_contexts(pool_world, tasks, full, cfg.seeds, workers)});

    const auto scores = score_tasks(a.model, tasks, pool, workers);
    std::vector<RenderedContext> adaptive(tasks.size());
    parallel_for(tasks.size(), workers, [&](std::size_t i) {
      adaptive[i] = build_context(tasks[i], pool, admit_for(scores[i], a.admission), &student);
    });
    out.push_back({n, "planner_adaptive", evaluate_contexts(pool_world, tasks, adaptive, cfg.seeds, workers)});
  }
  return out;
}

inline std::string scaling_csv(const std::vector<ScalingRow>& rows) {
  std::ostringstream os;
  os << "pool_size,method,mean_pass,std_pass,mean_messages\n";
  for (const auto& r : rows) {
    os << r.pool_size << ',' << r.method << ',' << text::format_fixed(r.summary.mean_pass, 6) << ','
       << text::format_fixed(r.summary.std_pass, 6) << ',' << text::format_fixed(r.summary.mean_messages, 6) << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Per-skill deltas
// ---------------------------------------------------------------------------

struct SkillDelta {
  std::string skill_id;
  std::string mode;  // "oracle" or "sampled"
  double delta_pass = 0.0;
  double delta_messages = 0.0;
};

/// Singleton injection minus no skill, averaged over tasks: exact values
/// first, then paired-seed estimates, one row per skill each.
inline std::vector<SkillDelta> per_skill_deltas(const World& world, const std::vector<std::uint64_t>& seeds,
                                                int workers = 1) {
  const auto& lib = world.library();
  const auto& tasks = world.tasks();
  if (tasks.empty()) throw Error("per_skill_deltas: world has no tasks");
  const RenderedContext empty;
  std::vector<SkillDelta> oracle(lib.size()), sampled(lib.size());
  parallel_for(lib.size(), workers, [&](std::size_t i) {
    const Skill& s = lib[i];
    const RenderedContext single = plain_context(lib, {s.id});
    double dp = 0.0, dm = 0.0, sp = 0.0, sm = 0.0;
    for (const auto& t : tasks) {
      dp += pass_probability(world, t, single) - pass_probability(world, t, empty);
      dm += expected_messages(world, t, single) - expected_messages(world, t, empty);
      for (std::uint64_t seed : seeds) {
        const auto with = rollout(world, t, single, seed);
        const auto without = rollout(world, t, empty, seed);
        sp += with.reward - without.reward;
        sm += with.messages - without.messages;
      }
    }
    const double nt = static_cast<double>(tasks.size());
    const double ns = nt * static_cast<double>(std::max<std::size_t>(1, seeds.size()));
    oracle[i] = {s.id, "oracle", dp / nt, dm / nt};
    sampled[i] = {s.id, "sampled", seeds.empty() ? 0.0 : sp / ns, seeds.empty() ? 0.0 : sm / ns};
  });
  std::vector<SkillDelta> out = oracle;
  if (!seeds.empty()) out.insert(out.end(), sampled.begin(), sampled.end());
  return out;
}

inline std::string skill_deltas_csv(const std::vector<SkillDelta>& rows) {
  std::ostringstream os;
  os << "skill_id,mode,delta_pass,delta_messages\n";
  for (const auto& r : rows) {
    os << r.skill_id << ',' << r.mode << ',' << text::format_fixed(r.delta_pass, 6) << ','
       << text::format_fixed(r.delta_messages, 6) << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Per-task grouping
// ---------------------------------------------------------------------------

inline constexpr double kGroupCutoff = 0.3;

inline std::string trajectory_group(double rho) {
  if (rho > kGroupCutoff) return "improving";
  if (rho < -kGroupCutoff) return "degrading";
  return "neutral";
}

struct TaskTrajectory {
  std::string task_id;
  std::vector<int> budgets;
  std::vector<double> reward;  // mean over seeds at each budget
  double rho = 0.0;
  std::string group;
};

/// Reward of the dense-ranked top-N context for every budget N, and its
/// Spearman correlation with N. Constant trajectories get rho = 0.
inline std::vector<TaskTrajectory> per_task_grouping(const World& world, const std::vector<int>& budgets,
                                                     const std::vector<std::uint64_t>& seeds,
                                                     const EmbedderConfig& embedder = {}, int workers = 1) {
  if (budgets.empty()) throw Error("per_task_grouping: no budgets");
  if (!std::is_sorted(budgets.begin(), budgets.end())) throw Error("per_task_grouping: budgets must ascend");
  if (seeds.empty()) throw Error("per_task_grouping: no seeds");
  const auto& lib = world.library();
  const std::size_t deepest = std::min<std::size_t>(lib.size(), static_cast<std::size_t>(std::max(0, budgets.back())));
  const DenseIndex index(lib, embedder);
  std::vector<TaskTrajectory> out(world.tasks().size());
  parallel_for(world.tasks().size(), workers, [&](std::size_t i) {
    const Task& t = world.tasks()[i];
    const auto ranked = deepest > 0 ? index.rank(t.instruction, deepest) : std::vector<std::string>{};
    TaskTrajectory tr;
    tr.task_id = t.id;
    tr.budgets = budgets;
    std::vector<double> xs;
    for (int b : budgets) {
      const std::size_t n = std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(std::max(0, b)));
      const RenderedContext ctx = plain_context(lib, std::vector<std::string>(ranked.begin(), ranked.begin() + n));
      double wins = 0.0;
      for (std::uint64_t s : seeds) wins += rollout(world, t, ctx, s).reward;
      tr.reward.push_back(wins / static_cast<double>(seeds.size()));
      xs.push_back(static_cast<double>(b));
    }
    tr.rho = stats::spearman(xs, tr.reward);
    tr.group = trajectory_group(tr.rho);
    out[i] = std::move(tr);
  });
  return out;
}

inline std::string grouping_csv(const std::vector<TaskTrajectory>& rows) {
  std::ostringstream os;
  os << "task_id,spearman_rho,group\n";
  for (const auto& r : rows) os << r.task_id << ',' << text::format_fixed(r.rho, 6) << ',' << r.group << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Renderer training data
// ---------------------------------------------------------------------------

struct RenderDataOptions {
  int max_context = 4;                 // skills per sampled context
  std::vector<double> rho{0.1, 0.9};   // curriculum, per epoch
  std::uint64_t seed = 300;
};

/// Trace-rich supervision: for every labeled task, the top positive-benefit
/// skills (at least two) form a context; one rollout of it supplies the
/// trace, and the reference teacher writes a target for each member.
inline std::vector<RenderPair> build_render_pairs(const World& world, const std::vector<UtilityLabel>& labels,
                                                  const RenderDataOptions& opts,
                                                  const TeacherLog& log = log_to_stderr) {
  if (opts.max_context < 2) throw Error("build_render_pairs: max_context must be >= 2");
  std::vector<std::string> task_order;
  std::map<std::string, std::vector<const UtilityLabel*>> by_task;
  for (const auto& l : labels) {
    if (!by_task.count(l.task_id)) task_order.push_back(l.task_id);
    by_task[l.task_id].push_back(&l);
  }
  const ReferenceTeacher teacher;
  const auto& lib = world.library();
  std::vector<RenderPair> out;
  for (const auto& tid : task_order) {
    const Task& task = world.task(tid);
    auto rows = by_task[tid];
    std::stable_sort(rows.begin(), rows.end(), [](const UtilityLabel* a, const UtilityLabel* b) {
      if (a->delta != b->delta) return a->delta > b->delta;
      return a->skill_id < b->skill_id;
    });
    std::vector<Skill> chosen;
    for (const auto* l : rows) {
      if (l->delta <= 0.0 || static_cast<int>(chosen.size()) >= opts.max_context) break;
      chosen.push_back(lib.at(l->skill_id));
    }
    if (chosen.size() < 2) continue;
    std::vector<std::string> ids;
    for (const auto& s : chosen) ids.push_back(s.id);
    const RolloutRecord trace = rollout(world, task, plain_context(lib, ids), derive_stream(opts.seed, "render-trace:" + tid).seed());
    for (std::size_t i = 0; i < chosen.size(); ++i) {
      auto teacher_out = teacher_pipeline(task, chosen[i], chosen, trace, teacher, log);
      if (!teacher_out) continue;
      RenderPair p;
      p.task_id = tid;
      p.input = {task.instruction, chosen[i].id, chosen[i].name, chosen[i].description,
                 neighbors_of(chosen, i), trace_summary(trace)};
      p.d1 = teacher_out->d1;
      p.target = teacher_out->d2;
      p.trace_rich = true;
      out.push_back(std::move(p));
    }
  }
  return out;
}

/// One JSON line per (epoch, pair), epochs numbered from 1.
inline std::string curriculum_jsonl(const std::vector<std::vector<RenderPair>>& epochs) {
  std::string out;
  for (std::size_t k = 0; k < epochs.size(); ++k) {
    for (const auto& p : epochs[k]) {
      json j = p;
      j["epoch"] = k + 1;
      out += j.dump();
      out.push_back('\n');
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Case study replay
// ---------------------------------------------------------------------------

struct CaseCheck {
  std::string name;
  bool ok = false;
  std::string detail;
};

struct CaseStudyReport {
  std::vector<CaseCheck> checks;
  std::vector<std::string> admitted;
  int budget = 0;
  std::string rendered_focus;  // rendered description of the focus skill

  bool ok() const {
    return !checks.empty() && std::all_of(checks.begin(), checks.end(), [](const CaseCheck& c) { return c.ok; });
  }

  std::string text() const {
    std::ostringstream os;
    for (const auto& c : checks) os << (c.ok ? "ok   " : "FAIL ") << c.name << ": " << c.detail << '\n';
    os << (ok() ? "case study: all checks passed" : "case study: FAILED") << '\n';
    return os.str();
  }
};

/// Replays the bundled single-task case study in `dir` (fixture.json,
/// task.json, skills.json): empty-context pass over the listed seeds, score
/// table admission, budget, and scope clauses of the rendered context.
inline CaseStudyReport case_study_fixture(const std::filesystem::path& dir) {
  for (const char* f : {"fixture.json", "task.json", "skills.json"}) {
    if (!std::filesystem::exists(dir / f)) {
      throw Error("case study fixture '" + dir.string() + "' is missing " + f);
    }
  }
  const json fx = io::read_json(dir / "fixture.json");
  const Task task = io::read_json(dir / "task.json").get<Task>();
  const SkillLibrary lib(io::read_json(dir / "skills.json").get<std::vector<Skill>>());
  WorldConfig wcfg;
  if (fx.contains("world")) wcfg = fx.at("world").get<WorldConfig>();
  const World world({task}, lib, wcfg);

  CaseStudyReport rep;
  auto check = [&](std::string name, bool ok, std::string detail) {
    rep.checks.push_back({std::move(name), ok, std::move(detail)});
  };

  // Empty-context pass rate over the listed seeds.
  const auto seeds = fx.at("seeds").get<std::vector<std::uint64_t>>();
  const double want_base = fx.at("expected_base_pass").get<double>();
  int wins = 0;
  for (auto s : seeds) wins += rollout(world, task, RenderedContext{}, s).reward;
  const double base = seeds.empty() ? 0.0 : static_cast<double>(wins) / static_cast<double>(seeds.size());
  check("no-skill pass", std::abs(base - want_base) < 1e-12,
        std::to_string(wins) + "/" + std::to_string(seeds.size()) + " = " + text::format_fixed(base, 2) + " (want " +
            text::format_fixed(want_base, 2) + ")");

  // Admission on the score table.
  const auto scores = fx.at("scores").get<std::map<std::string, double>>();
  AdmissionConfig adm;
  adm.tau = fx.at("tau").get<double>();
  adm.b_max = fx.value("b_max", adm.b_max);
  rep.admitted = admit(scores, adm);
  rep.budget = static_cast<int>(rep.admitted.size());
  auto want_admit = fx.at("expected_admit").get<std::vector<std::string>>();
  auto got = rep.admitted;
  std::sort(want_admit.begin(), want_admit.end());
  std::sort(got.begin(), got.end());
  check("admitted set", got == want_admit, text::join(rep.admitted, ", "));
  for (const auto& id : fx.value("expected_reject", std::vector<std::string>{})) {
    const bool rejected = std::find(got.begin(), got.end(), id) == got.end();
    check("rejects " + id, rejected, "score " + text::format_double(scores.at(id)) + " vs tau " + text::format_double(adm.tau));
  }
  const int want_budget = fx.at("expected_budget").get<int>();
  check("budget", rep.budget == want_budget, "B_t = " + std::to_string(rep.budget));

  // Set-aware rendering of the admitted context.
  const std::string focus = fx.at("focus_skill").get<std::string>();
  const int min_named = fx.value("min_named_neighbors", 2);
  const RenderedContext ctx = render(task, lib, rep.admitted, make_rule_student());
  std::size_t named = 0;
  for (const auto& e : ctx.entries) {
    if (e.skill_id == focus) {
      rep.rendered_focus = e.rendered_description;
      named = e.scope_targets.size();
    }
  }
  check("focus neighbors named", static_cast<int>(named) >= min_named,
        std::to_string(named) + " neighbors in \"" + rep.rendered_focus + "\"");

  // Optional explicit neighbor set with its exact expected clause.
  if (fx.contains("clause_neighbors")) {
    std::vector<std::string> ids{focus};
    for (const auto& n : fx.at("clause_neighbors")) ids.push_back(n.get<std::string>());
    const RenderedContext c2 = render(task, lib, ids, make_rule_student());
    // Clause names are compared as a set: the student lists them sorted.
    auto want = parse_scope_clause(fx.at("expected_clause").get<std::string>());
    const std::string& d = c2.entries.front().rendered_description;
    auto got_names = parse_scope_clause(d);
    std::sort(want.begin(), want.end());
    std::sort(got_names.begin(), got_names.end());
    check("scope clause", !want.empty() && got_names == want, d);
  }
  return rep;
}

}  // namespace skillctx
