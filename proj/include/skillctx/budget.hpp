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

#include <skillctx/parallel.hpp>
#include <skillctx/planner.hpp>
#include <skillctx/renderer.hpp>
#include <skillctx/simworld.hpp>
#include <skillctx/stats.hpp>

#include <algorithm>
#include <map>
#include <optional>
#include <sstream>

namespace skillctx {

struct AdmissionConfig {
  double tau = 0.5;
  int b_max = 16;
  bool accept_none_sentinel = false;

  void validate() const {
    if (!accept_none_sentinel && (tau < 0.0 || tau > 1.0)) throw Error("AdmissionConfig: tau must lie in [0, 1]");
    if (b_max < 1) throw Error("AdmissionConfig: b_max must be >= 1");
  }
};

inline void to_json(json& j, const AdmissionConfig& c) {
  j = json{{"tau", c.tau}, {"b_max", c.b_max}, {"accept_none_sentinel", c.accept_none_sentinel}};
}

inline void from_json(const json& j, AdmissionConfig& c) {
  AdmissionConfig d;
  c.tau = j.value("tau", d.tau);
  c.b_max = j.value("b_max", d.b_max);
  c.accept_none_sentinel = j.value("accept_none_sentinel", d.accept_none_sentinel);
  c.validate();
}

/// Per-task min-max normalization. A constant score map (including a single
/// score) maps every entry to 1.
inline std::map<std::string, double> normalize_scores(const std::map<std::string, double>& scores) {
  if (scores.empty()) throw Error("normalize_scores: no scores");
  double lo = scores.begin()->second;
  double hi = lo;
  for (const auto& [id, v] : scores) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  std::map<std::string, double> out;
  for (const auto& [id, v] : scores) out[id] = hi > lo ? (v - lo) / (hi - lo) : 1.0;
  return out;
}

/// Skills whose normalized score is >= tau, best first (ties to the smaller
/// id), at most b_max of them. The sentinel admits nothing.
inline std::vector<std::string> admit(const std::map<std::string, double>& normalized, const AdmissionConfig& cfg) {
  cfg.validate();
  if (cfg.accept_none_sentinel) return {};
  std::vector<std::pair<std::string, double>> kept;
  for (const auto& [id, v] : normalized) {
    if (v >= cfg.tau) kept.emplace_back(id, v);
  }
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < kept.size() && i < static_cast<std::size_t>(cfg.b_max); ++i) out.push_back(kept[i].first);
  return out;
}

/// Planner scores of a library for one task, computed once and reused across
/// admission settings.
struct TaskScores {
  std::string task_id;
  std::map<std::string, double> raw;
  std::map<std::string, double> normalized;
};

inline std::vector<TaskScores> score_tasks(const PlannerModel& model, const std::vector<Task>& tasks,
                                           const SkillLibrary& lib, int workers = 1) {
  std::vector<TaskScores> out(tasks.size());
  if (lib.empty()) {
    for (std::size_t i = 0; i < tasks.size(); ++i) out[i].task_id = tasks[i].id;
    return out;
  }
  const Eigen::MatrixXd desc = description_embeddings(lib, model.embedder);
  parallel_for(tasks.size(), workers, [&](std::size_t i) {
    out[i].task_id = tasks[i].id;
    out[i].raw = score_map(model, tasks[i], lib, desc);
    out[i].normalized = normalize_scores(out[i].raw);
  });
  return out;
}

inline std::vector<std::string> admit_for(const TaskScores& s, const AdmissionConfig& cfg) {
  if (s.normalized.empty()) return {};
  return admit(s.normalized, cfg);
}

// ---------------------------------------------------------------------------
// Context evaluation
// ---------------------------------------------------------------------------

/// Builds the injected context: rendered through `student` when given,
/// verbatim otherwise.
inline RenderedContext build_context(const Task& task, const SkillLibrary& lib, const std::vector<std::string>& ids,
                                     const RendererImpl* student) {
  if (student) return render(task, lib, ids, *student);
  return plain_context(lib, ids);
}

struct PassSummary {
  double mean_pass = 0.0;       // over tasks and seeds
  double std_pass = 0.0;        // sample std of per-seed means
  double mean_messages = 0.0;
  std::vector<double> per_seed_pass;
  std::vector<double> per_seed_messages;
};

/// Rollouts of fixed per-task contexts, one per (task, seed).
inline std::vector<std::vector<RolloutRecord>> run_contexts(const World& world, const std::vector<Task>& tasks,
                                                            const std::vector<RenderedContext>& contexts,
                                                            const std::vector<std::uint64_t>& seeds, int workers = 1) {
  if (contexts.size() != tasks.size()) throw Error("run_contexts: one context per task required");
  std::vector<std::vector<RolloutRecord>> out(tasks.size());
  parallel_for(tasks.size(), workers, [&](std::size_t i) {
    for (std::uint64_t s : seeds) out[i].push_back(rollout(world, tasks[i], contexts[i], s));
  });
  return out;
}

inline PassSummary summarize_rollouts(const std::vector<std::vector<RolloutRecord>>& rows, std::size_t n_seeds) {
  PassSummary out;
  if (rows.empty() || n_seeds == 0) return out;
  out.per_seed_pass.assign(n_seeds, 0.0);
  out.per_seed_messages.assign(n_seeds, 0.0);
  for (const auto& task_rows : rows) {
    for (std::size_t s = 0; s < n_seeds; ++s) {
      out.per_seed_pass[s] += task_rows[s].reward;
      out.per_seed_messages[s] += task_rows[s].messages;
    }
  }
  for (std::size_t s = 0; s < n_seeds; ++s) {
    out.per_seed_pass[s] /= static_cast<double>(rows.size());
    out.per_seed_messages[s] /= static_cast<double>(rows.size());
  }
  out.mean_pass = stats::mean(out.per_seed_pass);
  out.std_pass = stats::sample_std(out.per_seed_pass);
  out.mean_messages = stats::mean(out.per_seed_messages);
  return out;
}

inline PassSummary evaluate_contexts(const World& world, const std::vector<Task>& tasks,
                                     const std::vector<RenderedContext>& contexts,
                                     const std::vector<std::uint64_t>& seeds, int workers = 1) {
  return summarize_rollouts(run_contexts(world, tasks, contexts, seeds, workers), seeds.size());
}

/// Seeds seed, seed + 1, ..., seed + n - 1.
inline std::vector<std::uint64_t> consecutive_seeds(std::uint64_t seed, int n) {
  if (n < 1) throw Error("need at least one rollout seed");
  std::vector<std::uint64_t> out;
  for (int i = 0; i < n; ++i) out.push_back(seed + static_cast<std::uint64_t>(i));
  return out;
}

// ---------------------------------------------------------------------------
// Threshold calibration
// ---------------------------------------------------------------------------

struct SweepPoint {
  AdmissionConfig admission;
  PassSummary summary;
};

struct Calibration {
  AdmissionConfig best;
  std::vector<SweepPoint> sweep;
};

inline std::vector<double> default_tau_grid() {
  std::vector<double> g;
  for (int i = 0; i <= 8; ++i) g.push_back(static_cast<double>(i) / 8.0);
  return g;
}

struct CalibrationOptions {
  int b_max = 16;
  bool include_sentinel = true;
  bool render = true;
  int workers = 1;
};

/// Mean dev pass rate for every tau in the grid (plus the accept-none
/// sentinel when requested). The best point wins; ties go to the larger tau
/// and the sentinel counts as larger than any tau.
inline Calibration calibrate_tau(const World& world, const PlannerModel& model, const std::vector<Task>& dev_tasks,
                                 const std::vector<double>& tau_grid, const std::vector<std::uint64_t>& seeds,
                                 const CalibrationOptions& opts = {}) {
  if (tau_grid.empty()) throw Error("calibrate_tau: empty grid");
  if (seeds.empty()) throw Error("calibrate_tau: no seeds");
  const SkillLibrary& lib = world.library();
  const auto scores = score_tasks(model, dev_tasks, lib, opts.workers);
  const RendererImpl student = make_rule_student();

  std::vector<AdmissionConfig> points;
  for (double tau : tau_grid) points.push_back({tau, opts.b_max, false});
  if (opts.include_sentinel) points.push_back({1.0, opts.b_max, true});

  Calibration cal;
  for (const auto& adm : points) {
    adm.validate();
    std::vector<RenderedContext> contexts(dev_tasks.size());
    parallel_for(dev_tasks.size(), opts.workers, [&](std::size_t i) {
      contexts[i] = build_context(dev_tasks[i], lib, admit_for(scores[i], adm), opts.render ? &student : nullptr);
    });
    cal.sweep.push_back({adm, evaluate_contexts(world, dev_tasks, contexts, seeds, opts.workers)});
  }
  auto rank = [](const AdmissionConfig& a) { return a.accept_none_sentinel ? 2.0 : a.tau; };
  const SweepPoint* best = &cal.sweep.front();
  for (const auto& p : cal.sweep) {
    if (p.summary.mean_pass > best->summary.mean_pass ||
        (p.summary.mean_pass == best->summary.mean_pass && rank(p.admission) > rank(best->admission))) {
      best = &p;
    }
  }
  cal.best = best->admission;
  return cal;
}

inline Calibration calibrate_tau(const World& world, const PlannerModel& model, const std::vector<Task>& dev_tasks,
                                 const std::vector<double>& tau_grid, int rollouts, std::uint64_t seed,
                                 const CalibrationOptions& opts = {}) {
  return calibrate_tau(world, model, dev_tasks, tau_grid, consecutive_seeds(seed, rollouts), opts);
}

inline std::string tau_label(const AdmissionConfig& a) {
  return a.accept_none_sentinel ? std::string("accept_none") : text::format_double(a.tau);
}

inline std::string sweep_csv(const Calibration& cal) {
  std::ostringstream os;
  os << "tau,mean_pass,std_pass,mean_messages\n";
  for (const auto& p : cal.sweep) {
    os << tau_label(p.admission) << ',' << text::format_fixed(p.summary.mean_pass, 6) << ','
       << text::format_fixed(p.summary.std_pass, 6) << ',' << text::format_fixed(p.summary.mean_messages, 6) << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Budget histogram
// ---------------------------------------------------------------------------

/// Count of tasks per admitted-set size; every bin from 0 to b_max is present.
inline std::map<int, int> budget_histogram(const World& world, const PlannerModel& model, const std::vector<Task>& tasks,
                                           const AdmissionConfig& cfg, int workers = 1) {
  cfg.validate();
  std::map<int, int> hist;
  for (int b = 0; b <= cfg.b_max; ++b) hist[b] = 0;
  const auto scores = score_tasks(model, tasks, world.library(), workers);
  for (const auto& s : scores) ++hist[static_cast<int>(admit_for(s, cfg).size())];
  return hist;
}

inline std::string histogram_csv(const std::map<int, int>& hist) {
  std::ostringstream os;
  os << "b_t,count\n";
  for (const auto& [b, c] : hist) os << b << ',' << c << '\n';
  return os.str();
}

}  // namespace skillctx
