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

#include <skillctx/domain.hpp>
#include <skillctx/io.hpp>

#include <algorithm>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <unordered_map>

namespace skillctx {

struct NeighborInfo {
  std::string id;
  std::string name;
  std::string description;

  bool operator==(const NeighborInfo&) const = default;
};

/// Everything a renderer may read for one selected skill.
struct RenderInput {
  std::string task_instruction;
  std::string skill_id;
  std::string skill_name;
  std::string d0;
  std::vector<NeighborInfo> neighbors;
  std::optional<std::string> trace;  // present only in trace-rich inputs

  bool operator==(const RenderInput&) const = default;
};

/// One supervised example for a set-aware renderer.
struct RenderPair {
  std::string task_id;
  RenderInput input;
  std::string d1;
  std::string target;  // D2
  bool trace_rich = false;

  bool operator==(const RenderPair&) const = default;
};

inline void to_json(json& j, const NeighborInfo& n) { j = json{{"id", n.id}, {"name", n.name}, {"description", n.description}}; }

inline void from_json(const json& j, NeighborInfo& n) {
  n.id = j.at("id").get<std::string>();
  n.name = j.value("name", n.id);
  n.description = j.value("description", std::string{});
}

inline void to_json(json& j, const RenderPair& p) {
  j = json{{"task_id", p.task_id},
           {"task", p.input.task_instruction},
           {"skill_id", p.input.skill_id},
           {"skill_name", p.input.skill_name},
           {"d0", p.input.d0},
           {"d1", p.d1},
           {"neighbors", p.input.neighbors}};
  if (p.input.trace) j["trace"] = *p.input.trace;
  j["d2"] = p.target;
  j["trace_rich"] = p.trace_rich;
}

inline void from_json(const json& j, RenderPair& p) {
  p.task_id = j.value("task_id", std::string{});
  p.input.task_instruction = j.at("task").get<std::string>();
  p.input.skill_id = j.value("skill_id", std::string{});
  p.input.skill_name = j.value("skill_name", p.input.skill_id);
  p.input.d0 = j.at("d0").get<std::string>();
  p.d1 = j.value("d1", std::string{});
  p.input.neighbors = j.value("neighbors", std::vector<NeighborInfo>{});
  if (j.contains("trace")) {
    p.input.trace = j.at("trace").get<std::string>();
  } else {
    p.input.trace.reset();
  }
  p.target = j.at("d2").get<std::string>();
  p.trace_rich = j.at("trace_rich").get<bool>();
  if (p.trace_rich != p.input.trace.has_value()) throw Error("RenderPair: trace_rich must match trace presence");
}

// ---------------------------------------------------------------------------
// Keyword overlap signal
// ---------------------------------------------------------------------------

struct StudentConfig {
  int top_k = 6;          // keywords kept per description
  int min_word_len = 4;   // shorter words never count as keywords
};

inline const std::set<std::string>& stopwords() {
  static const std::set<std::string> words{
      "about", "after", "also", "and", "any", "are", "asks", "been", "before", "being", "between", "both",
      "does", "each", "following", "for", "from", "given", "have", "here", "into", "just", "like", "more",
      "most", "must", "only", "other", "over", "should", "skill", "such", "than", "that", "their", "them",
      "then", "there", "these", "they", "this", "those", "through", "under", "used", "user", "using", "very",
      "what", "when", "where", "whether", "which", "while", "will", "with", "within", "without", "would",
      "your", "returns", "return", "explains", "describes", "provides", "covers", "agent", "customer", "help",
      "helps", "call", "calls", "task", "tasks", "rules", "rule"};
  return words;
}

/// Top-k content words of a description: lowercase alphanumeric words at
/// least `min_word_len` long that are not stopwords, ranked by frequency and
/// then by first occurrence.
inline std::vector<std::string> top_keywords(std::string_view description, const StudentConfig& cfg = {}) {
  struct Info {
    int count = 0;
    std::size_t first = 0;
  };
  std::unordered_map<std::string, Info> info;
  std::vector<std::string> order;
  const auto words = text::word_tokens(description);
  for (std::size_t i = 0; i < words.size(); ++i) {
    const auto& w = words[i];
    if (static_cast<int>(w.size()) < cfg.min_word_len || stopwords().count(w)) continue;
    auto [it, inserted] = info.try_emplace(w, Info{0, i});
    if (inserted) order.push_back(w);
    ++it->second.count;
  }
  std::stable_sort(order.begin(), order.end(), [&](const std::string& a, const std::string& b) {
    const Info& ia = info.at(a);
    const Info& ib = info.at(b);
    if (ia.count != ib.count) return ia.count > ib.count;
    return ia.first < ib.first;
  });
  if (order.size() > static_cast<std::size_t>(cfg.top_k)) order.resize(static_cast<std::size_t>(cfg.top_k));
  return order;
}

inline bool shares_keyword(std::string_view a, std::string_view b, const StudentConfig& cfg = {}) {
  const auto ka = top_keywords(a, cfg);
  const auto kb = top_keywords(b, cfg);
  for (const auto& w : ka) {
    if (std::find(kb.begin(), kb.end(), w) != kb.end()) return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Scope clauses
// ---------------------------------------------------------------------------

inline constexpr std::string_view kScopePrefix = "Not for: ";

/// Task-agnostic wording cleanup: collapsed whitespace, capitalized first
/// letter, terminal period.
inline std::string cleanup_wording(std::string_view d) {
  std::string out = text::collapse_whitespace(d);
  if (out.empty()) return out;
  out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
  char last = out.back();
  if (last != '.' && last != '!' && last != '?') out.push_back('.');
  return out;
}

inline std::string scope_clause(std::vector<std::string> names) {
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  return std::string(kScopePrefix) + text::join(names, ", ");
}

/// Names listed in the first "Not for:" line of a rendered description.
inline std::vector<std::string> parse_scope_clause(std::string_view rendered) {
  std::vector<std::string> names;
  for (const auto& line : text::split(rendered, '\n')) {
    std::string t = text::trim(line);
    if (t.rfind(kScopePrefix, 0) != 0) continue;
    for (const auto& part : text::split(std::string_view(t).substr(kScopePrefix.size()), ',')) {
      std::string name = text::trim(part);
      while (!name.empty() && (name.back() == '.' || name.back() == ';')) name.pop_back();
      if (!name.empty()) names.push_back(name);
    }
    break;
  }
  return names;
}

/// Any text producer with the renderer contract.
using RendererImpl = std::function<std::string(const RenderInput&)>;

/// Deterministic rule-based student: a header naming the skill, the cleaned
/// description, and a scope clause naming every neighbor that shares a
/// top keyword with the description.
inline std::string rule_student(const RenderInput& in, const StudentConfig& cfg = {}) {
  std::string out = in.skill_name + ": " + cleanup_wording(in.d0);
  std::vector<std::string> names;
  for (const auto& n : in.neighbors) {
    if (n.id == in.skill_id) continue;
    if (shares_keyword(in.d0, n.description, cfg)) names.push_back(n.name);
  }
  if (!names.empty()) out += "\n" + scope_clause(std::move(names));
  return out;
}

inline RendererImpl make_rule_student(StudentConfig cfg = {}) {
  return [cfg](const RenderInput& in) { return rule_student(in, cfg); };
}

inline std::vector<NeighborInfo> neighbors_of(const std::vector<Skill>& selected, std::size_t self) {
  std::vector<NeighborInfo> out;
  for (std::size_t j = 0; j < selected.size(); ++j) {
    if (j != self) out.push_back({selected[j].id, selected[j].name, selected[j].description});
  }
  return out;
}

/// Renders the selected set for a task. Sets of size <= 1 bypass the student
/// and pass descriptions through verbatim; bodies are always copied
/// unchanged. Scope targets are the co-injected neighbors named in the
/// student's "Not for:" clause (matched by name or id, never self).
inline RenderedContext render(const Task& task, const std::vector<Skill>& selected, const RendererImpl& student) {
  RenderedContext ctx;
  if (selected.size() <= 1) {
    for (const auto& s : selected) ctx.entries.push_back({s.id, s.description, s.body, {}});
    return ctx;
  }
  ctx.rendered = true;
  for (std::size_t i = 0; i < selected.size(); ++i) {
    const Skill& s = selected[i];
    RenderInput in{task.instruction, s.id, s.name, s.description, neighbors_of(selected, i), std::nullopt};
    std::string text_out = student(in);
    std::vector<std::string> targets;
    for (const auto& named : parse_scope_clause(text_out)) {
      for (const auto& n : in.neighbors) {
        if ((n.name == named || n.id == named) && std::find(targets.begin(), targets.end(), n.id) == targets.end()) {
          targets.push_back(n.id);
        }
      }
    }
    ctx.entries.push_back({s.id, std::move(text_out), s.body, std::move(targets)});
  }
  return ctx;
}

inline RenderedContext render(const Task& task, const SkillLibrary& lib, const std::vector<std::string>& ids,
                              const RendererImpl& student) {
  std::vector<Skill> selected;
  selected.reserve(ids.size());
  for (const auto& id : ids) selected.push_back(lib.at(id));
  return render(task, selected, student);
}

// ---------------------------------------------------------------------------
// Teacher pipeline: D0 -> D1 (cleanup) -> D2 (set-aware target)
// ---------------------------------------------------------------------------

/// Trace summary block: "steps=<messages>, reward=<0|1>, skills=<ids>".
inline std::string trace_summary(const RolloutRecord& r) {
  return "steps=" + std::to_string(r.messages) + ", reward=" + std::to_string(r.reward) +
         ", skills=" + text::join(r.context_skill_ids, "|");
}

/// Two-stage text transformer used to produce renderer supervision.
class TextTransformer {
 public:
  virtual ~TextTransformer() = default;
  /// Task-agnostic cleanup of the original description.
  virtual std::string cleanup(const std::string& d0) const = 0;
  /// Set-aware adaptation of the cleaned description.
  virtual std::string adapt(const std::string& d1, const RenderInput& context) const = 0;
};

class IdentityTeacher final : public TextTransformer {
 public:
  std::string cleanup(const std::string& d0) const override { return d0; }
  std::string adapt(const std::string& d1, const RenderInput&) const override { return d1; }
};

/// Reference deterministic teacher. Cleanup normalizes whitespace and casing
/// behind an imperative "Use <name> to" header; adaptation appends the
/// keyword-overlap scope clause and, with a trace, a trace-conditioned guard.
class ReferenceTeacher final : public TextTransformer {
 public:
  explicit ReferenceTeacher(StudentConfig cfg = {}) : cfg_(cfg) {}

  std::string cleanup(const std::string& d0) const override {
    std::string body = cleanup_wording(d0);
    if (!body.empty()) body[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(body[0])));
    return "Use this skill to " + body;
  }

  std::string adapt(const std::string& d1, const RenderInput& ctx) const override {
    std::string out = d1;
    std::vector<std::string> names;
    for (const auto& n : ctx.neighbors) {
      if (n.id != ctx.skill_id && shares_keyword(ctx.d0, n.description, cfg_)) names.push_back(n.name);
    }
    if (!names.empty()) out += "\n" + scope_clause(names);
    if (ctx.trace) {
      bool failed = ctx.trace->find("reward=0") != std::string::npos;
      out += failed ? "\nDo NOT call if a co-injected skill already answers the request."
                    : "\nCall once the request is confirmed to fall in this scope.";
    }
    return out;
  }

 private:
  StudentConfig cfg_;
};

struct TeacherOutput {
  std::string d1;
  std::string d2;
};

using TeacherLog = std::function<void(const std::string&)>;

inline void log_to_stderr(const std::string& msg) { std::cerr << msg << '\n'; }

/// Runs cleanup then adaptation. A throwing teacher skips the pair: the
/// failure is reported through `log` and std::nullopt is returned.
inline std::optional<TeacherOutput> teacher_pipeline(const Task& task, const Skill& skill,
                                                     const std::vector<Skill>& neighbors,
                                                     const std::optional<RolloutRecord>& trace,
                                                     const TextTransformer& teacher,
                                                     const TeacherLog& log = log_to_stderr) {
  RenderInput ctx{task.instruction, skill.id, skill.name, skill.description, {}, std::nullopt};
  for (const auto& n : neighbors) {
    if (n.id != skill.id) ctx.neighbors.push_back({n.id, n.name, n.description});
  }
  if (trace) ctx.trace = trace_summary(*trace);
  try {
    TeacherOutput out;
    out.d1 = teacher.cleanup(skill.description);
    out.d2 = teacher.adapt(out.d1, ctx);
    return out;
  } catch (const std::exception& e) {
    if (log) log("teacher failed on task '" + task.id + "', skill '" + skill.id + "': " + e.what());
    return std::nullopt;
  }
}

// ---------------------------------------------------------------------------
// Curriculum
// ---------------------------------------------------------------------------

struct CurriculumConfig {
  std::vector<double> rho{0.1, 0.9};  // per-epoch probability of the trace-free variant
  std::uint64_t seed = 0;

  void validate() const {
    for (double r : rho) {
      if (r < 0.0 || r > 1.0) throw Error("curriculum rho values must lie in [0, 1]");
    }
  }
};

inline RenderPair trace_free_variant(RenderPair p) {
  p.input.trace.reset();
  p.trace_rich = false;
  return p;
}

/// Mixes trace-rich and trace-free variants per epoch. Each pair is replaced
/// by its trace-free counterpart with probability rho[k] in epoch k, drawn
/// from a stream keyed by (seed, epoch, pair index). Input pairs must be
/// trace-rich.
inline std::vector<std::vector<RenderPair>> build_curriculum(const std::vector<RenderPair>& pairs,
                                                             const CurriculumConfig& cfg) {
  cfg.validate();
  for (const auto& p : pairs) {
    if (!p.input.trace) throw Error("build_curriculum: pair for skill '" + p.input.skill_id + "' has no trace");
  }
  std::vector<std::vector<RenderPair>> epochs;
  for (std::size_t k = 0; k < cfg.rho.size(); ++k) {
    Rng epoch_root = derive_stream(cfg.seed, "curriculum:epoch" + std::to_string(k + 1));
    std::vector<RenderPair> mixed;
    mixed.reserve(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      Rng draw = derive_stream(epoch_root, "pair:" + std::to_string(i));
      if (draw.uniform() < cfg.rho[k]) {
        mixed.push_back(trace_free_variant(pairs[i]));
      } else {
        RenderPair rich = pairs[i];
        rich.trace_rich = true;
        mixed.push_back(std::move(rich));
      }
    }
    epochs.push_back(std::move(mixed));
  }
  return epochs;
}

}  // namespace skillctx
