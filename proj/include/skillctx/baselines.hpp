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

#include <skillctx/budget.hpp>
#include <skillctx/embed.hpp>
#include <skillctx/planner.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <unordered_map>

namespace skillctx {

// ---------------------------------------------------------------------------
// BM25
// ---------------------------------------------------------------------------

struct Bm25Params {
  double k1 = 1.5;
  double b = 0.75;
};

/// Lowercased whitespace tokens.
inline std::vector<std::string> bm25_tokens(std::string_view s) { return text::whitespace_tokens(text::to_lower(s)); }

/// Okapi BM25 index over name + description + body of every skill.
///
///   idf(q)      = ln(1 + (N - n(q) + 0.5) / (n(q) + 0.5))
///   score(q, d) = sum over query tokens q of
///                 idf(q) * tf(q,d) * (k1 + 1) / (tf(q,d) + k1 * (1 - b + b * |d| / avgdl))
///
/// Repeated query tokens count once per occurrence.
class Bm25Index {
 public:
  explicit Bm25Index(const SkillLibrary& lib, Bm25Params params = {}) : params_(params) {
    if (lib.empty()) throw Error("bm25: empty library");
    double total_len = 0.0;
    for (const auto& s : lib.skills()) {
      Doc d;
      d.id = s.id;
      const auto toks = bm25_tokens(skill_text(s));
      d.length = static_cast<double>(toks.size());
      for (const auto& t : toks) ++d.tf[t];
      for (const auto& [t, c] : d.tf) ++df_[t];
      total_len += d.length;
      docs_.push_back(std::move(d));
    }
    avgdl_ = total_len / static_cast<double>(docs_.size());
  }

  double idf(const std::string& term) const {
    auto it = df_.find(term);
    const double n = it == df_.end() ? 0.0 : static_cast<double>(it->second);
    const double N = static_cast<double>(docs_.size());
    return std::log(1.0 + (N - n + 0.5) / (n + 0.5));
  }

  std::vector<double> scores(std::string_view query) const {
    std::vector<double> out(docs_.size(), 0.0);
    const auto q = bm25_tokens(query);
    for (std::size_t i = 0; i < docs_.size(); ++i) {
      const Doc& d = docs_[i];
      const double norm = params_.k1 * (1.0 - params_.b + params_.b * (avgdl_ > 0.0 ? d.length / avgdl_ : 0.0));
      for (const auto& t : q) {
        auto it = d.tf.find(t);
        if (it == d.tf.end()) continue;
        const double tf = static_cast<double>(it->second);
        out[i] += idf(t) * tf * (params_.k1 + 1.0) / (tf + norm);
      }
    }
    return out;
  }

  std::vector<std::string> rank(std::string_view query, std::size_t k) const {
    if (k < 1) throw Error("bm25_rank: k must be >= 1");
    const auto s = scores(query);
    return top_k(s, k);
  }

  const std::vector<std::string> ids() const {
    std::vector<std::string> out;
    for (const auto& d : docs_) out.push_back(d.id);
    return out;
  }

 private:
  struct Doc {
    std::string id;
    double length = 0.0;
    std::unordered_map<std::string, int> tf;
  };

  std::vector<std::string> top_k(const std::vector<double>& s, std::size_t k) const {
    std::vector<std::size_t> order(docs_.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (s[a] != s[b]) return s[a] > s[b];
      return docs_[a].id < docs_[b].id;
    });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < std::min(k, order.size()); ++i) out.push_back(docs_[order[i]].id);
    return out;
  }

  Bm25Params params_;
  std::vector<Doc> docs_;
  std::unordered_map<std::string, int> df_;
  double avgdl_ = 0.0;
};

inline std::vector<std::string> bm25_rank(std::string_view query, const SkillLibrary& lib, std::size_t k,
                                          Bm25Params params = {}) {
  return Bm25Index(lib, params).rank(query, k);
}

// ---------------------------------------------------------------------------
// Dense retrieval
// ---------------------------------------------------------------------------

/// Cosine ranking of whole-skill embeddings against the query embedding.
class DenseIndex {
 public:
  DenseIndex(const SkillLibrary& lib, const EmbedderConfig& embedder) : embedder_(embedder), ids_(lib.ids()) {
    if (lib.empty()) throw Error("dense_rank: empty library");
    std::vector<std::string> texts;
    for (const auto& s : lib.skills()) texts.push_back(skill_text(s));
    emb_ = embed_rows(texts, embedder);
  }

  std::vector<std::string> rank(std::string_view query, std::size_t k) const {
    if (k < 1) throw Error("dense_rank: k must be >= 1");
    const EmbeddingVector q = embed(query, embedder_);
    std::vector<double> s(ids_.size());
    for (std::size_t i = 0; i < ids_.size(); ++i) s[i] = cosine(q, emb_.row(static_cast<Eigen::Index>(i)).transpose());
    std::vector<std::size_t> order(ids_.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (s[a] != s[b]) return s[a] > s[b];
      return ids_[a] < ids_[b];
    });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < std::min(k, order.size()); ++i) out.push_back(ids_[order[i]]);
    return out;
  }

 private:
  EmbedderConfig embedder_;
  std::vector<std::string> ids_;
  Eigen::MatrixXd emb_;
};

inline std::vector<std::string> dense_rank(std::string_view query, const SkillLibrary& lib, std::size_t k,
                                           const EmbedderConfig& embedder = {}) {
  return DenseIndex(lib, embedder).rank(query, k);
}

// ---------------------------------------------------------------------------
// Selectors
// ---------------------------------------------------------------------------

enum class SelectorKind { none, random, full, bm25, dense, fixed_topk, global_topk, planner_adaptive };

inline const std::vector<std::pair<SelectorKind, std::string>>& selector_kind_names() {
  static const std::vector<std::pair<SelectorKind, std::string>> names{
      {SelectorKind::none, "none"},           {SelectorKind::random, "random"},
      {SelectorKind::full, "full"},           {SelectorKind::bm25, "bm25"},
      {SelectorKind::dense, "dense"},         {SelectorKind::fixed_topk, "fixed_topk"},
      {SelectorKind::global_topk, "global_topk"}, {SelectorKind::planner_adaptive, "planner_adaptive"}};
  return names;
}

inline std::string to_string(SelectorKind k) {
  for (const auto& [kind, name] : selector_kind_names()) {
    if (kind == k) return name;
  }
  throw Error("unknown selector kind");
}

inline SelectorKind selector_kind_from_string(const std::string& s) {
  for (const auto& [kind, name] : selector_kind_names()) {
    if (name == s) return kind;
  }
  throw Error("unknown selector kind '" + s + "'");
}

inline bool needs_k(SelectorKind k) {
  return k == SelectorKind::bm25 || k == SelectorKind::dense || k == SelectorKind::fixed_topk ||
         k == SelectorKind::global_topk;
}

inline bool needs_model(SelectorKind k) {
  return k == SelectorKind::fixed_topk || k == SelectorKind::global_topk || k == SelectorKind::planner_adaptive;
}

struct SelectorSpec {
  SelectorKind kind = SelectorKind::none;
  std::string name;               // row label; defaults to the kind (plus k)
  std::optional<int> k;
  std::optional<std::uint64_t> seed;
  bool render = false;            // render multi-skill contexts before injection

  std::string label() const {
    if (!name.empty()) return name;
    std::string out = to_string(kind);
    if (k) out += "@" + std::to_string(*k);
    return out;
  }

  void validate() const {
    if (needs_k(kind) && !k) throw Error("selector '" + label() + "' needs k");
    if (k && *k < 1) throw Error("selector '" + label() + "': k must be >= 1");
  }

  bool operator==(const SelectorSpec&) const = default;
};

inline void to_json(json& j, const SelectorSpec& s) {
  j = json{{"kind", to_string(s.kind)}, {"render", s.render}};
  if (!s.name.empty()) j["name"] = s.name;
  if (s.k) j["k"] = *s.k;
  if (s.seed) j["seed"] = *s.seed;
}

inline void from_json(const json& j, SelectorSpec& s) {
  s.kind = selector_kind_from_string(j.at("kind").get<std::string>());
  s.name = j.value("name", std::string{});
  s.k = j.contains("k") ? std::optional<int>(j.at("k").get<int>()) : std::nullopt;
  s.seed = j.contains("seed") ? std::optional<std::uint64_t>(j.at("seed").get<std::uint64_t>()) : std::nullopt;
  s.render = j.value("render", false);
  s.validate();
}

/// Mean planner score of every skill over a task set, best first (ties to
/// the smaller id).
inline std::vector<std::string> global_ranking(const PlannerModel& model, const std::vector<Task>& tasks,
                                               const SkillLibrary& lib) {
  if (tasks.empty()) throw Error("global_ranking: no tasks");
  const Eigen::MatrixXd desc = description_embeddings(lib, model.embedder);
  std::vector<double> total(lib.size(), 0.0);
  for (const auto& t : tasks) {
    const auto s = score_library(model, t, lib, desc);
    for (std::size_t i = 0; i < s.size(); ++i) total[i] += s[i];
  }
  std::vector<std::size_t> order(lib.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (total[a] != total[b]) return total[a] > total[b];
    return lib[a].id < lib[b].id;
  });
  std::vector<std::string> out;
  for (std::size_t i : order) out.push_back(lib[i].id);
  return out;
}

/// Everything a selector may need beyond the task and library. Indexes are
/// built lazily and cached per library.
class SelectionContext {
 public:
  SelectionContext(const SkillLibrary& lib, EmbedderConfig embedder = {}) : lib_(&lib), embedder_(embedder) {}

  const PlannerModel* model = nullptr;
  AdmissionConfig admission;
  std::optional<std::vector<std::string>> global_order;
  std::uint64_t seed = 0;

  const SkillLibrary& library() const { return *lib_; }
  const EmbedderConfig& embedder() const { return embedder_; }

  const Bm25Index& bm25() const {
    if (!bm25_) bm25_.emplace(*lib_);
    return *bm25_;
  }
  const DenseIndex& dense() const {
    if (!dense_) dense_.emplace(*lib_, embedder_);
    return *dense_;
  }
  const Eigen::MatrixXd& descriptions() const {
    if (!model) throw Error("selection context has no planner model");
    if (!desc_) desc_ = description_embeddings(*lib_, model->embedder);
    return *desc_;
  }

  /// Prebuilds every cache so the context can be shared across threads.
  void warm(const SelectorSpec& spec) const {
    if (lib_->empty()) return;
    if (spec.kind == SelectorKind::bm25) bm25();
    if (spec.kind == SelectorKind::dense) dense();
    if (needs_model(spec.kind) && model) descriptions();
  }

 private:
  const SkillLibrary* lib_;
  EmbedderConfig embedder_;
  mutable std::optional<Bm25Index> bm25_;
  mutable std::optional<DenseIndex> dense_;
  mutable std::optional<Eigen::MatrixXd> desc_;
};

inline std::vector<std::string> select(const SelectorSpec& spec, const Task& task, const SelectionContext& ctx) {
  spec.validate();
  const SkillLibrary& lib = ctx.library();
  if (needs_model(spec.kind) && !ctx.model) throw Error("selector '" + spec.label() + "' needs a planner model");
  if (spec.kind == SelectorKind::global_topk && !ctx.global_order) {
    throw Error("selector '" + spec.label() + "' needs a global ranking from dev tasks");
  }
  if (lib.empty()) return {};
  const std::size_t k = spec.k ? static_cast<std::size_t>(*spec.k) : 0;
  switch (spec.kind) {
    case SelectorKind::none:
      return {};
    case SelectorKind::random: {
      Rng rng = derive_stream(spec.seed.value_or(ctx.seed), "select:" + spec.label() + ":" + task.id);
      return {lib[rng.index(lib.size())].id};
    }
    case SelectorKind::full:
      return lib.ids();
    case SelectorKind::bm25:
      return ctx.bm25().rank(task.instruction, k);
    case SelectorKind::dense:
      return ctx.dense().rank(task.instruction, k);
    case SelectorKind::fixed_topk: {
      const auto s = score_library(*ctx.model, task, lib, ctx.descriptions());
      std::vector<std::size_t> order(lib.size());
      std::iota(order.begin(), order.end(), 0);
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (s[a] != s[b]) return s[a] > s[b];
        return lib[a].id < lib[b].id;
      });
      std::vector<std::string> out;
      for (std::size_t i = 0; i < std::min(k, order.size()); ++i) out.push_back(lib[order[i]].id);
      return out;
    }
    case SelectorKind::global_topk: {
      std::vector<std::string> out;
      for (const auto& id : *ctx.global_order) {
        if (out.size() >= k) break;
        if (lib.contains(id)) out.push_back(id);
      }
      return out;
    }
    case SelectorKind::planner_adaptive:
      return admit(normalize_scores(score_map(*ctx.model, task, lib, ctx.descriptions())), ctx.admission);
  }
  throw Error("unhandled selector kind");
}

}  // namespace skillctx
