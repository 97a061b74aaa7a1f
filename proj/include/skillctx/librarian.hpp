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
#include <skillctx/embed.hpp>

#include <algorithm>
#include <functional>
#include <numeric>
#include <set>
#include <unordered_map>

namespace skillctx {

/// Raised when the token budget cannot be met without violating the
/// per-family floor.
class InfeasibleBudget : public Error {
 public:
  using Error::Error;
};

struct ClusterLadderConfig {
  std::vector<double> thresholds{0.90, 0.85, 0.80};
  int min_per_group = 2;
  long token_budget = 24000;
  double mmr_lambda = 0.7;
  double coverage_weight = 0.1;

  void validate() const {
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
      if (thresholds[i] <= 0.0 || thresholds[i] > 1.0) throw Error("cluster thresholds must lie in (0, 1]");
      if (i > 0 && thresholds[i] >= thresholds[i - 1]) throw Error("cluster thresholds must be strictly descending");
    }
    if (min_per_group < 0) throw Error("min_per_group must be nonnegative");
    if (token_budget < 0) throw Error("token_budget must be nonnegative");
    if (mmr_lambda < 0.0 || mmr_lambda > 1.0) throw Error("mmr_lambda must lie in [0, 1]");
  }
};

inline void to_json(json& j, const ClusterLadderConfig& c) {
  j = json{{"thresholds", c.thresholds},
           {"min_per_group", c.min_per_group},
           {"token_budget", c.token_budget},
           {"mmr_lambda", c.mmr_lambda},
           {"coverage_weight", c.coverage_weight}};
}

inline void from_json(const json& j, ClusterLadderConfig& c) {
  ClusterLadderConfig d;
  c.thresholds = j.value("thresholds", d.thresholds);
  c.min_per_group = j.value("min_per_group", d.min_per_group);
  c.token_budget = j.value("token_budget", d.token_budget);
  c.mmr_lambda = j.value("mmr_lambda", d.mmr_lambda);
  c.coverage_weight = j.value("coverage_weight", d.coverage_weight);
  c.validate();
}

namespace detail {

inline void merge_sources(std::vector<std::string>& into, const std::vector<std::string>& from) {
  for (const auto& s : from) {
    if (std::find(into.begin(), into.end(), s) == into.end()) into.push_back(s);
  }
}

struct DisjointSets {
  std::vector<std::size_t> parent;
  explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

inline Eigen::MatrixXd skill_embeddings(const SkillLibrary& lib, const EmbedderConfig& embedder) {
  std::vector<std::string> texts;
  texts.reserve(lib.size());
  for (const auto& s : lib.skills()) texts.push_back(skill_text(s));
  return embed_rows(texts, embedder);
}

}  // namespace detail

/// Exact deduplication on the canonical body. The first occurrence of each
/// body survives and absorbs the sources of later copies. A later skill that
/// reuses an id for a different body is kept under `<id>@<sha8>`.
inline SkillLibrary dedup_exact(const std::vector<Skill>& skills) {
  std::vector<Skill> kept;
  std::unordered_map<std::string, std::size_t> by_body;
  std::set<std::string> ids;
  for (const auto& s : skills) {
    std::string canon = text::canonicalize_body(s.body);
    auto it = by_body.find(canon);
    if (it != by_body.end()) {
      detail::merge_sources(kept[it->second].sources, s.sources);
      continue;
    }
    Skill copy = s;
    if (ids.count(copy.id)) copy.id += "@" + text::sha8(s.body);
    ids.insert(copy.id);
    by_body.emplace(std::move(canon), kept.size());
    kept.push_back(std::move(copy));
  }
  return SkillLibrary(std::move(kept));
}

inline SkillLibrary dedup_exact(const SkillLibrary& lib) { return dedup_exact(lib.skills()); }

/// Threshold-ladder clustering. At each threshold, skills are grouped by
/// single linkage over cosine >= threshold and every group collapses to its
/// medoid (highest mean cosine to the other members, ties to the smaller id).
/// The medoid inherits the union of the group's sources. Survivors keep their
/// relative library order.
inline SkillLibrary cluster_ladder(const SkillLibrary& lib, const ClusterLadderConfig& cfg,
                                   const EmbedderConfig& embedder = {}) {
  cfg.validate();
  if (lib.size() <= 1) return lib;
  const Eigen::MatrixXd emb = detail::skill_embeddings(lib, embedder);
  const Eigen::MatrixXd sim = emb * emb.transpose();

  std::vector<std::size_t> alive(lib.size());
  std::iota(alive.begin(), alive.end(), 0);
  std::vector<Skill> skills = lib.skills();

  for (double theta : cfg.thresholds) {
    const std::size_t n = alive.size();
    detail::DisjointSets sets(n);
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = a + 1; b < n; ++b) {
        if (sim(static_cast<Eigen::Index>(alive[a]), static_cast<Eigen::Index>(alive[b])) >= theta) sets.unite(a, b);
      }
    }
    std::map<std::size_t, std::vector<std::size_t>> groups;  // root -> positions in `alive`
    for (std::size_t a = 0; a < n; ++a) groups[sets.find(a)].push_back(a);

    std::vector<std::size_t> next;
    for (auto& [root, members] : groups) {
      std::size_t best = members.front();
      double best_mean = -2.0;
      for (std::size_t m : members) {
        double total = 0.0;
        for (std::size_t o : members) {
          if (o != m) total += sim(static_cast<Eigen::Index>(alive[m]), static_cast<Eigen::Index>(alive[o]));
        }
        double mean = members.size() > 1 ? total / static_cast<double>(members.size() - 1) : 0.0;
        const std::string& id = skills[alive[m]].id;
        if (mean > best_mean || (mean == best_mean && id < skills[alive[best]].id)) {
          best = m;
          best_mean = mean;
        }
      }
      Skill& medoid = skills[alive[best]];
      std::vector<std::string> merged = medoid.sources;
      for (std::size_t m : members) detail::merge_sources(merged, skills[alive[m]].sources);
      std::sort(merged.begin(), merged.end());
      medoid.sources = std::move(merged);
      next.push_back(alive[best]);
    }
    std::sort(next.begin(), next.end());
    alive = std::move(next);
  }

  SkillLibrary out;
  for (std::size_t i : alive) out.add(skills[i]);
  return out;
}

/// Greedy maximal marginal relevance.
///
/// relevance(s) = cosine(query, s) + coverage_weight * log(1 + |sources(s)|).
/// The first pick is the most relevant skill; every later pick maximizes
/// lambda * relevance - (1 - lambda) * max cosine to the already-picked set.
/// Ties go to the smaller id.
inline std::vector<std::string> mmr_rank(const SkillLibrary& lib, std::string_view query, std::size_t k,
                                         double lambda_mmr, const EmbedderConfig& embedder = {},
                                         double coverage_weight = 0.1) {
  if (k < 1 || k > lib.size()) {
    throw Error("mmr_rank: k=" + std::to_string(k) + " outside [1, " + std::to_string(lib.size()) + "]");
  }
  if (lambda_mmr < 0.0 || lambda_mmr > 1.0) throw Error("mmr_rank: lambda must lie in [0, 1]");
  const Eigen::MatrixXd emb = detail::skill_embeddings(lib, embedder);
  const EmbeddingVector q = embed(query, embedder);
  const std::size_t n = lib.size();
  std::vector<double> rel(n);
  for (std::size_t i = 0; i < n; ++i) {
    rel[i] = cosine(q, emb.row(static_cast<Eigen::Index>(i)).transpose()) +
             coverage_weight * std::log1p(static_cast<double>(lib[i].sources.size()));
  }
  std::vector<double> max_sim(n, 0.0);
  std::vector<bool> picked(n, false);
  std::vector<std::string> order;
  for (std::size_t step = 0; step < k; ++step) {
    std::size_t best = n;
    double best_score = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (picked[i]) continue;
      double score = step == 0 ? rel[i] : lambda_mmr * rel[i] - (1.0 - lambda_mmr) * max_sim[i];
      if (best == n || score > best_score || (score == best_score && lib[i].id < lib[best].id)) {
        best = i;
        best_score = score;
      }
    }
    picked[best] = true;
    order.push_back(lib[best].id);
    for (std::size_t i = 0; i < n; ++i) {
      if (picked[i]) continue;
      double c = cosine(emb.row(static_cast<Eigen::Index>(i)).transpose(), emb.row(static_cast<Eigen::Index>(best)).transpose());
      if (step == 0 || c > max_sim[i]) max_sim[i] = c;
    }
  }
  return order;
}

using TokenCounter = std::function<long(const std::string&)>;

inline long whitespace_token_count(const std::string& s) { return static_cast<long>(text::whitespace_tokens(s).size()); }

/// Text charged against the token budget for one injected skill.
inline std::string injection_text(const Skill& s) { return s.name + "\n" + s.description + "\n" + s.body; }

inline std::string skill_family(const Skill& s) {
  if (!s.family.empty()) return s.family;
  if (!s.sources.empty()) return s.sources.front();
  throw Error("budget_gate: skill '" + s.id + "' has neither a family nor provenance");
}

/// Drops the lowest MMR-ranked skills until the library fits the token
/// budget, keeping at least `min_per_group` skills in every family (or all of
/// a smaller family).
inline SkillLibrary budget_gate(const SkillLibrary& lib, const ClusterLadderConfig& cfg,
                                const TokenCounter& token_counter = whitespace_token_count,
                                const EmbedderConfig& embedder = {}) {
  cfg.validate();
  if (lib.empty()) return lib;
  std::vector<long> tokens(lib.size());
  std::map<std::string, std::vector<long>> family_tokens;
  std::map<std::string, int> family_count;
  long total = 0;
  for (std::size_t i = 0; i < lib.size(); ++i) {
    tokens[i] = token_counter(injection_text(lib[i]));
    total += tokens[i];
    const std::string fam = skill_family(lib[i]);
    family_tokens[fam].push_back(tokens[i]);
    ++family_count[fam];
  }
  if (total <= cfg.token_budget) return lib;

  long floor = 0;
  for (auto& [fam, toks] : family_tokens) {
    std::sort(toks.begin(), toks.end());
    std::size_t keep = std::min<std::size_t>(toks.size(), static_cast<std::size_t>(cfg.min_per_group));
    floor += std::accumulate(toks.begin(), toks.begin() + static_cast<std::ptrdiff_t>(keep), 0L);
  }
  if (floor > cfg.token_budget) {
    throw InfeasibleBudget("budget_gate: keeping " + std::to_string(cfg.min_per_group) + " skills in each of " +
                           std::to_string(family_tokens.size()) + " families needs at least " + std::to_string(floor) +
                           " tokens, budget is " + std::to_string(cfg.token_budget));
  }

  const auto order = mmr_rank(lib, "", lib.size(), cfg.mmr_lambda, embedder, cfg.coverage_weight);
  std::set<std::string> dropped;
  for (auto it = order.rbegin(); it != order.rend() && total > cfg.token_budget; ++it) {
    const Skill& s = lib.at(*it);
    const std::string fam = skill_family(s);
    if (family_count[fam] <= cfg.min_per_group) continue;
    --family_count[fam];
    total -= tokens[lib.index_of(*it)];
    dropped.insert(*it);
  }
  if (total > cfg.token_budget) {
    throw InfeasibleBudget("budget_gate: MMR-ordered dropping cannot reach " + std::to_string(cfg.token_budget) +
                           " tokens without breaking the per-family floor (left at " + std::to_string(total) + ")");
  }
  SkillLibrary out;
  for (const auto& s : lib.skills()) {
    if (!dropped.count(s.id)) out.add(s);
  }
  return out;
}

}  // namespace skillctx
