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

#include <skillctx/text.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace skillctx {

// ---------------------------------------------------------------------------
// Random numbers
// ---------------------------------------------------------------------------

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

inline constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// SplitMix64 generator.
///
/// A stream is identified by its seed; derive_stream() computes a child seed
/// from the parent *seed* and a label, never from the parent's position, so
/// children are independent of how many values were drawn elsewhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), state_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() {
    state_ += kGolden;
    return mix64(state_);
  }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be positive.
  std::size_t index(std::size_t n) {
    if (n == 0) throw Error("Rng::index: empty range");
    return static_cast<std::size_t>(uniform() * static_cast<double>(n));
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller (no cached second value).
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
};

inline Rng derive_stream(const Rng& root, std::string_view label) {
  if (label.empty()) throw Error("derive_stream: label must be nonempty");
  return Rng(mix64(root.seed() ^ mix64(text::fnv1a64(label) + kGolden)));
}

inline Rng derive_stream(std::uint64_t seed, std::string_view label) { return derive_stream(Rng(seed), label); }

// ---------------------------------------------------------------------------
// Core records
// ---------------------------------------------------------------------------

/// Simulator-only ground truth attached to a skill.
struct SimEffect {
  std::map<std::string, double> per_task_gain;  // task id -> gain in [-1, 1]
  double message_cost = 0.0;
  std::string overlap_group;

  double gain(const std::string& task_id) const {
    auto it = per_task_gain.find(task_id);
    return it == per_task_gain.end() ? 0.0 : it->second;
  }

  bool operator==(const SimEffect&) const = default;
};

struct Skill {
  std::string id;
  std::string name;
  std::string description;  // agent-visible
  std::string body;         // procedural content, never rewritten
  std::optional<SimEffect> effect;
  // Library metadata: source task ids (provenance) and task family.
  std::vector<std::string> sources;
  std::string family;

  bool operator==(const Skill&) const = default;
};

struct Task {
  std::string id;
  std::string instruction;
  std::string domain;
  double base_pass = 0.0;
  double base_messages = 0.0;

  bool operator==(const Task&) const = default;
};

struct RolloutRecord {
  std::string task_id;
  std::vector<std::string> context_skill_ids;
  std::uint64_t seed = 0;
  int reward = 0;
  int messages = 0;

  bool operator==(const RolloutRecord&) const = default;
};

/// Bounded label used by the planner: the benefit in [-1, 1] mapped affinely
/// onto [0, 1] so harmful skills keep their ordering.
inline double label_from_delta(double delta) { return std::clamp((delta + 1.0) / 2.0, 0.0, 1.0); }

struct UtilityLabel {
  std::string task_id;
  std::string skill_id;
  double delta = 0.0;
  double y = 0.5;
  int rollouts = 0;

  bool operator==(const UtilityLabel&) const = default;
};

/// Ordered skill collection with id lookup. Ids are unique.
class SkillLibrary {
 public:
  SkillLibrary() = default;
  explicit SkillLibrary(std::vector<Skill> skills) {
    for (auto& s : skills) add(std::move(s));
  }

  void add(Skill s) {
    if (index_.count(s.id)) throw Error("SkillLibrary: duplicate skill id '" + s.id + "'");
    index_.emplace(s.id, skills_.size());
    skills_.push_back(std::move(s));
  }

  const std::vector<Skill>& skills() const { return skills_; }
  std::size_t size() const { return skills_.size(); }
  bool empty() const { return skills_.empty(); }
  const Skill& operator[](std::size_t i) const { return skills_[i]; }

  bool contains(const std::string& id) const { return index_.count(id) > 0; }

  const Skill& at(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw Error("unknown skill id '" + id + "'");
    return skills_[it->second];
  }

  std::size_t index_of(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw Error("unknown skill id '" + id + "'");
    return it->second;
  }

  const std::vector<std::string>& provenance(const std::string& id) const { return at(id).sources; }

  std::vector<std::string> ids() const {
    std::vector<std::string> out;
    out.reserve(skills_.size());
    for (const auto& s : skills_) out.push_back(s.id);
    return out;
  }

  /// Sub-library holding the given ids in the given order.
  SkillLibrary subset(const std::vector<std::string>& ids) const {
    SkillLibrary out;
    for (const auto& id : ids) out.add(at(id));
    return out;
  }

  bool operator==(const SkillLibrary& o) const { return skills_ == o.skills_; }

 private:
  std::vector<Skill> skills_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// One injected skill after rendering.
struct RenderedEntry {
  std::string skill_id;
  std::string rendered_description;
  std::string body;
  std::vector<std::string> scope_targets;  // co-injected ids named in the scope clause

  bool operator==(const RenderedEntry&) const = default;
};

struct RenderedContext {
  std::vector<RenderedEntry> entries;
  bool rendered = false;

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }

  std::vector<std::string> skill_ids() const {
    std::vector<std::string> out;
    for (const auto& e : entries) out.push_back(e.skill_id);
    return out;
  }

  bool names(const std::string& from, const std::string& to) const {
    for (const auto& e : entries) {
      if (e.skill_id == from) {
        return std::find(e.scope_targets.begin(), e.scope_targets.end(), to) != e.scope_targets.end();
      }
    }
    return false;
  }

  bool operator==(const RenderedContext&) const = default;
};

/// Pass-through context: descriptions verbatim, no scope clauses.
inline RenderedContext plain_context(const SkillLibrary& lib, const std::vector<std::string>& ids) {
  RenderedContext ctx;
  for (const auto& id : ids) {
    const Skill& s = lib.at(id);
    ctx.entries.push_back({s.id, s.description, s.body, {}});
  }
  return ctx;
}

}  // namespace skillctx
