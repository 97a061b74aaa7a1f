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
#include <skillctx/parallel.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <iterator>
#include <map>
#include <numeric>
#include <set>
#include <unordered_map>

namespace skillctx {

/// Parameters of the simulated frozen agent.
///
/// Pass probability of a context C for task t:
///
///   clamp(base(t) + sum_s gain(t, s)
///         - kappa * max(0, |C| - 1)^alpha
///         - sum_{same-group pairs} omega * (1 - eta * covered(pair)), 0, 1)
///
/// where covered(pair) = 1 iff the two rendered descriptions name each other
/// in their scope clauses. Expected messages follow the same structure:
/// base messages + per-skill message cost + chatter per uncovered-weighted
/// same-group pair.
struct WorldConfig {
  int n_tasks = 50;
  int n_skills = 82;
  int n_families = 4;
  int facets_per_family = 2;
  double dispersion_kappa = 0.02;
  double dispersion_alpha = 1.5;
  double overlap_omega = 0.05;
  double render_eta = 0.8;
  double frac_harmful = 0.15;
  bool harmful_mimicry = false;     // harmful descriptions copy the useful template
  double message_noise = 1.0;
  double overlap_chatter = 1.5;
  double useful_gain_min = 0.05;
  double useful_gain_max = 0.40;
  double gain_spread = 0.1;         // per-skill jitter around its family strength, in units of the gain range
  double harmful_gain_min = 0.05;
  double harmful_gain_max = 0.25;
  double related_gain = 0.35;       // fraction of a useful gain also earned on the next family
  double responsiveness_min = 0.5;  // per-task multiplier on useful gains
  double responsiveness_max = 1.5;
  double base_pass_min = 0.2;
  double base_pass_max = 0.7;
  // Per-family fraction of skill kinds that help the family's tasks; the
  // other kinds are inert. Missing entries mean every kind helps.
  std::vector<double> family_breadth;
  std::string domain = "airline";
  std::uint64_t seed = 42;

  void validate() const {
    if (n_tasks < 1 || n_skills < 1) throw Error("WorldConfig: need n_tasks >= 1 and n_skills >= 1");
    if (n_families < 1 || facets_per_family < 1) throw Error("WorldConfig: need n_families >= 1, facets_per_family >= 1");
    if (dispersion_kappa < 0 || overlap_omega < 0 || message_noise < 0 || overlap_chatter < 0) {
      throw Error("WorldConfig: penalty parameters must be nonnegative");
    }
    if (dispersion_alpha < 1.0) throw Error("WorldConfig: dispersion_alpha must be >= 1");
    if (render_eta < 0 || render_eta > 1 || frac_harmful < 0 || frac_harmful > 1) {
      throw Error("WorldConfig: render_eta and frac_harmful must lie in [0, 1]");
    }
    if (gain_spread < 0.0) throw Error("WorldConfig: gain_spread must be nonnegative");
    if (useful_gain_min > useful_gain_max || harmful_gain_min > harmful_gain_max ||
        responsiveness_min > responsiveness_max || base_pass_min > base_pass_max) {
      throw Error("WorldConfig: empty sampling range");
    }
    if (base_pass_min < 0 || base_pass_max > 1) throw Error("WorldConfig: base pass range must lie in [0, 1]");
    for (double b : family_breadth) {
      if (!(b > 0.0) || b > 1.0) throw Error("WorldConfig: family_breadth entries must lie in (0, 1]");
    }
  }
};

inline void to_json(json& j, const WorldConfig& c) {
  j = json{{"n_tasks", c.n_tasks},
           {"n_skills", c.n_skills},
           {"n_families", c.n_families},
           {"facets_per_family", c.facets_per_family},
           {"dispersion_kappa", c.dispersion_kappa},
           {"dispersion_alpha", c.dispersion_alpha},
           {"overlap_omega", c.overlap_omega},
           {"render_eta", c.render_eta},
           {"frac_harmful", c.frac_harmful},
           {"harmful_mimicry", c.harmful_mimicry},
           {"message_noise", c.message_noise},
           {"overlap_chatter", c.overlap_chatter},
           {"useful_gain_min", c.useful_gain_min},
           {"useful_gain_max", c.useful_gain_max},
           {"gain_spread", c.gain_spread},
           {"harmful_gain_min", c.harmful_gain_min},
           {"harmful_gain_max", c.harmful_gain_max},
           {"related_gain", c.related_gain},
           {"responsiveness_min", c.responsiveness_min},
           {"responsiveness_max", c.responsiveness_max},
           {"base_pass_min", c.base_pass_min},
           {"base_pass_max", c.base_pass_max},
           {"family_breadth", c.family_breadth},
           {"domain", c.domain},
           {"seed", c.seed}};
}

inline void from_json(const json& j, WorldConfig& c) {
  WorldConfig d;
#define SKILLCTX_FIELD(name) c.name = j.value(#name, d.name)
  SKILLCTX_FIELD(n_tasks);
  SKILLCTX_FIELD(n_skills);
  SKILLCTX_FIELD(n_families);
  SKILLCTX_FIELD(facets_per_family);
  SKILLCTX_FIELD(dispersion_kappa);
  SKILLCTX_FIELD(dispersion_alpha);
  SKILLCTX_FIELD(overlap_omega);
  SKILLCTX_FIELD(render_eta);
  SKILLCTX_FIELD(frac_harmful);
  SKILLCTX_FIELD(harmful_mimicry);
  SKILLCTX_FIELD(message_noise);
  SKILLCTX_FIELD(overlap_chatter);
  SKILLCTX_FIELD(useful_gain_min);
  SKILLCTX_FIELD(useful_gain_max);
  SKILLCTX_FIELD(gain_spread);
  SKILLCTX_FIELD(harmful_gain_min);
  SKILLCTX_FIELD(harmful_gain_max);
  SKILLCTX_FIELD(related_gain);
  SKILLCTX_FIELD(responsiveness_min);
  SKILLCTX_FIELD(responsiveness_max);
  SKILLCTX_FIELD(base_pass_min);
  SKILLCTX_FIELD(base_pass_max);
  SKILLCTX_FIELD(family_breadth);
  SKILLCTX_FIELD(domain);
  SKILLCTX_FIELD(seed);
#undef SKILLCTX_FIELD
  c.validate();
}

class World {
 public:
  World() = default;
  World(std::vector<Task> tasks, SkillLibrary library, WorldConfig config)
      : tasks_(std::move(tasks)), library_(std::move(library)), config_(std::move(config)) {
    for (std::size_t i = 0; i < tasks_.size(); ++i) {
      if (!task_index_.emplace(tasks_[i].id, i).second) throw Error("World: duplicate task id '" + tasks_[i].id + "'");
    }
    for (const auto& s : library_.skills()) {
      if (!s.effect) continue;
      for (const auto& [task_id, g] : s.effect->per_task_gain) {
        if (!task_index_.count(task_id)) {
          throw Error("World: skill '" + s.id + "' has a gain for unknown task '" + task_id + "'");
        }
      }
    }
  }

  const std::vector<Task>& tasks() const { return tasks_; }
  const SkillLibrary& library() const { return library_; }
  const WorldConfig& config() const { return config_; }

  const Task& task(const std::string& id) const {
    auto it = task_index_.find(id);
    if (it == task_index_.end()) throw Error("unknown task id '" + id + "'");
    return tasks_[it->second];
  }

  /// Same world over a different library (used for pool-size studies).
  World with_library(SkillLibrary lib) const { return World(tasks_, std::move(lib), config_); }

  bool operator==(const World& o) const {
    return tasks_ == o.tasks_ && library_ == o.library_;
  }

 private:
  std::vector<Task> tasks_;
  SkillLibrary library_;
  WorldConfig config_;
  std::unordered_map<std::string, std::size_t> task_index_;
};

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

namespace detail {

struct Family {
  const char* key;
  const char* request;  // instruction verb phrase
  std::array<const char*, 3> nouns;
  std::array<const char*, 3> facets;
};

inline const std::vector<Family>& families() {
  static const std::vector<Family> kFamilies{
      {"cancellation", "cancel my reservation", {"cancellation", "reservation", "itinerary"}, {"eligibility", "window", "fees"}},
      {"baggage", "check an extra bag", {"baggage", "luggage", "allowance"}, {"allowance", "damage", "oversize"}},
      {"refund", "get my money back", {"refund", "reimbursement", "credit"}, {"timeline", "method", "partial"}},
      {"seating", "change my seat", {"seating", "seat", "cabin"}, {"assignment", "preference", "accessibility"}},
      {"rebooking", "move to another flight", {"rebooking", "schedule", "connection"}, {"missed", "voluntary", "disruption"}},
      {"insurance", "use my travel insurance", {"insurance", "coverage", "claim"}, {"benefits", "claims", "exclusions"}},
      {"loyalty", "use my frequent flyer miles", {"loyalty", "miles", "membership"}, {"status", "redemption", "perks"}},
      {"compensation", "ask for compensation for the delay", {"compensation", "delay", "voucher"}, {"amount", "certificates", "entitlement"}},
      {"payment", "update the payment on my booking", {"payment", "card", "billing"}, {"methods", "split", "giftcard"}},
      {"passenger", "update passenger details", {"passenger", "traveler", "profile"}, {"details", "count", "documents"}},
      {"pets", "bring my dog on board", {"pets", "animal", "carrier"}, {"kennel", "service", "breeds"}},
      {"meals", "order a special meal", {"meals", "dietary", "catering"}, {"special", "allergy", "beverage"}},
  };
  return kFamilies;
}

inline constexpr std::array<const char*, 6> kUsefulKinds{"criteria", "policy", "reference", "checklist", "guide", "procedure"};
inline constexpr std::array<const char*, 6> kUsefulLeads{"determines", "states", "summarizes", "verifies", "walks through", "orders"};
inline constexpr std::array<const char*, 4> kHarmfulVerbs{"modify", "override", "bulk", "legacy"};
inline constexpr std::array<const char*, 8> kExtras{
    "Includes worked examples.",       "Lists the required confirmations.", "Quotes the governing clause.",
    "Flags common edge cases.",        "Notes escalation paths.",          "Gives sample phrasing.",
    "Mentions the relevant deadlines.", "Points to supporting records."};
inline constexpr std::array<const char*, 6> kGreetings{"Hi,", "Hello,", "Good morning,", "Hey there,", "Hi team,", "Hello again,"};
inline constexpr std::array<const char*, 10> kReasons{
    "because my plans changed",        "since the date conflicts with a birthday", "because of a work trip",
    "after a family emergency",        "because the schedule moved",              "since I booked the wrong day",
    "because my friend cancelled",     "due to a medical appointment",            "because the weather looks bad",
    "since my visa is delayed"};
inline constexpr std::array<const char*, 6> kClosings{"Can you help?", "Please advise.", "Thanks in advance.",
                                                      "What are my options?", "I need this sorted today.",
                                                      "Let me know what is possible."};

template <std::size_t N>
const char* pick(Rng& rng, const std::array<const char*, N>& pool) {
  return pool[rng.index(N)];
}

inline std::string capitalize(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

}  // namespace detail

/// Deterministic world. Tasks cycle through families; skills are assigned to
/// (family, facet) overlap groups and exactly round(frac_harmful * n_skills)
/// of them are harmful (negative gain on their family's tasks).
///
/// A useful skill helps its family's tasks (scaled by each task's
/// responsiveness) when its kind is one of the family's helpful kinds, and
/// passes a related_gain fraction of that to the next family's tasks. Skills
/// of other kinds are inert. Every other (task, skill) gain is zero.
/// Descriptions are synthesized from the family and facet so texts in one
/// overlap group share keywords.
inline World generate_world(const WorldConfig& cfg) {
  cfg.validate();
  const auto& fams = detail::families();
  const int n_fam = std::min<int>(cfg.n_families, static_cast<int>(fams.size()));
  const int n_facets = std::min(cfg.facets_per_family, 3);
  Rng root(cfg.seed);

  struct TaskDraft {
    int family = 0;
    std::string facet, noun, greeting, reason, closing;
    double responsiveness = 1.0;
  };
  std::vector<Task> tasks;
  std::vector<TaskDraft> drafts;
  std::vector<std::vector<std::size_t>> tasks_by_family(static_cast<std::size_t>(n_fam));
  for (int i = 0; i < cfg.n_tasks; ++i) {
    char idbuf[16];
    std::snprintf(idbuf, sizeof idbuf, "t%03d", i);
    Rng rng = derive_stream(root, std::string("task:") + idbuf);
    TaskDraft d;
    d.family = i % n_fam;
    const auto& fam = fams[static_cast<std::size_t>(d.family)];
    Task t;
    t.id = idbuf;
    t.domain = cfg.domain;
    t.base_pass = rng.uniform(cfg.base_pass_min, cfg.base_pass_max);
    t.base_messages = rng.uniform(15.0, 35.0);
    d.greeting = detail::pick(rng, detail::kGreetings);
    d.reason = detail::pick(rng, detail::kReasons);
    d.facet = fam.facets[rng.index(static_cast<std::size_t>(n_facets))];
    d.noun = fam.nouns[1 + rng.index(2)];
    d.closing = detail::pick(rng, detail::kClosings);
    d.responsiveness = rng.uniform(cfg.responsiveness_min, cfg.responsiveness_max);
    tasks_by_family[static_cast<std::size_t>(d.family)].push_back(tasks.size());
    tasks.push_back(std::move(t));
    drafts.push_back(std::move(d));
  }

  // Exact harmful count, chosen by a seeded shuffle.
  std::vector<bool> is_harmful(static_cast<std::size_t>(cfg.n_skills), false);
  {
    std::vector<std::size_t> order(is_harmful.size());
    std::iota(order.begin(), order.end(), 0);
    Rng pick = derive_stream(root, "harmful-set");
    pick.shuffle(order);
    const auto n_harmful = static_cast<std::size_t>(std::lround(cfg.frac_harmful * cfg.n_skills));
    for (std::size_t k = 0; k < std::min(n_harmful, order.size()); ++k) is_harmful[order[k]] = true;
  }

  struct SkillDraft {
    int family = 0;
    std::string facet, kind;
    bool harmful = false;
    double strength_u = 0.0;
    double harm = 0.0;
  };
  std::vector<Skill> skills;
  std::vector<SkillDraft> sdrafts;
  std::set<std::string> used_ids;
  for (int i = 0; i < cfg.n_skills; ++i) {
    Rng rng = derive_stream(root, "skill:" + std::to_string(i));
    SkillDraft d;
    d.family = i % n_fam;
    const auto& fam = fams[static_cast<std::size_t>(d.family)];
    d.facet = fam.facets[rng.index(static_cast<std::size_t>(n_facets))];
    d.harmful = is_harmful[static_cast<std::size_t>(i)];
    // Strength is shared within a family up to a small per-skill jitter.
    const double group_u = derive_stream(root, std::string("family-strength:") + fam.key).uniform();
    d.strength_u = std::clamp(group_u + cfg.gain_spread * (2.0 * rng.uniform() - 1.0), 0.0, 1.0);
    const std::size_t kind_ix = rng.index(detail::kUsefulKinds.size());
    d.kind = detail::kUsefulKinds[kind_ix];
    const std::string noun = fam.nouns[1 + rng.index(2)];
    const std::string extra = detail::pick(rng, detail::kExtras);

    std::string base_id = d.harmful ? std::string(detail::pick(rng, detail::kHarmfulVerbs)) + "_" + fam.key + "_" + d.facet
                                    : std::string(fam.key) + "_" + d.facet + "_" + d.kind;
    std::string id = base_id;
    for (int v = 2; used_ids.count(id); ++v) id = base_id + "_v" + std::to_string(v);
    used_ids.insert(id);

    Skill s;
    s.id = id;
    s.name = id;
    s.family = fam.key;
    const std::string useful_text = std::string(fam.key) + " " + d.facet + " " + d.kind + ": " +
                                    detail::kUsefulLeads[kind_ix] + " the " + d.facet + " conditions for " + noun +
                                    " requests.";
    if (d.harmful && cfg.harmful_mimicry) {
      s.description = detail::capitalize(useful_text + " Applies booking changes directly.");
    } else if (d.harmful) {
      s.description = detail::capitalize(std::string(fam.key) + " " + d.facet + " settings: updates " + noun +
                                         " records on an existing booking and returns post-booking " + fam.key +
                                         " guidance.");
    } else {
      s.description = detail::capitalize(useful_text);
    }
    s.body = "# " + id + "\n1. Confirm the " + std::string(fam.nouns[0]) + " details with the user.\n2. Check the " +
             d.facet + " conditions that apply to the " + noun + ".\n3. " +
             (d.harmful ? std::string("Apply the requested update to the booking record.")
                        : std::string("Explain the outcome and cite the matching policy clause.")) +
             "\n4. " + extra + "\n5. Record the result under " + id + ".\n";

    SimEffect effect;
    effect.overlap_group = std::string(fam.key) + "/" + d.facet;
    effect.message_cost = rng.uniform(0.5, 3.0);
    if (d.harmful) d.harm = std::min(1.0, rng.uniform(cfg.harmful_gain_min, cfg.harmful_gain_max));
    s.effect = std::move(effect);
    skills.push_back(std::move(s));
    sdrafts.push_back(std::move(d));
  }

  for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
    const TaskDraft& d = drafts[ti];
    const auto& fam = fams[static_cast<std::size_t>(d.family)];
    tasks[ti].instruction = d.greeting + " I want to " + fam.request + " " + d.reason + ". My question is about " +
                            fam.key + " " + d.facet + " for the " + d.noun + ". " + d.closing;
  }

  // Helpful kinds per family: a seeded prefix of the kind list.
  std::vector<std::set<std::string>> helpful(static_cast<std::size_t>(n_fam));
  for (int f = 0; f < n_fam; ++f) {
    std::vector<std::string> kinds(detail::kUsefulKinds.begin(), detail::kUsefulKinds.end());
    const double breadth = static_cast<std::size_t>(f) < cfg.family_breadth.size()
                               ? cfg.family_breadth[static_cast<std::size_t>(f)]
                               : 1.0;
    std::size_t n = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(breadth * kinds.size())));
    if (n < kinds.size()) {
      Rng rng = derive_stream(root, std::string("family-kinds:") + fams[static_cast<std::size_t>(f)].key);
      rng.shuffle(kinds);
    }
    helpful[static_cast<std::size_t>(f)].insert(kinds.begin(), kinds.begin() + static_cast<std::ptrdiff_t>(n));
  }

  for (std::size_t si = 0; si < skills.size(); ++si) {
    const SkillDraft& sd = sdrafts[si];
    Skill& s = skills[si];
    const auto& own_tasks = tasks_by_family[static_cast<std::size_t>(sd.family)];
    if (sd.harmful) {
      for (std::size_t ti : own_tasks) s.effect->per_task_gain[tasks[ti].id] = -sd.harm;
      if (!own_tasks.empty()) {
        Rng rng = derive_stream(root, "harmful-source:" + s.id);
        s.sources.push_back(tasks[own_tasks[rng.index(own_tasks.size())]].id);
      }
      continue;
    }
    const double g = cfg.useful_gain_min + (cfg.useful_gain_max - cfg.useful_gain_min) * sd.strength_u;
    const bool helps = helpful[static_cast<std::size_t>(sd.family)].count(sd.kind) > 0;
    if (helps) {
      for (std::size_t ti : own_tasks) {
        s.effect->per_task_gain[tasks[ti].id] = std::clamp(g * drafts[ti].responsiveness, -1.0, 1.0);
      }
      if (cfg.related_gain > 0.0 && n_fam > 1) {
        for (std::size_t ti : tasks_by_family[static_cast<std::size_t>((sd.family + 1) % n_fam)]) {
          s.effect->per_task_gain[tasks[ti].id] =
              std::clamp(cfg.related_gain * g * drafts[ti].responsiveness, -1.0, 1.0);
        }
      }
    }
    // Stronger skills were distilled from more tasks; inert ones from one.
    const std::size_t n_src =
        helps ? std::max<std::size_t>(
                    1, static_cast<std::size_t>(std::lround(sd.strength_u * static_cast<double>(own_tasks.size()))))
              : 1;
    for (std::size_t k = 0; k < std::min(n_src, own_tasks.size()); ++k) s.sources.push_back(tasks[own_tasks[k]].id);
  }
  return World(std::move(tasks), SkillLibrary(std::move(skills)), cfg);
}

// ---------------------------------------------------------------------------
// Utility model
// ---------------------------------------------------------------------------

namespace detail {

struct ContextTerms {
  double gain_sum = 0.0;
  double cost_sum = 0.0;
  double overlap_weight = 0.0;  // sum over same-group pairs of (1 - eta * covered)
};

inline ContextTerms context_terms(const World& world, const Task& task, const RenderedContext& ctx) {
  ContextTerms terms;
  const auto& lib = world.library();
  std::vector<const Skill*> skills;
  skills.reserve(ctx.size());
  for (const auto& e : ctx.entries) {
    const Skill& s = lib.at(e.skill_id);
    skills.push_back(&s);
    if (s.effect) {
      terms.gain_sum += s.effect->gain(task.id);
      terms.cost_sum += s.effect->message_cost;
    }
  }
  const double eta = world.config().render_eta;
  for (std::size_t a = 0; a < skills.size(); ++a) {
    if (!skills[a]->effect || skills[a]->effect->overlap_group.empty()) continue;
    for (std::size_t b = a + 1; b < skills.size(); ++b) {
      if (!skills[b]->effect || skills[b]->effect->overlap_group != skills[a]->effect->overlap_group) continue;
      const bool covered = ctx.names(skills[a]->id, skills[b]->id) && ctx.names(skills[b]->id, skills[a]->id);
      terms.overlap_weight += 1.0 - eta * (covered ? 1.0 : 0.0);
    }
  }
  return terms;
}

}  // namespace detail

inline double pass_probability(const World& world, const Task& task, const RenderedContext& ctx) {
  const auto& cfg = world.config();
  const auto terms = detail::context_terms(world, task, ctx);
  const double extra = std::max(0.0, static_cast<double>(ctx.size()) - 1.0);
  const double dispersion = extra > 0.0 ? cfg.dispersion_kappa * std::pow(extra, cfg.dispersion_alpha) : 0.0;
  const double p = task.base_pass + terms.gain_sum - dispersion - cfg.overlap_omega * terms.overlap_weight;
  return std::clamp(p, 0.0, 1.0);
}

inline double expected_messages(const World& world, const Task& task, const RenderedContext& ctx) {
  const auto terms = detail::context_terms(world, task, ctx);
  return task.base_messages + terms.cost_sum + world.config().overlap_chatter * terms.overlap_weight;
}

/// One simulated episode. The reward draw and message noise come from a
/// stream keyed by (seed, task) only, so contexts evaluated under the same
/// seed share their randomness: reward = [u < p] is monotone in p.
inline RolloutRecord rollout(const World& world, const Task& task, const RenderedContext& ctx, std::uint64_t seed) {
  const double p = pass_probability(world, task, ctx);
  const double m = expected_messages(world, task, ctx);
  Rng stream = derive_stream(seed, "rollout:" + task.id);
  const double u = stream.uniform();
  const double z = stream.normal();
  RolloutRecord r;
  r.task_id = task.id;
  r.context_skill_ids = ctx.skill_ids();
  r.seed = seed;
  r.reward = u < p ? 1 : 0;
  r.messages = static_cast<int>(std::max(0L, std::lround(m + world.config().message_noise * z)));
  return r;
}

/// Exact benefit of a single skill over the empty context.
inline double oracle_delta(const World& world, const Task& task, const Skill& skill) {
  const RenderedContext empty;
  const RenderedContext single = plain_context(world.library(), {skill.id});
  return pass_probability(world, task, single) - pass_probability(world, task, empty);
}

/// Seed used for the r-th labeling rollout.
inline std::uint64_t label_seed(std::uint64_t seed, int r) {
  return derive_stream(seed, "label-rollout:" + std::to_string(r)).seed();
}

struct LabelOptions {
  bool paired = true;  // with-skill and no-skill rollouts share seeds
  int workers = 1;
};

/// Empirical benefit labels for every (task, skill) over the given tasks.
inline std::vector<UtilityLabel> label_library(const World& world, const std::vector<Task>& tasks,
                                               int rollouts_per_config, std::uint64_t seed,
                                               const LabelOptions& opts = {}) {
  if (rollouts_per_config < 1) throw Error("label_library: rollouts_per_config must be >= 1");
  const auto& lib = world.library();
  std::vector<std::vector<UtilityLabel>> per_task(tasks.size());
  parallel_for(tasks.size(), opts.workers, [&](std::size_t ti) {
    const Task& t = tasks[ti];
    const RenderedContext empty;
    int base_wins = 0;
    for (int r = 0; r < rollouts_per_config; ++r) base_wins += rollout(world, t, empty, label_seed(seed, r)).reward;
    const double base_rate = static_cast<double>(base_wins) / rollouts_per_config;
    for (const auto& s : lib.skills()) {
      const RenderedContext single = plain_context(lib, {s.id});
      int wins = 0;
      for (int r = 0; r < rollouts_per_config; ++r) {
        std::uint64_t sd = opts.paired
                               ? label_seed(seed, r)
                               : derive_stream(seed, "label-indep:" + s.id + ":" + std::to_string(r)).seed();
        wins += rollout(world, t, single, sd).reward;
      }
      UtilityLabel l;
      l.task_id = t.id;
      l.skill_id = s.id;
      l.delta = static_cast<double>(wins) / rollouts_per_config - base_rate;
      l.y = label_from_delta(l.delta);
      l.rollouts = rollouts_per_config;
      per_task[ti].push_back(std::move(l));
    }
  });
  std::vector<UtilityLabel> out;
  for (auto& v : per_task) {
    for (auto& l : v) out.push_back(std::move(l));
  }
  return out;
}

inline std::vector<UtilityLabel> label_library(const World& world, int rollouts_per_config, std::uint64_t seed,
                                               const LabelOptions& opts = {}) {
  return label_library(world, world.tasks(), rollouts_per_config, seed, opts);
}

// ---------------------------------------------------------------------------
// World directory: tasks.json, library.json, effects.json, world.json
// ---------------------------------------------------------------------------

inline void save_world(const World& world, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  io::write_json(dir / "tasks.json", json(world.tasks()));
  json lib = json::array();
  json effects = json::object();
  for (const auto& s : world.library().skills()) {
    Skill visible = s;
    visible.effect.reset();
    lib.push_back(visible);
    if (s.effect) effects[s.id] = *s.effect;
  }
  io::write_json(dir / "library.json", lib);
  io::write_json(dir / "effects.json", effects);
  io::write_json(dir / "world.json", json(world.config()));
}

inline World load_world(const std::filesystem::path& dir) {
  for (const char* f : {"tasks.json", "library.json", "effects.json", "world.json"}) {
    if (!std::filesystem::exists(dir / f)) {
      throw Error("world directory '" + dir.string() + "' is missing " + f + " (run `generate-world` first)");
    }
  }
  auto tasks = io::read_json(dir / "tasks.json").get<std::vector<Task>>();
  auto skills = io::read_json(dir / "library.json").get<std::vector<Skill>>();
  const json effects = io::read_json(dir / "effects.json");
  for (auto& s : skills) {
    if (effects.contains(s.id)) s.effect = effects.at(s.id).get<SimEffect>();
  }
  auto cfg = io::read_json(dir / "world.json").get<WorldConfig>();
  return World(std::move(tasks), SkillLibrary(std::move(skills)), cfg);
}

}  // namespace skillctx
