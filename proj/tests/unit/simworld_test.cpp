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
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <filesystem>

namespace skillctx {
namespace {

using testing::closed_form_pass;
using testing::effect_skill;
using testing::make_task;

WorldConfig toy_config() {
  WorldConfig cfg;
  cfg.dispersion_kappa = 0.02;
  cfg.dispersion_alpha = 1.5;
  cfg.overlap_omega = 0.05;
  cfg.render_eta = 0.8;
  cfg.overlap_chatter = 1.5;
  cfg.message_noise = 1.0;
  return cfg;
}

// t1 base .5; a and b overlap in group g; c is harmful on t1.
World toy_world(WorldConfig cfg = toy_config()) {
  SkillLibrary lib({effect_skill("a", "refund eligibility", {{"t1", 0.20}}, 1.0, "g"),
                    effect_skill("b", "refund amounts", {{"t1", 0.10}, {"t2", 0.05}}, 2.0, "g"),
                    effect_skill("c", "modify booking", {{"t1", -0.15}}, 0.5, ""),
                    testing::make_skill("d", "inert", "no effect")});
  return World({make_task("t1", 0.5, 12.0), make_task("t2", 0.4, 20.0)}, lib, cfg);
}

RenderedContext covered(const World& w, const std::vector<std::string>& ids) {
  auto ctx = plain_context(w.library(), ids);
  ctx.rendered = true;
  for (auto& e : ctx.entries) {
    for (const auto& id : ids) {
      if (id != e.skill_id) e.scope_targets.push_back(id);
    }
  }
  return ctx;
}

TEST(PassProbability, EmptyContextIsBase) {
  const auto w = toy_world();
  EXPECT_DOUBLE_EQ(pass_probability(w, w.task("t1"), {}), 0.5);
  EXPECT_DOUBLE_EQ(expected_messages(w, w.task("t1"), {}), 12.0);
}

TEST(PassProbability, SingleSkillHasNoPenalty) {
  const auto w = toy_world();
  EXPECT_NEAR(pass_probability(w, w.task("t1"), plain_context(w.library(), {"a"})), 0.7, 1e-12);
  EXPECT_NEAR(oracle_delta(w, w.task("t1"), w.library().at("a")), 0.2, 1e-12);
  EXPECT_NEAR(oracle_delta(w, w.task("t1"), w.library().at("c")), -0.15, 1e-12);
  EXPECT_DOUBLE_EQ(oracle_delta(w, w.task("t1"), w.library().at("d")), 0.0);
}

TEST(PassProbability, ClosedFormUncovered) {
  const auto w = toy_world();
  const auto ctx = plain_context(w.library(), {"a", "b", "c"});
  // .5 + .2 + .1 - .15 - .02*2^1.5 - .05*1
  const double want = closed_form_pass(0.5, {0.2, 0.1, -0.15}, 0.02, 1.5, 0.05, 1, 0, 0.8);
  EXPECT_NEAR(want, 0.65 - 0.02 * std::pow(2.0, 1.5) - 0.05, 1e-12);
  EXPECT_NEAR(pass_probability(w, w.task("t1"), ctx), want, 1e-12);
  EXPECT_NEAR(expected_messages(w, w.task("t1"), ctx), 12.0 + 3.5 + 1.5, 1e-12);
}

TEST(PassProbability, ClosedFormCovered) {
  const auto w = toy_world();
  const auto ctx = covered(w, {"a", "b", "c"});
  const double want = closed_form_pass(0.5, {0.2, 0.1, -0.15}, 0.02, 1.5, 0.05, 1, 1, 0.8);
  EXPECT_NEAR(pass_probability(w, w.task("t1"), ctx), want, 1e-12);
  EXPECT_NEAR(expected_messages(w, w.task("t1"), ctx), 12.0 + 3.5 + 1.5 * 0.2, 1e-12);
}

TEST(PassProbability, CoverageNeedsBothDirections) {
  const auto w = toy_world();
  auto ctx = plain_context(w.library(), {"a", "b"});
  ctx.entries[0].scope_targets = {"b"};
  EXPECT_DOUBLE_EQ(pass_probability(w, w.task("t1"), ctx),
                   pass_probability(w, w.task("t1"), plain_context(w.library(), {"a", "b"})));
}

TEST(PassProbability, ClampsToUnitInterval) {
  auto cfg = toy_config();
  cfg.dispersion_kappa = 0.0;
  cfg.overlap_omega = 0.0;
  SkillLibrary lib({effect_skill("x", "x", {{"t1", 0.9}}, 0, ""), effect_skill("y", "y", {{"t1", 0.9}}, 0, ""),
                    effect_skill("z", "z", {{"t1", -2.0}}, 0, "")});
  World w({make_task("t1", 0.5)}, lib, cfg);
  EXPECT_EQ(pass_probability(w, w.task("t1"), plain_context(lib, {"x", "y"})), 1.0);
  EXPECT_EQ(pass_probability(w, w.task("t1"), plain_context(lib, {"z"})), 0.0);
}

TEST(PassProbability, DispersionGrowsWithSize) {
  auto cfg = toy_config();
  cfg.overlap_omega = 0.0;
  SkillLibrary lib;
  std::vector<std::string> ids;
  for (int i = 0; i < 6; ++i) {
    ids.push_back("s" + std::to_string(i));
    lib.add(testing::make_skill(ids.back(), "d", "b"));
  }
  World w({make_task("t1", 0.9)}, lib, cfg);
  double prev = 1.0;
  for (std::size_t n = 1; n <= ids.size(); ++n) {
    const double p = pass_probability(w, w.task("t1"), plain_context(lib, {ids.begin(), ids.begin() + static_cast<long>(n)}));
    EXPECT_NEAR(p, 0.9 - 0.02 * std::pow(static_cast<double>(n - 1), 1.5), 1e-12);
    EXPECT_LE(p, prev);
    prev = p;
  }
}

TEST(Rollout, SameSeedSameRecord) {
  const auto w = toy_world();
  const auto ctx = plain_context(w.library(), {"a", "b"});
  EXPECT_EQ(rollout(w, w.task("t1"), ctx, 7), rollout(w, w.task("t1"), ctx, 7));
}

TEST(Rollout, RecordFields) {
  const auto w = toy_world();
  const auto r = rollout(w, w.task("t1"), plain_context(w.library(), {"b", "a"}), 301);
  EXPECT_EQ(r.task_id, "t1");
  EXPECT_EQ(r.context_skill_ids, (std::vector<std::string>{"b", "a"}));
  EXPECT_EQ(r.seed, 301u);
  EXPECT_TRUE(r.reward == 0 || r.reward == 1);
  EXPECT_GE(r.messages, 0);
}

TEST(Rollout, CommonRandomNumbersMonotone) {
  // Under a shared seed a context with higher p never loses where a lower one wins.
  const auto w = toy_world();
  const auto low = plain_context(w.library(), {"c"});
  const auto high = plain_context(w.library(), {"a"});
  for (std::uint64_t s = 0; s < 500; ++s) {
    EXPECT_GE(rollout(w, w.task("t1"), high, s).reward, rollout(w, w.task("t1"), low, s).reward);
  }
}

TEST(Rollout, EmpiricalRateMatchesProbability) {
  const auto w = toy_world();
  const auto ctx = plain_context(w.library(), {"a", "b", "c"});
  const double p = pass_probability(w, w.task("t1"), ctx);
  int wins = 0;
  const int n = 20000;
  for (int s = 0; s < n; ++s) wins += rollout(w, w.task("t1"), ctx, static_cast<std::uint64_t>(s)).reward;
  EXPECT_NEAR(static_cast<double>(wins) / n, p, 4.0 * std::sqrt(p * (1 - p) / n));
}

TEST(Rollout, ZeroNoiseGivesRoundedExpectation) {
  auto cfg = toy_config();
  cfg.message_noise = 0.0;
  const auto w = toy_world(cfg);
  const auto ctx = plain_context(w.library(), {"a", "b"});
  EXPECT_EQ(rollout(w, w.task("t1"), ctx, 3).messages, std::lround(expected_messages(w, w.task("t1"), ctx)));
}

TEST(LabelLibrary, ShapeAndMapping) {
  const auto w = toy_world();
  const auto labels = label_library(w, 20, 5);
  ASSERT_EQ(labels.size(), w.tasks().size() * w.library().size());
  for (const auto& l : labels) {
    EXPECT_EQ(l.rollouts, 20);
    EXPECT_DOUBLE_EQ(l.y, label_from_delta(l.delta));
    EXPECT_GE(l.delta, -1.0);
    EXPECT_LE(l.delta, 1.0);
  }
}

TEST(LabelLibrary, PairedInertSkillHasZeroDelta) {
  const auto w = toy_world();
  for (const auto& l : label_library(w, 50, 9)) {
    if (l.skill_id == "d") EXPECT_EQ(l.delta, 0.0) << l.task_id;
  }
}

TEST(LabelLibrary, WorkerCountDoesNotChangeLabels) {
  const auto w = toy_world();
  EXPECT_EQ(label_library(w, 30, 4, {true, 1}), label_library(w, 30, 4, {true, 3}));
}

TEST(LabelLibrary, ConvergesToOracle) {
  const auto w = toy_world();
  for (const auto& l : label_library(w, 4000, 1)) {
    const double truth = oracle_delta(w, w.task(l.task_id), w.library().at(l.skill_id));
    EXPECT_NEAR(l.delta, truth, 0.03) << l.task_id << "/" << l.skill_id;
  }
}

TEST(LabelLibrary, RejectsZeroRollouts) { EXPECT_THROW(label_library(toy_world(), 0, 1), Error); }

TEST(World, UnknownTaskInEffectRejected) {
  SkillLibrary lib({effect_skill("a", "a", {{"nope", 0.1}}, 1.0, "")});
  EXPECT_THROW(World({make_task("t1", 0.5)}, lib, toy_config()), Error);
}

TEST(World, DuplicateTaskRejected) {
  EXPECT_THROW(World({make_task("t1", 0.5), make_task("t1", 0.4)}, SkillLibrary{}, toy_config()), Error);
}

TEST(GenerateWorld, SizesAndDeterminism) {
  WorldConfig cfg;
  cfg.n_tasks = 12;
  cfg.n_skills = 20;
  cfg.n_families = 3;
  cfg.seed = 5;
  const auto a = generate_world(cfg);
  EXPECT_EQ(a.tasks().size(), 12u);
  EXPECT_EQ(a.library().size(), 20u);
  EXPECT_EQ(a, generate_world(cfg));
  cfg.seed = 6;
  EXPECT_FALSE(a == generate_world(cfg));
}

TEST(GenerateWorld, ExactHarmfulCount) {
  WorldConfig cfg;
  cfg.n_tasks = 30;
  cfg.n_skills = 40;
  cfg.n_families = 3;
  cfg.frac_harmful = 0.3;
  const auto w = generate_world(cfg);
  int harmful = 0;
  for (const auto& s : w.library().skills()) {
    ASSERT_TRUE(s.effect.has_value());
    bool negative = false;
    for (const auto& [t, g] : s.effect->per_task_gain) negative |= g < 0.0;
    harmful += negative;
    EXPECT_FALSE(s.family.empty());
    EXPECT_FALSE(s.sources.empty());
  }
  EXPECT_EQ(harmful, 12);
}

TEST(GenerateWorld, ParametersWithinRanges) {
  WorldConfig cfg;
  cfg.n_tasks = 20;
  cfg.n_skills = 30;
  const auto w = generate_world(cfg);
  for (const auto& t : w.tasks()) {
    EXPECT_GE(t.base_pass, cfg.base_pass_min);
    EXPECT_LE(t.base_pass, cfg.base_pass_max);
    EXPECT_FALSE(t.instruction.empty());
  }
  for (const auto& s : w.library().skills()) {
    EXPECT_GE(s.effect->message_cost, 0.5);
    EXPECT_LE(s.effect->message_cost, 3.0);
  }
}

TEST(GenerateWorld, InvalidConfigRejected) {
  WorldConfig cfg;
  cfg.frac_harmful = 1.5;
  EXPECT_THROW(generate_world(cfg), Error);
  cfg = {};
  cfg.dispersion_alpha = 0.5;
  EXPECT_THROW(generate_world(cfg), Error);
}

TEST(WorldDirectory, SaveLoadRoundTrip) {
  WorldConfig cfg;
  cfg.n_tasks = 6;
  cfg.n_skills = 9;
  const auto w = generate_world(cfg);
  const auto dir = std::filesystem::temp_directory_path() / "skillctx_world_rt";
  std::filesystem::remove_all(dir);
  save_world(w, dir);
  const auto back = load_world(dir);
  EXPECT_EQ(back, w);
  EXPECT_EQ(json(back.config()), json(w.config()));
  // The visible library file carries no simulator effects.
  for (const auto& s : io::read_json(dir / "library.json")) EXPECT_FALSE(s.contains("effect"));
  std::filesystem::remove_all(dir);
}

TEST(WorldDirectory, MissingFileIsActionable) {
  const auto dir = std::filesystem::temp_directory_path() / "skillctx_world_missing";
  std::filesystem::create_directories(dir);
  try {
    load_world(dir);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("generate-world"), std::string::npos);
  }
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace skillctx
