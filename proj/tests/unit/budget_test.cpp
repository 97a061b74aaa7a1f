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

namespace skillctx {
namespace {

using testing::make_skill;
using testing::make_task;

TEST(NormalizeScores, MinMax) {
  const auto n = normalize_scores({{"a", 2.0}, {"b", 4.0}, {"c", 6.0}});
  EXPECT_DOUBLE_EQ(n.at("a"), 0.0);
  EXPECT_DOUBLE_EQ(n.at("b"), 0.5);
  EXPECT_DOUBLE_EQ(n.at("c"), 1.0);
}

TEST(NormalizeScores, ConstantMapsToOne) {
  for (const auto& [id, v] : normalize_scores({{"a", -3.0}, {"b", -3.0}})) EXPECT_EQ(v, 1.0) << id;
  EXPECT_EQ(normalize_scores({{"only", 0.2}}).at("only"), 1.0);
  EXPECT_THROW(normalize_scores({}), Error);
}

TEST(Admit, ThresholdBestFirst) {
  const std::map<std::string, double> s{{"a", 0.0}, {"b", 0.5}, {"c", 1.0}, {"d", 0.49}};
  EXPECT_EQ(admit(s, {0.5, 16, false}), (std::vector<std::string>{"c", "b"}));
  EXPECT_EQ(admit(s, {0.0, 16, false}), (std::vector<std::string>{"c", "b", "d", "a"}));
  EXPECT_EQ(admit(s, {1.0, 16, false}), (std::vector<std::string>{"c"}));
}

TEST(Admit, CapAtBmax) {
  const std::map<std::string, double> s{{"a", 0.9}, {"b", 0.8}, {"c", 1.0}, {"d", 0.7}};
  EXPECT_EQ(admit(s, {0.0, 2, false}), (std::vector<std::string>{"c", "a"}));
}

TEST(Admit, TiesGoToSmallerId) {
  const std::map<std::string, double> s{{"z", 1.0}, {"m", 1.0}, {"a", 1.0}};
  EXPECT_EQ(admit(s, {0.5, 2, false}), (std::vector<std::string>{"a", "m"}));
}

TEST(Admit, SentinelAdmitsNothing) {
  EXPECT_TRUE(admit({{"a", 1.0}}, {0.0, 16, true}).empty());
  EXPECT_TRUE(admit({{"a", 1.0}}, {5.0, 16, true}).empty());
}

TEST(Admit, InvalidConfigRejected) {
  EXPECT_THROW(admit({{"a", 1.0}}, {1.5, 16, false}), Error);
  EXPECT_THROW(admit({{"a", 1.0}}, {0.5, 0, false}), Error);
}

TEST(AdmissionConfig, JsonRoundTrip) {
  const AdmissionConfig a{0.625, 9, false};
  const auto back = json(a).get<AdmissionConfig>();
  EXPECT_EQ(back.tau, 0.625);
  EXPECT_EQ(back.b_max, 9);
  EXPECT_FALSE(back.accept_none_sentinel);
}

TEST(ConsecutiveSeeds, Sequence) {
  EXPECT_EQ(consecutive_seeds(300, 3), (std::vector<std::uint64_t>{300, 301, 302}));
  EXPECT_THROW(consecutive_seeds(1, 0), Error);
}

// Hand world: one helpful skill on both tasks.
World small_world() {
  WorldConfig cfg;
  cfg.overlap_omega = 0.0;
  SkillLibrary lib({testing::effect_skill("good", "refund rules", {{"t1", 0.3}, {"t2", 0.3}}, 1.0, ""),
                    make_skill("inert", "seat map", "b")});
  return World({make_task("t1", 0.4, 10.0), make_task("t2", 0.6, 20.0)}, lib, cfg);
}

TEST(EvaluateContexts, PerSeedMeansByHand) {
  const auto w = small_world();
  const std::vector<RenderedContext> ctx{plain_context(w.library(), {"good"}), {}};
  const std::vector<std::uint64_t> seeds{1, 2, 3, 4};
  const auto sum = evaluate_contexts(w, w.tasks(), ctx, seeds);
  ASSERT_EQ(sum.per_seed_pass.size(), 4u);
  double total = 0.0, msgs = 0.0;
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    const auto r1 = rollout(w, w.tasks()[0], ctx[0], seeds[s]);
    const auto r2 = rollout(w, w.tasks()[1], ctx[1], seeds[s]);
    EXPECT_DOUBLE_EQ(sum.per_seed_pass[s], (r1.reward + r2.reward) / 2.0);
    total += (r1.reward + r2.reward) / 2.0;
    msgs += (r1.messages + r2.messages) / 2.0;
  }
  EXPECT_DOUBLE_EQ(sum.mean_pass, total / 4.0);
  EXPECT_DOUBLE_EQ(sum.mean_messages, msgs / 4.0);
  EXPECT_NEAR(sum.std_pass, stats::sample_std(sum.per_seed_pass), 1e-15);
}

TEST(EvaluateContexts, ContextCountMustMatch) {
  const auto w = small_world();
  EXPECT_THROW(evaluate_contexts(w, w.tasks(), {RenderedContext{}}, {1}), Error);
}

TEST(BuildContext, RendersOnlyWithStudent) {
  const auto w = small_world();
  const auto student = make_rule_student();
  const auto& t = w.tasks()[0];
  EXPECT_FALSE(build_context(t, w.library(), {"good", "inert"}, nullptr).rendered);
  EXPECT_TRUE(build_context(t, w.library(), {"good", "inert"}, &student).rendered);
  EXPECT_EQ(build_context(t, w.library(), {"good"}, &student), plain_context(w.library(), {"good"}));
}

PlannerModel tiny_model(std::uint64_t seed) {
  EmbedderConfig emb;
  emb.dimension = 16;
  return init_model(32, 8, 0.0, emb, seed);
}

TEST(CalibrateTau, BestIsSweepArgmaxWithTieRule) {
  const auto w = small_world();
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto cal = calibrate_tau(w, tiny_model(seed), w.tasks(), default_tau_grid(), consecutive_seeds(seed * 10, 40));
    ASSERT_EQ(cal.sweep.size(), 10u);
    EXPECT_TRUE(cal.sweep.back().admission.accept_none_sentinel);
    double best = -1.0;
    for (const auto& p : cal.sweep) best = std::max(best, p.summary.mean_pass);
    double best_rank = -1.0;
    for (const auto& p : cal.sweep) {
      if (p.summary.mean_pass == best) best_rank = std::max(best_rank, p.admission.accept_none_sentinel ? 2.0 : p.admission.tau);
    }
    const double got_rank = cal.best.accept_none_sentinel ? 2.0 : cal.best.tau;
    EXPECT_EQ(got_rank, best_rank);
  }
}

TEST(CalibrateTau, AllEqualPicksSentinelThenLargestTau) {
  // Inert library and no penalties: every admission gives the same rollouts.
  WorldConfig cfg;
  cfg.dispersion_kappa = 0.0;
  cfg.overlap_omega = 0.0;
  cfg.overlap_chatter = 0.0;
  World w({make_task("t1", 0.5)}, SkillLibrary({make_skill("a", "x", "b"), make_skill("b", "y", "b")}), cfg);
  const auto seeds = consecutive_seeds(1, 20);
  EXPECT_TRUE(calibrate_tau(w, tiny_model(1), w.tasks(), {0.0, 0.5, 1.0}, seeds).best.accept_none_sentinel);
  CalibrationOptions no_sentinel;
  no_sentinel.include_sentinel = false;
  const auto best = calibrate_tau(w, tiny_model(1), w.tasks(), {0.0, 0.5, 1.0}, seeds, no_sentinel).best;
  EXPECT_FALSE(best.accept_none_sentinel);
  EXPECT_EQ(best.tau, 1.0);
}

TEST(CalibrateTau, EmptyInputsRejected) {
  const auto w = small_world();
  EXPECT_THROW(calibrate_tau(w, tiny_model(1), w.tasks(), {}, consecutive_seeds(1, 2)), Error);
  EXPECT_THROW(calibrate_tau(w, tiny_model(1), w.tasks(), {0.5}, std::vector<std::uint64_t>{}), Error);
}

TEST(SweepCsv, HeaderAndSentinelLabel) {
  const auto w = small_world();
  const auto csv = sweep_csv(calibrate_tau(w, tiny_model(2), w.tasks(), {0.5}, consecutive_seeds(1, 3)));
  EXPECT_EQ(csv.rfind("tau,mean_pass,std_pass,mean_messages\n", 0), 0u);
  EXPECT_NE(csv.find("\naccept_none,"), std::string::npos);
}

TEST(BudgetHistogram, EveryBinPresentAndCountsTasks) {
  WorldConfig wc;
  wc.n_tasks = 10;
  wc.n_skills = 12;
  wc.n_families = 3;
  const auto w = generate_world(wc);
  EmbedderConfig emb;
  emb.dimension = 32;
  const auto m = init_model(64, 8, 0.0, emb, 3);
  const AdmissionConfig adm{0.5, 6, false};
  const auto hist = budget_histogram(w, m, w.tasks(), adm);
  ASSERT_EQ(hist.size(), 7u);
  int total = 0;
  for (const auto& [b, c] : hist) total += c;
  EXPECT_EQ(total, 10);
  EXPECT_EQ(hist.at(0), 0);  // the top-scoring skill always normalizes to 1
  const auto sentinel = budget_histogram(w, m, w.tasks(), {0.5, 6, true});
  EXPECT_EQ(sentinel.at(0), 10);
  EXPECT_EQ(histogram_csv({{0, 1}, {1, 2}}), "b_t,count\n0,1\n1,2\n");
}

}  // namespace
}  // namespace skillctx
