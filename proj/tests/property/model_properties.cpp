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
// Invariants of the simulator, planner objective and admission rule.

#include "test_support.hpp"

#include <gtest/gtest.h>

namespace skillctx {
namespace {

using testing::random_scores;
using testing::random_vector;

// Random world with explicit effects so closed forms stay checkable.
World random_world(Rng& rng, std::size_t n_skills) {
  WorldConfig cfg;
  cfg.dispersion_kappa = rng.uniform(0.0, 0.05);
  cfg.overlap_omega = rng.uniform(0.0, 0.1);
  cfg.render_eta = rng.uniform();
  SkillLibrary lib;
  for (std::size_t i = 0; i < n_skills; ++i) {
    const std::string id = "s" + std::to_string(i);
    lib.add(testing::effect_skill(id, "skill " + id, {{"t1", rng.uniform(-0.2, 0.3)}}, rng.uniform(0.0, 3.0),
                                  "g" + std::to_string(rng.index(3))));
  }
  return World({testing::make_task("t1", rng.uniform(0.2, 0.8), 15.0)}, lib, cfg);
}

RenderedContext fully_covered(const World& w, const std::vector<std::string>& ids) {
  auto ctx = plain_context(w.library(), ids);
  ctx.rendered = ids.size() > 1;
  for (auto& e : ctx.entries) {
    for (const auto& id : ids) {
      if (id != e.skill_id) e.scope_targets.push_back(id);
    }
  }
  return ctx;
}

TEST(SimProperty, ProbabilityInUnitInterval) {
  for (int trial = 0; trial < 300; ++trial) {
    Rng rng(static_cast<std::uint64_t>(trial));
    const auto w = random_world(rng, 1 + rng.index(10));
    std::vector<std::string> ids;
    for (const auto& s : w.library().skills()) {
      if (rng.bernoulli(0.6)) ids.push_back(s.id);
    }
    const double p = pass_probability(w, w.task("t1"), plain_context(w.library(), ids));
    ASSERT_GE(p, 0.0) << "seed " << trial;
    ASSERT_LE(p, 1.0) << "seed " << trial;
  }
}

TEST(SimProperty, CoverageNeverHurts) {
  for (int trial = 0; trial < 300; ++trial) {
    Rng rng(500 + static_cast<std::uint64_t>(trial));
    const auto w = random_world(rng, 2 + rng.index(8));
    const auto ids = w.library().ids();
    const auto& t = w.task("t1");
    ASSERT_GE(pass_probability(w, t, fully_covered(w, ids)), pass_probability(w, t, plain_context(w.library(), ids)))
        << "seed " << trial;
    ASSERT_LE(expected_messages(w, t, fully_covered(w, ids)), expected_messages(w, t, plain_context(w.library(), ids)))
        << "seed " << trial;
  }
}

TEST(SimProperty, RenderingPreservesBodiesAndNeverHurts) {
  const auto student = make_rule_student();
  for (int trial = 0; trial < 50; ++trial) {
    Rng rng(900 + static_cast<std::uint64_t>(trial));
    WorldConfig cfg;
    cfg.n_tasks = 6;
    cfg.n_skills = 12;
    cfg.n_families = 2;
    cfg.seed = static_cast<std::uint64_t>(trial);
    const auto w = generate_world(cfg);
    std::vector<std::string> ids;
    for (const auto& s : w.library().skills()) {
      if (rng.bernoulli(0.5)) ids.push_back(s.id);
    }
    for (const auto& t : w.tasks()) {
      const auto rendered = render(t, w.library(), ids, student);
      const auto plain = plain_context(w.library(), ids);
      ASSERT_EQ(rendered.size(), plain.size());
      for (std::size_t i = 0; i < plain.size(); ++i) ASSERT_EQ(rendered.entries[i].body, plain.entries[i].body);
      ASSERT_GE(pass_probability(w, t, rendered), pass_probability(w, t, plain)) << "seed " << trial << " " << t.id;
    }
  }
}

TEST(SimProperty, SingletonRenderIsIdentity) {
  const auto student = make_rule_student();
  for (int trial = 0; trial < 100; ++trial) {
    Rng rng(1300 + static_cast<std::uint64_t>(trial));
    const auto lib = testing::random_library(rng, 1 + rng.index(6));
    const auto id = lib[rng.index(lib.size())].id;
    ASSERT_EQ(render(testing::make_task("t", 0.5), lib, {id}, student), plain_context(lib, {id})) << "seed " << trial;
  }
}

TEST(SimProperty, CommonRandomNumbersMonotone) {
  for (int trial = 0; trial < 100; ++trial) {
    Rng rng(1600 + static_cast<std::uint64_t>(trial));
    const auto w = random_world(rng, 4);
    const auto& t = w.task("t1");
    const auto a = plain_context(w.library(), {"s0"});
    const auto b = plain_context(w.library(), {"s1", "s2"});
    const bool a_higher = pass_probability(w, t, a) >= pass_probability(w, t, b);
    for (std::uint64_t s = 0; s < 50; ++s) {
      const int ra = rollout(w, t, a, s).reward;
      const int rb = rollout(w, t, b, s).reward;
      ASSERT_TRUE(a_higher ? ra >= rb : rb >= ra) << "seed " << trial << " rollout " << s;
    }
  }
}

TEST(LabelProperty, PairingReducesVariance) {
  // Paired label estimates scatter less around the oracle than independent ones.
  WorldConfig cfg;
  cfg.n_tasks = 6;
  cfg.n_skills = 8;
  cfg.n_families = 2;
  const auto w = generate_world(cfg);
  double paired_se = 0.0, indep_se = 0.0;
  for (std::uint64_t rep = 0; rep < 20; ++rep) {
    const auto p = label_library(w, 20, rep, {true, 1});
    const auto q = label_library(w, 20, rep, {false, 1});
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double truth = oracle_delta(w, w.task(p[i].task_id), w.library().at(p[i].skill_id));
      paired_se += (p[i].delta - truth) * (p[i].delta - truth);
      indep_se += (q[i].delta - truth) * (q[i].delta - truth);
    }
  }
  EXPECT_LT(paired_se, indep_se);
}

TEST(PlannerProperty, SoftmaxShiftInvariant) {
  for (int trial = 0; trial < 200; ++trial) {
    Rng rng(2000 + static_cast<std::uint64_t>(trial));
    const auto v = random_vector(rng, 1 + static_cast<Eigen::Index>(rng.index(12)), -5, 5);
    const double c = rng.uniform(-100, 100);
    const double temp = rng.uniform(0.1, 2.0);
    const auto a = softmax(v, temp);
    const auto b = softmax((v.array() + c).matrix(), temp);
    ASSERT_NEAR((a - b).cwiseAbs().maxCoeff(), 0.0, 1e-12) << "seed " << trial;
    ASSERT_NEAR(a.sum(), 1.0, 1e-12) << "seed " << trial;
    ASSERT_NEAR(align_loss((v.array() + c).matrix(), a, temp), 0.0, 1e-9) << "seed " << trial;
  }
}

TEST(PlannerProperty, PrefLossAntisymmetry) {
  // softplus(x) - softplus(-x) = x for x = o(neg) - o(pos).
  for (int trial = 0; trial < 300; ++trial) {
    Rng rng(2500 + static_cast<std::uint64_t>(trial));
    const double p = rng.uniform(0.01, 0.99);
    const double q = rng.uniform(0.01, 0.99);
    ASSERT_NEAR(pref_loss(p, q) - pref_loss(q, p), log_odds(q) - log_odds(p), 1e-10) << "seed " << trial;
    ASSERT_GT(pref_loss(p, q), 0.0);
  }
}

TEST(PlannerProperty, GradientMatchesFiniteDifferenceOnRandomModels) {
  for (int trial = 0; trial < 10; ++trial) {
    Rng rng(3000 + static_cast<std::uint64_t>(trial));
    const int in = 3 + static_cast<int>(rng.index(5));
    const int hidden = 2 + static_cast<int>(rng.index(5));
    auto m = init_model(in, hidden, 0.0, {}, static_cast<std::uint64_t>(trial));
    const int rows = 3 + static_cast<int>(rng.index(5));
    TrainingTask t;
    t.x = Eigen::MatrixXd(rows, in);
    for (int r = 0; r < rows; ++r) t.x.row(r) = random_vector(rng, in).transpose();
    std::vector<double> y;
    for (int r = 0; r < rows; ++r) y.push_back(rng.uniform());
    t.q = benefit_distribution(y, 0.5);
    t.pairs = {{0, 1}, {static_cast<std::size_t>(rows - 1), 1}};
    PlannerTrainConfig cfg;
    cfg.lambda_pref = rng.uniform(0.0, 1.0);
    PlannerGrad g;
    batch_objective(m, {&t}, cfg, &g);
    std::vector<std::size_t> sizes, gsizes;
    auto params = parameter_blocks(m, sizes);
    auto grads = parameter_blocks(g, gsizes);
    const double h = 1e-5;
    for (std::size_t b = 0; b < params.size(); ++b) {
      for (std::size_t i = 0; i < sizes[b]; ++i) {
        const double keep = params[b][i];
        params[b][i] = keep + h;
        const double up = batch_objective(m, {&t}, cfg, nullptr);
        params[b][i] = keep - h;
        const double dn = batch_objective(m, {&t}, cfg, nullptr);
        params[b][i] = keep;
        const double fd = (up - dn) / (2 * h);
        ASSERT_NEAR(grads[b][i], fd, 1e-6 + 1e-4 * std::abs(fd)) << "seed " << trial << " block " << b << " i " << i;
      }
    }
  }
}

TEST(AdmissionProperty, NormalizeIsAffineInvariant) {
  for (int trial = 0; trial < 200; ++trial) {
    Rng rng(4000 + static_cast<std::uint64_t>(trial));
    const auto s = random_scores(rng, 1 + rng.index(15));
    const double scale = rng.uniform(0.1, 10.0);
    const double shift = rng.uniform(-5.0, 5.0);
    std::map<std::string, double> t;
    for (const auto& [id, v] : s) t[id] = scale * v + shift;
    const auto a = normalize_scores(s);
    const auto b = normalize_scores(t);
    for (const auto& [id, v] : a) {
      ASSERT_NEAR(v, b.at(id), 1e-9) << "seed " << trial;
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
    }
  }
}

TEST(AdmissionProperty, SubsetCapAndMonotoneInTau) {
  for (int trial = 0; trial < 200; ++trial) {
    Rng rng(4500 + static_cast<std::uint64_t>(trial));
    const auto n = normalize_scores(random_scores(rng, 1 + rng.index(20)));
    const int b_max = 1 + static_cast<int>(rng.index(10));
    const double t1 = rng.uniform();
    const double t2 = rng.uniform(t1, 1.0);
    const auto lo = admit(n, {t1, b_max, false});
    const auto hi = admit(n, {t2, b_max, false});
    ASSERT_LE(lo.size(), static_cast<std::size_t>(b_max)) << "seed " << trial;
    ASSERT_LE(hi.size(), lo.size()) << "seed " << trial;
    ASSERT_FALSE(lo.empty()) << "seed " << trial;  // the maximum normalizes to 1
    for (const auto& id : lo) {
      ASSERT_TRUE(n.count(id));
      ASSERT_GE(n.at(id), t1);
    }
    // Raising tau keeps a prefix of the ranked admission.
    ASSERT_TRUE(std::equal(hi.begin(), hi.end(), lo.begin())) << "seed " << trial;
    for (std::size_t i = 1; i < lo.size(); ++i) ASSERT_GE(n.at(lo[i - 1]), n.at(lo[i]));
  }
}

TEST(AdmissionProperty, BmaxMonotone) {
  for (int trial = 0; trial < 100; ++trial) {
    Rng rng(5000 + static_cast<std::uint64_t>(trial));
    const auto n = normalize_scores(random_scores(rng, 2 + rng.index(20)));
    const double tau = rng.uniform();
    const auto small = admit(n, {tau, 2, false});
    const auto large = admit(n, {tau, 8, false});
    ASSERT_TRUE(std::equal(small.begin(), small.end(), large.begin())) << "seed " << trial;
  }
}

}  // namespace
}  // namespace skillctx
