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
// Invariants of retrieval, selectors and the rule student.

#include "test_support.hpp"

#include <gtest/gtest.h>

namespace skillctx {
namespace {

using testing::random_library;
using testing::random_sentence;

SkillLibrary shuffled(const SkillLibrary& lib, Rng& rng) {
  auto skills = lib.skills();
  rng.shuffle(skills);
  return SkillLibrary(std::move(skills));
}

TEST(RetrievalProperty, LibraryOrderDoesNotMatter) {
  for (int trial = 0; trial < 100; ++trial) {
    Rng rng(static_cast<std::uint64_t>(trial));
    const auto lib = random_library(rng, 1 + rng.index(12));
    const auto other = shuffled(lib, rng);
    const std::string q = random_sentence(rng, 1 + rng.index(5));
    const std::size_t k = 1 + rng.index(lib.size());

    const auto a = Bm25Index(lib).scores(q);
    const auto b = Bm25Index(other).scores(q);
    for (std::size_t i = 0; i < lib.size(); ++i) {
      ASSERT_NEAR(a[i], b[other.index_of(lib[i].id)], 1e-9) << "seed " << trial;
    }
    ASSERT_EQ(bm25_rank(q, lib, k), bm25_rank(q, other, k)) << "seed " << trial;
    ASSERT_EQ(dense_rank(q, lib, k), dense_rank(q, other, k)) << "seed " << trial;
  }
}

TEST(RetrievalProperty, Bm25ScoresNonNegativeAndZeroWithoutOverlap) {
  for (int trial = 0; trial < 100; ++trial) {
    Rng rng(500 + static_cast<std::uint64_t>(trial));
    const auto lib = random_library(rng, 1 + rng.index(12));
    const auto s = Bm25Index(lib).scores(random_sentence(rng, 4));
    for (double v : s) ASSERT_GE(v, 0.0) << "seed " << trial;
    // Digits never occur in generated words.
    for (double v : Bm25Index(lib).scores("0000 1111")) ASSERT_EQ(v, 0.0) << "seed " << trial;
  }
}

TEST(SelectorProperty, OutputsAreDistinctLibraryIdsWithinK) {
  EmbedderConfig emb;
  emb.dimension = 32;
  const auto model = init_model(64, 8, 0.0, emb, 3);
  const std::vector<SelectorKind> kinds{SelectorKind::none,  SelectorKind::random,     SelectorKind::full,
                                        SelectorKind::bm25,  SelectorKind::dense,      SelectorKind::fixed_topk,
                                        SelectorKind::global_topk, SelectorKind::planner_adaptive};
  for (int trial = 0; trial < 40; ++trial) {
    Rng rng(1000 + static_cast<std::uint64_t>(trial));
    const auto lib = random_library(rng, 1 + rng.index(12));
    const auto task = testing::make_task("t", 0.5, 10.0, random_sentence(rng, 4));
    SelectionContext ctx(lib);
    ctx.model = &model;
    ctx.global_order = global_ranking(model, {task}, lib);
    ctx.admission = {rng.uniform(), 1 + static_cast<int>(rng.index(6)), false};
    for (const auto kind : kinds) {
      SelectorSpec spec{kind};
      spec.k = 1 + static_cast<int>(rng.index(8));
      spec.seed = trial;
      const auto ids = select(spec, task, ctx);
      ASSERT_EQ(std::set<std::string>(ids.begin(), ids.end()).size(), ids.size()) << "seed " << trial;
      for (const auto& id : ids) ASSERT_TRUE(lib.contains(id)) << "seed " << trial;
      std::size_t cap = lib.size();
      if (kind == SelectorKind::none) cap = 0;
      if (kind == SelectorKind::random) cap = 1;
      if (kind == SelectorKind::bm25 || kind == SelectorKind::dense || kind == SelectorKind::fixed_topk ||
          kind == SelectorKind::global_topk) {
        cap = std::min(cap, static_cast<std::size_t>(*spec.k));
        ASSERT_EQ(ids.size(), cap) << "seed " << trial << " " << spec.label();
      }
      if (kind == SelectorKind::planner_adaptive) cap = std::min(cap, static_cast<std::size_t>(ctx.admission.b_max));
      ASSERT_LE(ids.size(), cap) << "seed " << trial << " " << spec.label();
    }
  }
}

TEST(SelectorProperty, FixedTopkIsNested) {
  EmbedderConfig emb;
  emb.dimension = 32;
  const auto model = init_model(64, 8, 0.0, emb, 4);
  for (int trial = 0; trial < 40; ++trial) {
    Rng rng(1500 + static_cast<std::uint64_t>(trial));
    const auto lib = random_library(rng, 2 + rng.index(12));
    const auto task = testing::make_task("t", 0.5, 10.0, random_sentence(rng, 4));
    SelectionContext ctx(lib);
    ctx.model = &model;
    const auto small = select({SelectorKind::fixed_topk, "", 1}, task, ctx);
    const auto large = select({SelectorKind::fixed_topk, "", static_cast<int>(lib.size())}, task, ctx);
    ASSERT_TRUE(std::equal(small.begin(), small.end(), large.begin())) << "seed " << trial;
  }
}

TEST(StudentProperty, ScopeTargetsAreOverlappingCoSelectedNeighbors) {
  const auto student = make_rule_student();
  std::size_t named = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Rng rng(2000 + static_cast<std::uint64_t>(trial));
    const auto lib = random_library(rng, 2 + rng.index(8));
    std::vector<std::string> ids;
    for (const auto& s : lib.skills()) {
      if (rng.bernoulli(0.7)) ids.push_back(s.id);
    }
    const auto ctx = render(testing::make_task("t", 0.5, 10.0, random_sentence(rng, 3)), lib, ids, student);
    const std::set<std::string> chosen(ids.begin(), ids.end());
    for (const auto& e : ctx.entries) {
      ASSERT_EQ(e.body, lib.at(e.skill_id).body) << "seed " << trial;
      const auto mine = top_keywords(lib.at(e.skill_id).description);
      const std::set<std::string> my_words(mine.begin(), mine.end());
      for (const auto& target : e.scope_targets) {
        ASSERT_NE(target, e.skill_id) << "seed " << trial;
        ASSERT_TRUE(chosen.count(target)) << "seed " << trial;
        bool shared = false;
        for (const auto& w : top_keywords(lib.at(target).description)) shared = shared || my_words.count(w) > 0;
        ASSERT_TRUE(shared) << "seed " << trial << " " << e.skill_id << " names " << target;
        ++named;
      }
    }
  }
  EXPECT_GT(named, 0u);  // the generator must exercise the clause at all
}

TEST(StudentProperty, ClauseRoundTrip) {
  for (int trial = 0; trial < 100; ++trial) {
    Rng rng(2500 + static_cast<std::uint64_t>(trial));
    std::vector<std::string> names;
    for (std::size_t i = 0, n = rng.index(6); i < n; ++i) names.push_back(testing::random_word(rng));
    if (names.empty()) continue;
    const auto clause = scope_clause(names);
    auto sorted = names;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    ASSERT_EQ(parse_scope_clause(clause), sorted) << "seed " << trial;
    ASSERT_EQ(scope_clause(parse_scope_clause(clause)), clause) << "seed " << trial;
  }
}

}  // namespace
}  // namespace skillctx
