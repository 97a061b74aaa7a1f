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
// Invariants of embedding, text canonicalization and the librarian, checked
// over seeded random inputs. Every failure message names the trial seed.

#include "test_support.hpp"

#include <gtest/gtest.h>

namespace skillctx {
namespace {

using testing::random_library;
using testing::random_sentence;
using testing::random_text;
using testing::random_vector;

constexpr int kTrials = 200;

TEST(CosineProperty, SymmetricAndBounded) {
  for (int trial = 0; trial < kTrials; ++trial) {
    Rng rng(static_cast<std::uint64_t>(trial));
    const auto a = random_vector(rng, 12);
    const auto b = random_vector(rng, 12);
    const double ab = cosine(a, b);
    ASSERT_DOUBLE_EQ(ab, cosine(b, a)) << "seed " << trial;
    ASSERT_LE(std::abs(ab), 1.0 + 1e-12) << "seed " << trial;
  }
}

TEST(CosineProperty, PositiveScaleInvariant) {
  for (int trial = 0; trial < kTrials; ++trial) {
    Rng rng(1000 + static_cast<std::uint64_t>(trial));
    const auto a = random_vector(rng, 9);
    const auto b = random_vector(rng, 9);
    const double s = rng.uniform(0.01, 50.0);
    ASSERT_NEAR(cosine(a * s, b), cosine(a, b), 1e-12) << "seed " << trial;
    ASSERT_NEAR(cosine(-a, b), -cosine(a, b), 1e-12) << "seed " << trial;
  }
}

TEST(EmbedProperty, DeterministicUnitOrZero) {
  for (int trial = 0; trial < kTrials; ++trial) {
    Rng rng(2000 + static_cast<std::uint64_t>(trial));
    const std::string s = random_text(rng, 0, 40);
    const auto v = embed(s);
    ASSERT_EQ(v, embed(s)) << "seed " << trial;
    const double n = v.norm();
    ASSERT_TRUE(n == 0.0 || std::abs(n - 1.0) < 1e-9) << "seed " << trial << " text '" << s << "'";
  }
}

TEST(EmbedProperty, CaseAndPunctuationInsensitive) {
  for (int trial = 0; trial < kTrials; ++trial) {
    Rng rng(3000 + static_cast<std::uint64_t>(trial));
    const std::string s = random_sentence(rng, 1 + rng.index(6));
    std::string shouted = s;
    for (auto& c : shouted) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    std::string punct = s;
    for (auto& c : punct) {
      if (c == ' ') c = rng.bernoulli(0.5) ? ',' : '-';
    }
    ASSERT_EQ(embed(s), embed(shouted)) << "seed " << trial;
    ASSERT_EQ(embed(s), embed(punct)) << "seed " << trial;
  }
}

TEST(EmbedProperty, SingleEditStaysClose) {
  // Locality: appending one character to a long string keeps cosine high.
  for (int trial = 0; trial < kTrials; ++trial) {
    Rng rng(4000 + static_cast<std::uint64_t>(trial));
    const std::string s = random_sentence(rng, 8 + rng.index(6));
    const std::string edited = s + static_cast<char>('a' + rng.index(26));
    ASSERT_GT(cosine(embed(s), embed(edited)), 0.8) << "seed " << trial << " '" << s << "'";
  }
}

TEST(CanonicalBodyProperty, IdempotentAndWhitespaceBlind) {
  for (int trial = 0; trial < kTrials; ++trial) {
    Rng rng(5000 + static_cast<std::uint64_t>(trial));
    std::string body;
    const std::size_t lines = 1 + rng.index(5);
    for (std::size_t i = 0; i < lines; ++i) {
      body += random_sentence(rng, 1 + rng.index(5));
      body += std::string(rng.index(3), ' ');
      body += rng.bernoulli(0.5) ? "\r\n" : "\n";
    }
    const std::string once = text::canonicalize_body(body);
    ASSERT_EQ(text::canonicalize_body(once), once) << "seed " << trial;
    ASSERT_EQ(text::sha8(body), text::sha8(once)) << "seed " << trial;
  }
}

TEST(DedupProperty, IdempotentAndUniqueBodies) {
  for (int trial = 0; trial < 60; ++trial) {
    Rng rng(6000 + static_cast<std::uint64_t>(trial));
    std::vector<Skill> skills;
    const std::size_t n = 1 + rng.index(20);
    for (std::size_t i = 0; i < n; ++i) {
      // Small body vocabulary forces collisions.
      skills.push_back(testing::make_skill("s" + std::to_string(i), "d", "body " + std::to_string(rng.index(6)),
                                           {"t" + std::to_string(rng.index(4))}));
    }
    const auto once = dedup_exact(skills);
    ASSERT_EQ(dedup_exact(once), once) << "seed " << trial;
    std::set<std::string> hashes;
    for (const auto& s : once.skills()) ASSERT_TRUE(hashes.insert(text::sha8(s.body)).second) << "seed " << trial;
    std::set<std::string> in_sources, out_sources;
    for (const auto& s : skills) in_sources.insert(s.sources.begin(), s.sources.end());
    for (const auto& s : once.skills()) out_sources.insert(s.sources.begin(), s.sources.end());
    ASSERT_EQ(in_sources, out_sources) << "seed " << trial;
  }
}

TEST(ClusterLadderProperty, ShrinksAndKeepsProvenance) {
  for (int trial = 0; trial < 40; ++trial) {
    Rng rng(7000 + static_cast<std::uint64_t>(trial));
    const auto lib = random_library(rng, 2 + rng.index(14));
    const auto out = cluster_ladder(lib, {});
    ASSERT_LE(out.size(), lib.size()) << "seed " << trial;
    ASSERT_GE(out.size(), 1u) << "seed " << trial;
    std::set<std::string> in_sources, out_sources;
    for (const auto& s : lib.skills()) in_sources.insert(s.sources.begin(), s.sources.end());
    for (const auto& s : out.skills()) {
      ASSERT_TRUE(lib.contains(s.id)) << "seed " << trial;
      ASSERT_EQ(s.body, lib.at(s.id).body) << "seed " << trial;
      out_sources.insert(s.sources.begin(), s.sources.end());
    }
    ASSERT_EQ(in_sources, out_sources) << "seed " << trial;
    ASSERT_EQ(cluster_ladder(out, {}).size(), out.size()) << "seed " << trial;
  }
}

TEST(ClusterLadderProperty, LowerThresholdsNeverKeepMore) {
  for (int trial = 0; trial < 40; ++trial) {
    Rng rng(8000 + static_cast<std::uint64_t>(trial));
    const auto lib = random_library(rng, 2 + rng.index(14));
    ClusterLadderConfig strict, loose;
    strict.thresholds = {0.95};
    loose.thresholds = {0.95, 0.7};
    ASSERT_LE(cluster_ladder(lib, loose).size(), cluster_ladder(lib, strict).size()) << "seed " << trial;
  }
}

TEST(MmrProperty, PermutationPrefixAndLambdaOne) {
  for (int trial = 0; trial < 40; ++trial) {
    Rng rng(9000 + static_cast<std::uint64_t>(trial));
    const auto lib = random_library(rng, 2 + rng.index(10));
    const std::string q = random_sentence(rng, 3);
    const double lambda = rng.uniform();
    const auto all = mmr_rank(lib, q, lib.size(), lambda, {}, 0.0);
    ASSERT_EQ(std::set<std::string>(all.begin(), all.end()).size(), lib.size()) << "seed " << trial;
    const std::size_t k = 1 + rng.index(lib.size());
    const auto head = mmr_rank(lib, q, k, lambda, {}, 0.0);
    ASSERT_TRUE(std::equal(head.begin(), head.end(), all.begin())) << "seed " << trial;

    // lambda = 1: plain relevance sort, ties to the smaller id.
    std::vector<std::pair<double, std::string>> rel;
    for (const auto& s : lib.skills()) rel.emplace_back(-cosine(embed(q), embed(skill_text(s))), s.id);
    std::sort(rel.begin(), rel.end());
    const auto pure = mmr_rank(lib, q, lib.size(), 1.0, {}, 0.0);
    for (std::size_t i = 0; i < rel.size(); ++i) ASSERT_EQ(pure[i], rel[i].second) << "seed " << trial << " pos " << i;
  }
}

TEST(BudgetGateProperty, FitsBudgetAndFloor) {
  for (int trial = 0; trial < 60; ++trial) {
    Rng rng(10000 + static_cast<std::uint64_t>(trial));
    const auto lib = random_library(rng, 3 + rng.index(15));
    long total = 0;
    for (const auto& s : lib.skills()) total += whitespace_token_count(injection_text(s));
    ClusterLadderConfig cfg;
    cfg.min_per_group = static_cast<int>(rng.index(3));
    cfg.token_budget = static_cast<long>(rng.uniform(0.2, 1.2) * static_cast<double>(total));
    SkillLibrary out;
    try {
      out = budget_gate(lib, cfg);
    } catch (const InfeasibleBudget&) {
      continue;  // the floor alone exceeds the budget
    }
    long kept = 0;
    std::map<std::string, int> in_fam, out_fam;
    for (const auto& s : lib.skills()) ++in_fam[s.family];
    for (const auto& s : out.skills()) {
      kept += whitespace_token_count(injection_text(s));
      ++out_fam[s.family];
    }
    ASSERT_LE(kept, cfg.token_budget) << "seed " << trial;
    for (const auto& [fam, n] : in_fam) {
      ASSERT_GE(out_fam[fam], std::min(n, cfg.min_per_group)) << "seed " << trial << " family " << fam;
    }
    if (total <= cfg.token_budget) ASSERT_EQ(out, lib) << "seed " << trial;
  }
}

}  // namespace
}  // namespace skillctx
