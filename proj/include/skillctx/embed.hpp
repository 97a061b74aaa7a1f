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

#include <skillctx/io.hpp>
#include <skillctx/text.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace skillctx {

using EmbeddingVector = Eigen::VectorXd;

struct EmbedderConfig {
  int dimension = 256;
  int ngram_min = 3;
  int ngram_max = 5;
  std::uint64_t hash_seed = 0x5eedULL;

  void validate() const {
    if (dimension < 8) throw Error("EmbedderConfig: dimension must be >= 8");
    if (ngram_min < 1 || ngram_min > ngram_max) throw Error("EmbedderConfig: need 1 <= ngram_min <= ngram_max");
  }

  /// Stable identifier recorded next to artifacts that depend on embeddings.
  std::uint64_t fingerprint() const {
    std::string key = std::to_string(dimension) + ":" + std::to_string(ngram_min) + ":" + std::to_string(ngram_max) +
                      ":" + std::to_string(hash_seed);
    return text::fnv1a64(key);
  }

  bool operator==(const EmbedderConfig&) const = default;
};

inline void to_json(json& j, const EmbedderConfig& c) {
  j = json{{"dimension", c.dimension}, {"ngram_min", c.ngram_min}, {"ngram_max", c.ngram_max}, {"hash_seed", c.hash_seed}};
}

inline void from_json(const json& j, EmbedderConfig& c) {
  EmbedderConfig d;
  c.dimension = j.value("dimension", d.dimension);
  c.ngram_min = j.value("ngram_min", d.ngram_min);
  c.ngram_max = j.value("ngram_max", d.ngram_max);
  c.hash_seed = j.value("hash_seed", d.hash_seed);
  c.validate();
}

namespace detail {

// Lowercase, map every non-alphanumeric byte to a single space and pad with
// one boundary space on each side.
inline std::string embed_normal_form(std::string_view s) {
  std::string out = " ";
  for (unsigned char c : s) {
    if (text::is_word_char(c)) {
      out.push_back(static_cast<char>(std::tolower(c)));
    } else if (out.back() != ' ') {
      out.push_back(' ');
    }
  }
  if (out.back() != ' ') out.push_back(' ');
  return out;
}

}  // namespace detail

/// Signed feature-hashed bag of character n-grams, L2-normalized.
/// Empty (or all-separator) text embeds to the zero vector.
inline EmbeddingVector embed(std::string_view input, const EmbedderConfig& cfg = {}) {
  cfg.validate();
  EmbeddingVector v = EmbeddingVector::Zero(cfg.dimension);
  const std::string s = detail::embed_normal_form(input);
  if (s.size() <= 1) return v;
  const std::uint64_t seed_basis = mix64(cfg.hash_seed ^ text::kFnvOffset);
  for (int n = cfg.ngram_min; n <= cfg.ngram_max; ++n) {
    if (static_cast<std::size_t>(n) > s.size()) break;
    for (std::size_t i = 0; i + n <= s.size(); ++i) {
      std::string_view gram(s.data() + i, static_cast<std::size_t>(n));
      if (gram.find_first_not_of(' ') == std::string_view::npos) continue;
      std::uint64_t h = mix64(text::fnv1a64(gram, seed_basis));
      auto slot = static_cast<Eigen::Index>(h % static_cast<std::uint64_t>(cfg.dimension));
      v[slot] += (h >> 63) ? -1.0 : 1.0;
    }
  }
  double norm = v.norm();
  if (norm > 0.0) v /= norm;
  return v;
}

inline EmbeddingVector normalize(const EmbeddingVector& v) {
  double n = v.norm();
  return n > 0.0 ? EmbeddingVector(v / n) : v;
}

/// Cosine similarity; 0 when either side is the zero vector.
inline double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.size() != b.size()) {
    throw Error("cosine: dimension mismatch (" + std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
  }
  double na = a.norm();
  double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

/// Text used whenever a whole skill is embedded (library construction, dense
/// retrieval).
inline std::string skill_text(const Skill& s) { return s.name + "\n" + s.description + "\n" + s.body; }

/// Row-per-item embedding matrix.
inline Eigen::MatrixXd embed_rows(const std::vector<std::string>& texts, const EmbedderConfig& cfg) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(texts.size()), cfg.dimension);
  for (std::size_t i = 0; i < texts.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = embed(texts[i], cfg).transpose();
  return m;
}

}  // namespace skillctx
