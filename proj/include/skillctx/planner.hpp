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
#include <skillctx/io.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <set>

namespace skillctx {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct PlannerTrainConfig {
  double beta = 0.5;          // temperature on labels
  double gamma = 0.5;         // temperature on predicted logits
  double lambda_pref = 0.3;
  double align_weight = 1.0;  // 0 disables the alignment term
  double lr = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int epochs = 150;
  int tasks_per_step = 4;
  int hard_neg_k = 5;
  double pair_margin = 0.05;
  int hidden = 128;
  double dropout = 0.1;
  std::uint64_t seed = 300;

  void validate() const {
    if (!(beta > 0.0) || !(gamma > 0.0)) throw Error("PlannerTrainConfig: beta and gamma must be > 0");
    if (lambda_pref < 0.0 || align_weight < 0.0) throw Error("PlannerTrainConfig: loss weights must be >= 0");
    if (!(lr > 0.0)) throw Error("PlannerTrainConfig: lr must be > 0");
    if (epochs < 0 || tasks_per_step < 1 || hard_neg_k < 0 || hidden < 1) {
      throw Error("PlannerTrainConfig: epochs >= 0, tasks_per_step >= 1, hard_neg_k >= 0, hidden >= 1 required");
    }
    if (pair_margin < 0.0) throw Error("PlannerTrainConfig: pair_margin must be >= 0");
    if (dropout < 0.0 || dropout >= 1.0) throw Error("PlannerTrainConfig: dropout must lie in [0, 1)");
  }
};

inline void to_json(json& j, const PlannerTrainConfig& c) {
  j = json{{"beta", c.beta},
           {"gamma", c.gamma},
           {"lambda_pref", c.lambda_pref},
           {"align_weight", c.align_weight},
           {"lr", c.lr},
           {"adam_beta1", c.adam_beta1},
           {"adam_beta2", c.adam_beta2},
           {"adam_eps", c.adam_eps},
           {"epochs", c.epochs},
           {"tasks_per_step", c.tasks_per_step},
           {"hard_neg_k", c.hard_neg_k},
           {"pair_margin", c.pair_margin},
           {"hidden", c.hidden},
           {"dropout", c.dropout},
           {"seed", c.seed}};
}

inline void from_json(const json& j, PlannerTrainConfig& c) {
  PlannerTrainConfig d;
#define SKILLCTX_FIELD(name) c.name = j.value(#name, d.name)
  SKILLCTX_FIELD(beta);
  SKILLCTX_FIELD(gamma);
  SKILLCTX_FIELD(lambda_pref);
  SKILLCTX_FIELD(align_weight);
  SKILLCTX_FIELD(lr);
  SKILLCTX_FIELD(adam_beta1);
  SKILLCTX_FIELD(adam_beta2);
  SKILLCTX_FIELD(adam_eps);
  SKILLCTX_FIELD(epochs);
  SKILLCTX_FIELD(tasks_per_step);
  SKILLCTX_FIELD(hard_neg_k);
  SKILLCTX_FIELD(pair_margin);
  SKILLCTX_FIELD(hidden);
  SKILLCTX_FIELD(dropout);
  SKILLCTX_FIELD(seed);
#undef SKILLCTX_FIELD
  c.validate();
}

// ---------------------------------------------------------------------------
// Loss primitives
// ---------------------------------------------------------------------------

inline constexpr double kProbEps = 1e-7;

/// Numerically stable softmax of v / temperature.
inline Eigen::VectorXd softmax(const Eigen::VectorXd& v, double temperature) {
  if (v.size() == 0) throw Error("softmax: empty input");
  Eigen::VectorXd z = v / temperature;
  z.array() -= z.maxCoeff();
  z = z.array().exp();
  return z / z.sum();
}

/// Target distribution over a task's candidates: softmax(y / beta).
inline Eigen::VectorXd benefit_distribution(const std::vector<double>& y, double beta) {
  if (y.empty()) throw Error("benefit_distribution: no labels");
  if (!(beta > 0.0)) throw Error("benefit_distribution: beta must be > 0");
  return softmax(Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size())), beta);
}

inline Eigen::VectorXd benefit_distribution(const std::vector<UtilityLabel>& labels, double beta) {
  std::vector<double> y;
  y.reserve(labels.size());
  for (const auto& l : labels) y.push_back(l.y);
  return benefit_distribution(y, beta);
}

/// KL(q || p) in nats; terms with q_i = 0 contribute nothing.
inline double kl_divergence(const Eigen::VectorXd& q, const Eigen::VectorXd& p) {
  if (q.size() != p.size()) throw Error("kl_divergence: length mismatch");
  double kl = 0.0;
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    if (q[i] > 0.0) kl += q[i] * (std::log(q[i]) - std::log(std::max(p[i], 1e-300)));
  }
  return std::max(0.0, kl);
}

/// KL(q || softmax(logits / gamma)).
inline double align_loss(const Eigen::VectorXd& logits, const Eigen::VectorXd& q, double gamma) {
  if (logits.size() != q.size()) {
    throw Error("align_loss: " + std::to_string(logits.size()) + " logits vs " + std::to_string(q.size()) + " targets");
  }
  if (!(gamma > 0.0)) throw Error("align_loss: gamma must be > 0");
  // log p computed via log-sum-exp for accuracy at extreme logits.
  Eigen::VectorXd z = logits / gamma;
  const double zmax = z.maxCoeff();
  const double lse = zmax + std::log((z.array() - zmax).exp().sum());
  double kl = 0.0;
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    if (q[i] > 0.0) kl += q[i] * (std::log(q[i]) - (z[i] - lse));
  }
  return std::max(0.0, kl);
}

inline double clamp_prob(double p) { return std::clamp(p, kProbEps, 1.0 - kProbEps); }

inline double log_odds(double p) {
  p = clamp_prob(p);
  return std::log(p) - std::log1p(-p);
}

inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Odds-ratio preference loss log(1 + exp(o(neg) - o(pos))).
inline double pref_loss(double pos_prob, double neg_prob) { return softplus(log_odds(neg_prob) - log_odds(pos_prob)); }

// ---------------------------------------------------------------------------
// Hard-negative mining
// ---------------------------------------------------------------------------

struct PreferencePair {
  std::string pos;
  std::string neg;

  bool operator==(const PreferencePair&) const = default;
};

/// Positives are the top quarter of the task's candidates by y (at least
/// one, ties to the smaller id). Each positive is paired with up to
/// hard_neg_k candidates it beats by at least pair_margin, preferring those
/// whose descriptions are most similar to its own.
inline std::vector<PreferencePair> mine_pairs(const std::vector<UtilityLabel>& labels, const SkillLibrary& library,
                                              const PlannerTrainConfig& cfg, const EmbedderConfig& embedder = {}) {
  if (labels.empty()) return {};
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (labels[a].y != labels[b].y) return labels[a].y > labels[b].y;
    return labels[a].skill_id < labels[b].skill_id;
  });
  const std::size_t n_pos = (labels.size() + 3) / 4;

  std::vector<EmbeddingVector> emb(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) emb[i] = embed(library.at(labels[i].skill_id).description, embedder);

  std::vector<PreferencePair> pairs;
  for (std::size_t r = 0; r < n_pos; ++r) {
    const std::size_t p = order[r];
    struct Cand {
      double sim;
      std::size_t idx;
    };
    std::vector<Cand> cands;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (i == p) continue;
      const double gap = labels[p].y - labels[i].y;
      if (gap > 0.0 && gap >= cfg.pair_margin) cands.push_back({cosine(emb[p], emb[i]), i});
    }
    std::sort(cands.begin(), cands.end(), [&](const Cand& a, const Cand& b) {
      if (a.sim != b.sim) return a.sim > b.sim;
      return labels[a.idx].skill_id < labels[b.idx].skill_id;
    });
    const std::size_t take = std::min(cands.size(), static_cast<std::size_t>(cfg.hard_neg_k));
    for (std::size_t c = 0; c < take; ++c) pairs.push_back({labels[p].skill_id, labels[cands[c].idx].skill_id});
  }
  return pairs;
}

// ---------------------------------------------------------------------------
// Objective on one task's logits
// ---------------------------------------------------------------------------

struct IndexPair {
  std::size_t pos;
  std::size_t neg;
};

struct TaskObjective {
  double align = 0.0;
  double pref = 0.0;
  double total = 0.0;
  Eigen::VectorXd grad;  // d total / d logits
};

/// align_weight * KL(q || softmax(z / gamma)) + lambda * mean over pairs of
/// pref_loss, with its gradient in the logits.
inline TaskObjective task_objective(const Eigen::VectorXd& logits, const Eigen::VectorXd& q,
                                    const std::vector<IndexPair>& pairs, double gamma, double lambda_pref,
                                    double align_weight = 1.0) {
  const Eigen::Index n = logits.size();
  TaskObjective out;
  out.grad = Eigen::VectorXd::Zero(n);
  const Eigen::VectorXd p = softmax(logits, gamma);
  if (align_weight > 0.0) {
    out.align = align_loss(logits, q, gamma);
    out.grad += align_weight * (p - q) / gamma;
  }
  if (lambda_pref > 0.0 && !pairs.empty()) {
    // d o_i / d z_j = (delta_ij - p_j) / ((1 - p_i) gamma), zero where p_i is clamped.
    auto add_odds_grad = [&](std::size_t i, double w) {
      const double pi = p[static_cast<Eigen::Index>(i)];
      if (pi <= kProbEps || pi >= 1.0 - kProbEps) return;
      const double scale = w / ((1.0 - pi) * gamma);
      out.grad -= scale * p;
      out.grad[static_cast<Eigen::Index>(i)] += scale;
    };
    const double wpair = lambda_pref / static_cast<double>(pairs.size());
    double total = 0.0;
    for (const auto& pr : pairs) {
      const double diff = log_odds(p[static_cast<Eigen::Index>(pr.neg)]) - log_odds(p[static_cast<Eigen::Index>(pr.pos)]);
      total += softplus(diff);
      const double s = sigmoid(diff);
      add_odds_grad(pr.neg, wpair * s);
      add_odds_grad(pr.pos, -wpair * s);
    }
    out.pref = total / static_cast<double>(pairs.size());
  }
  out.total = align_weight * out.align + lambda_pref * out.pref;
  return out;
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

inline constexpr const char* kActivation = "silu";
inline constexpr int kWeightsVersion = 1;

inline double silu(double x) { return x * sigmoid(x); }

inline double silu_grad(double x) {
  const double s = sigmoid(x);
  return s * (1.0 + x * (1.0 - s));
}

/// Three affine layers: input -> hidden -> hidden -> 1, smooth activations
/// between them, dropout after each hidden activation during training.
struct PlannerModel {
  Eigen::MatrixXd w1, w2, w3;  // (out x in)
  Eigen::VectorXd b1, b2, b3;
  double dropout_rate = 0.1;
  EmbedderConfig embedder;

  int input_dim() const { return static_cast<int>(w1.cols()); }
  int hidden() const { return static_cast<int>(w1.rows()); }

  bool finite() const {
    return w1.allFinite() && w2.allFinite() && w3.allFinite() && b1.allFinite() && b2.allFinite() && b3.allFinite();
  }

  bool operator==(const PlannerModel& o) const {
    return w1 == o.w1 && w2 == o.w2 && w3 == o.w3 && b1 == o.b1 && b2 == o.b2 && b3 == o.b3 &&
           dropout_rate == o.dropout_rate && embedder == o.embedder;
  }
};

/// Uniform Glorot initialisation from a derived stream; biases start at 0.
inline PlannerModel init_model(int input_dim, int hidden, double dropout, const EmbedderConfig& embedder,
                               std::uint64_t seed) {
  if (input_dim < 1 || hidden < 1) throw Error("init_model: dimensions must be positive");
  Rng rng = derive_stream(seed, "planner:init");
  auto glorot = [&](int rows, int cols) {
    const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = rng.uniform(-a, a);
    }
    return m;
  };
  PlannerModel m;
  m.w1 = glorot(hidden, input_dim);
  m.w2 = glorot(hidden, hidden);
  m.w3 = glorot(1, hidden);
  m.b1 = Eigen::VectorXd::Zero(hidden);
  m.b2 = Eigen::VectorXd::Zero(hidden);
  m.b3 = Eigen::VectorXd::Zero(1);
  m.dropout_rate = dropout;
  m.embedder = embedder;
  return m;
}

/// Intermediate values kept for the backward pass. Rows are examples.
struct ForwardCache {
  Eigen::MatrixXd x, a1, h1, a2, h2;
  Eigen::MatrixXd mask1, mask2;  // inverted-dropout masks (empty when off)
  Eigen::VectorXd out;
};

inline Eigen::MatrixXd silu_of(const Eigen::MatrixXd& a) { return a.unaryExpr([](double v) { return silu(v); }); }

/// Batched forward pass. Dropout is applied only when `dropout_rng` is set.
inline ForwardCache forward(const PlannerModel& m, const Eigen::MatrixXd& x, Rng* dropout_rng = nullptr) {
  if (x.cols() != m.w1.cols()) {
    throw Error("planner forward: input has " + std::to_string(x.cols()) + " columns, model expects " +
                std::to_string(m.w1.cols()));
  }
  ForwardCache c;
  c.x = x;
  auto make_mask = [&](Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd mask(rows, cols);
    const double keep = 1.0 - m.dropout_rate;
    for (Eigen::Index j = 0; j < cols; ++j) {
      for (Eigen::Index i = 0; i < rows; ++i) mask(i, j) = dropout_rng->uniform() < keep ? 1.0 / keep : 0.0;
    }
    return mask;
  };
  const bool drop = dropout_rng != nullptr && m.dropout_rate > 0.0;
  c.a1 = (x * m.w1.transpose()).rowwise() + m.b1.transpose();
  c.h1 = silu_of(c.a1);
  if (drop) {
    c.mask1 = make_mask(c.h1.rows(), c.h1.cols());
    c.h1 = c.h1.cwiseProduct(c.mask1);
  }
  c.a2 = (c.h1 * m.w2.transpose()).rowwise() + m.b2.transpose();
  c.h2 = silu_of(c.a2);
  if (drop) {
    c.mask2 = make_mask(c.h2.rows(), c.h2.cols());
    c.h2 = c.h2.cwiseProduct(c.mask2);
  }
  c.out = (c.h2 * m.w3.transpose()).col(0).array() + m.b3[0];
  return c;
}

/// Parameter-shaped gradient container.
struct PlannerGrad {
  Eigen::MatrixXd w1, w2, w3;
  Eigen::VectorXd b1, b2, b3;

  static PlannerGrad zeros_like(const PlannerModel& m) {
    return {Eigen::MatrixXd::Zero(m.w1.rows(), m.w1.cols()), Eigen::MatrixXd::Zero(m.w2.rows(), m.w2.cols()),
            Eigen::MatrixXd::Zero(m.w3.rows(), m.w3.cols()), Eigen::VectorXd::Zero(m.b1.size()),
            Eigen::VectorXd::Zero(m.b2.size()), Eigen::VectorXd::Zero(m.b3.size())};
  }

  void add_scaled(const PlannerGrad& g, double s) {
    w1 += s * g.w1;
    w2 += s * g.w2;
    w3 += s * g.w3;
    b1 += s * g.b1;
    b2 += s * g.b2;
    b3 += s * g.b3;
  }
};

/// Backward pass given d loss / d outputs.
inline PlannerGrad backward(const PlannerModel& m, const ForwardCache& c, const Eigen::VectorXd& d_out) {
  PlannerGrad g;
  g.w3 = d_out.transpose() * c.h2;
  g.b3 = Eigen::VectorXd::Constant(1, d_out.sum());
  Eigen::MatrixXd d_h2 = d_out * m.w3;  // (n x hidden)
  if (c.mask2.size() > 0) d_h2 = d_h2.cwiseProduct(c.mask2);
  Eigen::MatrixXd d_a2 = d_h2.cwiseProduct(c.a2.unaryExpr([](double v) { return silu_grad(v); }));
  g.w2 = d_a2.transpose() * c.h1;
  g.b2 = d_a2.colwise().sum().transpose();
  Eigen::MatrixXd d_h1 = d_a2 * m.w2;
  if (c.mask1.size() > 0) d_h1 = d_h1.cwiseProduct(c.mask1);
  Eigen::MatrixXd d_a1 = d_h1.cwiseProduct(c.a1.unaryExpr([](double v) { return silu_grad(v); }));
  g.w1 = d_a1.transpose() * c.x;
  g.b1 = d_a1.colwise().sum().transpose();
  return g;
}

// Flat parameter views used by Adam, finite differences, and serialization.
inline std::vector<double*> parameter_blocks(PlannerModel& m, std::vector<std::size_t>& sizes) {
  sizes = {static_cast<std::size_t>(m.w1.size()), static_cast<std::size_t>(m.b1.size()),
           static_cast<std::size_t>(m.w2.size()), static_cast<std::size_t>(m.b2.size()),
           static_cast<std::size_t>(m.w3.size()), static_cast<std::size_t>(m.b3.size())};
  return {m.w1.data(), m.b1.data(), m.w2.data(), m.b2.data(), m.w3.data(), m.b3.data()};
}

inline std::vector<double*> parameter_blocks(PlannerGrad& g, std::vector<std::size_t>& sizes) {
  sizes = {static_cast<std::size_t>(g.w1.size()), static_cast<std::size_t>(g.b1.size()),
           static_cast<std::size_t>(g.w2.size()), static_cast<std::size_t>(g.b2.size()),
           static_cast<std::size_t>(g.w3.size()), static_cast<std::size_t>(g.b3.size())};
  return {g.w1.data(), g.b1.data(), g.w2.data(), g.b2.data(), g.w3.data(), g.b3.data()};
}

/// Input row for one (task, skill) pair: [embed(instruction); embed(description)].
inline Eigen::RowVectorXd pair_features(const EmbeddingVector& task_emb, const EmbeddingVector& skill_emb) {
  Eigen::RowVectorXd row(task_emb.size() + skill_emb.size());
  row << task_emb.transpose(), skill_emb.transpose();
  return row;
}

inline Eigen::MatrixXd task_features(const EmbeddingVector& task_emb, const Eigen::MatrixXd& skill_emb) {
  Eigen::MatrixXd x(skill_emb.rows(), task_emb.size() + skill_emb.cols());
  x.leftCols(task_emb.size()) = task_emb.transpose().replicate(skill_emb.rows(), 1);
  x.rightCols(skill_emb.cols()) = skill_emb;
  return x;
}

/// Description embeddings of a library, one row per skill.
inline Eigen::MatrixXd description_embeddings(const SkillLibrary& lib, const EmbedderConfig& embedder) {
  std::vector<std::string> texts;
  texts.reserve(lib.size());
  for (const auto& s : lib.skills()) texts.push_back(s.description);
  return embed_rows(texts, embedder);
}

inline double score(const PlannerModel& m, const Task& task, const Skill& skill) {
  Eigen::MatrixXd x = pair_features(embed(task.instruction, m.embedder), embed(skill.description, m.embedder));
  return forward(m, x).out[0];
}

/// Scores for every skill of `lib` against one task, in library order.
inline std::vector<double> score_library(const PlannerModel& m, const Task& task, const SkillLibrary& lib,
                                         const Eigen::MatrixXd& desc_emb) {
  if (static_cast<std::size_t>(desc_emb.rows()) != lib.size()) throw Error("score_library: embedding rows != library size");
  const Eigen::VectorXd out = forward(m, task_features(embed(task.instruction, m.embedder), desc_emb)).out;
  return {out.data(), out.data() + out.size()};
}

inline std::map<std::string, double> score_map(const PlannerModel& m, const Task& task, const SkillLibrary& lib,
                                               const Eigen::MatrixXd& desc_emb) {
  const auto s = score_library(m, task, lib, desc_emb);
  std::map<std::string, double> out;
  for (std::size_t i = 0; i < lib.size(); ++i) out[lib[i].id] = s[i];
  return out;
}

inline std::map<std::string, double> score_map(const PlannerModel& m, const Task& task, const SkillLibrary& lib) {
  return score_map(m, task, lib, description_embeddings(lib, m.embedder));
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// One task prepared for training: features, target distribution, mined
/// pairs as row indices.
struct TrainingTask {
  std::string task_id;
  Eigen::MatrixXd x;
  Eigen::VectorXd q;
  std::vector<IndexPair> pairs;
};

/// Mean objective over `batch` and its parameter gradient.
inline double batch_objective(const PlannerModel& m, const std::vector<const TrainingTask*>& batch,
                              const PlannerTrainConfig& cfg, PlannerGrad* grad, Rng* dropout_rng = nullptr) {
  if (grad) *grad = PlannerGrad::zeros_like(m);
  double total = 0.0;
  const double w = 1.0 / static_cast<double>(batch.size());
  for (const TrainingTask* t : batch) {
    ForwardCache c = forward(m, t->x, dropout_rng);
    TaskObjective obj = task_objective(c.out, t->q, t->pairs, cfg.gamma, cfg.lambda_pref, cfg.align_weight);
    total += w * obj.total;
    if (grad) grad->add_scaled(backward(m, c, obj.grad), w);
  }
  return total;
}

struct TrainResult {
  PlannerModel model;
  std::vector<double> loss;  // per optimizer step
};

inline std::vector<TrainingTask> prepare_training(const std::vector<UtilityLabel>& labels, const SkillLibrary& library,
                                                  const std::vector<Task>& tasks, const PlannerTrainConfig& cfg,
                                                  const EmbedderConfig& embedder) {
  std::map<std::string, std::map<std::string, const UtilityLabel*>> by_task;
  for (const auto& l : labels) by_task[l.task_id][l.skill_id] = &l;
  const Eigen::MatrixXd desc = description_embeddings(library, embedder);
  std::vector<TrainingTask> out;
  for (const auto& t : tasks) {
    auto it = by_task.find(t.id);
    if (it == by_task.end()) throw Error("train: no labels for task '" + t.id + "'");
    std::vector<UtilityLabel> row;
    row.reserve(library.size());
    for (const auto& s : library.skills()) {
      auto li = it->second.find(s.id);
      if (li == it->second.end()) {
        throw Error("train: task '" + t.id + "' has no label for skill '" + s.id + "' (need a full label row)");
      }
      row.push_back(*li->second);
    }
    TrainingTask tt;
    tt.task_id = t.id;
    tt.x = task_features(embed(t.instruction, embedder), desc);
    tt.q = benefit_distribution(row, cfg.beta);
    for (const auto& pr : mine_pairs(row, library, cfg, embedder)) {
      tt.pairs.push_back({library.index_of(pr.pos), library.index_of(pr.neg)});
    }
    out.push_back(std::move(tt));
  }
  return out;
}

/// Adam over shuffled task minibatches. The loss of every step is recorded;
/// a non-finite loss aborts with the step index.
inline TrainResult train(const std::vector<UtilityLabel>& labels, const SkillLibrary& library,
                         const std::vector<Task>& tasks, const PlannerTrainConfig& cfg,
                         const EmbedderConfig& embedder = {}) {
  cfg.validate();
  if (tasks.empty()) throw Error("train: no training tasks");
  if (library.empty()) throw Error("train: empty library");
  const auto data = prepare_training(labels, library, tasks, cfg, embedder);

  TrainResult res;
  res.model = init_model(2 * embedder.dimension, cfg.hidden, cfg.dropout, embedder, cfg.seed);
  PlannerModel& m = res.model;

  std::vector<std::size_t> sizes;
  std::vector<double*> params = parameter_blocks(m, sizes);
  const std::size_t n_params = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  std::vector<double> m1(n_params, 0.0), m2(n_params, 0.0);

  std::vector<std::size_t> order(data.size());
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng = derive_stream(cfg.seed, "planner:shuffle:" + std::to_string(epoch));
    shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.tasks_per_step)) {
      std::vector<const TrainingTask*> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + static_cast<std::size_t>(cfg.tasks_per_step)); ++i) {
        batch.push_back(&data[order[i]]);
      }
      Rng dropout_rng = derive_stream(cfg.seed, "planner:dropout:" + std::to_string(step));
      PlannerGrad g;
      const double loss = batch_objective(m, batch, cfg, &g, &dropout_rng);
      if (!std::isfinite(loss)) throw Error("train: non-finite loss at step " + std::to_string(step));
      res.loss.push_back(loss);

      ++step;
      const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(step));
      std::vector<std::size_t> gsizes;
      std::vector<double*> gblocks = parameter_blocks(g, gsizes);
      std::size_t k = 0;
      for (std::size_t b = 0; b < params.size(); ++b) {
        for (std::size_t i = 0; i < sizes[b]; ++i, ++k) {
          const double gi = gblocks[b][i];
          m1[k] = cfg.adam_beta1 * m1[k] + (1.0 - cfg.adam_beta1) * gi;
          m2[k] = cfg.adam_beta2 * m2[k] + (1.0 - cfg.adam_beta2) * gi * gi;
          params[b][i] -= cfg.lr * (m1[k] / bc1) / (std::sqrt(m2[k] / bc2) + cfg.adam_eps);
        }
      }
      if (!m.finite()) throw Error("train: non-finite weights after step " + std::to_string(step - 1));
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Weights file
// ---------------------------------------------------------------------------

inline json matrix_to_json(const Eigen::MatrixXd& mat) {
  // Row-major flat array.
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(mat.size()));
  for (Eigen::Index r = 0; r < mat.rows(); ++r) {
    for (Eigen::Index c = 0; c < mat.cols(); ++c) flat.push_back(mat(r, c));
  }
  return json{{"shape", {mat.rows(), mat.cols()}}, {"values", flat}};
}

inline Eigen::MatrixXd matrix_from_json(const json& j) {
  const auto shape = j.at("shape").get<std::vector<Eigen::Index>>();
  const auto flat = j.at("values").get<std::vector<double>>();
  if (shape.size() != 2 || static_cast<std::size_t>(shape[0] * shape[1]) != flat.size()) {
    throw Error("weights file: shape does not match value count");
  }
  Eigen::MatrixXd mat(shape[0], shape[1]);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < shape[0]; ++r) {
    for (Eigen::Index c = 0; c < shape[1]; ++c) mat(r, c) = flat[k++];
  }
  return mat;
}

inline void to_json(json& j, const PlannerModel& m) {
  j = json{{"format", "skillctx-planner"},
           {"version", kWeightsVersion},
           {"activation", kActivation},
           {"dropout", m.dropout_rate},
           {"embedder", m.embedder},
           {"embedder_fingerprint", text::hex64(m.embedder.fingerprint())},
           {"layers",
            json::array({json{{"weight", matrix_to_json(m.w1)}, {"bias", matrix_to_json(m.b1)}},
                         json{{"weight", matrix_to_json(m.w2)}, {"bias", matrix_to_json(m.b2)}},
                         json{{"weight", matrix_to_json(m.w3)}, {"bias", matrix_to_json(m.b3)}}})}};
}

inline void from_json(const json& j, PlannerModel& m) {
  if (j.value("format", std::string{}) != "skillctx-planner") throw Error("weights file: not a planner model");
  if (j.at("version").get<int>() != kWeightsVersion) throw Error("weights file: unsupported version");
  if (j.at("activation").get<std::string>() != kActivation) throw Error("weights file: unsupported activation");
  m.dropout_rate = j.at("dropout").get<double>();
  m.embedder = j.at("embedder").get<EmbedderConfig>();
  if (j.at("embedder_fingerprint").get<std::string>() != text::hex64(m.embedder.fingerprint())) {
    throw Error("weights file: embedder fingerprint mismatch");
  }
  const auto& layers = j.at("layers");
  if (layers.size() != 3) throw Error("weights file: expected 3 layers");
  m.w1 = matrix_from_json(layers[0].at("weight"));
  m.b1 = matrix_from_json(layers[0].at("bias")).col(0);
  m.w2 = matrix_from_json(layers[1].at("weight"));
  m.b2 = matrix_from_json(layers[1].at("bias")).col(0);
  m.w3 = matrix_from_json(layers[2].at("weight"));
  m.b3 = matrix_from_json(layers[2].at("bias")).col(0);
  if (m.w1.rows() != m.b1.size() || m.w2.rows() != m.b2.size() || m.w2.cols() != m.w1.rows() ||
      m.w3.cols() != m.w2.rows() || m.w3.rows() != 1 || m.b3.size() != 1) {
    throw Error("weights file: inconsistent layer shapes");
  }
  if (m.w1.cols() != 2 * m.embedder.dimension) throw Error("weights file: input width does not match embedder");
}

inline void save_model(const PlannerModel& m, const std::filesystem::path& path) { io::write_json(path, json(m)); }

inline PlannerModel load_model(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw Error("planner model '" + path.string() + "' not found (run `train-planner` first)");
  }
  return io::read_json(path).get<PlannerModel>();
}

}  // namespace skillctx
