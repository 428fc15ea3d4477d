#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "diana/domain.hpp"
#include "diana/error.hpp"
#include "diana/random.hpp"
#include "diana/vec.hpp"

namespace diana {

// Shared answer scorer. logit(a) = W[a] . (x + pooled + r_step), softmax over the legal candidates.
// step_emb[0] is pinned to zero so single-token formats see z = x + pooled.
struct BackboneParams {
  Matrix W;                      // V x D answer-token embeddings
  std::vector<Vector> step_emb;  // K_max decoding-position vectors
  int stop_token = 0;

  std::size_t dim() const { return W.cols; }
  int max_steps() const { return static_cast<int>(step_emb.size()); }

  static BackboneParams init(std::size_t vocab, std::size_t dim, int max_steps, int stop_token, double stddev,
                             Rng& rng) {
    BackboneParams p;
    p.W = Matrix(vocab, dim);
    for (auto& w : p.W.data) w = rng.normal(0.0, stddev);
    p.step_emb.assign(static_cast<std::size_t>(max_steps), Vector(dim, 0.0));
    for (std::size_t t = 1; t < p.step_emb.size(); ++t)
      for (auto& r : p.step_emb[t]) r = rng.normal(0.0, stddev);
    p.stop_token = stop_token;
    return p;
  }

  friend bool operator==(const BackboneParams&, const BackboneParams&) = default;
};

struct BackboneGrad {
  Matrix dW;
  std::vector<Vector> dstep;

  explicit BackboneGrad(const BackboneParams& p)
      : dW(p.W.rows, p.W.cols), dstep(p.step_emb.size(), Vector(p.W.cols, 0.0)) {}
};

// Candidate vocabulary indices, ascending. Extractive: distinct context tokens; multiple choice:
// the choices; abstractive: the whole vocabulary including the stop token.
inline std::vector<int> candidate_set(FormatKind format, const TokenSeq& context,
                                      const std::optional<TokenSeq>& choices, const Vocabulary& vocab) {
  std::vector<int> c;
  switch (format) {
    case FormatKind::Extractive:
      for (const auto& t : context) c.push_back(vocab.index_of(t));
      break;
    case FormatKind::MultipleChoice:
      if (!choices) throw DataError("multiple-choice input without choices");
      for (const auto& t : *choices) c.push_back(vocab.index_of(t));
      break;
    case FormatKind::Abstractive:
      c.resize(vocab.size());
      for (std::size_t i = 0; i < c.size(); ++i) c[i] = static_cast<int>(i);
      break;
  }
  std::sort(c.begin(), c.end());
  c.erase(std::unique(c.begin(), c.end()), c.end());
  return c;
}

inline std::vector<int> candidate_set(const Query& q, const Vocabulary& vocab) {
  return candidate_set(q.format, q.context, q.choices, vocab);
}
inline std::vector<int> candidate_set(const QAInstance& inst, const Vocabulary& vocab) {
  return candidate_set(inst.format, inst.context, inst.choices, vocab);
}

namespace detail {

inline Vector backbone_input(const BackboneParams& p, std::span<const double> x, std::span<const double> pooled,
                             int step) {
  if (x.size() != p.dim() || pooled.size() != p.dim()) throw InvariantError("backbone input dimension mismatch");
  if (step < 0 || step >= p.max_steps()) throw InvariantError("decoding step out of range");
  Vector z(x.begin(), x.end());
  vec::axpy(1.0, pooled, z);
  vec::axpy(1.0, p.step_emb[static_cast<std::size_t>(step)], z);
  return z;
}

inline std::vector<double> softmax_inplace(std::vector<double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double& l : logits) {
    l = std::exp(l - mx);
    s += l;
  }
  for (double& l : logits) l /= s;
  return logits;
}

// Gold token indices per decoding step, stop included when there is room for it.
inline std::vector<int> step_targets(const QAInstance& inst, const BackboneParams& p, const Vocabulary& vocab) {
  std::vector<int> t;
  for (const auto& a : inst.answer) t.push_back(vocab.index_of(a));
  if (inst.format == FormatKind::Abstractive) {
    if (static_cast<int>(t.size()) > p.max_steps()) throw DataError("abstractive answer longer than K_max");
    if (static_cast<int>(t.size()) < p.max_steps()) t.push_back(p.stop_token);
  } else if (t.size() != 1) {
    throw DataError("single-token format with multi-token answer");
  }
  return t;
}

}  // namespace detail

inline std::vector<double> score(const BackboneParams& p, std::span<const double> x, std::span<const double> pooled,
                                 int step, std::span<const int> candidates) {
  if (candidates.empty()) throw DataError("empty candidate set");
  const Vector z = detail::backbone_input(p, x, pooled, step);
  std::vector<double> logits;
  logits.reserve(candidates.size());
  for (int a : candidates) logits.push_back(vec::dot(p.W.row(static_cast<std::size_t>(a)), z));
  return logits;
}

// Softmax over the candidate logits.
inline std::vector<double> candidate_probs(const BackboneParams& p, std::span<const double> x,
                                           std::span<const double> pooled, int step, std::span<const int> candidates) {
  return detail::softmax_inplace(score(p, x, pooled, step, candidates));
}

// Sum of per-step cross-entropies (teacher forcing). Gradients are added into `acc` and
// `dpooled`; returns the loss.
inline double accumulate_loss_and_grads(const BackboneParams& p, const Vocabulary& vocab, const QAInstance& inst,
                                        std::span<const double> x, std::span<const double> pooled, BackboneGrad& acc,
                                        std::span<double> dpooled) {
  const auto candidates = candidate_set(inst, vocab);
  const auto targets = detail::step_targets(inst, p, vocab);
  double loss = 0.0;
  for (std::size_t step = 0; step < targets.size(); ++step) {
    const auto gold_it = std::lower_bound(candidates.begin(), candidates.end(), targets[step]);
    if (gold_it == candidates.end() || *gold_it != targets[step])
      throw DataError("gold answer not in candidate set");
    const auto gold = static_cast<std::size_t>(gold_it - candidates.begin());

    const int s = static_cast<int>(step);
    const Vector z = detail::backbone_input(p, x, pooled, s);
    std::vector<double> logits;
    logits.reserve(candidates.size());
    for (int a : candidates) logits.push_back(vec::dot(p.W.row(static_cast<std::size_t>(a)), z));
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double l : logits) sum += std::exp(l - mx);
    loss += std::log(sum) + mx - logits[gold];

    Vector dz(p.dim(), 0.0);
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      const double prob = std::exp(logits[i] - mx) / sum;
      const double coeff = prob - (i == gold ? 1.0 : 0.0);
      if (coeff == 0.0) continue;
      const auto row = static_cast<std::size_t>(candidates[i]);
      vec::axpy(coeff, z, acc.dW.row(row));
      vec::axpy(coeff, p.W.row(row), dz);
    }
    if (step > 0) vec::axpy(1.0, dz, acc.dstep[step]);
    vec::axpy(1.0, dz, dpooled);
  }
  return loss;
}

struct LossAndGrads {
  double loss = 0.0;
  BackboneGrad grad;
  Vector dpooled;
};

inline LossAndGrads loss_and_grads(const BackboneParams& p, const Vocabulary& vocab, const QAInstance& inst,
                                   std::span<const double> x, std::span<const double> pooled) {
  LossAndGrads out{0.0, BackboneGrad(p), Vector(p.dim(), 0.0)};
  out.loss = accumulate_loss_and_grads(p, vocab, inst, x, pooled, out.grad, out.dpooled);
  return out;
}

inline void apply_backbone_grad(BackboneParams& p, const BackboneGrad& g, double lr) {
  vec::axpy(-lr, g.dW.data, p.W.data);
  for (std::size_t t = 1; t < p.step_emb.size(); ++t) vec::axpy(-lr, g.dstep[t], p.step_emb[t]);
}

// Argmax over candidates, ties to the smallest vocabulary index. Abstractive inputs decode
// greedily until the stop token or K_max steps.
inline TokenSeq predict(const BackboneParams& p, const Vocabulary& vocab, const Query& q, std::span<const double> x,
                        std::span<const double> pooled) {
  const auto candidates = candidate_set(q, vocab);
  auto argmax = [&](int step) {
    const auto logits = score(p, x, pooled, step, candidates);
    std::size_t best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i)
      if (logits[i] > logits[best]) best = i;
    return candidates[best];
  };
  TokenSeq out;
  if (q.format != FormatKind::Abstractive) {
    out.push_back(vocab.token(argmax(0)));
    return out;
  }
  for (int step = 0; step < p.max_steps(); ++step) {
    const int tok = argmax(step);
    if (tok == p.stop_token) break;
    out.push_back(vocab.token(tok));
  }
  return out;
}

}  // namespace diana
