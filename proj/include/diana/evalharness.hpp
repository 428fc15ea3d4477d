#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <string_view>
#include <vector>

#include "diana/domain.hpp"
#include "diana/error.hpp"

namespace diana {

inline int score_em(const TokenSeq& pred, const TokenSeq& gold) { return pred == gold ? 1 : 0; }

// Bag-of-tokens F1.
inline double score_f1(const TokenSeq& pred, const TokenSeq& gold) {
  if (gold.empty()) throw DataError("F1 against an empty gold answer");
  if (pred.empty()) return 0.0;
  std::map<Token, int> gold_counts;
  for (const auto& t : gold) ++gold_counts[t];
  int overlap = 0;
  for (const auto& t : pred) {
    auto it = gold_counts.find(t);
    if (it != gold_counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  if (overlap == 0) return 0.0;
  const double p = static_cast<double>(overlap) / static_cast<double>(pred.size());
  const double r = static_cast<double>(overlap) / static_cast<double>(gold.size());
  return 2.0 * p * r / (p + r);
}

inline int score_accuracy(const Token& pred, const Token& gold) { return pred == gold ? 1 : 0; }

inline std::string_view metric_name(FormatKind f) {
  switch (f) {
    case FormatKind::Extractive: return "em";
    case FormatKind::Abstractive: return "f1";
    case FormatKind::MultipleChoice: return "accuracy";
  }
  return "?";
}

// EM for extractive, F1 for abstractive, accuracy for multiple choice.
inline double score_for_format(FormatKind f, const TokenSeq& pred, const TokenSeq& gold) {
  switch (f) {
    case FormatKind::Extractive: return score_em(pred, gold);
    case FormatKind::Abstractive: return score_f1(pred, gold);
    case FormatKind::MultipleChoice:
      if (pred.size() != 1 || gold.size() != 1) return 0.0;
      return score_accuracy(pred[0], gold[0]);
  }
  return 0.0;
}

// R[i][j]: test score of task columns[j] after training stage i (0-based rows here).
struct PerfMatrix {
  std::vector<int> columns;
  std::vector<std::vector<double>> rows;

  std::size_t column_of(int task_id) const {
    auto it = std::find(columns.begin(), columns.end(), task_id);
    if (it == columns.end()) throw EvaluationError("task " + std::to_string(task_id) + " not in matrix");
    return static_cast<std::size_t>(it - columns.begin());
  }
  double at(std::size_t row, int task_id) const { return rows.at(row).at(column_of(task_id)); }

  friend bool operator==(const PerfMatrix&, const PerfMatrix&) = default;
};

// Mean over seen tasks of the final-stage scores. `seen` is in training order; the matrix
// must hold exactly one row per seen task.
inline double compute_A_N(const PerfMatrix& R, const std::vector<int>& seen) {
  if (seen.empty()) throw EvaluationError("no seen tasks");
  if (R.rows.size() != seen.size()) throw EvaluationError("perf matrix is missing its final row");
  double s = 0.0;
  for (int id : seen) s += R.at(seen.size() - 1, id);
  return s / static_cast<double>(seen.size());
}

// Average over the first N-1 tasks of (best score at or after the stage it was learned
// minus final score). Zero when N < 2.
inline double compute_F_N(const PerfMatrix& R, const std::vector<int>& seen) {
  const std::size_t n = seen.size();
  if (n < 2) return 0.0;
  if (R.rows.size() != n) throw EvaluationError("perf matrix is missing its final row");
  double total = 0.0;
  for (std::size_t j = 0; j + 1 < n; ++j) {
    double best = R.at(j, seen[j]);
    for (std::size_t i = j + 1; i < n; ++i) best = std::max(best, R.at(i, seen[j]));
    total += best - R.at(n - 1, seen[j]);
  }
  return total / static_cast<double>(n - 1);
}

// Mean over unseen tasks of the last row; nullopt when there are none.
inline std::optional<double> compute_A_unseen(const PerfMatrix& R, const std::vector<int>& unseen) {
  if (unseen.empty()) return std::nullopt;
  if (R.rows.empty()) throw EvaluationError("perf matrix has no rows");
  double s = 0.0;
  for (int id : unseen) s += R.at(R.rows.size() - 1, id);
  return s / static_cast<double>(unseen.size());
}

}  // namespace diana
