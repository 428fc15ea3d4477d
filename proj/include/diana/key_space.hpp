#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "diana/error.hpp"
#include "diana/random.hpp"
#include "diana/vec.hpp"

namespace diana {

// `Literal` keeps the outer exponential of the printed objective; `Plain` drops it.
enum class TripletForm { Literal, Plain };

inline std::string_view triplet_form_name(TripletForm f) { return f == TripletForm::Literal ? "literal" : "plain"; }

inline TripletForm triplet_form_from_name(std::string_view s) {
  if (s == "literal") return TripletForm::Literal;
  if (s == "plain") return TripletForm::Plain;
  throw ConfigError("unknown triplet_form '" + std::string(s) + "'");
}

struct TaskKey {
  int task_id = 0;
  Vector key;
  friend bool operator==(const TaskKey&, const TaskKey&) = default;
};

struct MetaKey {
  int index = 0;
  Vector key;
  friend bool operator==(const MetaKey&, const MetaKey&) = default;
};

inline constexpr double kTripletMargin = 1.0;

// exp(d(q,k) + max(1 - d(q_neg,k), 0)) with Euclidean d. Without a negative only the
// positive term remains.
inline double task_triplet_loss(std::span<const double> q, std::span<const double> k,
                                std::optional<std::span<const double>> q_neg,
                                TripletForm form = TripletForm::Literal) {
  double inner = vec::distance(q, k);
  if (q_neg) inner += std::max(kTripletMargin - vec::distance(*q_neg, k), 0.0);
  return form == TripletForm::Literal ? std::exp(inner) : inner;
}

// Gradient of task_triplet_loss with respect to the key. A term whose distance is exactly
// zero contributes the zero subgradient.
inline Vector task_triplet_grad(std::span<const double> q, std::span<const double> k,
                                std::optional<std::span<const double>> q_neg,
                                TripletForm form = TripletForm::Literal) {
  vec::check_same(q, k);
  Vector g(k.size(), 0.0);
  const double d_pos = vec::distance(q, k);
  if (d_pos > 0.0)
    for (std::size_t i = 0; i < k.size(); ++i) g[i] += (k[i] - q[i]) / d_pos;
  if (q_neg) {
    const double d_neg = vec::distance(*q_neg, k);
    if (d_neg < kTripletMargin && d_neg > 0.0)
      for (std::size_t i = 0; i < k.size(); ++i) g[i] -= (k[i] - (*q_neg)[i]) / d_neg;
  }
  if (form == TripletForm::Literal) {
    const double scale = task_triplet_loss(q, k, q_neg, form);
    for (double& x : g) x *= scale;
  }
  return g;
}

struct RouteDecision {
  // nullopt means the query was declared Unseen.
  std::optional<int> task_id;
  double distance = 0.0;
  // Nearest key regardless of the threshold.
  int nearest_task = 0;

  bool is_unseen() const { return !task_id.has_value(); }
};

// Nearest task key (ties: smallest task id); Unseen iff that distance exceeds tau.
inline RouteDecision infer_task(std::span<const double> q, std::span<const TaskKey> keys, double tau) {
  if (keys.empty()) throw RoutingError("no task keys");
  const TaskKey* best = nullptr;
  double best_d = std::numeric_limits<double>::infinity();
  for (const auto& k : keys) {
    const double d = vec::distance(q, k.key);
    if (d < best_d || (d == best_d && best && k.task_id < best->task_id)) {
      best = &k;
      best_d = d;
    }
  }
  RouteDecision r;
  r.distance = best_d;
  r.nearest_task = best->task_id;
  if (!(best_d > tau)) r.task_id = best->task_id;
  return r;
}

// Indices of the m_select keys nearest to q, ascending by distance then by index.
inline std::vector<int> select_meta(std::span<const double> q, std::span<const MetaKey> meta_keys, int m_select) {
  if (m_select < 1 || m_select > static_cast<int>(meta_keys.size()))
    throw ConfigError("m_select must lie in [1, pool size]");
  std::vector<std::pair<double, int>> ranked;
  ranked.reserve(meta_keys.size());
  for (const auto& mk : meta_keys) ranked.emplace_back(vec::distance(q, mk.key), mk.index);
  const auto m = static_cast<std::size_t>(m_select);
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(m), ranked.end());
  std::vector<int> out;
  out.reserve(m);
  for (std::size_t i = 0; i < m; ++i) out.push_back(ranked[i].second);
  return out;
}

// Mean squared distance between q and the selected keys.
inline double meta_pull_loss(std::span<const double> q, std::span<const Vector> selected) {
  if (selected.empty()) throw InvariantError("meta_pull_loss over no keys");
  double s = 0.0;
  for (const auto& k : selected) s += vec::sq_distance(q, k);
  return s / static_cast<double>(selected.size());
}

// d(meta_pull_loss)/d(key_j) = 2 (key_j - q) / m for each selected key.
inline Vector meta_pull_grad(std::span<const double> q, std::span<const double> key, std::size_t n_selected) {
  Vector g(key.size());
  const double c = 2.0 / static_cast<double>(n_selected);
  for (std::size_t i = 0; i < key.size(); ++i) g[i] = c * (key[i] - q[i]);
  return g;
}

// tau = mean + 2 * population stddev.
inline double calibrate_tau(std::span<const double> distances) {
  if (distances.empty()) throw CalibrationError("no validation distances");
  const double n = static_cast<double>(distances.size());
  const double mean = std::accumulate(distances.begin(), distances.end(), 0.0) / n;
  double var = 0.0;
  for (double d : distances) var += (d - mean) * (d - mean);
  var /= n;
  return mean + 2.0 * std::sqrt(var);
}

class KeySpace {
 public:
  KeySpace() = default;

  // Meta keys start as random unit vectors, matching the scale of encoded queries.
  KeySpace(int dim, int meta_pool, Rng& rng) : dim_(dim) {
    for (int i = 0; i < meta_pool; ++i) {
      Vector k(static_cast<std::size_t>(dim));
      for (auto& x : k) x = rng.normal();
      const double n = vec::norm(k);
      for (auto& x : k) x /= n;
      meta_.push_back({i, std::move(k)});
    }
  }

  int dim() const { return dim_; }

  void add_task_key(int task_id, Vector init) {
    if (find_task(task_id)) throw InvariantError("task key " + std::to_string(task_id) + " already exists");
    if (static_cast<int>(init.size()) != dim_) throw InvariantError("task key dimension mismatch");
    tasks_.push_back({task_id, std::move(init)});
  }

  const std::vector<TaskKey>& task_keys() const { return tasks_; }
  const std::vector<MetaKey>& meta_keys() const { return meta_; }
  std::vector<MetaKey>& meta_keys() { return meta_; }

  TaskKey* find_task(int task_id) {
    for (auto& k : tasks_)
      if (k.task_id == task_id) return &k;
    return nullptr;
  }
  const TaskKey* find_task(int task_id) const {
    for (const auto& k : tasks_)
      if (k.task_id == task_id) return &k;
    return nullptr;
  }
  TaskKey& task_key(int task_id) {
    if (auto* k = find_task(task_id)) return *k;
    throw RoutingError("no key for task " + std::to_string(task_id));
  }

  // +inf until the first calibration.
  double tau() const { return tau_; }
  void set_tau(double t) { tau_ = t; }

  RouteDecision route(std::span<const double> q) const { return infer_task(q, tasks_, tau_); }

  friend bool operator==(const KeySpace&, const KeySpace&) = default;

 private:
  int dim_ = 0;
  std::vector<TaskKey> tasks_;
  std::vector<MetaKey> meta_;
  double tau_ = std::numeric_limits<double>::infinity();
};

}  // namespace diana
