#pragma once

#include <algorithm>
#include <array>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "diana/domain.hpp"
#include "diana/error.hpp"
#include "diana/random.hpp"
#include "diana/vec.hpp"

namespace diana {

struct PromptConfig {
  int dim = 64;
  int general_len = 4;
  int format_len = 4;
  int task_len = 8;
  int meta_pool = 20;
  int meta_len = 2;
  int meta_select = 4;
  // Stddev of the Gaussian initialization of every shared prompt.
  double init_stddev = 0.01;
  // Noise added to warm-started task prompts.
  double task_init_noise = 0.01;

  friend bool operator==(const PromptConfig&, const PromptConfig&) = default;
};

inline void validate(const PromptConfig& c) {
  if (c.dim < 2) throw ConfigError("prompt dim must be >= 2");
  if (c.general_len < 1 || c.format_len < 1 || c.task_len < 1 || c.meta_len < 1)
    throw ConfigError("prompt lengths must be >= 1");
  if (c.meta_pool < 1) throw ConfigError("meta pool must be non-empty");
  if (c.meta_select < 1 || c.meta_select > c.meta_pool) throw ConfigError("meta_select must lie in [1, meta_pool]");
  if (c.init_stddev < 0 || c.task_init_noise < 0) throw ConfigError("negative init stddev");
}

struct Prompt {
  std::vector<Vector> vectors;

  std::size_t length() const { return vectors.size(); }

  Vector mean() const {
    Vector m(vectors.front().size(), 0.0);
    for (const auto& v : vectors) vec::axpy(1.0 / static_cast<double>(vectors.size()), v, m);
    return m;
  }

  static Prompt gaussian(int len, int dim, double stddev, Rng& rng) {
    Prompt p;
    p.vectors.assign(static_cast<std::size_t>(len), Vector(static_cast<std::size_t>(dim), 0.0));
    for (auto& v : p.vectors)
      for (auto& x : v) x = rng.normal(0.0, stddev);
    return p;
  }

  friend bool operator==(const Prompt&, const Prompt&) = default;
};

// Task prompt, or (nullopt) the unseen-task prompt of the input's format.
struct TaskChoice {
  std::optional<int> task_id;

  static TaskChoice task(int id) { return {id}; }
  static TaskChoice unseen() { return {std::nullopt}; }
  bool is_unseen() const { return !task_id.has_value(); }

  friend bool operator==(const TaskChoice&, const TaskChoice&) = default;
};

struct Provenance {
  FormatKind format = FormatKind::Extractive;
  TaskChoice task;
  std::vector<int> meta_indices;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct ComposedPrompt {
  std::vector<Vector> vectors;
  Provenance provenance;
};

// Per-vector gradient for each prompt. Every vector of a prompt that takes part in a
// composition receives the same share of the pooled gradient, so one vector per prompt suffices.
struct PromptGrad {
  Vector general;
  std::array<Vector, kNumFormats> format;
  std::map<int, Vector> task;
  std::array<Vector, kNumFormats> unseen;
  std::map<int, Vector> meta;

  explicit PromptGrad(int dim) : general(static_cast<std::size_t>(dim), 0.0) {
    for (auto& f : format) f.assign(static_cast<std::size_t>(dim), 0.0);
    for (auto& f : unseen) f.assign(static_cast<std::size_t>(dim), 0.0);
  }

  std::size_t dim() const { return general.size(); }
  Vector& task_slot(int id) { return task.try_emplace(id, dim(), 0.0).first->second; }
  Vector& meta_slot(int idx) { return meta.try_emplace(idx, dim(), 0.0).first->second; }
};

class PromptStore {
 public:
  PromptStore() = default;
  PromptStore(const PromptConfig& cfg, Rng& rng) : cfg_(cfg) {
    validate(cfg_);
    general_ = Prompt::gaussian(cfg_.general_len, cfg_.dim, cfg_.init_stddev, rng);
    for (auto& f : format_) f = Prompt::gaussian(cfg_.format_len, cfg_.dim, cfg_.init_stddev, rng);
    for (auto& u : unseen_) u = Prompt::gaussian(cfg_.task_len, cfg_.dim, cfg_.init_stddev, rng);
    meta_.reserve(static_cast<std::size_t>(cfg_.meta_pool));
    for (int i = 0; i < cfg_.meta_pool; ++i) meta_.push_back(Prompt::gaussian(cfg_.meta_len, cfg_.dim, cfg_.init_stddev, rng));
  }

  const PromptConfig& config() const { return cfg_; }

  // Appends a task prompt warm-started from the mean of the format prompt.
  void add_task_prompt(int task_id, FormatKind format, Rng& rng) {
    if (has_task(task_id)) throw InvariantError("task prompt " + std::to_string(task_id) + " already exists");
    const Vector base = format_[idx(format)].mean();
    Prompt p;
    p.vectors.assign(static_cast<std::size_t>(cfg_.task_len), base);
    for (auto& v : p.vectors)
      for (auto& x : v) x += rng.normal(0.0, cfg_.task_init_noise);
    task_ids_.push_back(task_id);
    tasks_.push_back(std::move(p));
  }

  bool has_task(int task_id) const {
    return std::find(task_ids_.begin(), task_ids_.end(), task_id) != task_ids_.end();
  }

  // Task ids in arrival order.
  const std::vector<int>& task_ids() const { return task_ids_; }

  const Prompt& general() const { return general_; }
  Prompt& general() { return general_; }
  const Prompt& format(FormatKind f) const { return format_[idx(f)]; }
  Prompt& format(FormatKind f) { return format_[idx(f)]; }
  const Prompt& unseen(FormatKind f) const { return unseen_[idx(f)]; }
  Prompt& unseen(FormatKind f) { return unseen_[idx(f)]; }
  const std::vector<Prompt>& meta_pool() const { return meta_; }
  std::vector<Prompt>& meta_pool() { return meta_; }

  const Prompt& task(int task_id) const { return tasks_[task_pos(task_id)]; }
  Prompt& task(int task_id) { return tasks_[task_pos(task_id)]; }

  const Prompt& resolve(FormatKind f, const TaskChoice& c) const {
    return c.is_unseen() ? unseen(f) : task(*c.task_id);
  }

  std::size_t composed_length(std::size_t n_meta) const {
    return static_cast<std::size_t>(cfg_.general_len + cfg_.format_len + cfg_.task_len) +
           n_meta * static_cast<std::size_t>(cfg_.meta_len);
  }

  // Restores a task prompt verbatim (checkpoint loading).
  void restore_task_prompt(int task_id, Prompt p) {
    if (has_task(task_id)) throw InvariantError("task prompt " + std::to_string(task_id) + " already exists");
    task_ids_.push_back(task_id);
    tasks_.push_back(std::move(p));
  }

  friend bool operator==(const PromptStore&, const PromptStore&) = default;

 private:
  static std::size_t idx(FormatKind f) { return static_cast<std::size_t>(format_code(f)); }

  std::size_t task_pos(int task_id) const {
    auto it = std::find(task_ids_.begin(), task_ids_.end(), task_id);
    if (it == task_ids_.end()) throw RoutingError("no task prompt for task " + std::to_string(task_id));
    return static_cast<std::size_t>(it - task_ids_.begin());
  }

  PromptConfig cfg_;
  Prompt general_;
  std::array<Prompt, kNumFormats> format_;
  std::vector<int> task_ids_;
  std::vector<Prompt> tasks_;
  std::array<Prompt, kNumFormats> unseen_;
  std::vector<Prompt> meta_;
};

// [general; format; task-or-unseen; selected meta...] in that order.
inline ComposedPrompt compose(const PromptStore& store, FormatKind format, const TaskChoice& choice,
                              const std::vector<int>& meta_selection) {
  std::set<int> distinct;
  for (int m : meta_selection) {
    if (m < 0 || m >= static_cast<int>(store.meta_pool().size()))
      throw InvariantError("meta index " + std::to_string(m) + " out of range");
    if (!distinct.insert(m).second) throw InvariantError("repeated meta index " + std::to_string(m));
  }
  const Prompt& routed = store.resolve(format, choice);

  ComposedPrompt out;
  out.vectors.reserve(store.composed_length(meta_selection.size()));
  auto append = [&](const Prompt& p) { out.vectors.insert(out.vectors.end(), p.vectors.begin(), p.vectors.end()); };
  append(store.general());
  append(store.format(format));
  append(routed);
  for (int m : meta_selection) append(store.meta_pool()[static_cast<std::size_t>(m)]);
  out.provenance = Provenance{format, choice, meta_selection};
  return out;
}

// Mean of the composed vectors; the backbone's view of the prompt.
inline Vector pooled(const ComposedPrompt& composed) {
  if (composed.vectors.empty()) throw InvariantError("empty composed prompt");
  Vector m(composed.vectors.front().size(), 0.0);
  const double w = 1.0 / static_cast<double>(composed.vectors.size());
  for (const auto& v : composed.vectors) vec::axpy(w, v, m);
  return m;
}

// Adds the share d(loss)/d(vector) = d(loss)/d(pooled) / len to each prompt that took part.
// When `task_writable` is false the routed task prompt receives nothing.
inline void distribute_pooled_grad(const Provenance& prov, std::size_t composed_len, std::span<const double> dpooled,
                                   PromptGrad& grad, bool task_writable = true) {
  const double share = 1.0 / static_cast<double>(composed_len);
  vec::axpy(share, dpooled, grad.general);
  vec::axpy(share, dpooled, grad.format[static_cast<std::size_t>(format_code(prov.format))]);
  if (task_writable) {
    if (prov.task.is_unseen())
      vec::axpy(share, dpooled, grad.unseen[static_cast<std::size_t>(format_code(prov.format))]);
    else
      vec::axpy(share, dpooled, grad.task_slot(*prov.task.task_id));
  }
  for (int m : prov.meta_indices) vec::axpy(share, dpooled, grad.meta_slot(m));
}

// Plain SGD step: every vector of a prompt moves by -lr times that prompt's per-vector gradient.
inline void apply_prompt_grad(PromptStore& store, const PromptGrad& grad, double lr) {
  auto step = [lr](Prompt& p, const Vector& g) {
    for (auto& v : p.vectors) vec::axpy(-lr, g, v);
  };
  step(store.general(), grad.general);
  for (auto f : kAllFormats) {
    step(store.format(f), grad.format[static_cast<std::size_t>(format_code(f))]);
    step(store.unseen(f), grad.unseen[static_cast<std::size_t>(format_code(f))]);
  }
  for (const auto& [id, g] : grad.task) step(store.task(id), g);
  for (const auto& [m, g] : grad.meta) step(store.meta_pool()[static_cast<std::size_t>(m)], g);
}

}  // namespace diana
