#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <future>
#include <optional>
#include <string_view>
#include <vector>

#include "diana/backbone.hpp"
#include "diana/domain.hpp"
#include "diana/error.hpp"
#include "diana/evalharness.hpp"
#include "diana/featurizer.hpp"
#include "diana/key_space.hpp"
#include "diana/memory.hpp"
#include "diana/prompt_store.hpp"
#include "diana/random.hpp"
#include "diana/vec.hpp"

namespace diana {

enum class Mode { Diana, DianaWoMeta, DianaWoMemory, SeqFt, Replay };

inline std::string_view mode_name(Mode m) {
  switch (m) {
    case Mode::Diana: return "diana";
    case Mode::DianaWoMeta: return "diana_wo_meta";
    case Mode::DianaWoMemory: return "diana_wo_memory";
    case Mode::SeqFt: return "seq_ft";
    case Mode::Replay: return "replay";
  }
  return "?";
}

inline Mode mode_from_name(std::string_view s) {
  for (auto m : {Mode::Diana, Mode::DianaWoMeta, Mode::DianaWoMemory, Mode::SeqFt, Mode::Replay})
    if (mode_name(m) == s) return m;
  throw ConfigError("unknown mode '" + std::string(s) + "'");
}

inline bool uses_prompts(Mode m) { return m == Mode::Diana || m == Mode::DianaWoMeta || m == Mode::DianaWoMemory; }
inline bool uses_meta(Mode m) { return m == Mode::Diana || m == Mode::DianaWoMemory; }
inline bool uses_memory(Mode m) { return m == Mode::Diana || m == Mode::DianaWoMeta || m == Mode::Replay; }

struct TrainConfig {
  double alpha = 1.0;
  double beta = 0.2;
  int epochs_per_task = 10;
  int batch_size = 16;
  double lr_backbone = 0.2;
  double lr_prompt = 0.1;
  double lr_key = 0.05;
  // Stage-2 gradients are summed over the batch, then rescaled to this global L2 norm
  // when larger. 0 disables clipping.
  double grad_clip = 5.0;
  double rehearsal_ratio = 0.2;     // lambda
  double unseen_update_prob = 0.1;  // rho
  Mode mode = Mode::Diana;
  std::uint64_t seed = 0;
  int memory_capacity = 50;
  TripletForm triplet_form = TripletForm::Literal;
  int feature_dim = 64;
  PromptConfig prompts;
  double backbone_init_stddev = 0.01;

  // Defaults for a mode: modes without rehearsal get lambda = 0.
  static TrainConfig for_mode(Mode m) {
    TrainConfig c;
    c.mode = m;
    if (m == Mode::SeqFt || m == Mode::DianaWoMemory) c.rehearsal_ratio = 0.0;
    return c;
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

inline void validate(const TrainConfig& c) {
  if (!(c.alpha >= 0.0 && c.alpha <= 1.0)) throw ConfigError("alpha must lie in [0,1]");
  if (!(c.beta >= 0.0)) throw ConfigError("beta must be non-negative");
  if (c.epochs_per_task < 1) throw ConfigError("epochs_per_task must be >= 1");
  if (c.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(c.lr_backbone >= 0.0 && c.lr_prompt >= 0.0 && c.lr_key >= 0.0))
    throw ConfigError("learning rates must be non-negative");
  if (!(c.grad_clip >= 0.0)) throw ConfigError("grad_clip must be non-negative");
  if (!(c.rehearsal_ratio >= 0.0 && c.rehearsal_ratio <= 1.0)) throw ConfigError("rehearsal ratio must lie in [0,1]");
  if (!(c.unseen_update_prob >= 0.0 && c.unseen_update_prob <= 1.0))
    throw ConfigError("unseen update probability must lie in [0,1]");
  if (c.memory_capacity < 1) throw ConfigError("memory capacity must be positive");
  if (c.feature_dim < 2) throw ConfigError("feature_dim must be >= 2");
  if (c.prompts.dim != c.feature_dim) throw ConfigError("prompt dim must equal feature_dim");
  validate(c.prompts);
  if (c.rehearsal_ratio > 0.0 && !uses_memory(c.mode))
    throw ConfigError("mode " + std::string(mode_name(c.mode)) + " has no memory; rehearsal ratio must be 0");
}

// Probability of routing a training sample to its ground-truth task prompt in epoch k.
inline double epsilon(int k, double alpha, double beta) {
  return std::max(0.0, alpha - static_cast<double>(k) * beta);
}

struct TrainState {
  TrainConfig config;
  Vocabulary vocab;
  PromptStore prompts;
  KeySpace keys;
  BackboneParams backbone;
  MemoryBuffer memory;
  PerfMatrix perf;
  Rng rng;
  int stage = 0;
  std::vector<int> trained_tasks;

  friend bool operator==(const TrainState&, const TrainState&) = default;
};

inline TrainState init_state(const TaskSuite& suite, const TrainConfig& cfg) {
  validate(cfg);
  TrainState s;
  s.config = cfg;
  s.vocab = suite.vocabulary;
  Rng prompt_rng(mix_seed(cfg.seed, 1));
  Rng key_rng(mix_seed(cfg.seed, 2));
  Rng backbone_rng(mix_seed(cfg.seed, 3));
  s.prompts = PromptStore(cfg.prompts, prompt_rng);
  s.keys = KeySpace(cfg.feature_dim, cfg.prompts.meta_pool, key_rng);
  s.backbone = BackboneParams::init(s.vocab.size(), static_cast<std::size_t>(cfg.feature_dim),
                                    suite.config.gen.max_answer_len, s.vocab.stop_index(), cfg.backbone_init_stddev,
                                    backbone_rng);
  s.memory = MemoryBuffer(cfg.memory_capacity, mix_seed(cfg.seed, 4));
  s.rng = Rng(mix_seed(cfg.seed, 5));
  for (const auto& t : suite.tasks) s.perf.columns.push_back(t.task_id);
  return s;
}

// The prompt routing chosen for one input.
struct Routing {
  TaskChoice choice;
  std::vector<int> meta;
  std::optional<RouteDecision> decision;
};

// Test-time routing: nearest task key or Unseen, plus meta selection. Never sees a task id.
inline Routing route_query(const TrainState& s, std::span<const double> x) {
  Routing r;
  const auto d = s.keys.route(x);
  r.choice = d.is_unseen() ? TaskChoice::unseen() : TaskChoice::task(*d.task_id);
  r.decision = d;
  if (uses_meta(s.config.mode)) r.meta = select_meta(x, s.keys.meta_keys(), s.config.prompts.meta_select);
  return r;
}

inline Vector pooled_prompt(const TrainState& s, FormatKind f, const Routing& r) {
  if (!uses_prompts(s.config.mode)) return Vector(static_cast<std::size_t>(s.config.feature_dim), 0.0);
  return pooled(compose(s.prompts, f, r.choice, r.meta));
}

struct Prediction {
  TokenSeq answer;
  std::optional<RouteDecision> route;
};

inline Prediction predict_query(const TrainState& s, const Query& q) {
  const Vector x = encode(q, s.config.feature_dim);
  Prediction p;
  Routing r;
  if (uses_prompts(s.config.mode)) {
    r = route_query(s, x);
    p.route = r.decision;
  }
  p.answer = predict(s.backbone, s.vocab, q, x, pooled_prompt(s, q.format, r));
  return p;
}

// Per-epoch scheduled-sampling counts for fresh samples of the task being trained.
struct TaskTrainReport {
  std::vector<int> ground_truth_routed;
  std::vector<int> routed_total;
  double final_loss = 0.0;
};

// Factor that brings the joint backbone and prompt gradient norm down to `clip`.
inline double clip_scale(const BackboneGrad& bg, const PromptGrad* pg, double clip) {
  if (clip <= 0.0) return 1.0;
  double n2 = vec::dot(bg.dW.data, bg.dW.data);
  for (const auto& d : bg.dstep) n2 += vec::dot(d, d);
  if (pg) {
    n2 += vec::dot(pg->general, pg->general);
    for (const auto& f : pg->format) n2 += vec::dot(f, f);
    for (const auto& f : pg->unseen) n2 += vec::dot(f, f);
    for (const auto& [_, v] : pg->task) n2 += vec::dot(v, v);
    for (const auto& [_, v] : pg->meta) n2 += vec::dot(v, v);
  }
  const double n = std::sqrt(n2);
  return n > clip ? clip / n : 1.0;
}

// Two-stage training of one task: key space first, then prompts and backbone, per batch.
using EpochCallback = std::function<void(int epoch, const TrainState&)>;

inline TaskTrainReport train_task(TrainState& s, const TaskDescriptor& task, const std::vector<QAInstance>& data,
                                  const EpochCallback& on_epoch = {}) {
  const auto& cfg = s.config;
  const Mode mode = cfg.mode;
  if (std::find(s.trained_tasks.begin(), s.trained_tasks.end(), task.task_id) != s.trained_tasks.end())
    throw InvariantError("task " + std::to_string(task.task_id) + " already trained");
  if (!task.seen) throw InvariantError("unseen task in the training sequence");
  if (data.empty()) throw DataError("empty training split");
  for (const auto& inst : data)
    if (inst.task_id != task.task_id) throw DataError("training instance with foreign task id");

  const int dim = cfg.feature_dim;
  const auto udim = static_cast<std::size_t>(dim);
  std::vector<Vector> features;
  features.reserve(data.size());
  for (const auto& inst : data) features.push_back(encode(inst, dim));

  if (uses_prompts(mode)) s.prompts.add_task_prompt(task.task_id, task.format, s.rng);

  TaskTrainReport report;
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  const auto n_rehearsal = static_cast<std::size_t>(std::lround(cfg.rehearsal_ratio * cfg.batch_size));

  for (int epoch = 0; epoch < cfg.epochs_per_task; ++epoch) {
    const double eps = epsilon(epoch, cfg.alpha, cfg.beta);
    int gt_routed = 0;
    int total_routed = 0;
    double epoch_loss = 0.0;
    s.rng.shuffle(order.begin(), order.end());

    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t end = std::min(order.size(), start + bs);
      const auto n_fresh = static_cast<double>(end - start);

      // Stage 1: key vectors.
      if (uses_prompts(mode)) {
        if (!s.keys.find_task(task.task_id)) {
          Vector init(udim, 0.0);
          for (std::size_t b = start; b < end; ++b) vec::axpy(1.0 / n_fresh, features[order[b]], init);
          s.keys.add_task_key(task.task_id, std::move(init));
        }
        auto& key = s.keys.task_key(task.task_id).key;
        Vector gk(udim, 0.0);
        for (std::size_t b = start; b < end; ++b) {
          std::optional<Vector> neg_x;
          if (uses_memory(mode))
            if (auto neg = s.memory.sample_negative(task.task_id, s.rng)) neg_x = encode(*neg, dim);
          std::optional<std::span<const double>> neg_span;
          if (neg_x) neg_span = std::span<const double>(*neg_x);
          vec::axpy(1.0 / n_fresh, task_triplet_grad(features[order[b]], key, neg_span, cfg.triplet_form), gk);
        }
        vec::axpy(-cfg.lr_key, gk, key);

        if (uses_meta(mode)) {
          auto& metas = s.keys.meta_keys();
          std::vector<Vector> gm(metas.size(), Vector(udim, 0.0));
          std::vector<bool> touched(metas.size(), false);
          const auto m = static_cast<std::size_t>(cfg.prompts.meta_select);
          for (std::size_t b = start; b < end; ++b) {
            const auto& x = features[order[b]];
            for (int j : select_meta(x, metas, cfg.prompts.meta_select)) {
              const auto uj = static_cast<std::size_t>(j);
              vec::axpy(1.0 / n_fresh, meta_pull_grad(x, metas[uj].key, m), gm[uj]);
              touched[uj] = true;
            }
          }
          for (std::size_t j = 0; j < metas.size(); ++j)
            if (touched[j]) vec::axpy(-cfg.lr_key, gm[j], metas[j].key);
        }
      }

      // Stage 2: prompts and backbone on fresh samples plus rehearsal.
      std::vector<const QAInstance*> batch;
      std::vector<Vector> batch_x;
      for (std::size_t b = start; b < end; ++b) {
        batch.push_back(&data[order[b]]);
        batch_x.push_back(features[order[b]]);
      }
      const std::size_t fresh_count = batch.size();
      std::vector<QAInstance> rehearsal;
      if (uses_memory(mode) && n_rehearsal > 0) rehearsal = s.memory.rehearsal_batch(n_rehearsal, s.rng);
      for (const auto& inst : rehearsal) {
        batch.push_back(&inst);
        batch_x.push_back(encode(inst, dim));
      }

      BackboneGrad bg(s.backbone);
      PromptGrad pg(dim);
      Vector task_segment(udim, 0.0);
      for (std::size_t i = 0; i < batch.size(); ++i) {
        const QAInstance& inst = *batch[i];
        const auto& x = batch_x[i];
        Routing r;
        std::size_t composed_len = 0;
        if (uses_prompts(mode)) {
          if (s.rng.bernoulli(eps)) {
            r.choice = TaskChoice::task(*inst.task_id);
            if (i < fresh_count) ++gt_routed;
          } else {
            const auto d = s.keys.route(x);
            r.choice = d.is_unseen() ? TaskChoice::unseen() : TaskChoice::task(*d.task_id);
          }
          if (i < fresh_count) ++total_routed;
          if (uses_meta(mode)) r.meta = select_meta(x, s.keys.meta_keys(), cfg.prompts.meta_select);
          composed_len = s.prompts.composed_length(r.meta.size());
        }
        const Vector pbar = pooled_prompt(s, inst.format, r);
        Vector dp(udim, 0.0);
        epoch_loss += accumulate_loss_and_grads(s.backbone, s.vocab, inst, x, pbar, bg, dp);
        if (uses_prompts(mode)) {
          // Prompts of earlier tasks stay frozen.
          const bool writable = r.choice.is_unseen() || *r.choice.task_id == task.task_id;
          Provenance prov{inst.format, r.choice, r.meta};
          distribute_pooled_grad(prov, composed_len, dp, pg, writable);
          if (i < fresh_count) vec::axpy(1.0 / static_cast<double>(composed_len), dp, task_segment);
        }
      }
      if (uses_prompts(mode) && s.rng.bernoulli(cfg.unseen_update_prob))
        vec::axpy(1.0, task_segment, pg.unseen[static_cast<std::size_t>(format_code(task.format))]);

      const double scale = clip_scale(bg, uses_prompts(mode) ? &pg : nullptr, cfg.grad_clip);
      apply_backbone_grad(s.backbone, bg, cfg.lr_backbone * scale);
      if (uses_prompts(mode)) apply_prompt_grad(s.prompts, pg, cfg.lr_prompt * scale);

      if (uses_memory(mode))
        for (std::size_t b = start; b < end; ++b) s.memory.observe(data[order[b]]);
    }
    report.ground_truth_routed.push_back(gt_routed);
    report.routed_total.push_back(total_routed);
    report.final_loss = epoch_loss;
    if (on_epoch) on_epoch(epoch, s);
  }
  s.trained_tasks.push_back(task.task_id);
  return report;
}

// Test data with task identities and answers split away from what the model sees.
struct EvalTask {
  int task_id = 0;
  FormatKind format = FormatKind::Extractive;
  bool seen = true;
  std::vector<Query> queries;
  std::vector<TokenSeq> golds;
};

inline std::vector<EvalTask> make_eval_set(const TaskSuite& suite) {
  std::vector<EvalTask> out;
  for (std::size_t i = 0; i < suite.tasks.size(); ++i) {
    EvalTask t{suite.tasks[i].task_id, suite.tasks[i].format, suite.tasks[i].seen, {}, {}};
    for (const auto& inst : suite.splits[i].test) {
      t.queries.push_back(as_query(inst));
      t.golds.push_back(inst.answer);
    }
    out.push_back(std::move(t));
  }
  return out;
}

struct RoutingStats {
  int seen_correct = 0;
  int seen_total = 0;
  int unseen_detected = 0;
  int unseen_total = 0;

  double seen_accuracy() const { return seen_total ? static_cast<double>(seen_correct) / seen_total : 0.0; }
  double unseen_detection() const {
    return unseen_total ? static_cast<double>(unseen_detected) / unseen_total : 0.0;
  }
};

struct EvalRow {
  std::vector<double> scores;  // parallel to the eval set
  RoutingStats routing;
};

// Scores every task's test split through routing-only prediction. Tasks are scored in
// parallel over a read-only state.
inline EvalRow evaluate_row(const TrainState& s, const std::vector<EvalTask>& tasks) {
  struct TaskResult {
    double score = 0.0;
    RoutingStats routing;
  };
  auto run = [&s](const EvalTask& t) {
    TaskResult res;
    if (t.queries.empty()) return res;
    double total = 0.0;
    for (std::size_t i = 0; i < t.queries.size(); ++i) {
      const auto pred = predict_query(s, t.queries[i]);
      total += score_for_format(t.format, pred.answer, t.golds[i]);
      if (pred.route) {
        if (t.seen) {
          ++res.routing.seen_total;
          if (pred.route->task_id == t.task_id) ++res.routing.seen_correct;
        } else {
          ++res.routing.unseen_total;
          if (pred.route->is_unseen()) ++res.routing.unseen_detected;
        }
      }
    }
    res.score = total / static_cast<double>(t.queries.size());
    return res;
  };
  std::vector<std::future<TaskResult>> jobs;
  for (const auto& t : tasks) jobs.push_back(std::async(std::launch::async, run, std::cref(t)));
  EvalRow row;
  for (auto& j : jobs) {
    const auto r = j.get();
    row.scores.push_back(r.score);
    row.routing.seen_correct += r.routing.seen_correct;
    row.routing.seen_total += r.routing.seen_total;
    row.routing.unseen_detected += r.routing.unseen_detected;
    row.routing.unseen_total += r.routing.unseen_total;
  }
  return row;
}

// Recomputes tau from validation distances of every trained task to its own key.
inline void calibrate_from_validation(TrainState& s, const TaskSuite& suite) {
  std::vector<double> d;
  for (int id : s.trained_tasks) {
    const auto& key = s.keys.task_key(id).key;
    for (const auto& inst : suite.splits_of(id).validation) d.push_back(vec::distance(encode(inst, s.config.feature_dim), key));
  }
  s.keys.set_tau(calibrate_tau(d));
}

struct RunResult {
  TrainState state;
  RoutingStats final_routing;
  std::vector<TaskTrainReport> reports;
};

// Trains the seen tasks in suite order; after each stage recalibrates tau and appends one
// row of test scores for every task.
inline RunResult run_sequence(const TaskSuite& suite, const TrainConfig& cfg) {
  RunResult out{init_state(suite, cfg), {}, {}};
  TrainState& s = out.state;
  const auto eval_set = make_eval_set(suite);
  for (const auto& task : suite.tasks) {
    if (!task.seen) continue;
    out.reports.push_back(train_task(s, task, suite.splits_of(task.task_id).train));
    if (uses_prompts(cfg.mode)) calibrate_from_validation(s, suite);
    ++s.stage;
    auto row = evaluate_row(s, eval_set);
    s.perf.rows.push_back(std::move(row.scores));
    out.final_routing = row.routing;
  }
  return out;
}

struct Summary {
  double A_N = 0.0;
  double F_N = 0.0;
  std::optional<double> A_unseen;
};

inline Summary summarize(const PerfMatrix& R, const TaskSuite& suite) {
  return {compute_A_N(R, suite.seen_ids()), compute_F_N(R, suite.seen_ids()), compute_A_unseen(R, suite.unseen_ids())};
}

}  // namespace diana
