#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>
#include <string>

#include "json.hpp"

#include "diana/domain.hpp"
#include "diana/error.hpp"
#include "diana/featurizer.hpp"
#include "diana/trainer.hpp"

namespace diana {

using Json = nlohmann::json;

inline constexpr std::string_view kCheckpointVersion = "diana-lite/1";
inline constexpr std::string_view kSuiteVersion = "diana-suite/1";

namespace detail {

// Rejects keys outside `allowed` so typos in config files fail loudly.
inline void check_keys(const Json& j, std::initializer_list<std::string_view> allowed, std::string_view what) {
  if (!j.is_object()) throw ConfigError(std::string(what) + " must be a JSON object");
  for (const auto& [k, _] : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || k == a;
    if (!ok) throw ConfigError("unknown key '" + k + "' in " + std::string(what));
  }
}

template <class T>
void read_opt(const Json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) out = it->template get<T>();
}

inline Json vectors_json(const std::vector<Vector>& vs) {
  Json a = Json::array();
  for (const auto& v : vs) a.push_back(v);
  return a;
}

inline std::vector<Vector> vectors_from(const Json& j, std::size_t dim) {
  std::vector<Vector> out;
  for (const auto& v : j) {
    out.push_back(v.get<Vector>());
    if (out.back().size() != dim) throw ParseError("vector of dimension " + std::to_string(out.back().size()));
  }
  return out;
}

inline Prompt prompt_from(const Json& j, std::size_t len, std::size_t dim) {
  Prompt p{vectors_from(j, dim)};
  if (p.length() != len) throw ParseError("prompt of length " + std::to_string(p.length()));
  return p;
}

// Wraps library exceptions from a loading step into ParseError.
template <class F>
auto guarded(std::string_view what, F&& f) {
  try {
    return f();
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw ParseError("malformed " + std::string(what) + ": " + e.what());
  }
}

}  // namespace detail

// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

// ---- suite -------------------------------------------------------------------------------

inline Json to_json(const GenConfig& g) {
  return Json{{"n_train", g.n_train},
              {"n_val", g.n_val},
              {"n_test", g.n_test},
              {"key_offset", g.key_offset},
              {"overlap", g.overlap},
              {"keys_per_task", g.keys_per_task},
              {"pairs_per_context", g.pairs_per_context},
              {"max_answer_len", g.max_answer_len}};
}

inline GenConfig gen_config_from_json(const Json& j) {
  detail::check_keys(j,
                     {"n_train", "n_val", "n_test", "key_offset", "overlap", "keys_per_task", "pairs_per_context",
                      "max_answer_len"},
                     "gen config");
  GenConfig g;
  detail::guarded("gen config", [&] {
    detail::read_opt(j, "n_train", g.n_train);
    detail::read_opt(j, "n_val", g.n_val);
    detail::read_opt(j, "n_test", g.n_test);
    detail::read_opt(j, "key_offset", g.key_offset);
    detail::read_opt(j, "overlap", g.overlap);
    detail::read_opt(j, "keys_per_task", g.keys_per_task);
    detail::read_opt(j, "pairs_per_context", g.pairs_per_context);
    detail::read_opt(j, "max_answer_len", g.max_answer_len);
    return 0;
  });
  validate(g);
  return g;
}

inline Json to_json(const TaskDescriptor& d) {
  return Json{{"task_id", d.task_id}, {"format", format_code(d.format)}, {"name", d.name}, {"seen", d.seen}};
}

inline TaskDescriptor descriptor_from_json(const Json& j) {
  detail::check_keys(j, {"task_id", "format", "name", "seen"}, "task descriptor");
  return detail::guarded("task descriptor", [&] {
    TaskDescriptor d;
    d.task_id = j.at("task_id").get<int>();
    d.format = format_from_code(j.at("format").get<int>());
    d.name = j.value("name", std::string(format_name(d.format)) + "-" + std::to_string(d.task_id));
    d.seen = j.value("seen", true);
    return d;
  });
}

inline Json to_json(const SuiteConfig& c) {
  Json tasks = Json::array();
  for (const auto& d : c.tasks) tasks.push_back(to_json(d));
  return Json{{"gen", to_json(c.gen)}, {"tasks", tasks}};
}

// Missing "gen" keeps the generator defaults; missing "tasks" uses the default task list.
inline SuiteConfig suite_config_from_json(const Json& j) {
  detail::check_keys(j, {"gen", "tasks"}, "suite config");
  SuiteConfig c = default_suite_config();
  if (auto it = j.find("gen"); it != j.end()) c.gen = gen_config_from_json(*it);
  if (auto it = j.find("tasks"); it != j.end()) {
    if (!it->is_array()) throw ConfigError("tasks must be an array");
    c.tasks.clear();
    for (const auto& t : *it) c.tasks.push_back(descriptor_from_json(t));
  }
  return c;
}

inline Json to_json(const QAInstance& inst) {
  Json j{{"context", inst.context}, {"question", inst.question}, {"answer", inst.answer},
         {"format", format_code(inst.format)}};
  if (inst.choices) j["choices"] = *inst.choices;
  if (inst.task_id) j["task_id"] = *inst.task_id;
  return j;
}

inline QAInstance instance_from_json(const Json& j, int max_answer_len) {
  auto inst = detail::guarded("instance", [&] {
    QAInstance i;
    i.context = j.at("context").get<TokenSeq>();
    i.question = j.at("question").get<TokenSeq>();
    i.answer = j.at("answer").get<TokenSeq>();
    i.format = format_from_code(j.at("format").get<int>());
    if (auto it = j.find("choices"); it != j.end()) i.choices = it->get<TokenSeq>();
    if (auto it = j.find("task_id"); it != j.end()) i.task_id = it->get<int>();
    return i;
  });
  validate_instance(inst, max_answer_len);
  return inst;
}

// Test-time view of an instance: the task id field is never read.
inline Query query_from_json(const Json& j) {
  auto q = detail::guarded("instance", [&] {
    Query out;
    out.context = j.at("context").get<TokenSeq>();
    out.question = j.at("question").get<TokenSeq>();
    out.format = format_from_code(j.at("format").get<int>());
    if (auto it = j.find("choices"); it != j.end()) out.choices = it->get<TokenSeq>();
    return out;
  });
  if (q.context.empty() && q.question.empty()) throw DataError("instance with empty input");
  return q;
}

inline Json to_json(const TaskSuite& s) {
  Json tasks = Json::array();
  for (std::size_t i = 0; i < s.tasks.size(); ++i) {
    Json t = to_json(s.tasks[i]);
    auto split = [](const std::vector<QAInstance>& v) {
      Json a = Json::array();
      for (const auto& inst : v) a.push_back(to_json(inst));
      return a;
    };
    t["train"] = split(s.splits[i].train);
    t["validation"] = split(s.splits[i].validation);
    t["test"] = split(s.splits[i].test);
    tasks.push_back(std::move(t));
  }
  return Json{{"version", kSuiteVersion},
              {"seed", s.seed},
              {"config", to_json(s.config)},
              {"vocabulary", s.vocabulary.tokens()},
              {"tasks", tasks}};
}

inline void check_version(const Json& j, std::string_view expected) {
  const auto it = j.find("version");
  if (it == j.end() || !it->is_string() || it->get<std::string>() != expected)
    throw CompatibilityError("expected document version " + std::string(expected));
}

inline TaskSuite suite_from_json(const Json& j) {
  if (!j.is_object()) throw ParseError("suite document is not an object");
  check_version(j, kSuiteVersion);
  TaskSuite s;
  detail::guarded("suite", [&] {
    s.seed = j.at("seed").get<std::uint64_t>();
    s.config = suite_config_from_json(j.at("config"));
    s.vocabulary = Vocabulary(j.at("vocabulary").get<std::vector<Token>>());
    return 0;
  });
  const auto& tasks = detail::guarded("suite", [&]() -> const Json& { return j.at("tasks"); });
  if (!tasks.is_array() || tasks.size() != s.config.tasks.size()) throw ParseError("suite task list mismatch");
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto& t = tasks[i];
    TaskDescriptor d = detail::guarded("suite", [&] {
      return TaskDescriptor{t.at("task_id").get<int>(), format_from_code(t.at("format").get<int>()),
                            t.at("name").get<std::string>(), t.at("seen").get<bool>()};
    });
    if (!(d == s.config.tasks[i])) throw ParseError("suite task " + std::to_string(d.task_id) + " disagrees with config");
    TaskSplits sp;
    auto load = [&](const char* key, std::vector<QAInstance>& out) {
      const auto& arr = detail::guarded("suite", [&]() -> const Json& { return t.at(key); });
      for (const auto& inst : arr) {
        out.push_back(instance_from_json(inst, s.config.gen.max_answer_len));
        if (out.back().task_id != d.task_id) throw DataError("instance filed under the wrong task");
        if (out.back().format != d.format) throw DataError("instance format disagrees with its task");
      }
    };
    load("train", sp.train);
    load("validation", sp.validation);
    load("test", sp.test);
    s.tasks.push_back(d);
    s.splits.push_back(std::move(sp));
  }
  for (const auto& sp : s.splits)
    for (const auto* split : {&sp.train, &sp.validation, &sp.test})
      for (const auto& inst : *split)
        for (const auto& tok : inst.answer) s.vocabulary.index_of(tok);
  return s;
}

// Evaluation set read straight from a suite document. Instances become queries without
// their task id ever being parsed.
inline std::vector<EvalTask> eval_set_from_json(const Json& j) {
  if (!j.is_object()) throw ParseError("suite document is not an object");
  check_version(j, kSuiteVersion);
  std::vector<EvalTask> out;
  const auto& tasks = detail::guarded("suite", [&]() -> const Json& { return j.at("tasks"); });
  for (const auto& t : tasks) {
    EvalTask e = detail::guarded("suite", [&] {
      return EvalTask{t.at("task_id").get<int>(), format_from_code(t.at("format").get<int>()), t.at("seen").get<bool>(),
                      {}, {}};
    });
    const auto& test = detail::guarded("suite", [&]() -> const Json& { return t.at("test"); });
    for (const auto& inst : test) {
      e.queries.push_back(query_from_json(inst));
      e.golds.push_back(detail::guarded("instance", [&] { return inst.at("answer").get<TokenSeq>(); }));
    }
    out.push_back(std::move(e));
  }
  return out;
}

// ---- train config ------------------------------------------------------------------------

inline Json to_json(const PromptConfig& p) {
  return Json{{"dim", p.dim},
              {"general_len", p.general_len},
              {"format_len", p.format_len},
              {"task_len", p.task_len},
              {"meta_pool", p.meta_pool},
              {"meta_len", p.meta_len},
              {"meta_select", p.meta_select},
              {"init_stddev", p.init_stddev},
              {"task_init_noise", p.task_init_noise}};
}

inline Json to_json(const TrainConfig& c) {
  return Json{{"alpha", c.alpha},
              {"beta", c.beta},
              {"epochs_per_task", c.epochs_per_task},
              {"batch_size", c.batch_size},
              {"lr_backbone", c.lr_backbone},
              {"lr_prompt", c.lr_prompt},
              {"lr_key", c.lr_key},
              {"grad_clip", c.grad_clip},
              {"rehearsal_ratio", c.rehearsal_ratio},
              {"unseen_update_prob", c.unseen_update_prob},
              {"mode", mode_name(c.mode)},
              {"seed", c.seed},
              {"memory_capacity", c.memory_capacity},
              {"triplet_form", triplet_form_name(c.triplet_form)},
              {"feature_dim", c.feature_dim},
              {"prompts", to_json(c.prompts)},
              {"backbone_init_stddev", c.backbone_init_stddev}};
}

// Fields absent from `j` take the defaults of the chosen mode; in particular modes without
// memory default to rehearsal_ratio 0. `mode_override` wins over the file's mode and, for a
// mode without memory, also zeroes the file's rehearsal_ratio.
inline TrainConfig train_config_from_json(const Json& j, std::optional<Mode> mode_override = std::nullopt) {
  detail::check_keys(j,
                     {"alpha", "beta", "epochs_per_task", "batch_size", "lr_backbone", "lr_prompt", "lr_key",
                      "grad_clip", "rehearsal_ratio", "unseen_update_prob", "mode", "seed", "memory_capacity",
                      "triplet_form", "feature_dim", "prompts", "backbone_init_stddev"},
                     "train config");
  Mode mode = Mode::Diana;
  if (auto it = j.find("mode"); it != j.end())
    mode = mode_from_name(detail::guarded("train config", [&] { return it->get<std::string>(); }));
  if (mode_override) mode = *mode_override;
  TrainConfig c = TrainConfig::for_mode(mode);
  detail::guarded("train config", [&] {
    detail::read_opt(j, "alpha", c.alpha);
    detail::read_opt(j, "beta", c.beta);
    detail::read_opt(j, "epochs_per_task", c.epochs_per_task);
    detail::read_opt(j, "batch_size", c.batch_size);
    detail::read_opt(j, "lr_backbone", c.lr_backbone);
    detail::read_opt(j, "lr_prompt", c.lr_prompt);
    detail::read_opt(j, "lr_key", c.lr_key);
    detail::read_opt(j, "grad_clip", c.grad_clip);
    detail::read_opt(j, "rehearsal_ratio", c.rehearsal_ratio);
    detail::read_opt(j, "unseen_update_prob", c.unseen_update_prob);
    detail::read_opt(j, "seed", c.seed);
    detail::read_opt(j, "memory_capacity", c.memory_capacity);
    if (auto it = j.find("triplet_form"); it != j.end()) c.triplet_form = triplet_form_from_name(it->get<std::string>());
    detail::read_opt(j, "feature_dim", c.feature_dim);
    detail::read_opt(j, "backbone_init_stddev", c.backbone_init_stddev);
    if (mode_override && !uses_memory(*mode_override)) c.rehearsal_ratio = 0.0;
    c.prompts.dim = c.feature_dim;
    return 0;
  });
  if (auto it = j.find("prompts"); it != j.end()) {
    const auto& p = *it;
    detail::check_keys(p,
                       {"dim", "general_len", "format_len", "task_len", "meta_pool", "meta_len", "meta_select",
                        "init_stddev", "task_init_noise"},
                       "prompt config");
    detail::guarded("prompt config", [&] {
      detail::read_opt(p, "dim", c.prompts.dim);
      detail::read_opt(p, "general_len", c.prompts.general_len);
      detail::read_opt(p, "format_len", c.prompts.format_len);
      detail::read_opt(p, "task_len", c.prompts.task_len);
      detail::read_opt(p, "meta_pool", c.prompts.meta_pool);
      detail::read_opt(p, "meta_len", c.prompts.meta_len);
      detail::read_opt(p, "meta_select", c.prompts.meta_select);
      detail::read_opt(p, "init_stddev", c.prompts.init_stddev);
      detail::read_opt(p, "task_init_noise", c.prompts.task_init_noise);
      return 0;
    });
  }
  validate(c);
  return c;
}

// ---- checkpoint --------------------------------------------------------------------------

inline Json to_json(const PerfMatrix& R) { return Json{{"columns", R.columns}, {"rows", R.rows}}; }

inline PerfMatrix perf_from_json(const Json& j) {
  return detail::guarded("perf matrix", [&] {
    PerfMatrix R{j.at("columns").get<std::vector<int>>(), j.at("rows").get<std::vector<std::vector<double>>>()};
    for (const auto& row : R.rows)
      if (row.size() != R.columns.size()) throw ParseError("perf matrix row width mismatch");
    return R;
  });
}

inline Json checkpoint_to_json(const TrainState& s, bool include_memory) {
  const auto& ps = s.prompts;
  Json formats = Json::array();
  Json unseen = Json::array();
  for (auto f : kAllFormats) {
    formats.push_back(detail::vectors_json(ps.format(f).vectors));
    unseen.push_back(detail::vectors_json(ps.unseen(f).vectors));
  }
  Json tasks = Json::array();
  for (int id : ps.task_ids()) tasks.push_back(Json{{"task_id", id}, {"vectors", detail::vectors_json(ps.task(id).vectors)}});
  Json meta = Json::array();
  for (const auto& p : ps.meta_pool()) meta.push_back(detail::vectors_json(p.vectors));

  Json task_keys = Json::array();
  for (const auto& k : s.keys.task_keys()) task_keys.push_back(Json{{"task_id", k.task_id}, {"key", k.key}});
  Json meta_keys = Json::array();
  for (const auto& k : s.keys.meta_keys()) meta_keys.push_back(Json{{"index", k.index}, {"key", k.key}});
  const double tau = s.keys.tau();

  Json W = Json::array();
  for (std::size_t r = 0; r < s.backbone.W.rows; ++r) {
    const auto row = s.backbone.W.row(r);
    W.push_back(Vector(row.begin(), row.end()));
  }

  Json j{{"version", kCheckpointVersion},
         {"config", to_json(s.config)},
         {"featurizer", Json{{"id", kFeaturizerId}, {"dim", s.config.feature_dim}}},
         {"vocabulary", s.vocab.tokens()},
         {"prompts", Json{{"general", detail::vectors_json(ps.general().vectors)},
                          {"format", formats},
                          {"unseen", unseen},
                          {"task", tasks},
                          {"meta", meta}}},
         {"keys", Json{{"task", task_keys}, {"meta", meta_keys}, {"tau", std::isinf(tau) ? Json(nullptr) : Json(tau)}}},
         {"backbone", Json{{"W", W}, {"step_emb", detail::vectors_json(s.backbone.step_emb)},
                           {"stop_token", s.backbone.stop_token}}},
         {"rng", s.rng.state()},
         {"stage", s.stage},
         {"trained_tasks", s.trained_tasks},
         {"perf", to_json(s.perf)}};
  if (include_memory) {
    Json res = Json::array();
    for (const auto& [id, r] : s.memory.reservoirs()) {
      Json items = Json::array();
      for (const auto& inst : r.items) items.push_back(to_json(inst));
      res.push_back(Json{{"task_id", id}, {"observed", r.observed}, {"items", items}});
    }
    j["memory"] = Json{{"capacity", s.memory.capacity()}, {"rng", s.memory.rng().state()}, {"reservoirs", res}};
  }
  return j;
}

// Rebuilds a TrainState. Without a stored memory buffer the state gets an empty one.
inline TrainState state_from_checkpoint(const Json& j) {
  if (!j.is_object()) throw ParseError("checkpoint is not an object");
  check_version(j, kCheckpointVersion);
  return detail::guarded("checkpoint", [&] {
    TrainState s;
    s.config = train_config_from_json(j.at("config"));
    const auto& fz = j.at("featurizer");
    if (fz.at("id").get<std::string>() != kFeaturizerId) throw CompatibilityError("checkpoint featurizer differs");
    if (fz.at("dim").get<int>() != s.config.feature_dim) throw CompatibilityError("featurizer dim disagrees with config");
    s.vocab = Vocabulary(j.at("vocabulary").get<std::vector<Token>>());
    const auto dim = static_cast<std::size_t>(s.config.feature_dim);
    const auto& pc = s.config.prompts;

    Rng scratch(0);
    s.prompts = PromptStore(pc, scratch);
    const auto& pj = j.at("prompts");
    s.prompts.general() = detail::prompt_from(pj.at("general"), static_cast<std::size_t>(pc.general_len), dim);
    if (pj.at("format").size() != kNumFormats || pj.at("unseen").size() != kNumFormats)
      throw ParseError("prompt store needs one format and one unseen prompt per format");
    for (auto f : kAllFormats) {
      const auto i = static_cast<std::size_t>(format_code(f));
      s.prompts.format(f) = detail::prompt_from(pj.at("format")[i], static_cast<std::size_t>(pc.format_len), dim);
      s.prompts.unseen(f) = detail::prompt_from(pj.at("unseen")[i], static_cast<std::size_t>(pc.task_len), dim);
    }
    for (const auto& t : pj.at("task"))
      s.prompts.restore_task_prompt(t.at("task_id").get<int>(),
                                    detail::prompt_from(t.at("vectors"), static_cast<std::size_t>(pc.task_len), dim));
    const auto& mj = pj.at("meta");
    if (mj.size() != static_cast<std::size_t>(pc.meta_pool)) throw ParseError("meta pool size mismatch");
    for (std::size_t i = 0; i < mj.size(); ++i)
      s.prompts.meta_pool()[i] = detail::prompt_from(mj[i], static_cast<std::size_t>(pc.meta_len), dim);

    s.keys = KeySpace(s.config.feature_dim, pc.meta_pool, scratch);
    const auto& kj = j.at("keys");
    for (const auto& t : kj.at("task")) {
      auto key = t.at("key").get<Vector>();
      if (key.size() != dim) throw ParseError("task key dimension mismatch");
      s.keys.add_task_key(t.at("task_id").get<int>(), std::move(key));
    }
    const auto& mk = kj.at("meta");
    if (mk.size() != s.keys.meta_keys().size()) throw ParseError("meta key count mismatch");
    for (std::size_t i = 0; i < mk.size(); ++i) {
      auto& dst = s.keys.meta_keys()[i];
      if (mk[i].at("index").get<int>() != dst.index) throw ParseError("meta keys out of order");
      dst.key = mk[i].at("key").get<Vector>();
      if (dst.key.size() != dim) throw ParseError("meta key dimension mismatch");
    }
    const auto& tau = kj.at("tau");
    s.keys.set_tau(tau.is_null() ? std::numeric_limits<double>::infinity() : tau.get<double>());

    const auto& bj = j.at("backbone");
    const auto rows = detail::vectors_from(bj.at("W"), dim);
    if (rows.size() != s.vocab.size()) throw ParseError("backbone W rows disagree with vocabulary");
    s.backbone.W = Matrix(rows.size(), dim);
    for (std::size_t r = 0; r < rows.size(); ++r) std::copy(rows[r].begin(), rows[r].end(), s.backbone.W.row(r).begin());
    s.backbone.step_emb = detail::vectors_from(bj.at("step_emb"), dim);
    if (s.backbone.step_emb.empty()) throw ParseError("backbone has no step embeddings");
    s.backbone.stop_token = bj.at("stop_token").get<int>();
    if (s.backbone.stop_token != s.vocab.stop_index()) throw ParseError("stop token index mismatch");

    s.memory = MemoryBuffer(s.config.memory_capacity, 0);
    if (auto it = j.find("memory"); it != j.end()) {
      if (it->at("capacity").get<int>() != s.config.memory_capacity) throw ParseError("memory capacity mismatch");
      std::map<int, MemoryBuffer::Reservoir> res;
      for (const auto& r : it->at("reservoirs")) {
        MemoryBuffer::Reservoir rv;
        rv.observed = r.at("observed").get<std::uint64_t>();
        for (const auto& inst : r.at("items")) rv.items.push_back(instance_from_json(inst, s.backbone.max_steps()));
        res.emplace(r.at("task_id").get<int>(), std::move(rv));
      }
      s.memory.restore(std::move(res), it->at("rng").get<std::string>());
    }
    s.rng.set_state(j.at("rng").get<std::string>());
    s.stage = j.at("stage").get<int>();
    s.trained_tasks = j.at("trained_tasks").get<std::vector<int>>();
    s.perf = perf_from_json(j.at("perf"));
    for (int id : s.trained_tasks)
      if (uses_prompts(s.config.mode) && (!s.prompts.has_task(id) || !s.keys.find_task(id)))
        throw InvariantError("checkpoint lacks prompt or key of trained task " + std::to_string(id));
    return s;
  });
}

// Refuses to evaluate a checkpoint against a suite it was not trained for.
inline void check_compatible(const TrainState& s, const TaskSuite& suite) {
  if (!(s.vocab == suite.vocabulary)) throw CompatibilityError("suite vocabulary differs from checkpoint vocabulary");
  std::vector<int> ids;
  for (const auto& t : suite.tasks) ids.push_back(t.task_id);
  if (ids != s.perf.columns) throw CompatibilityError("suite tasks differ from checkpoint perf columns");
}

// ---- reports -----------------------------------------------------------------------------

// One row per (stage, task): stage is 1-based.
inline void write_metrics_csv(std::ostream& os, const PerfMatrix& R, const std::vector<TaskDescriptor>& tasks,
                              std::size_t first_stage = 1) {
  os << "stage,task_id,metric,value\n";
  for (std::size_t i = 0; i < R.rows.size(); ++i)
    for (const auto& t : tasks)
      os << (first_stage + i) << ',' << t.task_id << ',' << metric_name(t.format) << ','
         << format_double(R.at(i, t.task_id)) << '\n';
}

inline Json summary_json(const Summary& sm, const TrainConfig& cfg, const RoutingStats& routing) {
  Json j{{"A_N", sm.A_N},
         {"F_N", sm.F_N},
         {"A_unseen", sm.A_unseen ? Json(*sm.A_unseen) : Json(nullptr)},
         {"seed", cfg.seed},
         {"mode", mode_name(cfg.mode)},
         {"config", to_json(cfg)}};
  if (uses_prompts(cfg.mode))
    j["routing"] = Json{{"seen_accuracy", routing.seen_accuracy()}, {"unseen_detection", routing.unseen_detection()}};
  return j;
}

// ---- files -------------------------------------------------------------------------------

inline std::string dump(const Json& j) { return j.dump(2) + "\n"; }

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return Json::parse(buf.str());
  } catch (const std::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  out << text;
  if (!out) throw DataError("write failed for " + path);
}

}  // namespace diana
