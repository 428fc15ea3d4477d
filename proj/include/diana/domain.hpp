#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "diana/error.hpp"
#include "diana/random.hpp"

namespace diana {

enum class FormatKind : int { Extractive = 0, Abstractive = 1, MultipleChoice = 2 };

inline constexpr std::array<FormatKind, 3> kAllFormats = {
    FormatKind::Extractive, FormatKind::Abstractive, FormatKind::MultipleChoice};
inline constexpr std::size_t kNumFormats = kAllFormats.size();

inline constexpr int format_code(FormatKind f) { return static_cast<int>(f); }

inline FormatKind format_from_code(int code) {
  if (code < 0 || code >= static_cast<int>(kNumFormats))
    throw ParseError("unknown format code " + std::to_string(code));
  return static_cast<FormatKind>(code);
}

inline std::string_view format_name(FormatKind f) {
  switch (f) {
    case FormatKind::Extractive: return "extractive";
    case FormatKind::Abstractive: return "abstractive";
    case FormatKind::MultipleChoice: return "multiple_choice";
  }
  return "?";
}

using Token = std::string;
using TokenSeq = std::vector<Token>;

inline constexpr std::string_view kStopToken = "</s>";
inline constexpr std::string_view kQuestionMark = "?";

struct TaskDescriptor {
  int task_id = 0;
  FormatKind format = FormatKind::Extractive;
  std::string name;
  bool seen = true;

  friend bool operator==(const TaskDescriptor&, const TaskDescriptor&) = default;
};

struct QAInstance {
  TokenSeq context;
  TokenSeq question;
  TokenSeq answer;
  std::optional<TokenSeq> choices;
  FormatKind format = FormatKind::Extractive;
  std::optional<int> task_id;

  friend bool operator==(const QAInstance&, const QAInstance&) = default;
};

// What a model is allowed to see at test time: no answer, no task identity.
struct Query {
  TokenSeq context;
  TokenSeq question;
  std::optional<TokenSeq> choices;
  FormatKind format = FormatKind::Extractive;

  friend bool operator==(const Query&, const Query&) = default;
};

inline Query as_query(const QAInstance& inst) {
  return Query{inst.context, inst.question, inst.choices, inst.format};
}

// Throws DataError if the instance breaks its format's shape rules.
inline void validate_instance(const QAInstance& inst, int max_answer_len) {
  if (inst.context.empty() && inst.question.empty()) throw DataError("instance with empty input");
  if (inst.answer.empty()) throw DataError("instance with empty answer");
  switch (inst.format) {
    case FormatKind::Extractive:
      if (inst.answer.size() != 1) throw DataError("extractive answer must be one token");
      if (std::find(inst.context.begin(), inst.context.end(), inst.answer[0]) == inst.context.end())
        throw DataError("extractive answer '" + inst.answer[0] + "' not in context");
      break;
    case FormatKind::MultipleChoice:
      if (inst.answer.size() != 1) throw DataError("multiple-choice answer must be one token");
      if (!inst.choices || inst.choices->size() < 2) throw DataError("multiple-choice needs >= 2 choices");
      if (std::find(inst.choices->begin(), inst.choices->end(), inst.answer[0]) == inst.choices->end())
        throw DataError("multiple-choice answer not among choices");
      break;
    case FormatKind::Abstractive:
      if (static_cast<int>(inst.answer.size()) > max_answer_len)
        throw DataError("abstractive answer longer than K_max");
      break;
  }
}

// Token <-> index map for the global answer vocabulary.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<Token> tokens) : tokens_(std::move(tokens)) {
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      if (!index_.emplace(tokens_[i], static_cast<int>(i)).second)
        throw InvariantError("duplicate vocabulary token '" + tokens_[i] + "'");
    }
  }

  std::size_t size() const { return tokens_.size(); }
  const std::vector<Token>& tokens() const { return tokens_; }
  const Token& token(int idx) const { return tokens_.at(static_cast<std::size_t>(idx)); }

  std::optional<int> find(std::string_view tok) const {
    auto it = index_.find(std::string(tok));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  int index_of(std::string_view tok) const {
    if (auto i = find(tok)) return *i;
    throw DataError("token '" + std::string(tok) + "' not in vocabulary");
  }

  int stop_index() const { return index_of(kStopToken); }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<Token> tokens_;
  std::unordered_map<Token, int> index_;
};

struct GenConfig {
  int n_train = 200;
  int n_val = 50;
  int n_test = 100;
  // Offset of this task's private key/value namespace, counted after the shared keys.
  int key_offset = 0;
  // Fraction of each task's keys taken from the namespace common to all tasks.
  double overlap = 0.2;
  int keys_per_task = 12;
  int pairs_per_context = 6;
  int max_answer_len = 3;

  friend bool operator==(const GenConfig&, const GenConfig&) = default;
};

inline void validate(const GenConfig& g) {
  if (g.n_train <= 0 || g.n_val <= 0 || g.n_test <= 0) throw ConfigError("split counts must be positive");
  if (!(g.overlap >= 0.0 && g.overlap <= 1.0)) throw ConfigError("overlap must lie in [0,1]");
  if (g.keys_per_task < 4) throw ConfigError("keys_per_task must be >= 4");
  if (g.pairs_per_context < 4 || g.pairs_per_context > g.keys_per_task)
    throw ConfigError("pairs_per_context must lie in [4, keys_per_task]");
  if (g.max_answer_len < 2) throw ConfigError("max_answer_len must be >= 2");
  if (g.key_offset < 0) throw ConfigError("negative key offset");
}

inline int shared_key_count(const GenConfig& g) {
  return static_cast<int>(std::lround(g.overlap * g.keys_per_task));
}

inline Token key_token(int n) { return "k" + std::to_string(n); }
inline Token value_token(int n) { return "v" + std::to_string(n); }
inline Token suffix_token(int task_id) { return "s" + std::to_string(task_id); }

// Private namespace offset used for a task inside a suite.
inline int task_key_offset(const GenConfig& g, int task_id) { return task_id * g.keys_per_task; }

struct TaskSplits {
  std::vector<QAInstance> train;
  std::vector<QAInstance> validation;
  std::vector<QAInstance> test;

  friend bool operator==(const TaskSplits&, const TaskSplits&) = default;
};

namespace detail {

// Shared key j answers with shared value facts[j] in every task.
inline std::vector<int> shared_fact_table(std::uint64_t seed, int pool) {
  std::vector<int> perm(static_cast<std::size_t>(pool));
  for (int j = 0; j < pool; ++j) perm[static_cast<std::size_t>(j)] = j;
  Rng rng(mix_seed(seed, 0x5eedfac7ULL));
  rng.shuffle(perm.begin(), perm.end());
  return perm;
}

struct TaskDictionary {
  std::vector<std::pair<Token, Token>> pairs;
  int own_keys = 0;
};

inline TaskDictionary task_dictionary(std::uint64_t seed, const GenConfig& g, Rng& rng) {
  const int n_shared = shared_key_count(g);
  TaskDictionary dict;
  dict.own_keys = g.keys_per_task - n_shared;

  std::vector<int> own_values(static_cast<std::size_t>(dict.own_keys));
  const int base = n_shared + g.key_offset;
  for (int j = 0; j < dict.own_keys; ++j) own_values[static_cast<std::size_t>(j)] = base + j;
  rng.shuffle(own_values.begin(), own_values.end());
  for (int j = 0; j < dict.own_keys; ++j)
    dict.pairs.emplace_back(key_token(base + j), value_token(own_values[static_cast<std::size_t>(j)]));

  const auto facts = shared_fact_table(seed, n_shared);
  for (int j = 0; j < n_shared; ++j) dict.pairs.emplace_back(key_token(j), value_token(facts[static_cast<std::size_t>(j)]));
  return dict;
}

inline QAInstance draw_instance(const TaskDescriptor& d, const TaskDictionary& dict, const GenConfig& g, Rng& rng) {
  std::vector<std::size_t> idx(dict.pairs.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  // Partial Fisher-Yates: first pairs_per_context entries are a uniform ordered sample.
  const auto m = static_cast<std::size_t>(g.pairs_per_context);
  for (std::size_t i = 0; i < m; ++i) {
    const auto j = i + rng.uniform_index(idx.size() - i);
    std::swap(idx[i], idx[j]);
  }
  QAInstance inst;
  inst.format = d.format;
  inst.task_id = d.task_id;
  for (std::size_t i = 0; i < m; ++i) {
    inst.context.push_back(dict.pairs[idx[i]].first);
    inst.context.push_back(dict.pairs[idx[i]].second);
  }
  const auto asked = rng.uniform_index(m);
  const auto& [key, value] = dict.pairs[idx[asked]];
  inst.question = {key, Token(kQuestionMark)};
  inst.answer = {value};
  switch (d.format) {
    case FormatKind::Extractive: break;
    case FormatKind::Abstractive: inst.answer.push_back(suffix_token(d.task_id)); break;
    case FormatKind::MultipleChoice: {
      std::vector<std::size_t> others;
      for (std::size_t i = 0; i < m; ++i)
        if (i != asked) others.push_back(i);
      rng.shuffle(others.begin(), others.end());
      TokenSeq choices{value};
      for (std::size_t i = 0; i < 3; ++i) choices.push_back(dict.pairs[idx[others[i]]].second);
      rng.shuffle(choices.begin(), choices.end());
      inst.choices = std::move(choices);
      break;
    }
  }
  return inst;
}

inline std::string instance_signature(const QAInstance& inst) {
  std::string s;
  for (const auto& t : inst.context) s += t + ' ';
  s += '|';
  for (const auto& t : inst.question) s += t + ' ';
  return s;
}

}  // namespace detail

// Generates train/validation/test splits for one task. Pure in (seed, descriptor, config).
// Unseen tasks receive a test split only.
inline TaskSplits generate_task(std::uint64_t seed, const TaskDescriptor& d, const GenConfig& g) {
  validate(g);
  Rng rng(mix_seed(seed, 0x1000ULL + static_cast<std::uint64_t>(d.task_id)));
  const auto dict = detail::task_dictionary(seed, g, rng);

  std::set<std::string> used;
  auto fill = [&](std::vector<QAInstance>& out, int n) {
    int attempts = 0;
    const int max_attempts = 50 * n + 1000;
    while (static_cast<int>(out.size()) < n) {
      if (++attempts > max_attempts) throw ConfigError("instance space exhausted for task " + d.name);
      auto inst = detail::draw_instance(d, dict, g, rng);
      if (used.insert(detail::instance_signature(inst)).second) out.push_back(std::move(inst));
    }
  };

  TaskSplits splits;
  if (d.seen) {
    fill(splits.train, g.n_train);
    fill(splits.validation, g.n_val);
  }
  fill(splits.test, g.n_test);
  return splits;
}

struct SuiteConfig {
  GenConfig gen;
  std::vector<TaskDescriptor> tasks;

  friend bool operator==(const SuiteConfig&, const SuiteConfig&) = default;
};

// Six seen tasks (two per format, formats interleaved) and one unseen task per format.
inline SuiteConfig default_suite_config() {
  SuiteConfig cfg;
  const std::array<FormatKind, 6> seen_order = {FormatKind::Extractive, FormatKind::Abstractive,
                                                FormatKind::MultipleChoice, FormatKind::Extractive,
                                                FormatKind::Abstractive, FormatKind::MultipleChoice};
  int id = 0;
  for (auto f : seen_order) {
    cfg.tasks.push_back({id, f, std::string(format_name(f)) + "-" + std::to_string(id), true});
    ++id;
  }
  for (auto f : kAllFormats) {
    cfg.tasks.push_back({id, f, std::string(format_name(f)) + "-unseen-" + std::to_string(id), false});
    ++id;
  }
  return cfg;
}

struct TaskSuite {
  std::uint64_t seed = 0;
  SuiteConfig config;
  std::vector<TaskDescriptor> tasks;
  std::vector<TaskSplits> splits;  // parallel to tasks
  Vocabulary vocabulary;

  std::vector<int> seen_ids() const {
    std::vector<int> out;
    for (const auto& t : tasks)
      if (t.seen) out.push_back(t.task_id);
    return out;
  }
  std::vector<int> unseen_ids() const {
    std::vector<int> out;
    for (const auto& t : tasks)
      if (!t.seen) out.push_back(t.task_id);
    return out;
  }
  std::size_t position_of(int task_id) const {
    for (std::size_t i = 0; i < tasks.size(); ++i)
      if (tasks[i].task_id == task_id) return i;
    throw RoutingError("unknown task id " + std::to_string(task_id));
  }
  const TaskDescriptor& descriptor(int task_id) const { return tasks[position_of(task_id)]; }
  const TaskSplits& splits_of(int task_id) const { return splits[position_of(task_id)]; }

  friend bool operator==(const TaskSuite& a, const TaskSuite& b) {
    return a.seed == b.seed && a.config == b.config && a.tasks == b.tasks && a.splits == b.splits &&
           a.vocabulary == b.vocabulary;
  }
};

// Every token any task of the suite can emit or show, in a fixed order.
inline Vocabulary build_vocabulary(const SuiteConfig& cfg) {
  const auto& g = cfg.gen;
  std::vector<Token> toks{Token(kStopToken), Token(kQuestionMark)};
  for (int j = 0; j < shared_key_count(g); ++j) toks.push_back(key_token(j));
  for (int j = 0; j < shared_key_count(g); ++j) toks.push_back(value_token(j));
  const int own = g.keys_per_task - shared_key_count(g);
  for (const auto& d : cfg.tasks) {
    const int off = shared_key_count(g) + task_key_offset(g, d.task_id);
    for (int j = 0; j < own; ++j) toks.push_back(key_token(off + j));
    for (int j = 0; j < own; ++j) toks.push_back(value_token(off + j));
    if (d.format == FormatKind::Abstractive) toks.push_back(suffix_token(d.task_id));
  }
  return Vocabulary(std::move(toks));
}

inline TaskSuite generate_suite(std::uint64_t seed, const SuiteConfig& cfg) {
  validate(cfg.gen);
  std::set<int> ids;
  bool any_seen = false;
  for (const auto& d : cfg.tasks) {
    if (d.task_id < 0) throw ConfigError("negative task id");
    if (!ids.insert(d.task_id).second) throw ConfigError("duplicate task_id " + std::to_string(d.task_id));
    any_seen = any_seen || d.seen;
  }
  if (!any_seen) throw ConfigError("suite has no seen tasks");

  TaskSuite suite;
  suite.seed = seed;
  suite.config = cfg;
  suite.tasks = cfg.tasks;
  suite.vocabulary = build_vocabulary(cfg);
  for (const auto& d : cfg.tasks) {
    GenConfig g = cfg.gen;
    g.key_offset = task_key_offset(cfg.gen, d.task_id);
    suite.splits.push_back(generate_task(seed, d, g));
  }
  return suite;
}

}  // namespace diana
