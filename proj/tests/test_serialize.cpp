#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "diana/serialize.hpp"

using namespace diana;

namespace {

const TaskSuite& suite() {
  static const TaskSuite s = [] {
    auto cfg = default_suite_config();
    cfg.gen.n_train = 40;
    cfg.gen.n_val = 10;
    cfg.gen.n_test = 12;
    return generate_suite(21, cfg);
  }();
  return s;
}

const RunResult& run() {
  static const RunResult r = [] {
    auto c = TrainConfig::for_mode(Mode::Diana);
    c.epochs_per_task = 2;
    c.seed = 8;
    return run_sequence(suite(), c);
  }();
  return r;
}

}  // namespace

TEST(Serialize, ShortestDoubles) {
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(1.0), "1");
  EXPECT_EQ(format_double(2.0 / 3.0), "0.6666666666666666");
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const double v = rng.normal(0.0, 100.0);
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
}

TEST(Serialize, SuiteRoundTrip) {
  const Json j = to_json(suite());
  const auto back = suite_from_json(j);
  EXPECT_EQ(back.tasks, suite().tasks);
  EXPECT_EQ(back.splits, suite().splits);
  EXPECT_EQ(back.vocabulary, suite().vocabulary);
  EXPECT_EQ(back.config, suite().config);
  EXPECT_EQ(dump(to_json(back)), dump(j));
}

TEST(Serialize, SuiteRejectsBadDocuments) {
  Json j = to_json(suite());
  j["version"] = "diana-suite/0";
  EXPECT_THROW(suite_from_json(j), CompatibilityError);
  j = to_json(suite());
  j["tasks"][0]["train"][0]["answer"] = Json::array({"nonexistent"});
  EXPECT_THROW(suite_from_json(j), Error);
  j = to_json(suite());
  j["tasks"][0]["train"][0]["task_id"] = 5;
  EXPECT_THROW(suite_from_json(j), DataError);
  EXPECT_THROW(suite_from_json(Json::array()), ParseError);
}

TEST(Serialize, CheckpointRoundTripIsExact) {
  const auto& s = run().state;
  const Json j = checkpoint_to_json(s, true);
  const auto back = state_from_checkpoint(j);
  EXPECT_EQ(back, s);
  EXPECT_EQ(dump(checkpoint_to_json(back, true)), dump(j));
  // Restored state keeps training identically.
  auto c1 = s;
  auto c2 = back;
  EXPECT_EQ(c1.rng.next_u64(), c2.rng.next_u64());
}

TEST(Serialize, CheckpointWithoutMemory) {
  const auto& s = run().state;
  const Json j = checkpoint_to_json(s, false);
  EXPECT_FALSE(j.contains("memory"));
  const auto back = state_from_checkpoint(j);
  EXPECT_TRUE(back.memory.empty());
  EXPECT_EQ(back.prompts, s.prompts);
  EXPECT_EQ(back.keys, s.keys);
  EXPECT_EQ(back.backbone, s.backbone);
  EXPECT_EQ(back.perf, s.perf);
}

TEST(Serialize, InfiniteTauIsNull) {
  auto c = TrainConfig::for_mode(Mode::Diana);
  const auto s = init_state(suite(), c);
  const Json j = checkpoint_to_json(s, false);
  EXPECT_TRUE(j["keys"]["tau"].is_null());
  EXPECT_TRUE(std::isinf(state_from_checkpoint(j).keys.tau()));
}

TEST(Serialize, CheckpointErrors) {
  Json j = checkpoint_to_json(run().state, false);
  j["version"] = "other/1";
  EXPECT_THROW(state_from_checkpoint(j), CompatibilityError);
  j = checkpoint_to_json(run().state, false);
  j["featurizer"]["id"] = "something-else";
  EXPECT_THROW(state_from_checkpoint(j), CompatibilityError);
  j = checkpoint_to_json(run().state, false);
  j["backbone"]["W"][0].push_back(0.0);
  EXPECT_THROW(state_from_checkpoint(j), ParseError);
  j = checkpoint_to_json(run().state, false);
  j.erase("prompts");
  EXPECT_THROW(state_from_checkpoint(j), ParseError);
}

TEST(Serialize, CompatibilityCheck) {
  EXPECT_NO_THROW(check_compatible(run().state, suite()));
  auto cfg = suite().config;
  cfg.gen.keys_per_task = 10;
  const auto other = generate_suite(21, cfg);
  EXPECT_THROW(check_compatible(run().state, other), CompatibilityError);
}

TEST(Serialize, TrainConfigParsing) {
  const auto c = train_config_from_json(Json{{"mode", "replay"}, {"epochs_per_task", 3}, {"prompts", {{"task_len", 6}}}});
  EXPECT_EQ(c.mode, Mode::Replay);
  EXPECT_EQ(c.epochs_per_task, 3);
  EXPECT_EQ(c.prompts.task_len, 6);
  EXPECT_EQ(c.prompts.dim, 64);
  EXPECT_THROW(train_config_from_json(Json{{"epochs", 3}}), ConfigError);
  EXPECT_THROW(train_config_from_json(Json{{"prompts", {{"length", 3}}}}), ConfigError);
  EXPECT_THROW(train_config_from_json(Json{{"mode", "fancy"}}), ConfigError);
  EXPECT_THROW(train_config_from_json(Json{{"alpha", "high"}}), ParseError);
  EXPECT_THROW(train_config_from_json(Json{{"mode", "seq_ft"}, {"rehearsal_ratio", 0.2}}), ConfigError);
  // Memory-less mode defaults and overrides drop rehearsal.
  EXPECT_EQ(train_config_from_json(Json{{"mode", "seq_ft"}}).rehearsal_ratio, 0.0);
  EXPECT_EQ(train_config_from_json(Json{{"rehearsal_ratio", 0.3}}, Mode::DianaWoMemory).rehearsal_ratio, 0.0);
  const auto full = TrainConfig::for_mode(Mode::DianaWoMeta);
  EXPECT_EQ(train_config_from_json(to_json(full)), full);
}

TEST(Serialize, SuiteConfigParsing) {
  const auto c = suite_config_from_json(Json{{"gen", {{"n_train", 7}}}});
  EXPECT_EQ(c.gen.n_train, 7);
  EXPECT_EQ(c.tasks, default_suite_config().tasks);
  EXPECT_THROW(suite_config_from_json(Json{{"generator", {}}}), ConfigError);
  EXPECT_THROW(suite_config_from_json(Json{{"gen", {{"overlap", 2.0}}}}), ConfigError);
}

TEST(Serialize, EvalSetIgnoresTaskIds) {
  Json j = to_json(suite());
  const auto clean = eval_set_from_json(j);
  for (auto& t : j["tasks"])
    for (std::size_t i = 0; i < t["test"].size(); ++i) {
      if (i % 2) t["test"][i].erase("task_id");
      else t["test"][i]["task_id"] = 12345;
    }
  const auto mutated = eval_set_from_json(j);
  ASSERT_EQ(clean.size(), mutated.size());
  for (std::size_t i = 0; i < clean.size(); ++i) {
    EXPECT_EQ(clean[i].queries, mutated[i].queries);
    EXPECT_EQ(clean[i].golds, mutated[i].golds);
  }
  EXPECT_EQ(evaluate_row(run().state, mutated).scores, run().state.perf.rows.back());
}

TEST(Serialize, MetricsCsv) {
  std::ostringstream os;
  write_metrics_csv(os, run().state.perf, suite().tasks);
  std::istringstream in(os.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "stage,task_id,metric,value");
  int n = 0;
  while (std::getline(in, line)) ++n;
  EXPECT_EQ(n, 6 * 9);
  EXPECT_NE(os.str().find("\n1,0,em,"), std::string::npos);
  EXPECT_NE(os.str().find("\n6,8,accuracy,"), std::string::npos);
}

TEST(Serialize, SummaryJson) {
  const auto sm = summarize(run().state.perf, suite());
  const Json j = summary_json(sm, run().state.config, run().final_routing);
  EXPECT_EQ(j["mode"], "diana");
  EXPECT_DOUBLE_EQ(j["A_N"].get<double>(), sm.A_N);
  EXPECT_TRUE(j.contains("routing"));
  auto seq = TrainConfig::for_mode(Mode::SeqFt);
  EXPECT_FALSE(summary_json(Summary{0.5, 0.1, std::nullopt}, seq, {}).contains("routing"));
  EXPECT_TRUE(summary_json(Summary{0.5, 0.1, std::nullopt}, seq, {})["A_unseen"].is_null());
}
