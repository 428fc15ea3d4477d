#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"

#include "diana/serialize.hpp"

namespace fs = std::filesystem;
using namespace diana;

namespace {

// DIANA_SEED, when set, replaces the --seed flag.
std::uint64_t resolve_seed(std::uint64_t flag_seed) {
  const char* env = std::getenv("DIANA_SEED");
  if (!env) return flag_seed;
  std::uint64_t v = 0;
  const std::string_view s(env);
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size() || s.empty())
    throw CLI::ValidationError("DIANA_SEED", "not an unsigned integer: '" + std::string(s) + "'");
  return v;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw DataError("cannot create directory " + dir);
}

int cmd_gen_tasks(std::uint64_t seed, const std::string& config_path, const std::string& out) {
  const auto cfg = suite_config_from_json(read_json_file(config_path));
  const auto suite = generate_suite(resolve_seed(seed), cfg);
  write_text_file(out, dump(to_json(suite)));
  std::cerr << "wrote " << out << " (" << suite.tasks.size() << " tasks, V=" << suite.vocabulary.size() << ")\n";
  return 0;
}

int cmd_train(const std::string& suite_path, const std::string& config_path, const std::string& out_dir,
              const std::optional<std::string>& mode, std::optional<std::uint64_t> seed, bool save_memory) {
  const auto suite = suite_from_json(read_json_file(suite_path));
  const Json cfg_json = config_path.empty() ? Json::object() : read_json_file(config_path);
  std::optional<Mode> mode_override;
  if (mode) mode_override = mode_from_name(*mode);
  auto cfg = train_config_from_json(cfg_json, mode_override);
  if (seed) cfg.seed = *seed;
  cfg.seed = resolve_seed(cfg.seed);

  const auto result = run_sequence(suite, cfg);
  const auto sm = summarize(result.state.perf, suite);

  ensure_dir(out_dir);
  write_text_file((fs::path(out_dir) / "checkpoint.json").string(), dump(checkpoint_to_json(result.state, save_memory)));
  std::ostringstream csv;
  write_metrics_csv(csv, result.state.perf, suite.tasks);
  write_text_file((fs::path(out_dir) / "metrics.csv").string(), csv.str());
  write_text_file((fs::path(out_dir) / "summary.json").string(), dump(summary_json(sm, cfg, result.final_routing)));

  std::cerr << "mode " << mode_name(cfg.mode) << " seed " << cfg.seed << ": A_N " << sm.A_N << " F_N " << sm.F_N;
  if (sm.A_unseen) std::cerr << " A_unseen " << *sm.A_unseen;
  std::cerr << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& suite_path, const std::string& out_dir) {
  const auto state = state_from_checkpoint(read_json_file(checkpoint_path));
  const Json suite_json = read_json_file(suite_path);
  const auto suite = suite_from_json(suite_json);
  check_compatible(state, suite);
  // Scoring reads queries through the id-free loader.
  const auto eval_set = eval_set_from_json(suite_json);
  const auto row = evaluate_row(state, eval_set);

  PerfMatrix R = state.perf;
  if (R.rows.empty())
    R.rows.push_back(row.scores);
  else
    R.rows.back() = row.scores;
  const auto stage = static_cast<std::size_t>(std::max(state.stage, 1));

  ensure_dir(out_dir);
  std::ostringstream csv;
  write_metrics_csv(csv, PerfMatrix{R.columns, {row.scores}}, suite.tasks, stage);
  write_text_file((fs::path(out_dir) / "metrics.csv").string(), csv.str());
  Summary sm{0.0, 0.0, compute_A_unseen(R, suite.unseen_ids())};
  const auto seen = suite.seen_ids();
  if (R.rows.size() == seen.size()) {
    sm.A_N = compute_A_N(R, seen);
    sm.F_N = compute_F_N(R, seen);
  } else {
    // Partial runs: mean over trained tasks of the evaluated row.
    double total = 0.0;
    for (int id : state.trained_tasks) total += R.at(R.rows.size() - 1, id);
    sm.A_N = state.trained_tasks.empty() ? 0.0 : total / static_cast<double>(state.trained_tasks.size());
  }
  write_text_file((fs::path(out_dir) / "summary.json").string(), dump(summary_json(sm, state.config, row.routing)));
  std::cerr << "evaluated " << eval_set.size() << " tasks: A_N " << sm.A_N << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lifelong QA with hierarchical prompts and key routing"};
  app.require_subcommand(1);

  std::uint64_t gen_seed = 0;
  std::string gen_config, gen_out;
  auto* gen = app.add_subcommand("gen-tasks", "Generate a synthetic task suite");
  gen->add_option("--seed", gen_seed, "Suite seed (DIANA_SEED overrides)");
  gen->add_option("--config", gen_config, "Suite config JSON")->required();
  gen->add_option("--out", gen_out, "Output suite file")->required();

  std::string tr_suite, tr_config, tr_out;
  std::optional<std::string> tr_mode;
  std::optional<std::uint64_t> tr_seed;
  bool tr_memory = false;
  std::vector<std::string> modes;
  for (auto m : {Mode::Diana, Mode::DianaWoMeta, Mode::DianaWoMemory, Mode::SeqFt, Mode::Replay})
    modes.emplace_back(mode_name(m));
  auto* train = app.add_subcommand("train", "Train the seen tasks in order and report metrics");
  train->add_option("--suite", tr_suite, "Suite file")->required();
  train->add_option("--config", tr_config, "Training config JSON");
  train->add_option("--out-dir", tr_out, "Directory for checkpoint.json, metrics.csv, summary.json")->required();
  train->add_option("--mode", tr_mode, "Training mode")->check(CLI::IsMember(modes));
  train->add_option("--seed", tr_seed, "Training seed (DIANA_SEED overrides)");
  train->add_flag("--save-memory", tr_memory, "Store the memory buffer in the checkpoint");

  std::string ev_ckpt, ev_suite, ev_out;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint with routing only");
  eval->add_option("--checkpoint", ev_ckpt, "Checkpoint file")->required();
  eval->add_option("--suite", ev_suite, "Suite file")->required();
  eval->add_option("--out", ev_out, "Output directory for metrics.csv and summary.json")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ErrorClass::Usage);
  }

  try {
    if (*gen) return cmd_gen_tasks(gen_seed, gen_config, gen_out);
    if (*train) return cmd_train(tr_suite, tr_config, tr_out, tr_mode, tr_seed, tr_memory);
    if (*eval) return cmd_eval(ev_ckpt, ev_suite, ev_out);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ErrorClass::Usage);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.error_class());
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return static_cast<int>(ErrorClass::Invariant);
  }
  return static_cast<int>(ErrorClass::Usage);
}
