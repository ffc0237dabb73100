#include "featforge/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "featforge/errors.hpp"
#include "featforge/rng.hpp"
#include "featforge/search.hpp"
#include "featforge/version.hpp"

namespace featforge::cli {

namespace {

int exit_code_for(ErrorCode c) {
  switch (c) {
    case ErrorCode::ConfigError:
    case ErrorCode::TooFewSamples:
    case ErrorCode::VersionMismatch:
      return 2;
    case ErrorCode::ParseError:
    case ErrorCode::TargetNotFound:
    case ErrorCode::TooFewRows:
    case ErrorCode::MissingColumn:
    case ErrorCode::LengthMismatch:
    case ErrorCode::NonFiniteColumn:
    case ErrorCode::UnknownToken:
    case ErrorCode::MalformedExpression:
    case ErrorCode::DuplicateKey:
    case ErrorCode::IoError:
      return 3;
    default:
      return 1;
  }
}

std::string iso_utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(
      std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// FNV-1a over the raw bytes; enough to notice a dataset swap, not a
// cryptographic commitment.
std::string file_fingerprint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path);
  std::uint64_t h = 0xcbf29ce484222325ull;
  char chunk[4096];
  while (true) {
    in.read(chunk, sizeof chunk);
    const std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(chunk[i]);
      h *= 0x100000001b3ull;
    }
    if (got < static_cast<std::streamsize>(sizeof chunk)) break;
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "fnv1a64:%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  out << j.dump(2) << '\n';
  if (!out.good()) throw Error(ErrorCode::IoError, "short write: " + path);
}

struct RunArgs {
  std::string data;
  std::string target;
  std::string task;
  std::string out_dir = "featforge_out";
  std::string router = "uniform";
  std::string agents = "heuristic";
  std::string policy;
  bool no_long = false;
  bool no_short = false;
  std::string model = "rf";
  int folds = 5;
  std::uint64_t seed = 0;
  int iterations = 30;
  int steps = 6;
  std::string endpoint;
  std::string llm_model;
  std::string preload;
};

int cmd_run(const RunArgs& a, std::ostream& out) {
  const data::Task task = a.task == "class" ? data::Task::Classification
                                            : data::Task::Regression;
  const data::Frame frame = data::load_csv(a.data, a.target, task);

  search::SearchConfig cfg;
  cfg.iterations = a.iterations;
  cfg.steps = a.steps;
  cfg.router = agents::router_mode_from_name(a.router);
  cfg.agents = agents::agent_mode_from_name(a.agents);
  cfg.use_long_memory = !a.no_long;
  cfg.use_short_memory = !a.no_short;
  cfg.seed = a.seed;
  cfg.folds = a.folds;
  const auto model = eval::model_from_name(a.model);
  if (!model)
    throw Error(ErrorCode::ConfigError, "unknown model: " + a.model);
  cfg.model = *model;
  cfg.meta.dataset_name = std::filesystem::path(a.data).stem().string();
  if (!a.endpoint.empty()) cfg.llm.endpoint = a.endpoint;
  if (!a.llm_model.empty()) cfg.llm.model = a.llm_model;
  if (!a.preload.empty())
    cfg.preload = MemoryPool::load_jsonl(a.preload).records();

  std::optional<rl::PolicyNet> net;
  if (cfg.router == agents::RouterMode::Ppo) {
    if (a.policy.empty())
      throw Error(ErrorCode::ConfigError, "--router ppo requires --policy");
    net = rl::PolicyNet::load(a.policy);
    cfg.policy = &*net;
  }
  // The live client reads its key from FEATFORGE_API_KEY; it is never
  // accepted as a flag or config entry.
  llm::LiveTransport live;
  if (cfg.router == agents::RouterMode::Llm ||
      cfg.agents == agents::AgentMode::Llm)
    cfg.transport = &live;

  std::filesystem::create_directories(a.out_dir);
  const std::string trace_path = a.out_dir + "/trace.jsonl";
  const std::string result_path = a.out_dir + "/result.json";

  // The manifest is written before the search starts so an interrupted
  // run still leaves a record of what was attempted.
  nlohmann::json manifest{
      {"version", kVersion},
      {"created_utc", iso_utc_now()},
      {"command", "run"},
      {"dataset",
       {{"path", a.data},
        {"rows", frame.n_rows()},
        {"cols", frame.feature_names().size()},
        {"content_hash", file_fingerprint(a.data)},
        {"target", a.target},
        {"task", a.task}}},
      {"config",
       {{"iterations", cfg.iterations},
        {"steps", cfg.steps},
        {"router", a.router},
        {"agents", a.agents},
        {"policy", a.policy},
        {"model", a.model},
        {"folds", cfg.folds},
        {"seed", cfg.seed},
        {"use_long_memory", cfg.use_long_memory},
        {"use_short_memory", cfg.use_short_memory},
        {"preload", a.preload},
        {"endpoint", cfg.llm.endpoint},
        {"llm_model", cfg.llm.model}}},
      {"artifacts",
       {{"trace", trace_path},
        {"result", result_path},
        {"augmented_csv", a.out_dir + "/augmented.csv"},
        {"provenance", a.out_dir + "/provenance.txt"}}}};
  write_json_file(a.out_dir + "/manifest.json", manifest);

  const search::SearchResult result = search::run(frame, cfg);

  result.pool.save_jsonl(trace_path);
  nlohmann::json summary = result.to_json();
  summary["dataset"] = cfg.meta.dataset_name;
  summary["seed"] = cfg.seed;
  summary["iterations"] = cfg.iterations;
  summary["steps"] = cfg.steps;
  summary["router"] = a.router;
  summary["agents"] = a.agents;
  summary["folds"] = cfg.folds;
  write_json_file(result_path, summary);
  search::export_result(frame, result, a.out_dir);

  char line[160];
  std::snprintf(line, sizeof line,
                "baseline %.6f -> best %.6f (gain %+.6f) over %d records\n",
                result.baseline_report.primary, result.best_report.primary,
                result.best_report.primary - result.baseline_report.primary,
                static_cast<int>(result.pool.size()));
  out << line;
  return 0;
}

struct TrainArgs {
  std::vector<std::string> traces;
  std::string out;
  int epochs = 5;
  std::uint64_t seed = 0;
  bool self_test = false;
};

std::vector<std::string> expand_traces(const std::vector<std::string>& in) {
  std::vector<std::string> files;
  for (const auto& entry : in) {
    if (std::filesystem::is_directory(entry)) {
      std::vector<std::string> found;
      for (const auto& e : std::filesystem::directory_iterator(entry))
        if (e.path().extension() == ".jsonl") found.push_back(e.path());
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else {
      files.push_back(entry);
    }
  }
  return files;
}

int cmd_train_router(const TrainArgs& a, std::ostream& out) {
  std::vector<rl::OfflineSample> samples;
  if (!a.traces.empty()) {
    const auto files = expand_traces(a.traces);
    if (files.empty())
      throw Error(ErrorCode::ConfigError, "no .jsonl traces found");
    int group = 0;
    for (const auto& f : files) {
      const MemoryPool pool = MemoryPool::load_jsonl(f);
      const auto part = rl::collect(pool, group++);
      samples.insert(samples.end(), part.begin(), part.end());
    }
    if (samples.size() < 100)
      throw Error(ErrorCode::TooFewSamples,
                  "need at least 100 samples, collected " +
                      std::to_string(samples.size()));
  } else if (a.self_test) {
    samples = rl::make_bandit_dataset(400, a.seed);
  } else {
    throw Error(ErrorCode::ConfigError, "provide --traces or --self-test");
  }

  rl::PolicyNet net(a.seed);
  rl::PPOConfig cfg;
  cfg.epochs = a.epochs;
  Rng rng(seed_mix(a.seed, 0x77A1B3));
  const rl::TrainReport report = rl::ppo_update(net, samples, cfg, rng);

  nlohmann::json j = report.to_json();
  j["policy"] = a.out;
  if (!a.out.empty()) {
    net.save(a.out);
    write_json_file(a.out + ".report.json", j);
  }

  out << "trained on " << report.samples << " samples for " << report.epochs
      << " epochs\n";
  if (a.self_test) {
    const double acc = rl::bandit_accuracy(net, 2000, a.seed + 1);
    const bool pass = acc >= 0.9;
    char line[80];
    std::snprintf(line, sizeof line, "self-test accuracy %.3f (%s)\n", acc,
                  pass ? "pass" : "fail");
    out << line;
    return pass ? 0 : 1;
  }
  return 0;
}

struct InspectArgs {
  std::string trace;
};

std::vector<std::string> split_tokens(const std::string& joined) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= joined.size()) {
    const std::size_t next = joined.find(", ", pos);
    if (next == std::string::npos) {
      if (pos < joined.size()) out.push_back(joined.substr(pos));
      break;
    }
    out.push_back(joined.substr(pos, next - pos));
    pos = next + 2;
  }
  return out;
}

int cmd_inspect(const InspectArgs& a, std::ostream& out) {
  const MemoryPool pool = MemoryPool::load_jsonl(a.trace);
  if (pool.empty()) {
    out << "no records\n";
    return 0;
  }

  out << "trace: " << a.trace << " (" << pool.size() << " records)\n";
  out << "-- timeline --\n";
  int generates = 0, selects = 0;
  for (const auto& r : pool.records()) {
    char head[96];
    if (r.iteration < 0) {
      std::snprintf(head, sizeof head, "baseline          score %.6f",
                    r.score);
    } else {
      const char d = r.decision == Decision::Generate ? 'G' : 'S';
      (d == 'G' ? generates : selects) += 1;
      std::snprintf(head, sizeof head, "iter %2d step %d  %c  score %.6f",
                    r.iteration, r.step, d, r.score);
    }
    out << head;
    if (r.no_op) out << "  [no-op]";
    if (r.fallback) out << "  [fallback]";
    if (!r.agent_detail.empty()) out << "  " << r.agent_detail;
    out << '\n';
  }

  const int decided = generates + selects;
  if (decided > 0) {
    out << "-- decision share --\n";
    out << "G " << std::llround(100.0 * generates / decided) << "%\n";
    out << "S " << std::llround(100.0 * selects / decided) << "%\n";
  }

  const ActionRecord& best = pool.best();
  out << "-- best set --\n";
  char line[64];
  std::snprintf(line, sizeof line, "score %.6f", best.score);
  out << line << " at iteration " << best.iteration << " step " << best.step
      << "\n";
  out << "tokens: " << best.tokens << '\n';

  // The baseline record carries the raw schema, which turns the best
  // record's token list into provenance counts.
  const auto& records = pool.records();
  const auto base_it =
      std::find_if(records.begin(), records.end(),
                   [](const ActionRecord& r) { return r.iteration < 0; });
  if (base_it != records.end()) {
    const auto base = split_tokens(base_it->tokens);
    const auto live = split_tokens(best.tokens);
    const std::set<std::string> base_set(base.begin(), base.end());
    const std::set<std::string> live_set(live.begin(), live.end());
    int kept = 0, generated = 0;
    for (const auto& t : live) (base_set.count(t) ? kept : generated) += 1;
    int dropped = 0;
    for (const auto& b : base) dropped += live_set.count(b) ? 0 : 1;
    out << "generated " << generated << " new features, dropped " << dropped
        << " of " << base.size() << " originals\n";
  }
  return 0;
}

}  // namespace

int run_cli(std::vector<std::string> args, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"feature-augmentation search over postfix expression sets"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML-style config file; flags win");

  RunArgs run_args;
  CLI::App* run = app.add_subcommand("run", "search a dataset");
  run->add_option("--data", run_args.data, "input CSV")->required();
  run->add_option("--target", run_args.target, "target column name or index")
      ->required();
  run->add_option("--task", run_args.task, "prediction task")
      ->required()
      ->check(CLI::IsMember({"class", "regr"}));
  run->add_option("--out", run_args.out_dir, "artifact directory");
  run->add_option("--router", run_args.router, "routing policy")
      ->check(CLI::IsMember({"ppo", "llm", "uniform"}));
  run->add_option("--agents", run_args.agents, "generator/selector backend")
      ->check(CLI::IsMember({"heuristic", "llm"}));
  run->add_option("--policy", run_args.policy, "saved router policy file");
  run->add_flag("--no-long-memory", run_args.no_long,
                "drop demonstration sections from prompts");
  run->add_flag("--no-short-memory", run_args.no_short,
                "drop iteration history from prompts");
  run->add_option("--model", run_args.model, "downstream model")
      ->check(CLI::IsMember({"rf", "knn", "linear"}));
  run->add_option("--folds", run_args.folds, "cross-validation folds");
  run->add_option("--seed", run_args.seed, "master seed");
  run->add_option("--iterations", run_args.iterations, "outer restarts");
  run->add_option("--steps", run_args.steps, "actions per iteration");
  run->add_option("--endpoint", run_args.endpoint, "chat completions URL");
  run->add_option("--llm-model", run_args.llm_model, "chat model name");
  run->add_option("--preload", run_args.preload,
                  "prior trace whose records seed long-term memory");

  TrainArgs train_args;
  CLI::App* train =
      app.add_subcommand("train-router", "fit the routing policy offline");
  train->add_option("--traces", train_args.traces,
                    "trace files or directories of .jsonl");
  train->add_option("--out", train_args.out, "policy output path");
  train->add_option("--epochs", train_args.epochs, "training epochs");
  train->add_option("--seed", train_args.seed, "init and shuffle seed");
  train->add_flag("--self-test", train_args.self_test,
                  "train and score on the built-in bandit");

  InspectArgs inspect_args;
  CLI::App* inspect =
      app.add_subcommand("inspect-trace", "summarize a run trace");
  inspect->add_option("trace", inspect_args.trace, "trace .jsonl file")
      ->required();

  std::reverse(args.begin(), args.end());
  try {
    app.parse(std::move(args));
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 2;
  }

  try {
    if (run->parsed()) return cmd_run(run_args, out);
    if (train->parsed()) return cmd_train_router(train_args, out);
    if (inspect->parsed()) return cmd_inspect(inspect_args, out);
  } catch (const Error& e) {
    err << "error [" << error_code_name(e.code()) << "]: " << e.what()
        << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace featforge::cli
