// Python surface over the core library. Results cross the boundary as plain
// Python objects (dict/list) built from the library's JSON forms, so the
// module adds no schema of its own. LLM-backed modes need a transport and
// stay on the CLI; the bindings cover the offline operations.

#include <optional>
#include <string>
#include <vector>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "featforge/agents.hpp"
#include "featforge/data.hpp"
#include "featforge/errors.hpp"
#include "featforge/eval.hpp"
#include "featforge/expr.hpp"
#include "featforge/memory.hpp"
#include "featforge/pipeline.hpp"
#include "featforge/rl.hpp"
#include "featforge/rng.hpp"
#include "featforge/search.hpp"
#include "featforge/version.hpp"

namespace py = pybind11;
using namespace featforge;

namespace {

py::object to_py(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

data::Task task_from(const std::string& name) {
  if (name == "class") return data::Task::Classification;
  if (name == "regr") return data::Task::Regression;
  throw Error(ErrorCode::ConfigError, "task must be \"regr\" or \"class\"");
}

eval::ModelKind model_from(const std::string& name) {
  auto kind = eval::model_from_name(name);
  if (!kind) throw Error(ErrorCode::ConfigError, "unknown model: " + name);
  return *kind;
}

py::list parse_expressions(const std::string& text,
                           const std::vector<std::string>& schema) {
  py::list out;
  for (const auto& e : expr::parse_postfix(text, schema)) {
    py::dict d;
    d["postfix"] = expr::render_postfix(e);
    d["infix"] = expr::render_infix(e);
    d["name"] = e.name();
    d["key"] = e.canonical_key();
    d["depth"] = e.depth();
    out.append(d);
  }
  return out;
}

std::vector<double> evaluate_expression(
    const std::string& text,
    const std::map<std::string, std::vector<double>>& columns) {
  std::vector<std::string> schema;
  std::size_t rows = 0;
  for (const auto& [name, col] : columns) {
    schema.push_back(name);
    rows = col.size();
  }
  auto exprs = expr::parse_postfix(text, schema);
  if (exprs.size() != 1)
    throw Error(ErrorCode::MalformedExpression,
                "expected exactly one expression, got " +
                    std::to_string(exprs.size()));
  auto lookup = [&](const std::string& name) -> const std::vector<double>* {
    auto it = columns.find(name);
    return it == columns.end() ? nullptr : &it->second;
  };
  return expr::evaluate(exprs[0], lookup, rows);
}

py::object score_csv(const std::string& path, const std::string& target,
                     const std::string& task, const std::string& tokens,
                     const std::string& model, int folds,
                     std::uint64_t seed) {
  data::Frame frame = data::load_csv(path, target, task_from(task));
  auto fs = pipeline::FeatureSet::from_frame(frame);
  if (!tokens.empty()) {
    auto exprs = expr::parse_postfix(tokens, frame.feature_names());
    fs = pipeline::apply_generation(fs, pipeline::GenerationAction{exprs},
                                    frame)
             .set;
  }
  eval::Evaluator ev(frame, model_from(model), folds, seed);
  return to_py(ev.score(fs).to_json());
}

py::object run_search(const std::string& path, const std::string& target,
                      const std::string& task, int iterations, int steps,
                      const std::string& router, const std::string& agents,
                      const std::string& model, int folds, std::uint64_t seed,
                      const std::string& policy, const std::string& trace_out) {
  data::Frame frame = data::load_csv(path, target, task_from(task));

  search::SearchConfig cfg;
  cfg.iterations = iterations;
  cfg.steps = steps;
  cfg.router = agents::router_mode_from_name(router);
  cfg.agents = agents::agent_mode_from_name(agents);
  cfg.model = model_from(model);
  cfg.folds = folds;
  cfg.seed = seed;
  if (cfg.router == agents::RouterMode::Llm ||
      cfg.agents == agents::AgentMode::Llm)
    throw Error(ErrorCode::ConfigError,
                "LLM-backed modes need a transport; use the CLI");

  std::optional<rl::PolicyNet> net;
  if (cfg.router == agents::RouterMode::Ppo) {
    if (policy.empty())
      throw Error(ErrorCode::ConfigError,
                  "router \"ppo\" needs a policy file");
    net.emplace(rl::PolicyNet::load(policy));
    cfg.policy = &*net;
  }

  auto result = search::run(frame, cfg);
  if (!trace_out.empty()) result.pool.save_jsonl(trace_out);
  return to_py(result.to_json());
}

py::object train_router(const std::vector<std::string>& traces,
                        const std::string& out, int epochs,
                        std::uint64_t seed) {
  std::vector<rl::OfflineSample> samples;
  int group = 0;
  for (const auto& path : traces) {
    auto pool = MemoryPool::load_jsonl(path);
    auto part = rl::collect(pool, group++);
    samples.insert(samples.end(), part.begin(), part.end());
  }
  if (samples.size() < 100)
    throw Error(ErrorCode::TooFewSamples,
                "need at least 100 samples, collected " +
                    std::to_string(samples.size()));

  rl::PolicyNet net(seed);
  rl::PPOConfig cfg;
  cfg.epochs = epochs;
  Rng rng(seed_mix(seed, 0x77A1B3));
  auto report = rl::ppo_update(net, samples, cfg, rng);
  net.save(out);

  nlohmann::json j{{"samples", samples.size()},
                   {"epochs", cfg.epochs},
                   {"epoch_objective", report.epoch_objective}};
  return to_py(j);
}

py::object load_trace(const std::string& path) {
  auto pool = MemoryPool::load_jsonl(path);
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& rec : pool.records()) arr.push_back(rec.to_json());
  return to_py(arr);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "feature-augmentation search core";

  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    }
  });

  m.def("version", [] { return std::string(kVersion); },
        "library version string");

  m.def("parse_expressions", &parse_expressions, py::arg("text"),
        py::arg("schema"),
        "Parse comma-separated postfix expressions against a column schema; "
        "returns one dict per expression with postfix, infix, name, key, and "
        "depth.");

  m.def("evaluate_expression", &evaluate_expression, py::arg("text"),
        py::arg("columns"),
        "Evaluate a single postfix expression over named columns; returns "
        "the derived column.");

  m.def("score_csv", &score_csv, py::arg("path"), py::arg("target"),
        py::arg("task") = "regr", py::arg("tokens") = "",
        py::arg("model") = "rf", py::arg("folds") = 5, py::arg("seed") = 0,
        "Cross-validated score of a CSV dataset, optionally extended with "
        "derived features given as comma-separated postfix expressions.");

  m.def("run_search", &run_search, py::arg("path"), py::arg("target"),
        py::arg("task") = "regr", py::arg("iterations") = 30,
        py::arg("steps") = 6, py::arg("router") = "uniform",
        py::arg("agents") = "heuristic", py::arg("model") = "rf",
        py::arg("folds") = 5, py::arg("seed") = 0, py::arg("policy") = "",
        py::arg("trace_out") = "",
        "Run the feature search on a CSV dataset and return the result "
        "report; optionally writes the step trace as JSON lines.");

  m.def("train_router", &train_router, py::arg("traces"), py::arg("out"),
        py::arg("epochs") = 5, py::arg("seed") = 0,
        "Train the routing policy offline from trace files and save it; "
        "returns a training report.");

  m.def("load_trace", &load_trace, py::arg("path"),
        "Load a JSON-lines trace file as a list of record dicts.");
}
