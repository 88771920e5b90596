#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "scd/corpus.hpp"
#include "scd/error.hpp"
#include "scd/flow.hpp"
#include "scd/ground_truth.hpp"
#include "scd/pipeline.hpp"
#include "scd/trace.hpp"

namespace scd {

inline constexpr const char* kToolVersion = "0.1.0";

/// Embedded in every output file so results trace back to their flags.
struct RunManifest {
  std::string subcommand;
  json config = json::object();
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::uint64_t seed = 0;

  json to_json() const {
    return {{"tool", "scd"},
            {"version", kToolVersion},
            {"subcommand", subcommand},
            {"config", config},
            {"inputs", inputs},
            {"outputs", outputs},
            {"seed", seed}};
  }
};

namespace cli_detail {

namespace fs = std::filesystem;

inline std::vector<fs::path> files_with_suffix(const fs::path& dir, const std::string& suffix) {
  if (!fs::is_directory(dir)) throw Error(Errc::Io, "not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (e.is_regular_file() && name.size() > suffix.size() &&
        name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0)
      out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<TraceDataset> load_traces(const fs::path& dir) {
  std::vector<TraceDataset> out;
  for (const auto& p : files_with_suffix(dir, ".jsonl")) out.push_back(parse_trace_file(p));
  if (out.empty()) throw Error(Errc::MissingTrace, "no .jsonl trace files in " + dir.string());
  return out;
}

inline json read_json(const fs::path& path, Errc on_error) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(on_error, path.string() + ": not valid JSON");
  return j;
}

inline void write_json(const fs::path& path, const json& j, int indent) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  out << j.dump(indent) << '\n';
}

inline void print_metrics(std::ostream& out, const ConfusionCounts& c) {
  out << "tp " << c.tp << "  fp " << c.fp << "  tn " << c.tn << "  fn " << c.fn << '\n'
      << std::fixed << std::setprecision(3) << "precision " << precision(c) << '\n'
      << "recall    " << recall(c) << '\n'
      << "f1        " << f1(c) << '\n'
      << "mcc       " << mcc(c) << '\n';
  out.unsetf(std::ios::floatfield);
}

struct GenerateArgs {
  std::string out_dir;
  std::size_t n = 500;
  std::uint64_t seed = 1;
};

struct TrainArgs {
  std::string trace_dir, model_dir;
  std::uint64_t seed = 1;
  FlowConfig flow;
};

struct DetectArgs {
  std::string model_dir, trace_dir, truth, out = "report.json";
  std::string evaluation = "skip", pooling = "soft";
  DetectionConfig config;
};

struct EvaluateArgs {
  std::string report, truth;
};

inline int cmd_generate(const GenerateArgs& a, std::ostream& out) {
  const auto spec = builtin_corpus();
  const auto traces = generate_traces(spec, a.n, a.seed);  // validates before anything is written
  fs::create_directories(a.out_dir);

  RunManifest m{"generate", {{"n", a.n}}, {}, {}, a.seed};
  for (const auto& [id, _] : traces) m.outputs.push_back((fs::path(a.out_dir) / (id + ".jsonl")).string());
  m.outputs.push_back((fs::path(a.out_dir) / "truth.json").string());
  const json manifest = m.to_json();

  for (const auto& [id, ds] : traces)
    write_trace_file(fs::path(a.out_dir) / (id + ".jsonl"), ds, {{"manifest", manifest}});
  json truth = truth_to_json(ground_truth(spec));
  truth["manifest"] = manifest;
  write_json(fs::path(a.out_dir) / "truth.json", truth, 2);
  out << "wrote " << traces.size() << " traces and truth.json to " << a.out_dir << '\n';
  return 0;
}

inline int cmd_train(const TrainArgs& a, std::ostream& out) {
  const auto traces = load_traces(a.trace_dir);
  fs::create_directories(a.model_dir);
  for (const auto& ds : traces) {
    const fs::path path = fs::path(a.model_dir) / (ds.schema.id + ".model.json");
    RunManifest m{"train", {{"flow", config_to_json(a.flow)}},
                  {(fs::path(a.trace_dir) / (ds.schema.id + ".jsonl")).string()}, {path.string()}, a.seed};
    FlowModel model = [&] {
      try {
        return train_model(ds, a.flow, derive_seed(a.seed, ds.schema.id));
      } catch (const Error& e) {
        throw Error(e.code(), (fs::path(a.trace_dir) / (ds.schema.id + ".jsonl")).string() + ": " + e.detail());
      }
    }();
    save_model(path, model, m.to_json());
    out << ds.schema.id << " final_nll " << std::setprecision(6) << model.train_log.final_nll << '\n';
  }
  return 0;
}

inline int cmd_detect(DetectArgs a, std::ostream& out) {
  a.config.evaluation = a.evaluation == "skip" ? EvaluationStrategy::Skip : EvaluationStrategy::Exhaustive;
  a.config.pooling = a.pooling == "soft" ? Pooling::Soft : Pooling::Hard;

  std::vector<FlowModel> models;
  for (const auto& p : files_with_suffix(a.model_dir, ".model.json")) models.push_back(load_model(p));
  if (models.empty()) throw Error(Errc::InconsistentInputs, "no .model.json files in " + a.model_dir);
  const auto traces = load_traces(a.trace_dir);

  std::optional<GroundTruth> truth;
  RunManifest m{"detect", detection_config_to_json(a.config), {a.model_dir, a.trace_dir}, {a.out}, a.config.seed};
  if (!a.truth.empty()) {
    truth = truth_from_json(read_json(a.truth, Errc::MalformedReport), a.truth);
    m.inputs.push_back(a.truth);
  }

  const CloneReport report = run_detection(models, traces, a.config, truth);
  write_json(a.out, report_to_json(report, m.to_json()), 2);

  out << report.candidates.size() << " candidates, " << report.survivors.model_stage << " clone decisions, "
      << report.skipped_candidates << " skipped; report written to " << a.out << '\n';
  if (report.metrics) print_metrics(out, final_counts(report));
  return 0;
}

inline int cmd_evaluate(const EvaluateArgs& a, std::ostream& out) {
  const auto candidates = candidates_from_report(read_json(a.report, Errc::MalformedReport));
  const GroundTruth truth = truth_from_json(read_json(a.truth, Errc::MalformedReport), a.truth);
  std::vector<std::string> ids;
  for (const auto& c : candidates) {
    ids.push_back(c.pair.a);
    ids.push_back(c.pair.b);
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  require_labels(ids, truth);
  print_metrics(out, stage_metrics(candidates, truth).back().counts);
  return 0;
}

}  // namespace cli_detail

/// Entry point of the `scd` tool. Exit codes: 0 ok, 1 usage, 2 data error,
/// 3 internal error.
inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  using namespace cli_detail;
  CLI::App app{"Semantic clone detection over runtime traces", "scd"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Write builtin corpus traces and ground truth");
  generate->add_option("--out", gen.out_dir, "Output directory")->required();
  generate->add_option("-n,--invocations", gen.n, "Invocations per variant")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  generate->add_option("--seed", gen.seed, "Random seed")->capture_default_str();

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Fit one flow model per trace file");
  train->add_option("--traces", tr.trace_dir, "Trace directory")->required();
  train->add_option("--models", tr.model_dir, "Model output directory")->required();
  train->add_option("--seed", tr.seed)->capture_default_str();
  train->add_option("--layers", tr.flow.layers)->check(CLI::PositiveNumber)->capture_default_str();
  train->add_option("--width", tr.flow.hidden_width)->check(CLI::PositiveNumber)->capture_default_str();
  train->add_option("--epochs", tr.flow.epochs)->check(CLI::PositiveNumber)->capture_default_str();
  train->add_option("--batch", tr.flow.batch_size)->check(CLI::PositiveNumber)->capture_default_str();
  train->add_option("--lr", tr.flow.learning_rate)->check(CLI::PositiveNumber)->capture_default_str();
  train->add_option("--s-max", tr.flow.s_max)->check(CLI::PositiveNumber)->capture_default_str();

  DetectArgs det;
  auto* detect = app.add_subcommand("detect", "Run the clone detection pipeline");
  detect->add_option("--models", det.model_dir, "Model directory")->required();
  detect->add_option("--traces", det.trace_dir, "Trace directory")->required();
  detect->add_option("--evaluation", det.evaluation)
      ->check(CLI::IsMember({"skip", "exhaustive"}))
      ->capture_default_str();
  detect->add_option("--d-fpr", det.config.d_fpr)->check(CLI::Range(0.0, 1.0))->capture_default_str();
  detect->add_option("--m-fpr", det.config.m_fpr)->check(CLI::Range(0.0, 1.0))->capture_default_str();
  detect->add_option("--pooling", det.pooling)->check(CLI::IsMember({"soft", "hard"}))->capture_default_str();
  detect->add_option("--particles", det.config.particles)->check(CLI::Range(2, 1000000))->capture_default_str();
  detect->add_option("--seed", det.config.seed)->capture_default_str();
  detect->add_option("--steps", det.config.conditional.steps)->capture_default_str();
  detect->add_option("--step-size", det.config.conditional.step_size)->check(CLI::PositiveNumber)->capture_default_str();
  detect->add_option("--restarts", det.config.conditional.restarts)->check(CLI::PositiveNumber)->capture_default_str();
  detect->add_option("--truth", det.truth, "Ground-truth file");
  detect->add_option("--out", det.out, "Report file")->capture_default_str();

  EvaluateArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "Score a report against ground truth");
  evaluate->add_option("--report", ev.report)->required();
  evaluate->add_option("--truth", ev.truth)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (generate->parsed()) return cmd_generate(gen, out);
    if (train->parsed()) return cmd_train(tr, out);
    if (detect->parsed()) return cmd_detect(det, out);
    if (evaluate->parsed()) return cmd_evaluate(ev, out);
    return 1;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return 3;
  }
}

}  // namespace scd
