#pragma once

// The rejecting filter pipeline: every candidate pair passes static
// (data types), dynamic (KS on runtime marginals) and model (cross-model
// likelihood ratio) similarity before it is declared a clone.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "scd/encoding.hpp"
#include "scd/error.hpp"
#include "scd/flow.hpp"
#include "scd/ground_truth.hpp"
#include "scd/random.hpp"
#include "scd/search_space.hpp"
#include "scd/statistics.hpp"
#include "scd/trace.hpp"

namespace scd {

enum class EvaluationStrategy { Exhaustive, Skip };
enum class Pooling { Hard, Soft };
enum class Stage { Static, Dynamic, Model, Skipped };

constexpr std::string_view to_token(EvaluationStrategy e) { return e == EvaluationStrategy::Skip ? "skip" : "exhaustive"; }
constexpr std::string_view to_token(Pooling p) { return p == Pooling::Soft ? "soft" : "hard"; }
constexpr std::string_view to_token(Stage s) {
  switch (s) {
    case Stage::Static: return "static";
    case Stage::Dynamic: return "dynamic";
    case Stage::Model: return "model";
    case Stage::Skipped: return "skipped";
  }
  return "?";
}

struct DetectionConfig {
  EvaluationStrategy evaluation = EvaluationStrategy::Skip;
  double d_fpr = 0.100;
  double m_fpr = 0.001;
  Pooling pooling = Pooling::Soft;
  std::size_t particles = 50;
  std::uint64_t seed = 1;
  ConditionalOptions conditional;

  void validate() const {
    if (!(d_fpr > 0.0 && d_fpr < 1.0)) throw Error(Errc::InvalidArgument, "d_fpr must lie in (0, 1)");
    if (!(m_fpr > 0.0 && m_fpr < 1.0)) throw Error(Errc::InvalidArgument, "m_fpr must lie in (0, 1)");
    if (particles < 2) throw Error(Errc::InvalidArgument, "particles must be at least 2");
  }
};

struct LinkResult {
  Link link;
  double lambda_a = 0.0;  // model a as null
  double lambda_b = 0.0;  // model b as null
  bool accepted = false;
};

struct LinkCounts {
  std::size_t wes = 0;
  std::size_t static_survivors = 0;
  std::size_t dynamic_survivors = 0;
  std::size_t model_evaluated = 0;
  std::size_t model_skipped = 0;  // saved by greedy early exit
};

struct CandidateResult {
  CandidatePair pair;
  Stage stage_reached = Stage::Static;
  bool decision = false;
  LinkCounts links;
  std::vector<LinkResult> link_results;
  std::optional<std::string> skip_reason;
};

struct StageSurvivors {
  std::size_t initial = 0, static_stage = 0, dynamic_stage = 0, model_stage = 0;
};

struct StageTiming {
  double static_seconds = 0.0, dynamic_seconds = 0.0, model_seconds = 0.0, total_seconds = 0.0;
};

struct StageMetrics {
  std::string stage;
  ConfusionCounts counts;
};

struct CloneReport {
  DetectionConfig config;
  std::vector<std::string> executables;
  std::vector<CandidateResult> candidates;
  std::vector<std::vector<std::string>> classes;
  std::uint64_t total_links = 0;
  std::size_t skipped_candidates = 0;
  std::size_t greedy_skipped_links = 0;
  StageSurvivors survivors;
  StageTiming timing;
  std::optional<std::vector<StageMetrics>> metrics;  // initial, static, dynamic, model
};

// ---------------------------------------------------------------------------
// Static similarity

inline bool static_filter(const Link& link, const ExecutableSchema& a, const ExecutableSchema& b) {
  const auto& ea = a.elements;
  const auto& eb = b.elements;
  return ea.at(link.pair_a.input_index).dtype == eb.at(link.pair_b.input_index).dtype &&
         ea.at(link.pair_a.output_index).dtype == eb.at(link.pair_b.output_index).dtype;
}

inline std::vector<Link> static_stage(const ExecutableSchema& a, const ExecutableSchema& b) {
  std::vector<Link> out;
  for (const auto& link : build_wes(a, b))
    if (static_filter(link, a, b)) out.push_back(link);
  return out;
}

// ---------------------------------------------------------------------------
// Dynamic similarity

inline std::string link_tag(const Link& l) {
  return std::to_string(l.pair_a.input_index) + "," + std::to_string(l.pair_a.output_index) + "|" +
         std::to_string(l.pair_b.input_index) + "," + std::to_string(l.pair_b.output_index);
}

namespace detail {

/// Order-preserving real view of a column. Numbers are used as-is; text maps
/// to its rank in the lexicographic vocabulary of both columns together.
inline std::vector<double> ordinal_view(std::span<const Value> col, const std::map<std::string, std::size_t>& rank) {
  std::vector<double> out;
  out.reserve(col.size());
  for (const auto& v : col) {
    if (const auto* s = std::get_if<std::string>(&v)) out.push_back(static_cast<double>(rank.at(*s)));
    else if (const auto* i = std::get_if<std::int64_t>(&v)) out.push_back(static_cast<double>(*i));
    else out.push_back(std::get<double>(v));
  }
  return out;
}

}  // namespace detail

/// KS test of two raw columns on a shared monotone scale. The KS statistic
/// depends only on order, so no standardization is needed; identical columns
/// give exactly 0 and location differences are kept.
inline KSResult column_ks(std::span<const Value> a, std::span<const Value> b, double alpha) {
  std::map<std::string, std::size_t> rank;
  for (auto col : {a, b})
    for (const auto& v : col)
      if (const auto* s = std::get_if<std::string>(&v)) rank.emplace(*s, 0);
  std::size_t next = 0;
  for (auto& [_, r] : rank) r = next++;
  return ks_two_sample(detail::ordinal_view(a, rank), detail::ordinal_view(b, rank), alpha);
}

/// A link survives when neither its input nor its output marginals differ
/// significantly at alpha = d_fpr.
inline bool dynamic_link_survives(const Link& link, const TraceDataset& a, const TraceDataset& b, double d_fpr) {
  if (column_ks(column(a, link.pair_a.input_index), column(b, link.pair_b.input_index), d_fpr).reject) return false;
  return !column_ks(column(a, link.pair_a.output_index), column(b, link.pair_b.output_index), d_fpr).reject;
}

inline std::vector<Link> dynamic_stage(std::span<const Link> links, const TraceDataset& a, const TraceDataset& b,
                                       double d_fpr) {
  if (a.rows.empty() || b.rows.empty()) throw Error(Errc::MissingTrace, "dynamic stage needs non-empty traces");
  std::vector<Link> out;
  for (const auto& link : links)
    if (dynamic_link_survives(link, a, b, d_fpr)) out.push_back(link);
  return out;
}

// ---------------------------------------------------------------------------
// Model similarity

namespace detail {

inline Value coerce(const Value& v, DataType target) {
  if (dtype_of(v) == target) return v;
  if (target == DataType::Float && dtype_of(v) == DataType::Integer)
    return static_cast<double>(std::get<std::int64_t>(v));
  if (target == DataType::Integer && dtype_of(v) == DataType::Float)
    return saturating_floor(std::get<double>(v));
  throw Error(Errc::TypeMismatch, "cannot transfer a value between text and numeric elements");
}

inline double mean_normalized_log_likelihood(const FlowModel& m, const Matrix& rows) {
  double total = 0.0;
  for (std::size_t r = 0; r < rows.rows(); ++r) total += log_likelihood(m, rows.row(r));
  return total / static_cast<double>(rows.rows()) / static_cast<double>(m.modeled_dims());
}

}  // namespace detail

/// One direction of the cross-model test: particles drawn from the null
/// model, their link values moved into the alt model's encoding, the alt
/// model conditioned on them, and lambda = LL_alt - LL_null (both per
/// modeled dimension).
inline double directional_ratio(const FlowModel& null_model, const FlowModel& alt_model, const IOPair& null_pair,
                                const IOPair& alt_pair, std::size_t particles, std::uint64_t seed,
                                const ConditionalOptions& opt) {
  const SampleMatrix d_null = sample(null_model, particles, derive_seed(seed, "null"));

  const std::size_t null_dims[2] = {null_pair.input_index, null_pair.output_index};
  const std::size_t alt_dims[2] = {alt_pair.input_index, alt_pair.output_index};
  Matrix targets(particles, 2);
  Rng noise(derive_seed(seed, "transfer"));
  for (std::size_t r = 0; r < particles; ++r) {
    for (std::size_t k = 0; k < 2; ++k) {
      const Value raw = decode(null_model.encoders.at(null_dims[k]), d_null.values(r, null_dims[k]));
      const ColumnEncoder& enc = alt_model.encoders.at(alt_dims[k]);
      targets(r, k) = encode_lenient(enc, detail::coerce(raw, enc.dtype), uniform01(noise));
    }
  }

  Matrix d_alt;
  if (alt_model.dim > 2) {
    d_alt = conditional_sample(alt_model, alt_dims, targets, derive_seed(seed, "alt"), opt).values;
  } else {
    // Nothing left to condition: the transferred values are the sample.
    d_alt = Matrix(particles, alt_model.dim);
    for (std::size_t r = 0; r < particles; ++r)
      for (std::size_t k = 0; k < 2; ++k) d_alt(r, alt_dims[k]) = targets(r, k);
  }

  return detail::mean_normalized_log_likelihood(alt_model, d_alt) -
         detail::mean_normalized_log_likelihood(null_model, d_null.values);
}

struct DirectionalRatios {
  double lambda_a = 0.0;
  double lambda_b = 0.0;
};

inline DirectionalRatios model_link_ratio(const FlowModel& model_a, const FlowModel& model_b, const Link& link,
                                          std::size_t particles, std::uint64_t seed,
                                          const ConditionalOptions& opt = {}) {
  if (particles < 2) throw Error(Errc::InvalidArgument, "need at least 2 particles");
  return {directional_ratio(model_a, model_b, link.pair_a, link.pair_b, particles, derive_seed(seed, "a"), opt),
          directional_ratio(model_b, model_a, link.pair_b, link.pair_a, particles, derive_seed(seed, "b"), opt)};
}

/// Hard: each direction must reach log(c)/2. Soft: the mean of both
/// directions must reach log(c).
inline bool pool(double lambda_a, double lambda_b, Pooling pooling, double c) {
  const double log_c = std::log(c);
  if (pooling == Pooling::Hard)
    return retains_equivalence(lambda_a, log_c / 2.0) && retains_equivalence(lambda_b, log_c / 2.0);
  return retains_equivalence(0.5 * (lambda_a + lambda_b), log_c);
}

struct ModelStageOutcome {
  bool decision = false;
  std::vector<LinkResult> link_results;
  std::size_t skipped_links = 0;
};

inline ModelStageOutcome model_stage(std::span<const Link> links, const FlowModel& model_a, const FlowModel& model_b,
                                     const DetectionConfig& config, std::uint64_t seed) {
  ModelStageOutcome out;
  for (std::size_t i = 0; i < links.size(); ++i) {
    const auto r =
        model_link_ratio(model_a, model_b, links[i], config.particles, derive_seed(seed, link_tag(links[i])),
                         config.conditional);
    LinkResult lr{links[i], r.lambda_a, r.lambda_b, pool(r.lambda_a, r.lambda_b, config.pooling, config.m_fpr)};
    out.link_results.push_back(lr);
    if (lr.accepted) {
      out.decision = true;
      if (config.evaluation == EvaluationStrategy::Skip) {
        out.skipped_links = links.size() - i - 1;
        break;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Orchestration

inline std::uint64_t candidate_seed(std::uint64_t seed, const CandidatePair& c) {
  return derive_seed(seed, "candidate:" + c.a + "|" + c.b);
}

inline std::vector<StageMetrics> stage_metrics(const std::vector<CandidateResult>& candidates,
                                               const GroundTruth& truth) {
  std::vector<StageMetrics> out{{"initial", {}}, {"static", {}}, {"dynamic", {}}, {"model", {}}};
  for (const auto& c : candidates) {
    const bool positive = truth.is_clone(c.pair.a, c.pair.b);
    const bool predicted[4] = {
        true,
        c.stage_reached != Stage::Static,
        c.stage_reached != Stage::Static && c.stage_reached != Stage::Dynamic,
        c.decision,
    };
    for (std::size_t s = 0; s < 4; ++s) {
      auto& k = out[s].counts;
      if (predicted[s]) (positive ? k.tp : k.fp)++;
      else (positive ? k.fn : k.tn)++;
    }
  }
  return out;
}

inline void require_labels(const std::vector<std::string>& ids, const GroundTruth& truth) {
  std::string missing;
  for (const auto& id : ids)
    if (!truth.has(id)) missing += (missing.empty() ? "" : ", ") + id;
  if (!missing.empty()) throw Error(Errc::UnlabeledIds, "ground truth has no label for: " + missing);
}

/// Runs the whole pipeline over the between-executable space in canonical
/// order. Under skip evaluation a candidate whose executables already share
/// a clone class is accepted without any stage work.
inline CloneReport run_detection(const std::vector<FlowModel>& models, const std::vector<TraceDataset>& datasets,
                                 const DetectionConfig& config, const std::optional<GroundTruth>& truth = {}) {
  using clock = std::chrono::steady_clock;
  const auto t_start = clock::now();
  config.validate();

  std::map<std::string, const FlowModel*> model_by_id;
  std::map<std::string, const TraceDataset*> data_by_id;
  std::vector<ExecutableSchema> schemas;
  for (const auto& m : models) {
    if (!model_by_id.emplace(m.schema.id, &m).second)
      throw Error(Errc::DuplicateId, "two models for executable \"" + m.schema.id + "\"");
    schemas.push_back(m.schema);
  }
  for (const auto& d : datasets) {
    auto it = model_by_id.find(d.schema.id);
    if (it == model_by_id.end())
      throw Error(Errc::InconsistentInputs, "trace \"" + d.schema.id + "\" has no model");
    if (!(it->second->schema.elements == d.schema.elements))
      throw Error(Errc::InconsistentInputs, "trace and model schemas differ for \"" + d.schema.id + "\"");
    data_by_id[d.schema.id] = &d;
  }
  for (const auto& [id, _] : model_by_id)
    if (!data_by_id.count(id)) throw Error(Errc::InconsistentInputs, "model \"" + id + "\" has no trace");

  CloneReport report;
  report.config = config;
  for (const auto& [id, _] : model_by_id) report.executables.push_back(id);
  if (truth) require_labels(report.executables, *truth);

  CloneClasses classes(report.executables);
  const auto bes = build_bes(schemas);
  report.total_links = total_space(schemas);
  report.survivors.initial = bes.size();

  for (const auto& pair : bes) {
    CandidateResult res;
    res.pair = pair;
    const FlowModel& ma = *model_by_id.at(pair.a);
    const FlowModel& mb = *model_by_id.at(pair.b);
    res.links.wes = io_pairs(ma.schema).size() * io_pairs(mb.schema).size();

    if (config.evaluation == EvaluationStrategy::Skip && classes.same_class(pair.a, pair.b)) {
      res.stage_reached = Stage::Skipped;
      res.decision = true;
      res.skip_reason = "transitive: already in one clone class";
      ++report.skipped_candidates;
      report.candidates.push_back(std::move(res));
      continue;
    }

    const std::uint64_t seed = candidate_seed(config.seed, pair);

    auto t0 = clock::now();
    const auto static_links = static_stage(ma.schema, mb.schema);
    res.links.static_survivors = static_links.size();
    auto t1 = clock::now();
    report.timing.static_seconds += std::chrono::duration<double>(t1 - t0).count();
    if (static_links.empty()) {
      res.stage_reached = Stage::Static;
      report.candidates.push_back(std::move(res));
      continue;
    }

    const auto dynamic_links = dynamic_stage(static_links, *data_by_id.at(pair.a), *data_by_id.at(pair.b), config.d_fpr);
    res.links.dynamic_survivors = dynamic_links.size();
    auto t2 = clock::now();
    report.timing.dynamic_seconds += std::chrono::duration<double>(t2 - t1).count();
    if (dynamic_links.empty()) {
      res.stage_reached = Stage::Dynamic;
      report.candidates.push_back(std::move(res));
      continue;
    }

    auto outcome = model_stage(dynamic_links, ma, mb, config, derive_seed(seed, "model"));
    report.timing.model_seconds += std::chrono::duration<double>(clock::now() - t2).count();
    res.stage_reached = Stage::Model;
    res.decision = outcome.decision;
    res.links.model_evaluated = outcome.link_results.size();
    res.links.model_skipped = outcome.skipped_links;
    res.link_results = std::move(outcome.link_results);
    report.greedy_skipped_links += outcome.skipped_links;
    if (res.decision) classes.unite(pair.a, pair.b);
    report.candidates.push_back(std::move(res));
  }

  for (const auto& c : report.candidates) {
    if (c.stage_reached != Stage::Static) ++report.survivors.static_stage;
    if (c.stage_reached != Stage::Static && c.stage_reached != Stage::Dynamic) ++report.survivors.dynamic_stage;
    if (c.decision) ++report.survivors.model_stage;
  }
  report.classes = classes.classes();
  if (truth) report.metrics = stage_metrics(report.candidates, *truth);
  report.timing.total_seconds = std::chrono::duration<double>(clock::now() - t_start).count();
  return report;
}

inline ConfusionCounts final_counts(const CloneReport& r) {
  return r.metrics ? r.metrics->back().counts : ConfusionCounts{};
}

// ---------------------------------------------------------------------------
// Report serialization

inline json counts_to_json(const ConfusionCounts& c) {
  return {{"tp", c.tp},
          {"fp", c.fp},
          {"tn", c.tn},
          {"fn", c.fn},
          {"precision", precision(c)},
          {"recall", recall(c)},
          {"f1", f1(c)},
          {"mcc", mcc(c)}};
}

inline json detection_config_to_json(const DetectionConfig& c) {
  return {{"evaluation", to_token(c.evaluation)},
          {"d_fpr", c.d_fpr},
          {"m_fpr", c.m_fpr},
          {"pooling", to_token(c.pooling)},
          {"particles", c.particles},
          {"seed", c.seed},
          {"conditional",
           {{"steps", c.conditional.steps},
            {"step_size", c.conditional.step_size},
            {"restarts", c.conditional.restarts}}}};
}

inline json report_to_json(const CloneReport& r, const json& manifest = nullptr) {
  json candidates = json::array();
  for (const auto& c : r.candidates) {
    json links = json::array();
    for (const auto& l : c.link_results)
      links.push_back({{"a", {l.link.pair_a.input_index, l.link.pair_a.output_index}},
                       {"b", {l.link.pair_b.input_index, l.link.pair_b.output_index}},
                       {"lambda_a", l.lambda_a},
                       {"lambda_b", l.lambda_b},
                       {"accepted", l.accepted}});
    json cj{{"a", c.pair.a},
            {"b", c.pair.b},
            {"stage", to_token(c.stage_reached)},
            {"decision", c.decision},
            {"links",
             {{"wes", c.links.wes},
              {"static", c.links.static_survivors},
              {"dynamic", c.links.dynamic_survivors},
              {"model_evaluated", c.links.model_evaluated},
              {"model_skipped", c.links.model_skipped}}},
            {"link_results", links}};
    if (c.skip_reason) cj["skip_reason"] = *c.skip_reason;
    candidates.push_back(std::move(cj));
  }
  json j;
  j["format"] = "scd-report/1";
  if (!manifest.is_null()) j["manifest"] = manifest;
  j["config"] = detection_config_to_json(r.config);
  j["summary"] = {{"executables", r.executables.size()},
                  {"candidates", r.candidates.size()},
                  {"total_links", r.total_links},
                  {"skipped_candidates", r.skipped_candidates},
                  {"greedy_skipped_links", r.greedy_skipped_links},
                  {"survivors",
                   {{"initial", r.survivors.initial},
                    {"static", r.survivors.static_stage},
                    {"dynamic", r.survivors.dynamic_stage},
                    {"model", r.survivors.model_stage}}}};
  j["executables"] = r.executables;
  j["candidates"] = std::move(candidates);
  j["classes"] = r.classes;
  if (r.metrics) {
    json stages = json::array();
    for (const auto& s : *r.metrics) {
      json sj = counts_to_json(s.counts);
      sj["stage"] = s.stage;
      stages.push_back(std::move(sj));
    }
    json m = counts_to_json(r.metrics->back().counts);
    m["stages"] = std::move(stages);
    j["metrics"] = std::move(m);
  }
  j["timing"] = {{"static_seconds", r.timing.static_seconds},
                 {"dynamic_seconds", r.timing.dynamic_seconds},
                 {"model_seconds", r.timing.model_seconds},
                 {"total_seconds", r.timing.total_seconds}};
  return j;
}

inline Stage stage_from_token(const std::string& s) {
  for (auto st : {Stage::Static, Stage::Dynamic, Stage::Model, Stage::Skipped})
    if (to_token(st) == s) return st;
  throw Error(Errc::MalformedReport, "unknown stage \"" + s + "\"");
}

/// Reads back the per-candidate records of a report (what evaluation needs).
inline std::vector<CandidateResult> candidates_from_report(const json& j) {
  try {
    if (j.at("format").get<std::string>() != "scd-report/1")
      throw Error(Errc::MalformedReport, "unsupported report format");
    std::vector<CandidateResult> out;
    for (const auto& cj : j.at("candidates")) {
      CandidateResult c;
      c.pair = CandidatePair(cj.at("a").get<std::string>(), cj.at("b").get<std::string>());
      c.stage_reached = stage_from_token(cj.at("stage").get<std::string>());
      c.decision = cj.at("decision").get<bool>();
      if (cj.contains("links")) {
        const auto& l = cj["links"];
        c.links = {l.value("wes", std::size_t{0}), l.value("static", std::size_t{0}),
                   l.value("dynamic", std::size_t{0}), l.value("model_evaluated", std::size_t{0}),
                   l.value("model_skipped", std::size_t{0})};
      }
      if (cj.contains("skip_reason")) c.skip_reason = cj["skip_reason"].get<std::string>();
      out.push_back(std::move(c));
    }
    return out;
  } catch (const json::exception& e) {
    throw Error(Errc::MalformedReport, e.what());
  }
}

}  // namespace scd
