#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "scd/pipeline.hpp"
#include "test_support.hpp"

namespace {

using namespace scd;
using scd::test::fa_schema;
using scd::test::fd_schema;

FlowConfig quick_flow() {
  FlowConfig c;
  c.epochs = 60;
  return c;
}

TraceDataset int_map_trace(const std::string& id, std::size_t rows, std::uint64_t seed, std::int64_t lo,
                           std::int64_t hi, std::int64_t (*f)(std::int64_t)) {
  TraceDataset ds{fa_schema(id), {}};
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::int64_t> n(lo, hi);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto x = n(rng);
    ds.rows.push_back({x, f(x)});
  }
  return ds;
}

std::int64_t factorial(std::int64_t n) { return scd::test::reference_factorial(n); }
std::int64_t power_of_two(std::int64_t n) { return std::int64_t{1} << n; }
std::int64_t successor(std::int64_t n) { return n + 1; }
std::int64_t square(std::int64_t n) { return n * n; }

Link only_link() { return {{0, 1}, {0, 1}}; }

// --- static -----------------------------------------------------------------

TEST(StaticStage, FilterExamples) {
  const auto fa = fa_schema("fa"), fb = fa_schema("fb"), fd = fd_schema("fd");
  EXPECT_TRUE(static_filter({{0, 1}, {0, 1}}, fa, fb));
  EXPECT_FALSE(static_filter({{0, 1}, {1, 2}}, fa, fd));
  EXPECT_TRUE(static_filter({{0, 1}, {0, 1}}, fa, fa));
}

TEST(StaticStage, SurvivingLinks) {
  EXPECT_EQ(static_stage(fa_schema("fa"), fa_schema("fb")).size(), 1u);
  ExecutableSchema words{"w", "w", std::nullopt,
                         {{"s", ElementRole::ParameterIn, DataType::Text}, {"r", ElementRole::ResultOut, DataType::Text}}};
  EXPECT_TRUE(static_stage(fa_schema(), words).empty());
  // Enumerate both fa x fd links and apply the type rule by hand.
  const auto fa = fa_schema(), fd = fd_schema();
  std::vector<Link> expected;
  for (const auto& l : build_wes(fa, fd))
    if (fa.elements[l.pair_a.input_index].dtype == fd.elements[l.pair_b.input_index].dtype) expected.push_back(l);
  EXPECT_EQ(static_stage(fa, fd), expected);
  EXPECT_EQ(static_stage(fa, fd), (std::vector<Link>{{{0, 1}, {0, 2}}}));
}

// --- dynamic ----------------------------------------------------------------

TEST(DynamicStage, IdenticalDatasetsKeepEveryLink) {
  const auto a = int_map_trace("a", 300, 1, 0, 20, factorial);
  auto b = a;
  b.schema.id = "b";
  const auto links = static_stage(a.schema, b.schema);
  EXPECT_EQ(dynamic_stage(links, a, b, 0.1), links);
  EXPECT_EQ(column_ks(column(a, 1), column(b, 1), 0.1).statistic, 0.0);
}

TEST(DynamicStage, ShiftedTriggerRejectsEquivalentImplementations) {
  const auto a = int_map_trace("a", 300, 1, 0, 4, factorial);
  const auto b = int_map_trace("b", 300, 2, 5, 10, factorial);
  EXPECT_TRUE(dynamic_stage(static_stage(a.schema, b.schema), a, b, 0.1).empty());
}

TEST(DynamicStage, MajorityDivergentOutputRejected) {
  // fd answers -1 for most events (n < 1 dominates), fa follows factorial.
  TraceDataset fa{fa_schema("fa"), {}}, fd{fd_schema("fd"), {}};
  std::mt19937_64 rng(5);
  for (int r = 0; r < 300; ++r) {
    const std::int64_t n = (rng() % 10 < 7) ? 0 : std::int64_t(rng() % 21);
    fa.rows.push_back({n, factorial(n)});
    fd.rows.push_back({n, std::string("val"), n < 1 ? std::int64_t{-1} : factorial(n)});
  }
  EXPECT_TRUE(dynamic_stage(static_stage(fa.schema, fd.schema), fa, fd, 0.1).empty());
}

TEST(DynamicStage, MissingTrace) {
  const auto a = int_map_trace("a", 10, 1, 0, 20, factorial);
  TraceDataset empty{fa_schema("b"), {}};
  const auto links = static_stage(a.schema, empty.schema);
  EXPECT_SCD_ERROR(dynamic_stage(links, a, empty, 0.1), Errc::MissingTrace);
}

// --- pooling ----------------------------------------------------------------

TEST(Pooling, Examples) {
  for (double c : {0.5, 0.01, 1e-6}) {
    EXPECT_TRUE(pool(0.0, 0.0, Pooling::Hard, c));
    EXPECT_TRUE(pool(0.0, 0.0, Pooling::Soft, c));
  }
  EXPECT_TRUE(pool(-6.0, 0.0, Pooling::Soft, 0.01));
  EXPECT_FALSE(pool(-6.0, 0.0, Pooling::Hard, 0.01));
  EXPECT_TRUE(pool(std::log(0.01) / 2, std::log(0.01) / 2, Pooling::Hard, 0.01));
}

TEST(PoolingProperty, HardImpliesSoft) {
  std::mt19937_64 rng(97);
  std::uniform_real_distribution<double> lam(-30.0, 5.0), logc(-20.0, -1e-6);
  int hard_accepts = 0;
  for (int k = 0; k < 10000; ++k) {
    const double a = lam(rng), b = lam(rng), c = std::exp(logc(rng));
    if (pool(a, b, Pooling::Hard, c)) {
      ++hard_accepts;
      EXPECT_TRUE(pool(a, b, Pooling::Soft, c));
    }
  }
  EXPECT_GT(hard_accepts, 100);
}

// --- model ------------------------------------------------------------------

class ModelPairs : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    fact_ = new FlowModel(train_model(int_map_trace("fact", 400, 1, 0, 20, factorial), quick_flow(), 1));
    pow2_ = new FlowModel(train_model(int_map_trace("pow2", 400, 2, 0, 20, power_of_two), quick_flow(), 2));

    // Same shape, wide vs narrow spread, float columns.
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g;
    ExecutableSchema s{"w", "w", std::nullopt,
                       {{"x", ElementRole::ParameterIn, DataType::Float}, {"y", ElementRole::ResultOut, DataType::Float}}};
    TraceDataset wide{s, {}}, narrow{s, {}};
    narrow.schema.id = "narrow";
    for (int r = 0; r < 600; ++r) {
      wide.rows.push_back({3.0 * g(rng), 3.0 * g(rng)});
      narrow.rows.push_back({g(rng), g(rng)});
    }
    wide_ = new FlowModel(train_model(wide, quick_flow(), 3));
    narrow_ = new FlowModel(train_model(narrow, quick_flow(), 4));
  }
  static void TearDownTestSuite() {
    for (auto* m : {fact_, pow2_, wide_, narrow_}) delete m;
  }
  static FlowModel *fact_, *pow2_, *wide_, *narrow_;
};
FlowModel* ModelPairs::fact_ = nullptr;
FlowModel* ModelPairs::pow2_ = nullptr;
FlowModel* ModelPairs::wide_ = nullptr;
FlowModel* ModelPairs::narrow_ = nullptr;

TEST_F(ModelPairs, SelfComparisonIsNearZero) {
  const FlowModel copy = *fact_;
  const auto r = model_link_ratio(*fact_, copy, only_link(), 50, 11);
  EXPECT_NEAR(r.lambda_a, 0.0, 0.5);
  EXPECT_NEAR(r.lambda_b, 0.0, 0.5);
}

TEST_F(ModelPairs, DivergentLawsAreStronglyNegative) {
  const auto r = model_link_ratio(*fact_, *pow2_, only_link(), 50, 12);
  EXPECT_LT(std::min(r.lambda_a, r.lambda_b), std::log(0.001));
}

TEST_F(ModelPairs, NarrowAlternativeExposesWideNull) {
  const auto r = model_link_ratio(*wide_, *narrow_, only_link(), 200, 13);
  // lambda_a: wide is null, narrow is alt.
  EXPECT_LT(r.lambda_a, r.lambda_b - 1.0);
}

TEST_F(ModelPairs, DeterministicGivenSeed) {
  const auto a = model_link_ratio(*fact_, *pow2_, only_link(), 20, 5);
  const auto b = model_link_ratio(*fact_, *pow2_, only_link(), 20, 5);
  EXPECT_EQ(a.lambda_a, b.lambda_a);
  EXPECT_EQ(a.lambda_b, b.lambda_b);
}

TEST_F(ModelPairs, TooFewParticles) {
  EXPECT_SCD_ERROR(model_link_ratio(*fact_, *pow2_, only_link(), 1, 5), Errc::InvalidArgument);
}

TEST_F(ModelPairs, GreedyStopsAtFirstAcceptedLink) {
  const FlowModel copy = *fact_;
  const std::vector<Link> links(4, only_link());
  DetectionConfig skip;
  const auto greedy = model_stage(links, *fact_, copy, skip, 3);
  EXPECT_TRUE(greedy.decision);
  EXPECT_EQ(greedy.link_results.size(), 1u);
  EXPECT_EQ(greedy.skipped_links, 3u);

  DetectionConfig exhaustive;
  exhaustive.evaluation = EvaluationStrategy::Exhaustive;
  const auto all = model_stage(links, *fact_, copy, exhaustive, 3);
  EXPECT_EQ(all.decision, greedy.decision);
  EXPECT_EQ(all.link_results.size(), 4u);
  EXPECT_EQ(all.skipped_links, 0u);
}

TEST_F(ModelPairs, NoLinksNoDecision) {
  const auto out = model_stage({}, *fact_, *pow2_, DetectionConfig{}, 3);
  EXPECT_FALSE(out.decision);
  EXPECT_TRUE(out.link_results.empty());
}

TEST_F(ModelPairs, AcceptedMatchesPoolingRule) {
  const std::vector<Link> links(3, only_link());
  DetectionConfig cfg;
  cfg.evaluation = EvaluationStrategy::Exhaustive;
  for (auto pooling : {Pooling::Hard, Pooling::Soft}) {
    cfg.pooling = pooling;
    for (const auto& lr : model_stage(links, *fact_, *pow2_, cfg, 9).link_results)
      EXPECT_EQ(lr.accepted, pool(lr.lambda_a, lr.lambda_b, pooling, cfg.m_fpr));
  }
}

// --- orchestration ----------------------------------------------------------

struct Fixture {
  std::vector<TraceDataset> traces;
  std::vector<FlowModel> models;
  GroundTruth truth;

  void add(TraceDataset ds, const std::string& label) {
    models.push_back(train_model(ds, quick_flow(), derive_seed(1, ds.schema.id)));
    truth.labels[ds.schema.id] = label;
    traces.push_back(std::move(ds));
  }
};

class Detection : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    fx_ = new Fixture;
    // Three copies of one behavior, a distinct law on the same trigger, and a
    // text-typed executable.
    const auto base = int_map_trace("f1", 400, 1, 0, 20, square);
    for (const char* id : {"f1", "f2", "f3"}) {
      auto ds = base;
      ds.schema.id = id;
      fx_->add(ds, "fact");
    }
    fx_->add(int_map_trace("succ", 400, 1, 0, 20, successor), "succ");
    TraceDataset words{{"words", "words", std::nullopt,
                        {{"s", ElementRole::ParameterIn, DataType::Text},
                         {"r", ElementRole::ResultOut, DataType::Integer}}},
                       {}};
    for (int i = 0; i < 100; ++i) words.rows.push_back({std::string(i % 2 ? "a" : "b"), std::int64_t{i % 2}});
    fx_->add(words, "words");
  }
  static void TearDownTestSuite() { delete fx_; }
  static Fixture* fx_;
};
Fixture* Detection::fx_ = nullptr;

TEST_F(Detection, CopiesAreClonesAndThirdIsSkipped) {
  const auto report = run_detection(fx_->models, fx_->traces, DetectionConfig{}, fx_->truth);
  const auto find = [&](const std::string& a, const std::string& b) {
    for (const auto& c : report.candidates)
      if (c.pair == CandidatePair(a, b)) return c;
    ADD_FAILURE() << "missing candidate " << a << "," << b;
    return CandidateResult{};
  };
  EXPECT_TRUE(find("f1", "f2").decision);
  EXPECT_EQ(find("f1", "f2").stage_reached, Stage::Model);
  EXPECT_TRUE(find("f1", "f3").decision);
  const auto skipped = find("f2", "f3");
  EXPECT_EQ(skipped.stage_reached, Stage::Skipped);
  EXPECT_TRUE(skipped.decision);
  EXPECT_TRUE(skipped.skip_reason.has_value());
  EXPECT_EQ(find("f1", "words").stage_reached, Stage::Static);
  EXPECT_FALSE(find("f1", "succ").decision);
  EXPECT_EQ(report.skipped_candidates, 1u);
  EXPECT_EQ(report.classes,
            (std::vector<std::vector<std::string>>{{"f1", "f2", "f3"}, {"succ"}, {"words"}}));
  ASSERT_TRUE(report.metrics.has_value());
  EXPECT_EQ(final_counts(report), (ConfusionCounts{3, 0, 7, 0}));
}

TEST_F(Detection, ExhaustiveNeverSkipsAndAgrees) {
  DetectionConfig ex;
  ex.evaluation = EvaluationStrategy::Exhaustive;
  const auto a = run_detection(fx_->models, fx_->traces, ex);
  const auto b = run_detection(fx_->models, fx_->traces, DetectionConfig{});
  EXPECT_EQ(a.skipped_candidates, 0u);
  EXPECT_EQ(a.greedy_skipped_links, 0u);
  EXPECT_EQ(a.classes, b.classes);
  EXPECT_FALSE(a.metrics.has_value());
}

TEST_F(Detection, InvariantsHold) {
  for (auto evaluation : {EvaluationStrategy::Skip, EvaluationStrategy::Exhaustive}) {
    DetectionConfig cfg;
    cfg.evaluation = evaluation;
    const auto r = run_detection(fx_->models, fx_->traces, cfg, fx_->truth);
    EXPECT_GE(r.survivors.initial, r.survivors.static_stage);
    EXPECT_GE(r.survivors.static_stage, r.survivors.dynamic_stage);
    EXPECT_GE(r.survivors.dynamic_stage, r.survivors.model_stage);
    for (const auto& c : r.candidates) {
      if (c.stage_reached == Stage::Skipped) continue;
      EXPECT_GE(c.links.wes, c.links.static_survivors);
      EXPECT_GE(c.links.static_survivors, c.links.dynamic_survivors);
      EXPECT_GE(c.links.dynamic_survivors, c.links.model_evaluated);
      if (c.decision) {
        EXPECT_EQ(c.stage_reached, Stage::Model);
        EXPECT_GE(c.links.dynamic_survivors, 1u);
      }
    }
    // Classes equal the transitive closure of positive decisions.
    CloneClasses closure(r.executables);
    for (const auto& c : r.candidates)
      if (c.decision) closure.unite(c.pair.a, c.pair.b);
    EXPECT_EQ(closure.classes(), r.classes);
    EXPECT_LE(r.skipped_candidates, final_counts(r).tp + final_counts(r).fp);
  }
}

TEST_F(Detection, DeterministicApartFromTiming) {
  auto a = report_to_json(run_detection(fx_->models, fx_->traces, DetectionConfig{}, fx_->truth));
  auto b = report_to_json(run_detection(fx_->models, fx_->traces, DetectionConfig{}, fx_->truth));
  a.erase("timing");
  b.erase("timing");
  EXPECT_EQ(a.dump(), b.dump());
}

TEST_F(Detection, ReportCandidatesRoundTrip) {
  const auto r = run_detection(fx_->models, fx_->traces, DetectionConfig{}, fx_->truth);
  const auto j = json::parse(report_to_json(r).dump(2));
  const auto back = candidates_from_report(j);
  ASSERT_EQ(back.size(), r.candidates.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].pair, r.candidates[i].pair);
    EXPECT_EQ(back[i].stage_reached, r.candidates[i].stage_reached);
    EXPECT_EQ(back[i].decision, r.candidates[i].decision);
  }
  EXPECT_EQ(stage_metrics(back, fx_->truth).back().counts, final_counts(r));
  EXPECT_TRUE(j.contains("manifest") == false);
  EXPECT_EQ(j["metrics"]["stages"].size(), 4u);
}

TEST_F(Detection, InconsistentInputs) {
  auto traces = fx_->traces;
  traces.pop_back();
  EXPECT_SCD_ERROR(run_detection(fx_->models, traces, DetectionConfig{}), Errc::InconsistentInputs);
  traces = fx_->traces;
  traces[0].schema.elements[0].dtype = DataType::Float;
  EXPECT_SCD_ERROR(run_detection(fx_->models, traces, DetectionConfig{}), Errc::InconsistentInputs);
  GroundTruth partial = fx_->truth;
  partial.labels.erase("succ");
  EXPECT_SCD_ERROR(run_detection(fx_->models, fx_->traces, DetectionConfig{}, partial), Errc::UnlabeledIds);
  DetectionConfig bad;
  bad.particles = 1;
  EXPECT_SCD_ERROR(run_detection(fx_->models, fx_->traces, bad), Errc::InvalidArgument);
}

TEST(Report, MalformedReport) {
  EXPECT_SCD_ERROR(candidates_from_report(json::object()), Errc::MalformedReport);
  EXPECT_SCD_ERROR(candidates_from_report(json{{"format", "other"}, {"candidates", json::array()}}),
                   Errc::MalformedReport);
}

}  // namespace
