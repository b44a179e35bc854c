#include <gtest/gtest.h>

#include <sstream>

#include "ctd/harness.hpp"
#include "ctd/synth.hpp"

using namespace ctd;

namespace {

// A shrunken strong-expert pool so the pipeline runs in well under a second.
const Prepared& small_pipeline() {
  static const Prepared p = [] {
    auto cfg = synth::strong_expert_preset(3);
    for (auto& g : cfg.groups) g.n = 300;
    PipelineConfig pc;
    pc.split.seed = 2;
    return prepare(synth::generate_probe_training(cfg), synth::generate(cfg), pc);
  }();
  return p;
}

} // namespace

TEST(Pipeline, ScoresEverySplit) {
  const auto& p = small_pipeline();
  const auto& s = p.splits;
  EXPECT_EQ(s.dev.size() + s.est.size() + s.cal.size() + s.eval.size(), 1200u);
  for (const auto& x : s.eval) {
    EXPECT_DOUBLE_EQ(x.value, delegation_value(x.probe, x.expert, x.label));
  }
  EXPECT_EQ(p.probe.kind, ModelKind::logistic);
  EXPECT_EQ(p.dv.kind, ModelKind::ridge);
}

TEST(Strategies, TopKHitsExactCountsAndCalibratedStaysUnderBudget) {
  const auto& s = small_pipeline().splits;
  for (auto st : kAllStrategies) {
    const auto out = run_strategy(s, st, 0.3, 64, 0.1, LossKind::accuracy_error);
    ASSERT_EQ(out.decisions.size(), s.eval.size());
    if (is_calibrated(st)) {
      ASSERT_TRUE(out.calibration);
      EXPECT_LE(budget_risk(out.decisions), 0.4);
    } else {
      std::size_t expect = 0;
      for (std::size_t start = 0; start < s.eval.size(); start += 64) {
        expect += topk_count(0.3, std::min<std::size_t>(64, s.eval.size() - start));
      }
      EXPECT_EQ(delegated_count(out.decisions), expect);
    }
  }
}

TEST(Strategies, OracleRanksBest) {
  const auto& s = small_pipeline().splits;
  const std::vector<double> fr{0.1, 0.3, 0.5, 0.7, 0.9};
  const auto c = ranking_curve(s, fr);
  for (std::size_t i = 0; i < fr.size(); ++i) {
    EXPECT_GE(c.oracle[i], c.dv[i]);
    EXPECT_GE(c.oracle[i], c.uncertainty[i]);
    EXPECT_GE(c.oracle[i], c.random[i]);
  }
  EXPECT_TRUE(std::is_sorted(c.oracle.rbegin(), c.oracle.rend()));
}

TEST(Sweep, CellLayoutAndCsv) {
  const auto& s = small_pipeline().splits;
  SweepConfig cfg;
  cfg.budgets = {0.2, 0.6};
  cfg.batch_sizes = {32, 128};
  const auto rep = run_sweep(s, cfg);
  // Two calibrated strategies once per budget, three top-k strategies per batch size.
  EXPECT_EQ(rep.cells.size(), 2u * 2u + 3u * 2u * 2u);
  ASSERT_NE(rep.find("ctd", 0.2), nullptr);
  ASSERT_NE(rep.find("dv_topk", 0.6, 128), nullptr);
  EXPECT_EQ(rep.find("dv_topk", 0.6, 0), nullptr);
  for (const auto& c : rep.cells) EXPECT_TRUE(c.error.empty()) << c.error;

  const auto csv = sweep_to_csv(rep);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, kSweepCsvHeader);
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 5);
  }
  EXPECT_EQ(rows, rep.cells.size() + 2);
  EXPECT_NE(csv.find("probe_only,,0,0,"), std::string::npos);
}

TEST(Sweep, JsonRoundTripIncludingFailures) {
  SweepReport r;
  r.n_eval = 10;
  r.effective_capacity = 0.4;
  r.baselines = {{"probe_only", 0, 0.7, 0.75}, {"expert_only", 1, 0.9, 0.95}};
  SweepCell ok{"ctd", 0.25, 0, 0.2, 0.8, 0.85, kInf, true, ""};
  SweepCell bad{"unc_topk", 0.5, 32, 0, 0, 0, std::nullopt, false, "boom"};
  bad.delegation_rate = bad.accuracy = bad.auroc = std::numeric_limits<double>::quiet_NaN();
  r.cells = {ok, bad};
  const auto back = sweep_from_json(nlohmann::json::parse(to_json(r).dump()));
  EXPECT_EQ(back.cells[0], ok);
  EXPECT_EQ(back.cells[1].error, "boom");
  EXPECT_TRUE(std::isnan(back.cells[1].accuracy));
  EXPECT_EQ(back.baselines, r.baselines);
  EXPECT_NE(sweep_to_csv(back).find("unc_topk,0.5,32,nan,nan,nan"), std::string::npos);
  EXPECT_THROW(sweep_from_json(nlohmann::json::parse(R"({"cells":[]})")), ValidationError);
}

TEST(Sweep, FailingCellIsRecordedNotThrown) {
  Partition<ScoredExample> s;
  // All-positive evaluation labels make AUROC undefined.
  for (int i = 0; i < 20; ++i) {
    const ScoredExample x{"e" + std::to_string(i), "g", 1, 0.7, 0.8, 0.01 * i, 0.1};
    s.eval.push_back(x);
    s.cal.push_back({"c" + std::to_string(i), "g", i % 2, 0.6, 0.4, 0.01 * i, 0.0});
    s.est.push_back({"s" + std::to_string(i), "g", i % 2, 0.6, 0.4, 0.01 * i, 0.0});
  }
  SweepConfig cfg;
  cfg.budgets = {0.5};
  cfg.batch_sizes = {8};
  cfg.strategies = {Strategy::dv_topk};
  EXPECT_THROW(run_sweep(s, cfg), ValidationError); // baselines need both classes
  const auto cell = evaluate_cell(s, Strategy::dv_topk, 0.5, 8, cfg);
  EXPECT_FALSE(cell.error.empty());
  EXPECT_TRUE(std::isnan(cell.auroc));
}

TEST(Groups, SharesSumToOne) {
  const auto& s = small_pipeline().splits;
  const auto ctd = run_strategy(s, Strategy::dv_topk, 0.4, 128, 0.1, LossKind::accuracy_error);
  const auto rep = run_group_analysis(s.eval, {{"dv_topk", ctd.decisions}}, 0.4);
  ASSERT_EQ(rep.rows.size(), 4u);
  double share = 0;
  std::size_t n = 0;
  for (const auto& r : rep.rows) {
    share += r.share_of_delegated;
    n += r.n;
  }
  EXPECT_NEAR(share, 1.0, 1e-12);
  EXPECT_EQ(n, s.eval.size());
  const auto csv = groups_to_csv(rep);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), kGroupCsvHeader);
}

TEST(Coverage, ReportShape) {
  const auto& s = small_pipeline().splits;
  ScoredDataset pool;
  for (const auto* part : {&s.est, &s.cal, &s.eval}) pool.insert(pool.end(), part->begin(), part->end());
  CoverageConfig cc;
  cc.trials = 20;
  const auto rep = run_coverage(pool, cc);
  EXPECT_EQ(rep.realized_rates.size(), 20u);
  std::size_t hist = 0;
  for (auto h : rep.histogram) hist += h;
  EXPECT_EQ(hist, 20u);
  std::size_t viol = 0;
  for (double r : rep.realized_rates) viol += r > cc.alpha;
  EXPECT_EQ(viol, rep.violations);
}

TEST(ConfigReaders, ParseSections) {
  const auto c = Config::parse_string(
      "split.dev = 0.2\nsplit.calibration = 0.4\nsplit.evaluation = 0.4\nsplit.seed = 4\n"
      "dv.l2_strength = 2\ndv.target = binary\nbudgets = 0.1, 0.2\nbatch_sizes = 16\nstrategies = ctd, oracle_topk\n");
  const auto p = pipeline_from_config(c);
  EXPECT_DOUBLE_EQ(p.split.dev, 0.2);
  EXPECT_EQ(p.split.seed, 4u);
  EXPECT_DOUBLE_EQ(p.dv_train.l2_strength, 2.0);
  EXPECT_EQ(p.dv_target, DvTarget::binary);
  const auto sc = sweep_config_from_config(c);
  EXPECT_EQ(sc.budgets, (std::vector<double>{0.1, 0.2}));
  EXPECT_EQ(sc.batch_sizes, (std::vector<std::size_t>{16}));
  EXPECT_EQ(sc.strategies.size(), 2u);
  EXPECT_THROW(sweep_config_from_config(Config::parse_string("batch_sizes = 2.5\n")), ValidationError);
  EXPECT_THROW(pipeline_from_config(Config::parse_string("split.dev = 0.5\n")), ValidationError);
}
