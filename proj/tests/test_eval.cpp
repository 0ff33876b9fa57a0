#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "json.hpp"

#include "ddtcdr/error.hpp"
#include "ddtcdr/eval.hpp"
#include "ddtcdr/synth.hpp"
#include "support.hpp"

namespace ddtcdr::eval {
namespace {

using Users = std::vector<std::vector<ScoredItem>>;

double naive_rmse(const std::vector<double>& p, const std::vector<double>& t) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - t[i]) * (p[i] - t[i]);
  return std::sqrt(s / static_cast<double>(p.size()));
}

TEST(Rmse, IdenticalListsGiveZero) {
  const std::vector<double> v{0.1, 0.5, 0.9};
  EXPECT_EQ(rmse(v, v), 0.0);
  EXPECT_EQ(mae(v, v), 0.0);
}

TEST(Rmse, HandArithmetic) {
  const std::vector<double> p{1.0, 0.0}, t{0.0, 0.0};
  EXPECT_DOUBLE_EQ(rmse(p, t), std::sqrt(0.5));
  EXPECT_DOUBLE_EQ(mae(p, t), 0.5);
}

TEST(Rmse, MatchesLoopOracleAndDominatesMae) {
  Rng rng(1);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 1 + rng.below(30);
    const Vector p = test::random_vector(n, rng, 0, 1), y = test::random_vector(n, rng, 0, 1);
    EXPECT_NEAR(rmse(p, y), naive_rmse(p, y), 1e-12);
    EXPECT_GE(rmse(p, y), mae(p, y));
    EXPECT_GE(mae(p, y), 0.0);
  }
}

TEST(Rmse, PermutationInvariant) {
  Rng rng(2);
  std::vector<double> p = test::random_vector(20, rng), y = test::random_vector(20, rng);
  const double r = rmse(p, y), m = mae(p, y);
  std::vector<std::size_t> order(20);
  for (std::size_t i = 0; i < 20; ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<double> p2, y2;
  for (std::size_t i : order) {
    p2.push_back(p[i]);
    y2.push_back(y[i]);
  }
  EXPECT_NEAR(rmse(p2, y2), r, 1e-15);
  EXPECT_NEAR(mae(p2, y2), m, 1e-15);
}

TEST(Rmse, RejectsEmptyAndMismatched) {
  EXPECT_THROW(rmse({}, {}), DataError);
  EXPECT_THROW(mae({}, {}), DataError);
  EXPECT_THROW(rmse(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}), ShapeError);
}

TEST(Ranking, AllRelevantItems) {
  const Users users = {{{0.3, 0.9}, {0.8, 0.7}, {0.1, 0.6}, {0.5, 0.8}, {0.2, 0.9}, {0.4, 1.0},
                        {0.6, 0.5}}};
  const RankingMetrics m = precision_recall_at_k(users, 5, 0.5);
  EXPECT_DOUBLE_EQ(m.precision, 1.0);
  EXPECT_DOUBLE_EQ(m.recall, 5.0 / 7.0);
  EXPECT_TRUE(m.recall_defined);
}

TEST(Ranking, NoRelevantItemsLeavesRecallUndefined) {
  const Users users = {{{0.9, 0.1}, {0.2, 0.3}}, {{0.5, 0.0}}};
  const RankingMetrics m = precision_recall_at_k(users, 5, 0.5);
  EXPECT_EQ(m.precision, 0.0);
  EXPECT_FALSE(m.recall_defined);
  EXPECT_EQ(m.users, 2u);
  EXPECT_EQ(m.users_with_relevant, 0u);
}

TEST(Ranking, SixItemsThreeRelevantPerfectRanking) {
  const Users users = {{{0.9, 0.8}, {0.8, 0.9}, {0.7, 0.6}, {0.6, 0.2}, {0.5, 0.1}, {0.4, 0.0}}};
  const RankingMetrics m = precision_recall_at_k(users, 5, 0.5);
  EXPECT_DOUBLE_EQ(m.precision, 3.0 / 5.0);
  EXPECT_DOUBLE_EQ(m.recall, 1.0);
}

TEST(Ranking, UsersAveragedAndSkippedForRecall) {
  // User 1: top-2 of 3 holds one of its two relevant items. User 2: nothing relevant.
  const Users users = {{{0.9, 0.9}, {0.8, 0.1}, {0.1, 0.7}}, {{0.5, 0.2}, {0.4, 0.3}}};
  const RankingMetrics m = precision_recall_at_k(users, 2, 0.5);
  EXPECT_DOUBLE_EQ(m.precision, (0.5 + 0.0) / 2.0);
  EXPECT_DOUBLE_EQ(m.recall, 0.5);
  EXPECT_EQ(m.users_with_relevant, 1u);
}

TEST(Ranking, TiesKeepInputOrder) {
  const Users users = {{{0.5, 0.0}, {0.5, 1.0}}};
  EXPECT_EQ(precision_recall_at_k(users, 1, 0.5).precision, 0.0);
}

TEST(Ranking, RejectsEmptyInput) {
  EXPECT_THROW(precision_recall_at_k(Users{}, 5, 0.5), DataError);
}

struct SmallPair {
  SynthPair pair;
  ExperimentSettings settings;
};

SmallPair small_pair(double rho = 0.8) {
  SynthConfig sc;
  sc.n_users = 60;
  sc.n_items_per_domain = 40;
  sc.density = 0.15;
  sc.rho = rho;
  sc.seed = 3;
  ExperimentSettings s;
  s.autoencoder.epochs = 15;
  s.fit.epochs = 4;
  s.folds = 3;
  return {synth_pair(sc), s};
}

void expect_same(const CvReport& x, const CvReport& y, double tol) {
  for (std::size_t d = 0; d < 2; ++d) {
    const MetricsReport &a = x.domains[d], &b = y.domains[d];
    ASSERT_EQ(a.folds.size(), b.folds.size());
    EXPECT_NEAR(a.rmse, b.rmse, tol);
    EXPECT_NEAR(a.mae, b.mae, tol);
    EXPECT_NEAR(a.precision_at_k, b.precision_at_k, tol);
    EXPECT_NEAR(a.recall_at_k, b.recall_at_k, tol);
    for (std::size_t f = 0; f < a.folds.size(); ++f) {
      EXPECT_EQ(a.folds[f].fold, b.folds[f].fold);
      EXPECT_NEAR(a.folds[f].rmse, b.folds[f].rmse, tol);
      EXPECT_NEAR(a.folds[f].mae, b.folds[f].mae, tol);
    }
  }
}

TEST(Folds, TestRecordsNeverInOwnTraining) {
  const SmallPair sp = small_pair();
  const FoldSplit split = kfold(sp.pair.a, 5, 11);
  for (std::size_t f = 0; f < 5; ++f) {
    const auto train = split.train_indices(f);
    const std::set<std::size_t> train_set(train.begin(), train.end());
    for (std::size_t i : split.test_indices(f)) EXPECT_EQ(train_set.count(i), 0u);
  }
}

TEST(GroupByUser, GroupsInSortedIdOrder) {
  DomainDataset ds;
  ds.interactions = {{"u2", "i1", 0.5, {}}, {"u1", "i2", 0.5, {}}, {"u2", "i3", 0.5, {}},
                     {"u1", "i4", 0.5, {}}};
  const std::vector<std::size_t> records = {0, 1, 2};
  const auto groups = group_by_user(ds, records);
  ASSERT_EQ(groups.size(), 2u);
  EXPECT_EQ(groups[0], (std::vector<std::size_t>{1}));
  EXPECT_EQ(groups[1], (std::vector<std::size_t>{0, 2}));
}

TEST(RunCv, DeterministicPerSeed) {
  const SmallPair sp = small_pair();
  const std::vector<std::uint64_t> seeds = {5};
  const CvReport x = run_cv(sp.pair.a, sp.pair.b, sp.settings, seeds);
  const CvReport y = run_cv(sp.pair.a, sp.pair.b, sp.settings, seeds);
  expect_same(x, y, 0.0);
  EXPECT_EQ(report_json(x), report_json(y));
}

TEST(RunCv, ThreadCountDoesNotChangeResults) {
  SmallPair sp = small_pair();
  const std::vector<std::uint64_t> seeds = {1, 2};
  const CvReport one = run_cv(sp.pair.a, sp.pair.b, sp.settings, seeds);
  sp.settings.threads = 3;
  const CvReport many = run_cv(sp.pair.a, sp.pair.b, sp.settings, seeds);
  std::ostringstream a, b;
  write_report_csv(a, one);
  write_report_csv(b, many);
  EXPECT_EQ(a.str(), b.str());
}

TEST(RunCv, ZeroAlphaEqualsIndependentModels) {
  SmallPair sp = small_pair();
  const std::vector<std::uint64_t> seeds = {7};
  sp.settings.model.alpha = 0.0;
  const CvReport dual = run_cv(sp.pair.a, sp.pair.b, sp.settings, seeds);
  sp.settings.kind = ModelKind::independent;
  const CvReport indep = run_cv(sp.pair.a, sp.pair.b, sp.settings, seeds);
  expect_same(dual, indep, 1e-9);
}

TEST(RunCv, ReportShapeAndConfigEcho) {
  const SmallPair sp = small_pair();
  const std::vector<std::uint64_t> seeds = {1, 2};
  const CvReport r = run_cv(sp.pair.a, sp.pair.b, sp.settings, seeds);
  for (const MetricsReport& m : r.domains) {
    EXPECT_EQ(m.folds.size(), 6u);
    EXPECT_EQ(m.seed_rmse.size(), 2u);
    EXPECT_GE(m.rmse, m.mae);
    EXPECT_GE(m.precision_at_k, 0.0);
    EXPECT_LE(m.precision_at_k, 1.0);
    for (std::size_t f = 0; f < 6; ++f) EXPECT_EQ(m.folds[f].fold, f);
  }
  EXPECT_EQ(r.domains[0].domain, sp.pair.a.name);
  const auto j = nlohmann::json::parse(report_json(r));
  EXPECT_DOUBLE_EQ(j["config"]["alpha"].get<double>(), 0.03);
  EXPECT_EQ(j["config"]["embed_dim"].get<std::size_t>(), 8u);
  EXPECT_EQ(j["seeds"], nlohmann::json::array({1, 2}));
  EXPECT_EQ(j["domains"].size(), 2u);
}

TEST(RunCv, RejectsInvalidSettings) {
  SmallPair sp = small_pair();
  sp.settings.model.alpha = 0.5;
  EXPECT_THROW(run_cv(sp.pair.a, sp.pair.b, sp.settings, std::vector<std::uint64_t>{0}),
               ConfigError);
}

TEST(Sweep, ZeroAlphaRowMatchesBaseline) {
  SmallPair sp = small_pair();
  const std::vector<std::uint64_t> seeds = {4};
  const std::vector<double> alphas = {0.0, 0.1};
  const auto rows = alpha_sweep(sp.pair.a, sp.pair.b, alphas, sp.settings, seeds);
  ASSERT_EQ(rows.size(), 2u);
  sp.settings.model.alpha = 0.0;
  const CvReport base = run_cv(sp.pair.a, sp.pair.b, sp.settings, seeds);
  expect_same(rows[0].report, base, 0.0);
  std::ostringstream os;
  write_sweep_csv(os, rows);
  const std::string csv = os.str();
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "alpha,domain,rmse,rmse_std,mae,precision_at_5,recall_at_5");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
}

TEST(Reports, CsvLayout) {
  CvReport r;
  r.domains[0].domain = "A";
  r.domains[1].domain = "B";
  for (auto& d : r.domains) {
    d.folds = {{0, 0.2, 0.1, 0.4, 0.5, true, 3}, {1, 0.3, 0.2, 0.6, 0.0, false, 4}};
    d.rmse = 0.25;
    d.mae = 0.15;
    d.precision_at_k = 0.5;
    d.recall_at_k = 0.5;
    d.recall_defined = true;
  }
  std::ostringstream os;
  write_report_csv(os, r);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "domain,fold,rmse,mae,precision_at_5,recall_at_5");
  std::getline(is, line);
  EXPECT_EQ(line, "A,0,0.2,0.1,0.4,0.5");
  std::getline(is, line);
  EXPECT_EQ(line, "A,1,0.3,0.2,0.6,nan");
  for (int skip = 0; skip < 2; ++skip) std::getline(is, line);
  std::getline(is, line);
  EXPECT_EQ(line, "A,mean,0.25,0.15,0.5,0.5");
  std::getline(is, line);
  EXPECT_EQ(line.substr(0, 7), "B,mean,");
}

TEST(Reports, TraceCsvStartsAtInitialLoss) {
  FitTrace t;
  t.initial_a = 0.5;
  t.initial_b = 0.25;
  t.loss_a = {0.4, 0.3};
  t.loss_b = {0.2, 0.1};
  std::ostringstream os;
  write_trace_csv(os, t);
  EXPECT_EQ(os.str(), "epoch,loss_a,loss_b\n0,0.5,0.25\n1,0.4,0.2\n2,0.3,0.1\n");
}

}  // namespace
}  // namespace ddtcdr::eval
