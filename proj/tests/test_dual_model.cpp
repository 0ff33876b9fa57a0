#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "ddtcdr/dual_model.hpp"
#include "ddtcdr/error.hpp"
#include "ddtcdr/eval.hpp"
#include "ddtcdr/synth.hpp"
#include "support.hpp"

namespace ddtcdr {
namespace {

using test::max_abs_diff;
using test::random_vector;

constexpr std::size_t kDim = 4;

FeatureSchema numeric_schema(const std::string& prefix, std::size_t n) {
  std::vector<FieldSpec> fields;
  for (std::size_t i = 0; i < n; ++i) {
    fields.push_back({prefix + std::to_string(i), FieldKind::numeric, 0, {}, 0.0, 1.0});
  }
  return FeatureSchema(fields);
}

DomainEncoders fixture_encoders(const std::string& domain, std::uint64_t seed) {
  DomainEncoders enc;
  enc.user_schema = numeric_schema("u", 6);
  enc.item_schema = numeric_schema("i", 5);
  enc.user = Autoencoder(6, kDim, domain, Entity::user, seed);
  enc.item = Autoencoder(5, kDim, domain, Entity::item, seed + 1);
  enc.user.mark_trained();
  enc.item.mark_trained();
  return enc;
}

DualModel fixture_model(double alpha, std::uint64_t seed = 1) {
  DualModelConfig cfg;
  cfg.alpha = alpha;
  return make_dual_model(cfg, fixture_encoders("A", seed), fixture_encoders("B", seed + 7), seed);
}

// Ratings from a fixed smooth function of the embeddings, so the scorers
// have something learnable.
EmbeddedDomain fixture_data(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  EmbeddedDomain out;
  for (std::size_t i = 0; i < n; ++i) {
    EmbeddedSample s;
    s.user = random_vector(kDim, rng, 0.0, 1.0);
    s.item = random_vector(kDim, rng, 0.0, 1.0);
    s.rating = sigmoid(3.0 * (dot(s.user, s.item) - 1.0));
    s.user_in_both = i % 5 != 0;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<ParamRef> all_params(DualModel& dm, const DualGrad& g) {
  std::vector<ParamRef> refs = dm.rs_a.param_refs(g.rs_a);
  for (const ParamRef& r : dm.rs_b.param_refs(g.rs_b)) refs.push_back(r);
  refs.push_back({dm.map.x.data(), g.map.data()});
  return refs;
}

bool all_zero(const RatingGrad& g) {
  for (const LayerGrad& l : g.layers) {
    for (double v : l.dW.data())
      if (v != 0.0) return false;
    for (double v : l.db)
      if (v != 0.0) return false;
  }
  return true;
}

TEST(RatingModel, OutputInUnitInterval) {
  const RatingModel rs(kDim, RatingModel::kDefaultHidden, 3);
  Rng rng(1);
  for (int t = 0; t < 100; ++t) {
    const double s = rs.score(random_vector(kDim, rng, -3, 3), random_vector(kDim, rng, -3, 3));
    EXPECT_GT(s, 0.0);
    EXPECT_LT(s, 1.0);
  }
}

TEST(RatingModel, DefaultArchitecture) {
  const RatingModel rs(8, RatingModel::kDefaultHidden, 3);
  ASSERT_EQ(rs.layers().size(), 3u);
  EXPECT_EQ(rs.layers()[0].in(), 16u);
  EXPECT_EQ(rs.layers()[0].out(), 16u);
  EXPECT_EQ(rs.layers()[1].out(), 8u);
  EXPECT_EQ(rs.layers()[2].out(), 1u);
  EXPECT_EQ(rs.layers()[2].activation, Activation::sigmoid);
}

TEST(RatingModel, RejectsMismatchedStack) {
  Rng rng(1);
  std::vector<DenseLayer> layers = {DenseLayer::xavier(8, 5, Activation::relu, rng),
                                    DenseLayer::xavier(4, 1, Activation::sigmoid, rng)};
  EXPECT_THROW(RatingModel{layers}, ShapeError);
}

TEST(Predict, DecomposesIntoWithinAndCross) {
  const DualModel dm = fixture_model(0.03);
  Rng rng(2);
  for (int t = 0; t < 20; ++t) {
    const Vector u = random_vector(kDim, rng, 0, 1), i = random_vector(kDim, rng, 0, 1);
    const double want_a = 0.97 * dm.rs_a.score(u, i) + 0.03 * dm.rs_b.score(matvec(dm.map.x, u), i);
    const double want_b =
        0.97 * dm.rs_b.score(u, i) + 0.03 * dm.rs_a.score(matvec(dm.map.x.transpose(), u), i);
    EXPECT_NEAR(predict_embedded(dm, Domain::A, u, i), want_a, 1e-15);
    EXPECT_NEAR(predict_embedded(dm, Domain::B, u, i), want_b, 1e-15);
    const RatingTerms terms = rating_terms(dm, Domain::A, u, i);
    EXPECT_EQ(predict_embedded(dm, Domain::A, u, i),
              (1.0 - dm.alpha) * terms.within + dm.alpha * terms.cross);
  }
}

TEST(Predict, ZeroAlphaIsWithinScorerBitwise) {
  const DualModel dm = fixture_model(0.0);
  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    const Vector u = random_vector(kDim, rng, 0, 1), i = random_vector(kDim, rng, 0, 1);
    EXPECT_EQ(predict_embedded(dm, Domain::A, u, i), dm.rs_a.score(u, i));
    EXPECT_EQ(predict_embedded(dm, Domain::B, u, i), dm.rs_b.score(u, i));
  }
}

TEST(Predict, SingleDomainUserUsesWithinOnly) {
  const DualModel dm = fixture_model(0.2);
  Rng rng(4);
  const Vector u = random_vector(kDim, rng, 0, 1), i = random_vector(kDim, rng, 0, 1);
  EXPECT_EQ(predict_embedded(dm, Domain::A, u, i, false), dm.rs_a.score(u, i));
  EXPECT_NE(predict_embedded(dm, Domain::A, u, i, true), dm.rs_a.score(u, i));
}

TEST(Predict, HalfAlphaTiedWeightsIsLabelFree) {
  DualModel dm = fixture_model(0.5);
  dm.rs_b = dm.rs_a;
  dm.map.x = Matrix::identity(kDim);
  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    const Vector u = random_vector(kDim, rng, 0, 1), i = random_vector(kDim, rng, 0, 1);
    EXPECT_EQ(predict_embedded(dm, Domain::A, u, i), predict_embedded(dm, Domain::B, u, i));
  }
}

TEST(Predict, FeatureVectorsGoThroughEncoders) {
  const DualModel dm = fixture_model(0.03);
  Rng rng(6);
  const Vector uf = random_vector(6, rng, 0, 1), itf = random_vector(5, rng, 0, 1);
  const Vector u = dm.encoders[0].user.encode(uf), i = dm.encoders[0].item.encode(itf);
  EXPECT_EQ(predict(dm, Domain::A, uf, itf), predict_embedded(dm, Domain::A, u, i));
  EXPECT_THROW(predict(dm, Domain::A, itf, itf), ShapeError);
}

TEST(DualModel, RejectsAlphaOutsideRange) {
  DualModel dm = fixture_model(0.03);
  dm.alpha = 0.6;
  EXPECT_THROW(dm.validate(), ConfigError);
  dm.alpha = -0.1;
  EXPECT_THROW(dm.validate(), ConfigError);
}

TEST(DualLoss, GradientMatchesFiniteDifferences) {
  DualModel dm = fixture_model(0.2, 9);
  Rng rng(10);
  dm.map.x = dm.map.x + 0.1 * test::random_matrix(kDim, kDim, rng);
  const EmbeddedDomain a = fixture_data(6, 11), b = fixture_data(5, 12);
  DualGrad g;
  dual_loss(dm, a, b, 1.0, &g);
  auto loss = [&] { return dual_loss(dm, a, b, 1.0).total(1.0); };
  EXPECT_LE(grad_check(loss, all_params(dm, g)), 1e-4);
}

TEST(DualLoss, ZeroAlphaLeavesOtherScorerUntouched) {
  const DualModel dm = fixture_model(0.0);
  const EmbeddedDomain a = fixture_data(8, 13), b = fixture_data(8, 14);
  DualGrad g;
  dual_loss(dm, a, {}, 0.0, &g);
  EXPECT_TRUE(all_zero(g.rs_b));
  EXPECT_FALSE(all_zero(g.rs_a));
  EXPECT_EQ(frobenius_norm(g.map), 0.0);
  dual_loss(dm, {}, b, 0.0, &g);
  EXPECT_TRUE(all_zero(g.rs_a));
  EXPECT_FALSE(all_zero(g.rs_b));
}

TEST(DualLoss, MatchesDirectMeanSquaredError) {
  DualModel dm = fixture_model(0.1);
  const EmbeddedDomain a = fixture_data(7, 15), b = fixture_data(9, 16);
  double sa = 0.0, sb = 0.0;
  for (const auto& s : a) {
    const double r = predict_embedded(dm, Domain::A, s.user, s.item, s.user_in_both) - s.rating;
    sa += r * r / 7.0;
  }
  for (const auto& s : b) {
    const double r = predict_embedded(dm, Domain::B, s.user, s.item, s.user_in_both) - s.rating;
    sb += r * r / 9.0;
  }
  const DualLoss l = dual_loss(dm, a, b, 1.0);
  EXPECT_NEAR(l.loss_a, sa, 1e-14);
  EXPECT_NEAR(l.loss_b, sb, 1e-14);
  EXPECT_NEAR(l.penalty, ortho_penalty(dm.map).loss, 1e-20);
}

TEST(DualLoss, SwappingLabelsSwapsLosses) {
  DualModel dm = fixture_model(0.15);
  Rng rng(17);
  dm.map.x = dm.map.x + 0.05 * test::random_matrix(kDim, kDim, rng);
  DualModel swapped = dm;
  swapped.rs_a = dm.rs_b;
  swapped.rs_b = dm.rs_a;
  swapped.map.x = dm.map.x.transpose();
  const EmbeddedDomain a = fixture_data(10, 18), b = fixture_data(12, 19);
  DualGrad g, gs;
  const DualLoss l = dual_loss(dm, a, b, 1.0, &g);
  const DualLoss ls = dual_loss(swapped, b, a, 1.0, &gs);
  EXPECT_NEAR(l.loss_a, ls.loss_b, 1e-14);
  EXPECT_NEAR(l.loss_b, ls.loss_a, 1e-14);
  EXPECT_NEAR(l.penalty, ls.penalty, 1e-12);
  EXPECT_LE(max_abs_diff(g.map, gs.map.transpose()), 1e-12);
}

TEST(TrainEpoch, SmallStepReducesLossAndKeepsMapOrthogonal) {
  DualModel dm = fixture_model(0.03, 20);
  const EmbeddedDomain a = fixture_data(200, 21), b = fixture_data(150, 22);
  const EpochLosses before = evaluate_loss(dm, a, b);
  TrainConfig cfg;
  cfg.lr_a = cfg.lr_b = cfg.lr_map = 1e-3;
  train_epoch(dm, a, b, cfg, 5);
  const EpochLosses after = evaluate_loss(dm, a, b);
  EXPECT_LT(after.loss_a + after.loss_b, before.loss_a + before.loss_b);
  EXPECT_LE(dm.map.orthogonality_error(), 1e-6);
}

TEST(TrainEpoch, RejectsEmptyDataAndDivergence) {
  DualModel dm = fixture_model(0.03);
  EXPECT_THROW(train_epoch(dm, {}, {}, TrainConfig{}, 0), DataError);
  EmbeddedDomain bad = fixture_data(10, 23);
  bad[3].rating = std::nan("");
  EXPECT_THROW(train_epoch(dm, bad, fixture_data(10, 24), TrainConfig{}, 0), NumericError);
}

TEST(Fit, HugeToleranceStopsAfterOneEpoch) {
  DualModel dm = fixture_model(0.03);
  FitConfig cfg;
  cfg.tol = 1e9;
  const FitTrace t = fit(dm, fixture_data(50, 25), fixture_data(50, 26), cfg);
  EXPECT_EQ(t.epochs_run(), 1u);
  EXPECT_TRUE(t.converged);
}

TEST(Fit, SameSeedSameTrace) {
  const EmbeddedDomain a = fixture_data(80, 27), b = fixture_data(60, 28);
  FitConfig cfg;
  cfg.epochs = 5;
  cfg.seed = 4;
  DualModel x = fixture_model(0.03), y = fixture_model(0.03);
  const FitTrace tx = fit(x, a, b, cfg), ty = fit(y, a, b, cfg);
  EXPECT_EQ(tx.loss_a, ty.loss_a);
  EXPECT_EQ(tx.loss_b, ty.loss_b);
  EXPECT_EQ(x, y);
}

TEST(Fit, SyntheticPairLossesFallByEpochFifty) {
  SynthConfig sc;
  sc.n_users = 200;
  sc.n_items_per_domain = 80;
  sc.density = 0.1;
  sc.rho = 0.8;
  const SynthPair pair = synth_pair(sc);
  AutoencoderConfig ac;
  ac.epochs = 60;
  auto enc = eval::train_encoders(pair.a, pair.b, ac, 0);
  DualModel dm = make_dual_model(DualModelConfig{}, enc[0], enc[1], 0);
  const auto shared = shared_users(pair.a, pair.b);
  const EmbeddedDomain a = embed_domain(dm, Domain::A, pair.a, shared);
  const EmbeddedDomain b = embed_domain(dm, Domain::B, pair.b, shared);
  FitConfig cfg;
  cfg.epochs = 50;
  cfg.tol = 0.0;
  const FitTrace t = fit(dm, a, b, cfg);
  ASSERT_EQ(t.epochs_run(), 50u);
  EXPECT_LT(t.loss_a[49], t.loss_a[0]);
  EXPECT_LT(t.loss_b[49], t.loss_b[0]);
  EXPECT_LE(dm.map.orthogonality_error(), 1e-6);
}

TEST(SingleEpoch, MatchesDualEpochAtZeroAlphaForDomainA) {
  const EmbeddedDomain a = fixture_data(70, 29);
  DualModel dm = fixture_model(0.0);
  RatingModel rs = dm.rs_a;
  TrainConfig cfg;
  cfg.penalty_weight = 0.0;
  train_epoch(dm, a, fixture_data(30, 44), cfg, 6);
  train_single_epoch(rs, Domain::A, a, cfg.lr_a, cfg.batch_size, 6);
  EXPECT_EQ(rs, dm.rs_a);
}

TEST(Multi, TwoDomainsMatchPredictBitwise) {
  const DualModel dm = fixture_model(0.03);
  const MultiModel mm = to_multi(dm);
  Rng rng(30);
  for (int t = 0; t < 20; ++t) {
    const Vector u = random_vector(kDim, rng, 0, 1), i = random_vector(kDim, rng, 0, 1);
    EXPECT_EQ(predict_multi(mm, 0, u, i), predict_embedded(dm, Domain::A, u, i));
    EXPECT_EQ(predict_multi(mm, 1, u, i), predict_embedded(dm, Domain::B, u, i));
  }
}

TEST(Multi, ZeroAlphaIsOwnScorer) {
  const MultiModel mm = make_multi_model(3, kDim, 0.0, RatingModel::kDefaultHidden, 31);
  Rng rng(32);
  const Vector u = random_vector(kDim, rng, 0, 1), i = random_vector(kDim, rng, 0, 1);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(predict_multi(mm, k, u, i), mm.models[k].score(u, i));
}

TEST(Multi, ThreeDomainsMatchHandComposition) {
  const MultiModel mm = make_multi_model(3, kDim, 0.03, RatingModel::kDefaultHidden, 33);
  EXPECT_NO_THROW(mm.validate());
  Rng rng(34);
  const Vector u = random_vector(kDim, rng, 0, 1), i = random_vector(kDim, rng, 0, 1);
  // Stored (lo, hi) map sends domain-lo users to domain hi; the reverse uses its transpose.
  auto moved = [&](std::size_t j, std::size_t k) {
    return k < j ? matvec(mm.maps.at({k, j}).x, u) : matvec_t(mm.maps.at({j, k}).x, u);
  };
  for (std::size_t k = 0; k < 3; ++k) {
    double want = 0.97 * mm.models[k].score(u, i);
    for (std::size_t j = 0; j < 3; ++j)
      if (j != k) want += 0.015 * mm.models[j].score(moved(j, k), i);
    EXPECT_NEAR(predict_multi(mm, k, u, i), want, 1e-15);
  }
  EXPECT_THROW(predict_multi(mm, 3, u, i), ConfigError);
}

TEST(Multi, MapsAreOrthogonalAndTransposesOfEachOther) {
  const MultiModel mm = make_multi_model(4, kDim, 0.03, RatingModel::kDefaultHidden, 35);
  EXPECT_EQ(mm.maps.size(), 6u);
  Rng rng(36);
  const Vector u = random_vector(kDim, rng);
  for (const auto& [key, m] : mm.maps) {
    EXPECT_LE(m.orthogonality_error(), 1e-10);
    const Vector there = mm.transfer(key.second, key.first, u);
    EXPECT_LE(max_abs_diff(mm.transfer(key.first, key.second, there), u), 1e-12);
  }
}

TEST(Persistence, SaveLoadRoundTripsBitwise) {
  DualModel dm = fixture_model(0.07, 40);
  train_epoch(dm, fixture_data(40, 41), fixture_data(40, 42), TrainConfig{}, 1);
  std::stringstream ss;
  dm.save(ss);
  const DualModel back = DualModel::load(ss);
  EXPECT_EQ(back, dm);
  const auto path = test::temp_dir("dual") / "model.ddtc";
  dm.save(path);
  const DualModel from_file = DualModel::load(path);
  EXPECT_EQ(from_file, dm);
  Rng rng(43);
  const Vector u = random_vector(kDim, rng, 0, 1), i = random_vector(kDim, rng, 0, 1);
  EXPECT_EQ(predict_embedded(from_file, Domain::B, u, i), predict_embedded(dm, Domain::B, u, i));
}

TEST(Persistence, RejectsTruncatedBundle) {
  std::stringstream ss;
  fixture_model(0.03).save(ss);
  const std::string bytes = ss.str();
  std::stringstream cut(bytes.substr(0, bytes.size() / 2));
  EXPECT_THROW(DualModel::load(cut), DataError);
}

}  // namespace
}  // namespace ddtcdr
