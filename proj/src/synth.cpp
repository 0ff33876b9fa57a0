#include "ddtcdr/synth.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "ddtcdr/error.hpp"
#include "ddtcdr/rng.hpp"

namespace ddtcdr {

namespace {

// Per-entry std of the latent factors; <u, v> then has std 0.75^2 * sqrt(8) ~ 1.6
// at the default latent dimension, which spreads sigmoid ratings over (0.1, 0.9).
constexpr double kLatentScale = 0.75;

enum Stream : std::uint64_t {
  kQ = 1,
  kUsers,
  kUsersB,
  kItemsA,
  kItemsB,
  kRatingsA,
  kRatingsB,
  kUserProjection,
  kItemProjectionA,
  kItemProjectionB,
};

Matrix gaussian(std::size_t rows, std::size_t cols, double scale, Rng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = scale * rng.normal();
  return m;
}

// Modified Gram-Schmidt on the rows of a square Gaussian matrix.
Matrix random_orthogonal(std::size_t d, Rng& rng) {
  for (;;) {
    Matrix m = gaussian(d, d, 1.0, rng);
    bool ok = true;
    for (std::size_t i = 0; i < d && ok; ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        const double proj = dot(m.row(i), m.row(j));
        for (std::size_t c = 0; c < d; ++c) m(i, c) -= proj * m(j, c);
      }
      const double n = norm2(m.row(i));
      if (n < 1e-8) {
        ok = false;
        break;
      }
      for (std::size_t c = 0; c < d; ++c) m(i, c) /= n;
    }
    if (ok) return m;
  }
}

// Rows normalized to unit length so each projection of an N(0, s^2 I) latent
// has std s.
Matrix projection(std::size_t n, std::size_t d, Rng& rng) {
  Matrix p = gaussian(n, d, 1.0, rng);
  for (std::size_t i = 0; i < n; ++i) {
    const double len = norm2(p.row(i));
    for (double& v : p.row(i)) v /= len;
  }
  return p;
}

double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

std::size_t ordinal(double z, std::size_t categories) {
  const auto idx = static_cast<std::size_t>(std::floor(std::clamp(std_normal_cdf(z), 0.0, 1.0) *
                                                        static_cast<double>(categories)));
  return std::min(idx, categories - 1);
}

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

std::string iso_date(long days) {
  const std::chrono::year_month_day ymd{std::chrono::sys_days{std::chrono::days{days}}};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

std::vector<std::string> indexed(const std::string& prefix, std::size_t n) {
  std::vector<std::string> v;
  for (std::size_t i = 0; i < n; ++i) v.push_back(prefix + std::to_string(i));
  return v;
}

FieldSpec categorical(std::string name, FieldKind kind, std::vector<std::string> vocab) {
  FieldSpec f;
  f.name = std::move(name);
  f.kind = kind;
  f.cardinality = vocab.size();
  f.vocabulary = std::move(vocab);
  return f;
}

FieldSpec ranged(std::string name, FieldKind kind, double lo, double hi) {
  FieldSpec f;
  f.name = std::move(name);
  f.kind = kind;
  f.min = lo;
  f.max = hi;
  return f;
}

constexpr std::size_t kLikertItems = 12;
constexpr std::size_t kUserProjections = 5 + kLikertItems;
constexpr std::size_t kCreatorSlots = 8;
constexpr std::size_t kItemProjections = 6 + kCreatorSlots;

RawFeatures user_raw(std::span<const double> z) {
  RawFeatures r;
  r["gender"] = {z[0] > 0.0 ? "F" : "M"};
  r["age"] = {std::to_string(18 + static_cast<int>(std::lround(62.0 * std_normal_cdf(z[1]))))};
  r["movie_taste"] = {"taste" + std::to_string(ordinal(z[2], 12))};
  r["marital_status"] = {"status" + std::to_string(ordinal(z[3], 3))};
  r["personality"] = {"type" + std::to_string(ordinal(z[4], 6))};
  for (std::size_t q = 0; q < kLikertItems; ++q) {
    r["q" + std::to_string(q + 1)] = {std::to_string(1 + ordinal(z[5 + q], 5))};
  }
  return r;
}

RawFeatures item_raw(std::span<const double> z) {
  static const std::vector<std::string> kLanguages = {"en", "fr", "de", "es"};
  RawFeatures r;
  r["category"] = {"genre" + std::to_string(ordinal(z[0], 8))};
  r["language"] = {kLanguages[ordinal(z[1], 4)]};
  r["price"] = {fixed(100.0 * std_normal_cdf(z[2]), 2)};
  const double first = parse_date("1950-01-01");
  const double last = parse_date("2020-12-31");
  r["release"] = {iso_date(std::lround(first + (last - first) * std_normal_cdf(z[3])))};
  r["score"] = {fixed(10.0 * std_normal_cdf(z[4]), 1)};
  r["votes"] = {std::to_string(std::lround(10000.0 * std_normal_cdf(z[5])))};
  auto& creators = r["creators"];
  for (std::size_t j = 0; j < kCreatorSlots; ++j)
    if (z[6 + j] > 0.0) creators.push_back("creator" + std::to_string(j));
  return r;
}

std::vector<double> scores(const Matrix& proj, std::span<const double> latent) {
  std::vector<double> z = matvec(proj, latent);
  for (double& v : z) v /= kLatentScale;
  return z;
}

std::string pad(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%05zu", i);
  return buf;
}

}  // namespace

void SynthConfig::validate() const {
  if (n_users < 1) throw ConfigError("synth: n_users must be >= 1");
  if (n_items_per_domain < 1) throw ConfigError("synth: n_items_per_domain must be >= 1");
  if (latent_dim < 1) throw ConfigError("synth: latent_dim must be >= 1");
  if (!(rho >= 0.0 && rho <= 1.0)) throw ConfigError("synth: rho must lie in [0, 1]");
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw ConfigError("synth: noise must be >= 0");
  if (!(density > 0.0 && density <= 1.0)) throw ConfigError("synth: density must lie in (0, 1]");
}

FeatureSchema synth_user_schema() {
  std::vector<FieldSpec> fields = {
      categorical("gender", FieldKind::one_hot, {"F", "M"}),
      ranged("age", FieldKind::numeric, 0.0, 100.0),
      categorical("movie_taste", FieldKind::one_hot, indexed("taste", 12)),
      categorical("marital_status", FieldKind::one_hot, indexed("status", 3)),
      categorical("personality", FieldKind::one_hot, indexed("type", 6)),
  };
  for (std::size_t q = 0; q < kLikertItems; ++q) {
    fields.push_back(ranged("q" + std::to_string(q + 1), FieldKind::numeric, 1.0, 5.0));
  }
  return FeatureSchema(std::move(fields));
}

FeatureSchema synth_item_schema() {
  return FeatureSchema({
      categorical("category", FieldKind::one_hot, indexed("genre", 8)),
      categorical("language", FieldKind::one_hot, {"en", "fr", "de", "es"}),
      ranged("price", FieldKind::numeric, 0.0, 100.0),
      ranged("release", FieldKind::date, parse_date("1950-01-01"), parse_date("2020-12-31")),
      ranged("score", FieldKind::numeric, 0.0, 10.0),
      ranged("votes", FieldKind::numeric, 0.0, 10000.0),
      categorical("creators", FieldKind::multi_hot, indexed("creator", kCreatorSlots)),
  });
}

SynthPair synth_pair(const SynthConfig& config) {
  config.validate();
  const std::size_t d = config.latent_dim;
  const std::size_t nu = config.n_users;
  const std::size_t ni = config.n_items_per_domain;
  const std::uint64_t seed = config.seed;

  SynthPair out;
  SynthGroundTruth& t = out.truth;
  {
    Rng rng(derive_seed(seed, kQ));
    t.q = random_orthogonal(d, rng);
  }
  {
    Rng rng(derive_seed(seed, kUsers));
    t.user_latent_a = gaussian(nu, d, kLatentScale, rng);
  }
  {
    Rng rng(derive_seed(seed, kUsersB));
    const Matrix fresh = gaussian(nu, d, kLatentScale, rng);
    t.user_latent_b = Matrix(nu, d);
    for (std::size_t u = 0; u < nu; ++u) {
      const Vector qu = matvec(t.q, t.user_latent_a.row(u));
      for (std::size_t c = 0; c < d; ++c) {
        t.user_latent_b(u, c) = config.rho * qu[c] + (1.0 - config.rho) * fresh(u, c);
      }
    }
  }
  {
    Rng rng(derive_seed(seed, kItemsA));
    t.item_latent_a = gaussian(ni, d, kLatentScale, rng);
  }
  {
    Rng rng(derive_seed(seed, kItemsB));
    t.item_latent_b = gaussian(ni, d, kLatentScale, rng);
  }

  Rng user_proj_rng(derive_seed(seed, kUserProjection));
  const Matrix user_proj = projection(kUserProjections, d, user_proj_rng);

  auto build = [&](DomainDataset& ds, const std::string& name, const std::string& item_prefix,
                   const Matrix& user_latent, const Matrix& item_latent,
                   std::uint64_t item_proj_stream, std::uint64_t rating_stream) {
    ds.name = name;
    ds.user_schema = synth_user_schema();
    ds.item_schema = synth_item_schema();
    Rng proj_rng(derive_seed(seed, item_proj_stream));
    const Matrix item_proj = projection(kItemProjections, d, proj_rng);
    for (std::size_t u = 0; u < nu; ++u) {
      ds.user_features["u" + pad(u)] = user_raw(scores(user_proj, user_latent.row(u)));
    }
    for (std::size_t i = 0; i < ni; ++i) {
      ds.item_features[item_prefix + pad(i)] = item_raw(scores(item_proj, item_latent.row(i)));
    }
    Rng rng(derive_seed(seed, rating_stream));
    for (std::size_t u = 0; u < nu; ++u) {
      for (std::size_t i = 0; i < ni; ++i) {
        if (!rng.bernoulli(config.density)) continue;
        const double clean = sigmoid(dot(user_latent.row(u), item_latent.row(i)));
        const double noisy = clean + config.noise * rng.normal();
        ds.interactions.push_back({"u" + pad(u), item_prefix + pad(i),
                                   std::clamp(noisy, 0.0, 1.0), std::nullopt});
      }
    }
  };

  build(out.a, "A", "a", t.user_latent_a, t.item_latent_a, kItemProjectionA, kRatingsA);
  build(out.b, "B", "b", t.user_latent_b, t.item_latent_b, kItemProjectionB, kRatingsB);
  return out;
}

void write_ground_truth(const std::filesystem::path& path, const SynthGroundTruth& truth) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  os << "matrix,row,col,value\n";
  auto dump = [&](const char* name, const Matrix& m) {
    for (std::size_t r = 0; r < m.rows(); ++r)
      for (std::size_t c = 0; c < m.cols(); ++c)
        os << name << ',' << r << ',' << c << ',' << format_double(m(r, c)) << '\n';
  };
  dump("q", truth.q);
  dump("user_latent_a", truth.user_latent_a);
  dump("user_latent_b", truth.user_latent_b);
  dump("item_latent_a", truth.item_latent_a);
  dump("item_latent_b", truth.item_latent_b);
}

}  // namespace ddtcdr
