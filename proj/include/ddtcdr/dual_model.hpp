#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "ddtcdr/autoencoder.hpp"
#include "ddtcdr/features.hpp"
#include "ddtcdr/mapping.hpp"
#include "ddtcdr/numeric.hpp"

namespace ddtcdr {

enum class Domain { A = 0, B = 1 };

inline Domain other(Domain d) { return d == Domain::A ? Domain::B : Domain::A; }
inline std::size_t index(Domain d) { return static_cast<std::size_t>(d); }
const char* to_string(Domain d);

// ---------------------------------------------------------------------------
// Rating scorer: MLP over concat(user embedding, item embedding) with ReLU
// hidden layers and a sigmoid output.

struct RatingGrad {
  std::vector<LayerGrad> layers;
};

class RatingModel {
 public:
  static constexpr std::array<std::size_t, 2> kDefaultHidden = {16, 8};

  RatingModel() = default;
  RatingModel(std::size_t embed_dim, std::span<const std::size_t> hidden, std::uint64_t seed);
  explicit RatingModel(std::vector<DenseLayer> layers);

  std::size_t embed_dim() const noexcept { return layers_.empty() ? 0 : layers_.front().in() / 2; }
  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  std::vector<DenseLayer>& layers() noexcept { return layers_; }

  double score(std::span<const double> user, std::span<const double> item) const;

  struct Trace {
    std::vector<LayerCache> caches;
    double output = 0.0;
  };
  Trace forward(std::span<const double> user, std::span<const double> item) const;
  // Adds d(loss)/d(params) for d(loss)/d(output) = dout into `acc` and
  // returns d(loss)/d(input) over the concatenated input.
  Vector backward(const Trace& trace, double dout, RatingGrad& acc) const;

  RatingGrad zero_grad() const;
  void apply(const RatingGrad& grad, double lr);

  std::vector<ParamRef> param_refs(const RatingGrad& grad);

  bool operator==(const RatingModel&) const = default;

 private:
  std::vector<DenseLayer> layers_;
};

// ---------------------------------------------------------------------------

struct DomainEncoders {
  Autoencoder user;
  Autoencoder item;
  FeatureSchema user_schema;
  FeatureSchema item_schema;

  bool operator==(const DomainEncoders&) const = default;
};

struct DualModel {
  RatingModel rs_a;
  RatingModel rs_b;
  OrthogonalMap map;
  double alpha = 0.03;
  std::array<DomainEncoders, 2> encoders;

  const RatingModel& scorer(Domain d) const { return d == Domain::A ? rs_a : rs_b; }
  RatingModel& scorer(Domain d) { return d == Domain::A ? rs_a : rs_b; }
  std::size_t embed_dim() const noexcept { return map.dim(); }

  // Checks alpha in [0, 0.5], the map/scorer dimensions, and the frozen
  // autoencoders' shapes.
  void validate() const;

  void save(const std::filesystem::path& path) const;
  static DualModel load(const std::filesystem::path& path);
  void save(std::ostream& os) const;
  static DualModel load(std::istream& is);

  bool operator==(const DualModel&) const = default;
};

struct DualModelConfig {
  double alpha = 0.03;
  std::vector<std::size_t> hidden = {RatingModel::kDefaultHidden.begin(),
                                     RatingModel::kDefaultHidden.end()};
};

// Fresh scorers and a random orthogonal map around two pairs of trained
// autoencoders. All embedding sizes must match.
DualModel make_dual_model(const DualModelConfig& config, DomainEncoders enc_a,
                          DomainEncoders enc_b, std::uint64_t seed);

// Seeds of the components make_dual_model initializes.
std::uint64_t scorer_seed(std::uint64_t seed, Domain d);
std::uint64_t map_seed(std::uint64_t seed);

// ---------------------------------------------------------------------------
// Prediction

// The two terms of the hybrid estimate for a rating in `domain`.
struct RatingTerms {
  double within;  // RS_domain(user, item)
  double cross;   // RS_other(X user, item) for A, RS_other(X^T user, item) for B
};

RatingTerms rating_terms(const DualModel& dm, Domain domain, std::span<const double> user_emb,
                         std::span<const double> item_emb);

// (1 - a) * within + a * cross, where a = alpha for users present in both
// domains and 0 otherwise.
double predict_embedded(const DualModel& dm, Domain domain, std::span<const double> user_emb,
                        std::span<const double> item_emb, bool user_in_both = true);

// Encodes feature vectors through the domain's frozen autoencoders first.
double predict(const DualModel& dm, Domain domain, std::span<const double> user_features,
               std::span<const double> item_features, bool user_in_both = true);
double predict(const DualModel& dm, Domain domain, const RawFeatures& user,
               const RawFeatures& item, bool user_in_both = true);

// ---------------------------------------------------------------------------
// Training

struct EmbeddedSample {
  Vector user;
  Vector item;
  double rating = 0.0;
  bool user_in_both = true;
};

using EmbeddedDomain = std::vector<EmbeddedSample>;

// Embeds the selected records (all when `records` is empty) of a domain
// through the model's frozen autoencoders. `shared_users` lists users that
// appear in both domains.
EmbeddedDomain embed_domain(const DualModel& dm, Domain domain, const DomainDataset& ds,
                            const std::unordered_set<std::string>& shared_users,
                            std::span<const std::size_t> records = {});

std::unordered_set<std::string> shared_users(const DomainDataset& a, const DomainDataset& b);

struct TrainConfig {
  double lr_a = 0.01;
  double lr_b = 0.01;
  double lr_map = 0.01;
  std::size_t batch_size = 32;
  double penalty_weight = 1.0;
  ProjectionOptions projection{1e-10, 50};
};

struct DualGrad {
  RatingGrad rs_a;
  RatingGrad rs_b;
  Matrix map;
};

struct DualLoss {
  double loss_a = 0.0;   // mean squared error over batch_a (0 when empty)
  double loss_b = 0.0;
  double penalty = 0.0;  // ||X^T X - I||_F^2
  double total(double penalty_weight) const { return loss_a + loss_b + penalty_weight * penalty; }
};

// Objective of one dual step, loss_a + loss_b + w * penalty, and (when
// `grad` is given) its gradient with respect to both scorers and X.
DualLoss dual_loss(const DualModel& dm, std::span<const EmbeddedSample> batch_a,
                   std::span<const EmbeddedSample> batch_b, double penalty_weight,
                   DualGrad* grad = nullptr);

struct EpochLosses {
  double loss_a = 0.0;  // mean mini-batch loss over the pass
  double loss_b = 0.0;
};

// One pass over both domains: shuffled mini-batches, interleaved so each step
// takes one A-batch and one B-batch, updates RS_A (lr_a), RS_B (lr_b) and X
// (lr_map) together, then projects X back onto the orthogonal group.
EpochLosses train_epoch(DualModel& dm, const EmbeddedDomain& a, const EmbeddedDomain& b,
                        const TrainConfig& config, std::uint64_t seed);

// Mean squared errors of the current model on both domains.
EpochLosses evaluate_loss(const DualModel& dm, const EmbeddedDomain& a, const EmbeddedDomain& b);

struct FitConfig {
  std::size_t epochs = 100;
  double tol = 1e-5;
  TrainConfig train;
  std::uint64_t seed = 0;
};

struct FitTrace {
  double initial_a = 0.0;
  double initial_b = 0.0;
  std::vector<double> loss_a;  // evaluated after each epoch
  std::vector<double> loss_b;
  std::vector<double> running_a;  // train_epoch's mini-batch means
  std::vector<double> running_b;
  bool converged = false;

  std::size_t epochs_run() const noexcept { return loss_a.size(); }
};

// Repeats train_epoch until the epoch budget is spent or the combined loss
// (loss_a + loss_b) changes by less than tol between consecutive epochs
// (the first epoch compares against the untrained loss).
FitTrace fit(DualModel& dm, const EmbeddedDomain& a, const EmbeddedDomain& b,
             const FitConfig& config);

// ---------------------------------------------------------------------------
// Single-domain scorer training, the alpha = 0 reference. Uses the same
// shuffle stream and batch schedule as the domain's half of train_epoch.
// Returns the mean mini-batch loss.

double train_single_epoch(RatingModel& rs, Domain domain, const EmbeddedDomain& data, double lr,
                          std::size_t batch_size, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Multi-domain extension

struct MultiModel {
  std::vector<RatingModel> models;
  // Keyed by (lo, hi) with lo < hi: maps domain-lo user embeddings into the
  // domain-hi space, i.e. X_{hi,lo}. X_{lo,hi} is its transpose.
  std::map<std::pair<std::size_t, std::size_t>, OrthogonalMap> maps;
  double alpha = 0.03;

  std::size_t size() const noexcept { return models.size(); }
  // X_{jk} applied to a domain-k user embedding.
  Vector transfer(std::size_t j, std::size_t k, std::span<const double> user_emb) const;
  void validate() const;
};

MultiModel make_multi_model(std::size_t n_domains, std::size_t embed_dim, double alpha,
                            std::span<const std::size_t> hidden, std::uint64_t seed);
MultiModel to_multi(const DualModel& dm);

// (1 - a) RS_k(u, i) + a/(n-1) * sum_{j != k} RS_j(X_{jk} u, i)
double predict_multi(const MultiModel& mm, std::size_t k, std::span<const double> user_emb,
                     std::span<const double> item_emb);

}  // namespace ddtcdr
