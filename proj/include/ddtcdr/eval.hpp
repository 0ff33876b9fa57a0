#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "ddtcdr/autoencoder.hpp"
#include "ddtcdr/dual_model.hpp"
#include "ddtcdr/features.hpp"

namespace ddtcdr::eval {

double rmse(std::span<const double> pred, std::span<const double> truth);
double mae(std::span<const double> pred, std::span<const double> truth);

struct ScoredItem {
  double score = 0.0;
  double truth = 0.0;
};

struct RankingMetrics {
  double precision = 0.0;
  double recall = 0.0;           // meaningful only when recall_defined
  bool recall_defined = false;   // false when no user has a relevant item
  std::size_t users = 0;
  std::size_t users_with_relevant = 0;
};

// Per user: rank the user's items by score (ties keep input order), take
// the top min(k, m); relevant means truth >= tau. Precision and recall are
// averaged over users; users without relevant items are left out of recall.
RankingMetrics precision_recall_at_k(std::span<const std::vector<ScoredItem>> users,
                                     std::size_t k = 5, double tau = 0.5);

// ---------------------------------------------------------------------------

enum class ModelKind {
  dual,         // DDTCDR
  independent,  // two single-domain scorers trained side by side
};

struct ExperimentSettings {
  ModelKind kind = ModelKind::dual;
  DualModelConfig model;
  AutoencoderConfig autoencoder;
  FitConfig fit;
  std::size_t folds = 5;
  std::size_t top_k = 5;
  double tau = 0.5;
  std::size_t threads = 1;

  void validate() const;
};

struct FoldMetrics {
  std::size_t fold = 0;  // seed_index * folds + fold
  double rmse = 0.0;
  double mae = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  bool recall_defined = false;
  std::size_t epochs = 0;
};

struct MetricsReport {
  std::string domain;
  std::size_t k = 5;
  double rmse = 0.0;
  double mae = 0.0;
  double precision_at_k = 0.0;
  double recall_at_k = 0.0;
  bool recall_defined = false;
  std::vector<double> seed_rmse;  // mean fold RMSE of each seed
  std::vector<FoldMetrics> folds;

  // Sample standard deviation of seed_rmse (0 for a single seed).
  double rmse_std() const;
};

struct CvReport {
  ExperimentSettings settings;
  std::vector<std::uint64_t> seeds;
  std::array<MetricsReport, 2> domains;
};

// Record-level k-fold cross-validation over both domains. For every seed the
// four autoencoders are trained once on all entities' features (no ratings),
// then each fold trains a fresh model on the other k-1 folds of both
// domains and scores the held-out fold of each.
CvReport run_cv(const DomainDataset& a, const DomainDataset& b, const ExperimentSettings& settings,
                std::span<const std::uint64_t> seeds);

// Trains the four autoencoders of a domain pair.
std::array<DomainEncoders, 2> train_encoders(const DomainDataset& a, const DomainDataset& b,
                                             const AutoencoderConfig& config, std::uint64_t seed);

// Trains both single-domain scorers of `dm` side by side with the epoch
// schedule and stopping rule of fit, each on its own domain only.
FitTrace fit_independent(DualModel& dm, const EmbeddedDomain& a, const EmbeddedDomain& b,
                         const FitConfig& config);

// Metrics of a model on embedded test records. `users` groups record indices
// by user for the ranking metrics.
FoldMetrics score_domain(const DualModel& dm, Domain domain, const EmbeddedDomain& test,
                         std::span<const std::vector<std::size_t>> users, std::size_t k,
                         double tau);

// Record indices of `records` grouped by user id, groups in sorted-id order.
std::vector<std::vector<std::size_t>> group_by_user(const DomainDataset& ds,
                                                    std::span<const std::size_t> records);

struct SweepRow {
  double alpha = 0.0;
  CvReport report;
};

// One run_cv per alpha with shared seeds.
std::vector<SweepRow> alpha_sweep(const DomainDataset& a, const DomainDataset& b,
                                  std::span<const double> alphas,
                                  const ExperimentSettings& settings,
                                  std::span<const std::uint64_t> seeds);

// ---------------------------------------------------------------------------
// Report files

// domain,fold,rmse,mae,precision_at_5,recall_at_5 rows per fold, then a
// `mean` row per domain.
void write_report_csv(std::ostream& os, const CvReport& report);
void write_report_csv(const std::filesystem::path& path, const CvReport& report);
std::string report_json(const CvReport& report);
void write_report_json(const std::filesystem::path& path, const CvReport& report);

// alpha,domain,rmse,rmse_std,mae,precision_at_5,recall_at_5
void write_sweep_csv(std::ostream& os, std::span<const SweepRow> rows);
void write_sweep_csv(const std::filesystem::path& path, std::span<const SweepRow> rows);

// epoch,loss_a,loss_b
void write_trace_csv(std::ostream& os, const FitTrace& trace);
void write_trace_csv(const std::filesystem::path& path, const FitTrace& trace);

}  // namespace ddtcdr::eval
