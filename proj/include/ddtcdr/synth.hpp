#pragma once

#include <cstdint>

#include "ddtcdr/features.hpp"
#include "ddtcdr/numeric.hpp"

namespace ddtcdr {

struct SynthConfig {
  std::size_t n_users = 500;
  std::size_t n_items_per_domain = 200;
  std::size_t latent_dim = 8;
  double rho = 0.8;      // cross-domain correlation of user latents, in [0, 1]
  double noise = 0.05;   // std of Gaussian rating noise
  double density = 0.05; // probability that a (user, item) pair is rated
  std::uint64_t seed = 0;

  void validate() const;
};

// Latent factors behind a generated pair. Rows are entities in id order.
struct SynthGroundTruth {
  Matrix q;             // latent_dim x latent_dim orthogonal map from A- to B-user latents
  Matrix user_latent_a; // n_users x latent_dim
  Matrix user_latent_b;
  Matrix item_latent_a; // n_items x latent_dim
  Matrix item_latent_b;
};

struct SynthPair {
  DomainDataset a;
  DomainDataset b;
  SynthGroundTruth truth;
};

// Generates two domains over one user population.
//   user latent u ~ N(0, s^2 I); B-latent = rho * Q u + (1 - rho) * fresh draw
//   rating = clamp(sigmoid(<user latent, item latent>) + N(0, noise^2), 0, 1)
// A (user, item) pair is rated with probability `density`. Raw features are
// quantized random projections of each domain's own latents, using one user
// projection shared by both domains and a separate item projection per domain.
SynthPair synth_pair(const SynthConfig& config);

// Schemas used by the generator (user schema follows a questionnaire-style
// layout, item schema a catalogue-style one).
FeatureSchema synth_user_schema();
FeatureSchema synth_item_schema();

// Writes the ground truth as CSV: one `matrix,row,col,value` line per entry.
void write_ground_truth(const std::filesystem::path& path, const SynthGroundTruth& truth);

}  // namespace ddtcdr
