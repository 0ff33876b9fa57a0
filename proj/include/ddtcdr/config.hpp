#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "ddtcdr/eval.hpp"
#include "ddtcdr/synth.hpp"

namespace ddtcdr {

// Every knob of the command-line runner. Loaded from a flat `key = value`
// file; command-line flags override file keys.
struct ExperimentConfig {
  std::string mode;  // synth | train | eval | alpha-sweep | nmf-lab; empty = any
  std::filesystem::path data_dir = ".";
  std::filesystem::path out_dir = ".";
  std::filesystem::path model;  // saved model bundle; empty = none
  std::string domain_a = "A";
  std::string domain_b = "B";

  double alpha = 0.03;
  std::size_t embed_dim = 8;
  std::vector<std::size_t> hidden = {16, 8};
  std::size_t epochs = 100;
  double tol = 1e-5;
  double lr_a = 0.01;
  double lr_b = 0.01;
  double lr_map = 0.01;
  std::size_t batch_size = 32;
  double penalty_weight = 1.0;
  double ae_lr = 0.01;
  std::size_t ae_epochs = 200;
  std::size_t ae_batch_size = 32;
  std::size_t folds = 5;
  std::size_t top_k = 5;
  double tau = 0.5;
  std::size_t threads = 1;
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> seeds;  // cross-validation seeds; empty = {seed}
  std::vector<double> alphas = {0.0, 0.01, 0.03, 0.05, 0.1, 0.2};

  std::size_t n_users = 500;
  std::size_t n_items = 200;
  std::size_t latent_dim = 8;
  double rho = 0.8;
  double noise = 0.05;
  double density = 0.05;

  std::size_t nmf_rows = 20;
  std::size_t nmf_cols = 15;
  std::size_t nmf_rank = 4;
  std::size_t nmf_max_iters = 5000;
  double nmf_tol = 1e-8;
  double nmf_scale = 1.0;
  bool nmf_perturb = true;

  // Sets one key from its text form. Throws ConfigError for an unknown key
  // or an unparsable value.
  void set(const std::string& key, const std::string& value);
  // Throws ConfigError naming the violated bound.
  void validate() const;
  void write(std::ostream& os) const;
  void write(const std::filesystem::path& path) const;

  static const std::vector<std::string>& keys();

  std::vector<std::uint64_t> cv_seeds() const;
  eval::ExperimentSettings settings() const;
  SynthConfig synth() const;

  bool operator==(const ExperimentConfig&) const = default;
};

// Applies the `key = value` lines of a file on top of defaults. Blank lines
// and lines starting with '#' are skipped; repeated keys are errors.
ExperimentConfig parse_config(std::istream& is, const std::string& source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace ddtcdr
