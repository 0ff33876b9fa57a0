#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "ddtcdr/numeric.hpp"

namespace ddtcdr {

enum class Entity { user, item };

const char* to_string(Entity e);

struct AutoencoderConfig {
  std::size_t embed_dim = 8;
  double lr = 0.01;
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

// One-layer encoder (sigmoid) and decoder (identity) for the feature vectors
// of a single (domain, entity) corpus.
class Autoencoder {
 public:
  Autoencoder() = default;
  Autoencoder(std::size_t input_dim, std::size_t embed_dim, std::string domain, Entity entity,
              std::uint64_t seed);

  std::size_t input_dim() const noexcept { return encoder_.in(); }
  std::size_t embed_dim() const noexcept { return encoder_.out(); }
  const std::string& domain() const noexcept { return domain_; }
  Entity entity() const noexcept { return entity_; }
  bool trained() const noexcept { return trained_; }
  void mark_trained() noexcept { trained_ = true; }

  const DenseLayer& encoder() const noexcept { return encoder_; }
  const DenseLayer& decoder() const noexcept { return decoder_; }
  DenseLayer& encoder() noexcept { return encoder_; }
  DenseLayer& decoder() noexcept { return decoder_; }

  // Throws std::logic_error if the autoencoder has not been trained.
  Vector encode(std::span<const double> v) const;
  Vector decode(std::span<const double> e) const;

  // Squared L2 reconstruction error of one vector.
  double reconstruction_error(std::span<const double> v) const;

  void save(std::ostream& os) const;
  static Autoencoder load(std::istream& is);
  void save(const std::filesystem::path& path) const;
  static Autoencoder load(const std::filesystem::path& path);

  bool operator==(const Autoencoder&) const = default;

 private:
  DenseLayer encoder_;
  DenseLayer decoder_;
  std::string domain_;
  Entity entity_ = Entity::user;
  bool trained_ = false;
};

struct AutoencoderGrad {
  LayerGrad encoder;
  LayerGrad decoder;
};

// Mean squared-L2 reconstruction loss over `batch` and its gradient.
double reconstruction_loss(const Autoencoder& ae, std::span<const Vector> batch,
                           AutoencoderGrad* grad = nullptr);

struct TrainedAutoencoder {
  Autoencoder model;
  std::vector<double> loss_trace;  // mean corpus loss after each epoch
};

// Mini-batch gradient descent on the mean squared-L2 reconstruction loss.
TrainedAutoencoder train_autoencoder(std::span<const Vector> vectors,
                                     const AutoencoderConfig& config,
                                     const std::string& domain = "",
                                     Entity entity = Entity::user);

}  // namespace ddtcdr
