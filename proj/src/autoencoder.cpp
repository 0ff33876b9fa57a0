#include "ddtcdr/autoencoder.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "ddtcdr/error.hpp"
#include "ddtcdr/rng.hpp"
#include "ddtcdr/serialize.hpp"

namespace ddtcdr {

const char* to_string(Entity e) { return e == Entity::user ? "user" : "item"; }

Autoencoder::Autoencoder(std::size_t input_dim, std::size_t embed_dim, std::string domain,
                         Entity entity, std::uint64_t seed)
    : domain_(std::move(domain)), entity_(entity) {
  if (embed_dim < 1) throw ConfigError("autoencoder: embed_dim must be >= 1");
  if (embed_dim > input_dim) {
    throw ConfigError("autoencoder: embed_dim " + std::to_string(embed_dim) +
                      " exceeds input_dim " + std::to_string(input_dim) +
                      " (no undercomplete bottleneck)");
  }
  Rng rng(seed);
  encoder_ = DenseLayer::xavier(input_dim, embed_dim, Activation::sigmoid, rng);
  decoder_ = DenseLayer::xavier(embed_dim, input_dim, Activation::identity, rng);
}

Vector Autoencoder::encode(std::span<const double> v) const {
  if (!trained_) throw std::logic_error("autoencoder: encode requested before training");
  if (v.size() != input_dim()) {
    throw ShapeError("autoencoder encode: input length " + std::to_string(v.size()) +
                     ", expected " + std::to_string(input_dim()));
  }
  return layer_forward(encoder_, v).y;
}

Vector Autoencoder::decode(std::span<const double> e) const {
  if (e.size() != embed_dim()) {
    throw ShapeError("autoencoder decode: embedding length " + std::to_string(e.size()) +
                     ", expected " + std::to_string(embed_dim()));
  }
  return layer_forward(decoder_, e).y;
}

double Autoencoder::reconstruction_error(std::span<const double> v) const {
  const Vector r = decode(encode(v));
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) s += (r[i] - v[i]) * (r[i] - v[i]);
  return s;
}

void Autoencoder::save(std::ostream& os) const {
  io::Writer w(os);
  w.header();
  w.tag("autoencoder");
  w.str(domain_);
  w.u64(static_cast<std::uint64_t>(entity_));
  w.u64(trained_ ? 1 : 0);
  w.layer(encoder_);
  w.layer(decoder_);
}

Autoencoder Autoencoder::load(std::istream& is) {
  io::Reader r(is);
  r.header();
  r.expect("autoencoder");
  Autoencoder ae;
  ae.domain_ = r.str();
  const auto entity = r.u64();
  if (entity > 1) throw DataError("autoencoder file: bad entity tag");
  ae.entity_ = static_cast<Entity>(entity);
  ae.trained_ = r.u64() != 0;
  ae.encoder_ = r.layer();
  ae.decoder_ = r.layer();
  if (ae.decoder_.in() != ae.encoder_.out() || ae.decoder_.out() != ae.encoder_.in()) {
    throw DataError("autoencoder file: encoder/decoder shapes disagree");
  }
  return ae;
}

void Autoencoder::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  save(os);
}

Autoencoder Autoencoder::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  return load(is);
}

double reconstruction_loss(const Autoencoder& ae, std::span<const Vector> batch,
                           AutoencoderGrad* grad) {
  if (batch.empty()) throw DataError("reconstruction_loss: empty batch");
  const double scale = 1.0 / static_cast<double>(batch.size());
  if (grad) {
    grad->encoder = zero_grad(ae.encoder());
    grad->decoder = zero_grad(ae.decoder());
  }
  double total = 0.0;
  Vector dout(ae.input_dim());
  for (const Vector& v : batch) {
    if (v.size() != ae.input_dim()) {
      throw ShapeError("reconstruction_loss: vector length " + std::to_string(v.size()) +
                       ", expected " + std::to_string(ae.input_dim()));
    }
    const LayerForward enc = layer_forward(ae.encoder(), v);
    const LayerForward dec = layer_forward(ae.decoder(), enc.y);
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double r = dec.y[i] - v[i];
      total += r * r;
      dout[i] = 2.0 * r * scale;
    }
    if (grad) {
      const LayerGrad gd = layer_backward(ae.decoder(), dec.cache, dout);
      const LayerGrad ge = layer_backward(ae.encoder(), enc.cache, gd.dx);
      accumulate(grad->decoder, gd);
      accumulate(grad->encoder, ge);
    }
  }
  return total * scale;
}

TrainedAutoencoder train_autoencoder(std::span<const Vector> vectors,
                                     const AutoencoderConfig& config, const std::string& domain,
                                     Entity entity) {
  if (vectors.empty()) throw DataError("train_autoencoder: empty corpus");
  if (config.batch_size < 1) throw ConfigError("train_autoencoder: batch_size must be >= 1");
  if (!(config.lr > 0.0)) throw ConfigError("train_autoencoder: lr must be > 0");
  const std::size_t dim = vectors.front().size();
  for (const Vector& v : vectors) {
    if (v.size() != dim) throw ShapeError("train_autoencoder: vectors differ in length");
  }

  TrainedAutoencoder out;
  out.model = Autoencoder(dim, config.embed_dim, domain, entity, derive_seed(config.seed, 0));
  Rng order_rng(derive_seed(config.seed, 1));
  std::vector<std::size_t> order(vectors.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Vector> batch;
  AutoencoderGrad grad;
  out.loss_trace.reserve(config.epochs);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    order_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(vectors[order[i]]);
      const double loss = reconstruction_loss(out.model, batch, &grad);
      if (!std::isfinite(loss)) {
        throw NumericError("train_autoencoder: non-finite loss at epoch " +
                           std::to_string(epoch + 1) + "; lower the learning rate");
      }
      sgd_step(out.model.encoder(), grad.encoder, config.lr);
      sgd_step(out.model.decoder(), grad.decoder, config.lr);
    }
    out.loss_trace.push_back(reconstruction_loss(out.model, vectors));
  }
  out.model.mark_trained();
  return out;
}

}  // namespace ddtcdr
