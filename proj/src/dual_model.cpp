#include "ddtcdr/dual_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "ddtcdr/error.hpp"
#include "ddtcdr/log.hpp"
#include "ddtcdr/rng.hpp"
#include "ddtcdr/serialize.hpp"

namespace ddtcdr {

const char* to_string(Domain d) { return d == Domain::A ? "A" : "B"; }

// ---------------------------------------------------------------------------
// RatingModel

namespace {

Vector concat(std::span<const double> user, std::span<const double> item) {
  Vector x;
  x.reserve(user.size() + item.size());
  x.insert(x.end(), user.begin(), user.end());
  x.insert(x.end(), item.begin(), item.end());
  return x;
}

void check_inputs(const RatingModel& rs, std::span<const double> user,
                  std::span<const double> item) {
  const std::size_t d = rs.embed_dim();
  if (user.size() != d || item.size() != d) {
    throw ShapeError("rating model: embeddings of length " + std::to_string(user.size()) + " and " +
                     std::to_string(item.size()) + ", expected " + std::to_string(d));
  }
}

}  // namespace

RatingModel::RatingModel(std::size_t embed_dim, std::span<const std::size_t> hidden,
                         std::uint64_t seed) {
  if (embed_dim < 1) throw ConfigError("rating model: embed_dim must be >= 1");
  Rng rng(seed);
  std::size_t in = 2 * embed_dim;
  for (std::size_t h : hidden) {
    if (h < 1) throw ConfigError("rating model: hidden layer width must be >= 1");
    layers_.push_back(DenseLayer::xavier(in, h, Activation::relu, rng));
    in = h;
  }
  layers_.push_back(DenseLayer::xavier(in, 1, Activation::sigmoid, rng));
}

RatingModel::RatingModel(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw ShapeError("rating model: no layers");
  if (layers_.front().in() % 2 != 0) {
    throw ShapeError("rating model: input width " + std::to_string(layers_.front().in()) +
                     " is not 2 * embed_dim");
  }
  for (std::size_t l = 1; l < layers_.size(); ++l) {
    if (layers_[l].in() != layers_[l - 1].out()) {
      throw ShapeError("rating model: layer " + std::to_string(l) + " expects " +
                       std::to_string(layers_[l].in()) + " inputs, previous layer gives " +
                       std::to_string(layers_[l - 1].out()));
    }
  }
  if (layers_.back().out() != 1 || layers_.back().activation != Activation::sigmoid) {
    throw ShapeError("rating model: output layer must be a single sigmoid unit");
  }
}

double RatingModel::score(std::span<const double> user, std::span<const double> item) const {
  check_inputs(*this, user, item);
  Vector x = concat(user, item);
  for (const DenseLayer& layer : layers_) x = layer_forward(layer, x).y;
  return x[0];
}

RatingModel::Trace RatingModel::forward(std::span<const double> user,
                                        std::span<const double> item) const {
  check_inputs(*this, user, item);
  Trace t;
  t.caches.reserve(layers_.size());
  Vector x = concat(user, item);
  for (const DenseLayer& layer : layers_) {
    LayerForward f = layer_forward(layer, x);
    x = std::move(f.y);
    t.caches.push_back(std::move(f.cache));
  }
  t.output = x[0];
  return t;
}

Vector RatingModel::backward(const Trace& trace, double dout, RatingGrad& acc) const {
  Vector dy{dout};
  for (std::size_t l = layers_.size(); l-- > 0;) {
    LayerGrad g = layer_backward(layers_[l], trace.caches[l], dy);
    dy = std::move(g.dx);
    accumulate(acc.layers[l], g);
  }
  return dy;
}

RatingGrad RatingModel::zero_grad() const {
  RatingGrad g;
  g.layers.reserve(layers_.size());
  for (const DenseLayer& layer : layers_) g.layers.push_back(ddtcdr::zero_grad(layer));
  return g;
}

void RatingModel::apply(const RatingGrad& grad, double lr) {
  for (std::size_t l = 0; l < layers_.size(); ++l) sgd_step(layers_[l], grad.layers[l], lr);
}

std::vector<ParamRef> RatingModel::param_refs(const RatingGrad& grad) {
  std::vector<ParamRef> refs;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    refs.push_back({layers_[l].weights.data(), grad.layers[l].dW.data()});
    refs.push_back({layers_[l].bias, grad.layers[l].db});
  }
  return refs;
}

// ---------------------------------------------------------------------------
// DualModel

void DualModel::validate() const {
  if (!(alpha >= 0.0 && alpha <= 0.5)) {
    throw ConfigError("dual model: alpha " + std::to_string(alpha) + " outside [0, 0.5]");
  }
  const std::size_t d = embed_dim();
  if (map.x.rows() != map.x.cols() || d == 0) {
    throw ShapeError("dual model: mapping must be square, got " + map.x.shape());
  }
  for (Domain dom : {Domain::A, Domain::B}) {
    if (scorer(dom).embed_dim() != d) {
      throw ShapeError(std::string("dual model: scorer ") + to_string(dom) + " takes embeddings of " +
                       std::to_string(scorer(dom).embed_dim()) + ", mapping is " + map.x.shape());
    }
    const DomainEncoders& enc = encoders[index(dom)];
    for (const Autoencoder* ae : {&enc.user, &enc.item}) {
      if (ae->embed_dim() != d) {
        throw ShapeError(std::string("dual model: ") + to_string(dom) + " " +
                         to_string(ae->entity()) + " autoencoder embeds to " +
                         std::to_string(ae->embed_dim()) + ", expected " + std::to_string(d));
      }
    }
    if (enc.user.input_dim() != enc.user_schema.width() ||
        enc.item.input_dim() != enc.item_schema.width()) {
      throw ShapeError(std::string("dual model: domain ") + to_string(dom) +
                       " autoencoder input widths do not match the schemas");
    }
  }
}

std::uint64_t scorer_seed(std::uint64_t seed, Domain d) { return derive_seed(seed, 10 + index(d)); }
std::uint64_t map_seed(std::uint64_t seed) { return derive_seed(seed, 12); }

DualModel make_dual_model(const DualModelConfig& config, DomainEncoders enc_a,
                          DomainEncoders enc_b, std::uint64_t seed) {
  const std::size_t d = enc_a.user.embed_dim();
  DualModel dm;
  dm.alpha = config.alpha;
  dm.rs_a = RatingModel(d, config.hidden, scorer_seed(seed, Domain::A));
  dm.rs_b = RatingModel(d, config.hidden, scorer_seed(seed, Domain::B));
  dm.map = init_map(d, map_seed(seed));
  dm.map.domain_pair = {enc_a.user.domain(), enc_b.user.domain()};
  dm.encoders = {std::move(enc_a), std::move(enc_b)};
  dm.validate();
  return dm;
}

namespace {

void write_schema(io::Writer& w, const FeatureSchema& s) {
  w.tag("schema");
  w.u64(s.hash_buckets());
  w.u64(s.fields().size());
  for (const FieldSpec& f : s.fields()) {
    w.str(f.name);
    w.u64(static_cast<std::uint64_t>(f.kind));
    w.u64(f.cardinality);
    w.u64(f.vocabulary.size());
    for (const std::string& v : f.vocabulary) w.str(v);
    w.f64(f.min);
    w.f64(f.max);
  }
}

FeatureSchema read_schema(io::Reader& r) {
  r.expect("schema");
  const std::uint64_t buckets = r.u64();
  const std::uint64_t n = r.u64();
  if (n > (1u << 20)) throw DataError("model file: implausible schema size");
  std::vector<FieldSpec> fields(n);
  for (FieldSpec& f : fields) {
    f.name = r.str();
    const std::uint64_t kind = r.u64();
    if (kind > static_cast<std::uint64_t>(FieldKind::date)) {
      throw DataError("model file: bad field kind tag");
    }
    f.kind = static_cast<FieldKind>(kind);
    f.cardinality = r.u64();
    const std::uint64_t nv = r.u64();
    if (nv > (1u << 20)) throw DataError("model file: implausible vocabulary size");
    f.vocabulary.resize(nv);
    for (std::string& v : f.vocabulary) v = r.str();
    f.min = r.f64();
    f.max = r.f64();
  }
  return FeatureSchema(std::move(fields), buckets);
}

void write_scorer(io::Writer& w, const RatingModel& rs) {
  w.tag("scorer");
  w.u64(rs.layers().size());
  for (const DenseLayer& l : rs.layers()) w.layer(l);
}

RatingModel read_scorer(io::Reader& r) {
  r.expect("scorer");
  const std::uint64_t n = r.u64();
  if (n == 0 || n > 64) throw DataError("model file: implausible scorer depth");
  std::vector<DenseLayer> layers;
  for (std::uint64_t i = 0; i < n; ++i) layers.push_back(r.layer());
  try {
    return RatingModel(std::move(layers));
  } catch (const ShapeError& e) {
    throw DataError(std::string("model file: ") + e.what());
  }
}

}  // namespace

void DualModel::save(std::ostream& os) const {
  io::Writer w(os);
  w.header();
  w.tag("dual_model");
  w.f64(alpha);
  write_scorer(w, rs_a);
  write_scorer(w, rs_b);
  w.tag("map");
  w.str(map.domain_pair.first);
  w.str(map.domain_pair.second);
  w.matrix(map.x);
  for (const DomainEncoders& enc : encoders) {
    w.tag("encoders");
    write_schema(w, enc.user_schema);
    write_schema(w, enc.item_schema);
    enc.user.save(os);
    enc.item.save(os);
  }
  w.tag("end");
  if (!os) throw DataError("model file: write failed");
}

DualModel DualModel::load(std::istream& is) {
  io::Reader r(is);
  r.header();
  r.expect("dual_model");
  DualModel dm;
  dm.alpha = r.f64();
  dm.rs_a = read_scorer(r);
  dm.rs_b = read_scorer(r);
  r.expect("map");
  dm.map.domain_pair.first = r.str();
  dm.map.domain_pair.second = r.str();
  dm.map.x = r.matrix();
  for (DomainEncoders& enc : dm.encoders) {
    r.expect("encoders");
    enc.user_schema = read_schema(r);
    enc.item_schema = read_schema(r);
    enc.user = Autoencoder::load(is);
    enc.item = Autoencoder::load(is);
  }
  r.expect("end");
  try {
    dm.validate();
  } catch (const Error& e) {
    throw DataError(std::string("model file: ") + e.what());
  }
  return dm;
}

void DualModel::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  save(os);
}

DualModel DualModel::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  return load(is);
}

// ---------------------------------------------------------------------------
// Prediction

namespace {

// The user embedding as seen by the other domain's scorer.
Vector cross_user(const DualModel& dm, Domain domain, std::span<const double> user_emb) {
  return domain == Domain::A ? map_forward(dm.map, user_emb) : map_inverse(dm.map, user_emb);
}

}  // namespace

RatingTerms rating_terms(const DualModel& dm, Domain domain, std::span<const double> user_emb,
                         std::span<const double> item_emb) {
  const double within = dm.scorer(domain).score(user_emb, item_emb);
  const Vector mapped = cross_user(dm, domain, user_emb);
  const double cross = dm.scorer(other(domain)).score(mapped, item_emb);
  return {within, cross};
}

double predict_embedded(const DualModel& dm, Domain domain, std::span<const double> user_emb,
                        std::span<const double> item_emb, bool user_in_both) {
  const double a = user_in_both ? dm.alpha : 0.0;
  if (a == 0.0) return dm.scorer(domain).score(user_emb, item_emb);
  const RatingTerms t = rating_terms(dm, domain, user_emb, item_emb);
  return (1.0 - a) * t.within + a * t.cross;
}

double predict(const DualModel& dm, Domain domain, std::span<const double> user_features,
               std::span<const double> item_features, bool user_in_both) {
  const DomainEncoders& enc = dm.encoders[index(domain)];
  return predict_embedded(dm, domain, enc.user.encode(user_features),
                          enc.item.encode(item_features), user_in_both);
}

double predict(const DualModel& dm, Domain domain, const RawFeatures& user,
               const RawFeatures& item, bool user_in_both) {
  const DomainEncoders& enc = dm.encoders[index(domain)];
  return predict(dm, domain, encode(enc.user_schema, user), encode(enc.item_schema, item),
                 user_in_both);
}

// ---------------------------------------------------------------------------
// Training

std::unordered_set<std::string> shared_users(const DomainDataset& a, const DomainDataset& b) {
  const std::vector<std::string> ua = a.active_user_ids();
  const std::unordered_set<std::string> ub_set = [&] {
    const std::vector<std::string> ub = b.active_user_ids();
    return std::unordered_set<std::string>(ub.begin(), ub.end());
  }();
  std::unordered_set<std::string> out;
  for (const std::string& u : ua) {
    if (ub_set.count(u)) out.insert(u);
  }
  return out;
}

EmbeddedDomain embed_domain(const DualModel& dm, Domain domain, const DomainDataset& ds,
                            const std::unordered_set<std::string>& shared,
                            std::span<const std::size_t> records) {
  const DomainEncoders& enc = dm.encoders[index(domain)];
  std::unordered_map<std::string, Vector> users, items;
  auto embed = [](std::unordered_map<std::string, Vector>& cache, const std::string& id,
                  const std::unordered_map<std::string, RawFeatures>& table,
                  const FeatureSchema& schema, const Autoencoder& ae,
                  const char* what) -> const Vector& {
    auto it = cache.find(id);
    if (it != cache.end()) return it->second;
    auto row = table.find(id);
    if (row == table.end()) throw DataError(std::string("no feature row for ") + what + " " + id);
    return cache.emplace(id, ae.encode(encode(schema, row->second))).first->second;
  };

  std::vector<std::size_t> all;
  if (records.empty()) {
    all.resize(ds.interactions.size());
    std::iota(all.begin(), all.end(), 0);
    records = all;
  }
  EmbeddedDomain out;
  out.reserve(records.size());
  for (std::size_t idx : records) {
    if (idx >= ds.interactions.size()) {
      throw DataError("embed_domain: record index " + std::to_string(idx) + " out of range");
    }
    const InteractionRecord& rec = ds.interactions[idx];
    EmbeddedSample s;
    s.user = embed(users, rec.user_id, ds.user_features, enc.user_schema, enc.user, "user");
    s.item = embed(items, rec.item_id, ds.item_features, enc.item_schema, enc.item, "item");
    s.rating = rec.rating;
    s.user_in_both = shared.count(rec.user_id) > 0;
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

// Adds the squared-error loss of one domain's batch and its gradient to the
// running totals. Returns the batch's mean loss (0 for an empty batch).
double domain_batch(const DualModel& dm, Domain domain, std::span<const EmbeddedSample> batch,
                    DualGrad* grad) {
  if (batch.empty()) return 0.0;
  const RatingModel& own = dm.scorer(domain);
  const RatingModel& peer = dm.scorer(other(domain));
  RatingGrad* own_grad = nullptr;
  RatingGrad* peer_grad = nullptr;
  if (grad) {
    own_grad = domain == Domain::A ? &grad->rs_a : &grad->rs_b;
    peer_grad = domain == Domain::A ? &grad->rs_b : &grad->rs_a;
  }
  const double scale = 1.0 / static_cast<double>(batch.size());
  const std::size_t d = dm.embed_dim();
  double total = 0.0;
  for (const EmbeddedSample& s : batch) {
    const double a = s.user_in_both ? dm.alpha : 0.0;
    const RatingModel::Trace within = own.forward(s.user, s.item);
    double pred = within.output;
    RatingModel::Trace cross;
    Vector mapped;
    if (a != 0.0) {
      mapped = cross_user(dm, domain, s.user);
      cross = peer.forward(mapped, s.item);
      pred = (1.0 - a) * within.output + a * cross.output;
    }
    const double r = pred - s.rating;
    total += r * r;
    if (!grad) continue;
    const double dpred = 2.0 * r * scale;
    own.backward(within, (1.0 - a) * dpred, *own_grad);
    if (a == 0.0) continue;
    const Vector dx = peer.backward(cross, a * dpred, *peer_grad);
    // dx[0..d) is d(loss)/d(mapped user). For A, mapped = X u, so
    // dX += dmapped u^T; for B, mapped = X^T u, so dX += u dmapped^T.
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        if (domain == Domain::A) {
          grad->map(i, j) += dx[i] * s.user[j];
        } else {
          grad->map(i, j) += s.user[i] * dx[j];
        }
      }
    }
  }
  return total * scale;
}

}  // namespace

DualLoss dual_loss(const DualModel& dm, std::span<const EmbeddedSample> batch_a,
                   std::span<const EmbeddedSample> batch_b, double penalty_weight,
                   DualGrad* grad) {
  if (grad) {
    grad->rs_a = dm.rs_a.zero_grad();
    grad->rs_b = dm.rs_b.zero_grad();
    grad->map = Matrix(dm.embed_dim(), dm.embed_dim());
  }
  DualLoss out;
  out.loss_a = domain_batch(dm, Domain::A, batch_a, grad);
  out.loss_b = domain_batch(dm, Domain::B, batch_b, grad);
  const PenaltyResult pen = ortho_penalty(dm.map);
  out.penalty = pen.loss;
  if (grad && penalty_weight != 0.0) {
    grad->map = grad->map + penalty_weight * pen.grad;
  }
  return out;
}

namespace {

void check_train_config(const TrainConfig& c) {
  if (c.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  for (double lr : {c.lr_a, c.lr_b, c.lr_map}) {
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("train: learning rates must be >= 0");
  }
  if (!(c.penalty_weight >= 0.0)) throw ConfigError("train: penalty_weight must be >= 0");
}

std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  return order;
}

std::vector<EmbeddedSample> gather(const EmbeddedDomain& data,
                                   const std::vector<std::size_t>& order, std::size_t step,
                                   std::size_t batch_size) {
  std::vector<EmbeddedSample> batch;
  const std::size_t start = step * batch_size;
  if (start >= order.size()) return batch;
  const std::size_t end = std::min(order.size(), start + batch_size);
  batch.reserve(end - start);
  for (std::size_t i = start; i < end; ++i) batch.push_back(data[order[i]]);
  return batch;
}

std::size_t batch_count(std::size_t n, std::size_t batch_size) {
  return (n + batch_size - 1) / batch_size;
}

[[noreturn]] void diverged(const char* where, std::size_t step, double la, double lb) {
  throw NumericError(std::string(where) + ": non-finite loss at step " + std::to_string(step) +
                     " (loss_a " + std::to_string(la) + ", loss_b " + std::to_string(lb) +
                     "); the learning rate is probably too high");
}

}  // namespace

EpochLosses train_epoch(DualModel& dm, const EmbeddedDomain& a, const EmbeddedDomain& b,
                        const TrainConfig& config, std::uint64_t seed) {
  check_train_config(config);
  if (a.empty() || b.empty()) throw DataError("train_epoch: both domains need training records");
  dm.validate();

  const std::vector<std::size_t> order_a = shuffled(a.size(), derive_seed(seed, 0));
  const std::vector<std::size_t> order_b = shuffled(b.size(), derive_seed(seed, 1));
  const std::size_t steps_a = batch_count(a.size(), config.batch_size);
  const std::size_t steps_b = batch_count(b.size(), config.batch_size);
  const std::size_t steps = std::max(steps_a, steps_b);

  EpochLosses sum;
  DualGrad grad;
  for (std::size_t step = 0; step < steps; ++step) {
    const auto batch_a = gather(a, order_a, step, config.batch_size);
    const auto batch_b = gather(b, order_b, step, config.batch_size);
    const DualLoss loss = dual_loss(dm, batch_a, batch_b, config.penalty_weight, &grad);
    if (!std::isfinite(loss.total(config.penalty_weight))) {
      diverged("train_epoch", step, loss.loss_a, loss.loss_b);
    }
    sum.loss_a += loss.loss_a;
    sum.loss_b += loss.loss_b;
    dm.rs_a.apply(grad.rs_a, config.lr_a);
    dm.rs_b.apply(grad.rs_b, config.lr_b);
    sgd_step(dm.map.x, grad.map, config.lr_map);
  }
  dm.map = project_orthogonal(dm.map, config.projection);
  return {sum.loss_a / static_cast<double>(steps_a), sum.loss_b / static_cast<double>(steps_b)};
}

EpochLosses evaluate_loss(const DualModel& dm, const EmbeddedDomain& a, const EmbeddedDomain& b) {
  const DualLoss l = dual_loss(dm, a, b, 0.0, nullptr);
  return {l.loss_a, l.loss_b};
}

FitTrace fit(DualModel& dm, const EmbeddedDomain& a, const EmbeddedDomain& b,
             const FitConfig& config) {
  if (config.epochs < 1) throw ConfigError("fit: epochs must be >= 1");
  if (!(config.tol >= 0.0)) throw ConfigError("fit: tol must be >= 0");
  FitTrace trace;
  const EpochLosses initial = evaluate_loss(dm, a, b);
  trace.initial_a = initial.loss_a;
  trace.initial_b = initial.loss_b;
  double previous = initial.loss_a + initial.loss_b;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const EpochLosses running = train_epoch(dm, a, b, config.train, derive_seed(config.seed, epoch));
    const EpochLosses now = evaluate_loss(dm, a, b);
    trace.running_a.push_back(running.loss_a);
    trace.running_b.push_back(running.loss_b);
    trace.loss_a.push_back(now.loss_a);
    trace.loss_b.push_back(now.loss_b);
    const double combined = now.loss_a + now.loss_b;
    log::debug("epoch " + std::to_string(epoch + 1) + ": loss_a " + std::to_string(now.loss_a) +
               ", loss_b " + std::to_string(now.loss_b));
    if (std::abs(combined - previous) < config.tol) {
      trace.converged = true;
      break;
    }
    previous = combined;
  }
  return trace;
}

double train_single_epoch(RatingModel& rs, Domain domain, const EmbeddedDomain& data, double lr,
                          std::size_t batch_size, std::uint64_t seed) {
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (data.empty()) throw DataError("train_single_epoch: no training records");
  const std::vector<std::size_t> order = shuffled(data.size(), derive_seed(seed, index(domain)));
  const std::size_t steps = batch_count(data.size(), batch_size);
  double sum = 0.0;
  for (std::size_t step = 0; step < steps; ++step) {
    const auto batch = gather(data, order, step, batch_size);
    RatingGrad grad = rs.zero_grad();
    const double scale = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;
    for (const EmbeddedSample& s : batch) {
      const RatingModel::Trace t = rs.forward(s.user, s.item);
      const double r = t.output - s.rating;
      total += r * r;
      rs.backward(t, 2.0 * r * scale, grad);
    }
    const double loss = total * scale;
    if (!std::isfinite(loss)) diverged("train_single_epoch", step, loss, 0.0);
    sum += loss;
    rs.apply(grad, lr);
  }
  return sum / static_cast<double>(steps);
}

// ---------------------------------------------------------------------------
// Multi-domain extension

void MultiModel::validate() const {
  const std::size_t n = models.size();
  if (n < 2) throw ConfigError("multi model: needs at least 2 domains");
  if (!(alpha >= 0.0 && alpha <= 0.5)) {
    throw ConfigError("multi model: alpha " + std::to_string(alpha) + " outside [0, 0.5]");
  }
  const std::size_t d = models.front().embed_dim();
  for (const RatingModel& m : models) {
    if (m.embed_dim() != d) throw ShapeError("multi model: scorers disagree on embed_dim");
  }
  if (maps.size() != n * (n - 1) / 2) {
    throw ShapeError("multi model: expected one mapping per domain pair, got " +
                     std::to_string(maps.size()));
  }
  for (const auto& [key, m] : maps) {
    if (key.first >= key.second || key.second >= n) {
      throw ShapeError("multi model: bad mapping key (" + std::to_string(key.first) + ", " +
                       std::to_string(key.second) + ")");
    }
    if (m.x.rows() != d || m.x.cols() != d) {
      throw ShapeError("multi model: mapping " + m.x.shape() + " vs embed_dim " +
                       std::to_string(d));
    }
  }
}

Vector MultiModel::transfer(std::size_t j, std::size_t k, std::span<const double> user_emb) const {
  if (j == k) throw ConfigError("multi model: transfer needs two different domains");
  const auto it = maps.find({std::min(j, k), std::max(j, k)});
  if (it == maps.end()) {
    throw ConfigError("multi model: no mapping between domains " + std::to_string(j) + " and " +
                      std::to_string(k));
  }
  // Stored map sends the lower-index domain into the higher-index one.
  return k < j ? map_forward(it->second, user_emb) : map_inverse(it->second, user_emb);
}

MultiModel make_multi_model(std::size_t n_domains, std::size_t embed_dim, double alpha,
                            std::span<const std::size_t> hidden, std::uint64_t seed) {
  MultiModel mm;
  mm.alpha = alpha;
  for (std::size_t k = 0; k < n_domains; ++k) {
    mm.models.emplace_back(embed_dim, hidden, derive_seed(seed, 10 + k));
  }
  std::uint64_t stream = 1000;
  for (std::size_t lo = 0; lo < n_domains; ++lo) {
    for (std::size_t hi = lo + 1; hi < n_domains; ++hi) {
      OrthogonalMap m = init_map(embed_dim, derive_seed(seed, stream++));
      m.domain_pair = {std::to_string(lo), std::to_string(hi)};
      mm.maps.emplace(std::make_pair(lo, hi), std::move(m));
    }
  }
  mm.validate();
  return mm;
}

MultiModel to_multi(const DualModel& dm) {
  MultiModel mm;
  mm.alpha = dm.alpha;
  mm.models = {dm.rs_a, dm.rs_b};
  mm.maps.emplace(std::make_pair(std::size_t{0}, std::size_t{1}), dm.map);
  return mm;
}

double predict_multi(const MultiModel& mm, std::size_t k, std::span<const double> user_emb,
                     std::span<const double> item_emb) {
  const std::size_t n = mm.size();
  if (n < 2) throw ConfigError("predict_multi: needs at least 2 domains");
  if (k >= n) {
    throw ConfigError("predict_multi: unknown domain index " + std::to_string(k) + " (have " +
                      std::to_string(n) + ")");
  }
  const double within = mm.models[k].score(user_emb, item_emb);
  if (mm.alpha == 0.0) return within;
  double cross = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (j == k) continue;
    cross += mm.models[j].score(mm.transfer(j, k, user_emb), item_emb);
  }
  const double share = mm.alpha / static_cast<double>(n - 1);
  return (1.0 - mm.alpha) * within + share * cross;
}

}  // namespace ddtcdr
